//! Exhaustive walk over the dual of `T/T_R`.
//!
//! The principal coordinates run through an odometer (the depth of a character
//! depends on them only, unless they all vanish); the residue coordinate is the
//! inner loop.  Pairings with a fixed list of probe elements are maintained
//! incrementally, so each character costs one modular add per probe.

use super::group::QuotientGroup;
use rayon::prelude::*;

/// Receives every character of the dual.
pub trait Visitor: Send + Sized {
    /// Start of a block sharing the principal coordinates `coords[1..]`;
    /// `exps` are the pairings of the principal part with the probes.
    fn begin_principal(&mut self, _coords: &[u64], _depth: Option<u32>, _exps: &[u32]) {}
    /// One character: residue coordinate `a0`, depth (`None` = trivial), pairings.
    fn visit(&mut self, a0: u64, depth: Option<u32>, exps: &[u32]);
    fn merge(&mut self, other: Self);
}

/// Pairing increments: `inc[f][i] = x_{i,f} · (E / o_f) mod E`.
fn increments(group: &QuotientGroup, probes: &[Vec<u64>]) -> Vec<Vec<u32>> {
    let e = group.exponent();
    group
        .steps()
        .iter()
        .enumerate()
        .map(|(f, &s)| probes.iter().map(|x| ((x[f] as u128 * s as u128) % e as u128) as u32).collect())
        .collect()
}

/// `contrib[f][a]`: depth forced by principal coordinate `f` taking value `a`.
fn depth_contributions(group: &QuotientGroup) -> Vec<Vec<i32>> {
    let p = group.field().p();
    group
        .factors()
        .iter()
        .map(|f| {
            (0..f.order)
                .map(|a| {
                    if a == 0 || f.level == 0 {
                        return -1;
                    }
                    let mut v = 0u32;
                    let mut w = a;
                    while w % p == 0 {
                        w /= p;
                        v += 1;
                    }
                    let mut e_k = 0u32;
                    while p.pow(e_k) < f.order {
                        e_k += 1;
                    }
                    (f.level as u64 * p.pow(e_k - 1 - v)) as i32
                })
                .collect()
        })
        .collect()
}

#[inline]
fn add_mod(a: u32, b: u32, m: u32) -> u32 {
    let s = a + b;
    if s >= m {
        s - m
    } else {
        s
    }
}

/// Visits every character of `group`'s dual, splitting the work over the
/// last principal coordinate.
pub fn enumerate_dual<V, M>(group: &QuotientGroup, probes: &[Vec<u64>], make: M) -> V
where
    V: Visitor,
    M: Fn() -> V + Sync,
{
    let nf = group.factors().len();
    let e = group.exponent() as u32;
    let inc = increments(group, probes);
    let contrib = depth_contributions(group);
    let orders = group.orders();
    let np = probes.len();
    let residue = orders[0];
    let split = if nf > 1 { nf - 1 } else { 0 };
    let split_values: Vec<u64> = if split == 0 { vec![0] } else { (0..orders[split]).collect() };
    let run = |fixed: u64| -> V {
        let mut vis = make();
        let mut coords = vec![0u64; nf];
        let mut exps = vec![0u32; np];
        if split > 0 {
            coords[split] = fixed;
            for (i, x) in exps.iter_mut().enumerate() {
                *x = ((inc[split][i] as u64 * fixed) % e as u64) as u32;
            }
        }
        let mut inner = vec![0u32; np];
        loop {
            let depth = (1..nf).map(|f| contrib[f][coords[f] as usize]).max().unwrap_or(-1);
            let pdepth = if depth >= 0 { Some(depth as u32) } else { None };
            vis.begin_principal(&coords, pdepth, &exps);
            inner.copy_from_slice(&exps);
            for a0 in 0..residue {
                let d = match pdepth {
                    Some(d) => Some(d),
                    None if a0 != 0 => Some(0),
                    None => None,
                };
                vis.visit(a0, d, &inner);
                for (x, &s) in inner.iter_mut().zip(&inc[0]) {
                    *x = add_mod(*x, s, e);
                }
            }
            // Odometer over principal coordinates below the split.
            let mut f = 1;
            loop {
                if f >= nf || (split > 0 && f == split) {
                    return vis;
                }
                coords[f] += 1;
                for (x, &s) in exps.iter_mut().zip(&inc[f]) {
                    *x = add_mod(*x, s, e);
                }
                if coords[f] < orders[f] {
                    break;
                }
                coords[f] = 0;
                f += 1;
            }
        }
    };
    split_values
        .into_par_iter()
        .map(run)
        .reduce_with(|mut a, b| {
            a.merge(b);
            a
        })
        .expect("at least one block")
}

/// Counts nontrivial characters by depth with a full walk.
pub fn depth_counts_enumerated(group: &QuotientGroup) -> Vec<u128> {
    struct Counter(Vec<u128>);
    impl Visitor for Counter {
        fn visit(&mut self, _a0: u64, depth: Option<u32>, _exps: &[u32]) {
            if let Some(d) = depth {
                self.0[d as usize] += 1;
            }
        }
        fn merge(&mut self, other: Self) {
            for (a, b) in self.0.iter_mut().zip(other.0) {
                *a += b;
            }
        }
    }
    let r = group.level() as usize;
    enumerate_dual(group, &[], || Counter(vec![0; r])).0
}

/// Counts nontrivial characters by depth coordinate by coordinate: the depth
/// is a maximum over coordinates, so `#{depth ≤ d}` is a product.
pub fn depth_counts_by_coordinates(group: &QuotientGroup) -> Vec<u128> {
    let contrib = depth_contributions(group);
    let r = group.level() as i32;
    let residue = group.residue_order() as u128;
    // at_most[d] = #{characters with depth ≤ d, trivial included}, d = -1..R-1
    let at_most = |d: i32| -> u128 {
        let mut prod: u128 = if d >= 0 { residue } else { 1 };
        for c in contrib.iter().skip(1) {
            prod *= c.iter().filter(|&&x| x <= d).count() as u128;
        }
        prod
    };
    (0..r).map(|d| at_most(d) - at_most(d - 1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chargroup::group::TorusKind;
    use crate::lseries::LocalField;

    #[test]
    fn walk_visits_every_character_once_with_correct_pairings() {
        let lf = LocalField::new(3, 1, 2, 8).unwrap();
        let g = QuotientGroup::new(&lf, TorusKind::NormOne, 4).unwrap();
        let probes = vec![vec![1u64, 5, 2]];
        struct Collect(Vec<(u64, u32)>, Vec<u64>);
        impl Visitor for Collect {
            fn begin_principal(&mut self, coords: &[u64], _d: Option<u32>, _e: &[u32]) {
                self.1 = coords.to_vec();
            }
            fn visit(&mut self, a0: u64, _d: Option<u32>, exps: &[u32]) {
                let mut c = self.1.clone();
                c[0] = a0;
                let key = c.iter().fold(0u64, |acc, &x| acc * 1000 + x);
                self.0.push((key, exps[0]));
            }
            fn merge(&mut self, other: Self) {
                self.0.extend(other.0);
            }
        }
        let out = enumerate_dual(&g, &probes, || Collect(Vec::new(), Vec::new()));
        assert_eq!(out.0.len() as u128, g.order());
        let mut keys: Vec<u64> = out.0.iter().map(|x| x.0).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len() as u128, g.order());
        for a in g.all_elements() {
            let key = a.iter().fold(0u64, |acc, &x| acc * 1000 + x);
            let got = out.0.iter().find(|x| x.0 == key).unwrap().1;
            assert_eq!(got as u64, g.pairing(&a, &probes[0]));
        }
    }

    #[test]
    fn coordinate_counts_match_walk() {
        for (p, n, r) in [(3u64, 2u32, 5u32), (5, 3, 4), (5, 4, 3)] {
            let lf = LocalField::new(p, 1, n, 10).unwrap();
            let g = QuotientGroup::new(&lf, TorusKind::NormOne, r).unwrap();
            assert_eq!(depth_counts_enumerated(&g), depth_counts_by_coordinates(&g));
        }
    }
}
