//! The finite quotient `Q = T/T_R` in a filtration-adapted basis.
//!
//! `Q` splits as the residue part (Teichmüller constants in `T`) times the
//! principal part.  The principal part is generated by level lifts
//! `g_{k,j} ≈ 1 + b_j w^k` for `k < R` prime to `p`, with `b_j` an `F_p`-basis of
//! the graded piece `V` (`ker Tr_{f_E/f}` for the norm-one torus, `f_E` for the
//! unit group).  `g_{k,j}` has order `p^{e_k}` with `e_k` least such that
//! `k p^{e_k} ≥ R`; the coordinates are read off by peeling one level at a time.

use crate::error::{Error, Result};
use crate::ffield::{nullspace_mod_p, solve_mod_p, FqElem};
use crate::lseries::{LaurentElem, LocalField};
use std::sync::Arc;

/// Which torus of `E^×` is modelled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TorusKind {
    /// `ker N_{E/F}`, the elliptic torus of `SL_n`.
    NormOne,
    /// `O_E^×`, the units of the elliptic torus of `GL_n`.
    Units,
}

/// One cyclic factor of `Q`.
#[derive(Clone, Debug)]
pub struct Factor {
    pub order: u64,
    /// 0 for the residue factor, else the level `k` of the generator.
    pub level: u32,
    /// Index into the graded basis (unused for the residue factor).
    pub basis_index: usize,
}

#[derive(Clone, Debug)]
struct PeelStep {
    /// Index of the first factor at the base level `k`.
    first_factor: usize,
    /// `m = k p^e`.
    e: u32,
}

/// `T/T_R` with coordinates.
#[derive(Clone, Debug)]
pub struct QuotientGroup {
    lf: Arc<LocalField>,
    kind: TorusKind,
    r: u32,
    factors: Vec<Factor>,
    gens: Vec<LaurentElem>,
    exponent: u64,
    steps: Vec<u64>,
    /// `F_p`-basis of the graded piece.
    space: Vec<FqElem>,
    /// Per level `m` in `1..R`.
    peel: Vec<Option<PeelStep>>,
    /// `frob_cols[e][j]`: coefficients of `b_j^{p^e}`.
    frob_cols: Vec<Vec<Vec<u64>>>,
    /// `inv_pows[f][e] = g_f^{-p^e}` for principal factors `f`.
    inv_pows: Vec<Vec<LaurentElem>>,
}

/// `F_p`-basis of `ker Tr_{f_E/f_M}` inside `f_E`.
pub fn trace_kernel_basis(lf: &LocalField, m: u32) -> Vec<FqElem> {
    let t = lf.tower();
    let ext = lf.ext();
    let d = t.layer_degree(ext) as usize;
    let sub = lf.layer_of(m).expect("m divides n");
    let dm = t.layer_degree(sub) as usize;
    let cols: Vec<Vec<u64>> = (0..d)
        .map(|i| {
            let b = t.gen_pow(ext, i as i64);
            let mut c = t.coefficients(t.trace_to(b, sub).unwrap());
            c.resize(dm, 0);
            c
        })
        .collect();
    nullspace_mod_p(&cols, t.p())
        .into_iter()
        .map(|v| t.from_coefficients(ext, &v))
        .collect()
}

/// `F_p`-basis of `f_E`.
pub fn residue_basis(lf: &LocalField) -> Vec<FqElem> {
    let t = lf.tower();
    let d = t.layer_degree(lf.ext());
    (0..d).map(|i| t.gen_pow(lf.ext(), i as i64)).collect()
}

impl QuotientGroup {
    /// Builds `T/T_R` for `R ≥ 1`.
    pub fn new(lf: &LocalField, kind: TorusKind, r: u32) -> Result<Self> {
        if r == 0 {
            return Err(Error::Domain("quotient level must be at least 1".into()));
        }
        let lf = Arc::new(if lf.prec() < r as i64 + 1 { lf.with_prec(r as i64 + 1) } else { lf.clone() });
        let t = lf.tower().clone();
        let p = lf.p();
        let q = lf.q();
        let n = lf.n();
        if p <= n as u64 {
            return Err(Error::Config(format!("characteristic {p} must exceed n = {n}")));
        }
        let qe = t.layer_size(lf.ext());
        let residue_order = match kind {
            TorusKind::NormOne => (qe - 1) / (q - 1),
            TorusKind::Units => qe - 1,
        };
        let space = match kind {
            TorusKind::NormOne => trace_kernel_basis(&lf, 1),
            TorusKind::Units => residue_basis(&lf),
        };
        let rr = r as i64;
        let mut factors = vec![Factor { order: residue_order, level: 0, basis_index: 0 }];
        let residue_gen = match kind {
            TorusKind::NormOne => lf.residue_power(q as i64 - 1),
            TorusKind::Units => lf.residue_power(1),
        };
        let mut gens = vec![residue_gen];
        let mut peel: Vec<Option<PeelStep>> = vec![None; r as usize];
        let mut inv_pows = vec![Vec::new()];
        let mut max_e = 0u32;
        for k in 1..r {
            if k as u64 % p == 0 {
                continue;
            }
            let mut e_k = 0u32;
            while (k as u64) * p.pow(e_k) < r as u64 {
                e_k += 1;
            }
            max_e = max_e.max(e_k);
            let first = factors.len();
            for e in 0..e_k {
                let m = k as u64 * p.pow(e);
                peel[m as usize] = Some(PeelStep { first_factor: first, e });
            }
            for (j, &b) in space.iter().enumerate() {
                let u = lf
                    .one()
                    .add(&LaurentElem::monomial(&t, lf.ext(), b, k as i64))
                    .truncate(rr);
                let g = match kind {
                    TorusKind::NormOne => lf.principal_norm_one(&u)?.truncate(rr),
                    TorusKind::Units => u,
                };
                let gi = g.invert_to(rr)?;
                let mut pows = Vec::with_capacity(e_k as usize);
                let mut cur = gi;
                for _ in 0..e_k {
                    pows.push(cur.clone());
                    cur = cur.pow(p as u128).truncate(rr);
                }
                inv_pows.push(pows);
                factors.push(Factor { order: p.pow(e_k), level: k, basis_index: j });
                gens.push(g);
            }
        }
        let frob_cols: Vec<Vec<Vec<u64>>> = (0..max_e.max(1))
            .map(|e| {
                space
                    .iter()
                    .map(|&b| {
                        let mut c = t.coefficients(t.frobenius(b, e as i64));
                        c.resize(t.layer_degree(lf.ext()) as usize, 0);
                        c
                    })
                    .collect()
            })
            .collect();
        let exponent = residue_order * p.pow(max_e);
        let steps = factors.iter().map(|f| exponent / f.order).collect();
        Ok(QuotientGroup {
            lf,
            kind,
            r,
            factors,
            gens,
            exponent,
            steps,
            space,
            peel,
            frob_cols,
            inv_pows,
        })
    }

    pub fn field(&self) -> &Arc<LocalField> {
        &self.lf
    }
    pub fn kind(&self) -> TorusKind {
        self.kind
    }
    /// The level `R` of the quotient.
    pub fn level(&self) -> u32 {
        self.r
    }
    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }
    pub fn orders(&self) -> Vec<u64> {
        self.factors.iter().map(|f| f.order).collect()
    }
    pub fn order(&self) -> u128 {
        self.factors.iter().map(|f| f.order as u128).product()
    }
    /// Exponent of `Q`, the cyclotomic modulus of character values.
    pub fn exponent(&self) -> u64 {
        self.exponent
    }
    /// `E / order_i`.
    pub fn steps(&self) -> &[u64] {
        &self.steps
    }
    pub fn graded_basis(&self) -> &[FqElem] {
        &self.space
    }
    pub fn generators(&self) -> &[LaurentElem] {
        &self.gens
    }
    pub fn residue_order(&self) -> u64 {
        self.factors[0].order
    }
    /// `|T/T_s|` for `0 ≤ s ≤ R`.
    pub fn index_of_level(&self, s: u32) -> u128 {
        if s == 0 {
            return 1;
        }
        let step = self.space.len() as u32;
        self.residue_order() as u128 * (self.lf.p() as u128).pow(step * (s - 1))
    }

    /// Coordinates of a torus element modulo `T_R`.
    pub fn dlog(&self, u: &LaurentElem) -> Result<Vec<u64>> {
        let t = self.lf.tower();
        let rr = self.r as i64;
        if u.ord()? != Some(0) {
            return Err(Error::Domain("torus elements are units".into()));
        }
        let x0 = t.retag(u.coeff(0), self.lf.ext());
        let log = t.layer_log(x0).expect("unit residue");
        let mut coords = vec![0u64; self.factors.len()];
        coords[0] = match self.kind {
            TorusKind::NormOne => {
                let q1 = self.lf.q() - 1;
                if log % q1 != 0 {
                    return Err(Error::Domain("residue is not of norm one".into()));
                }
                (log / q1) % self.factors[0].order
            }
            TorusKind::Units => log % self.factors[0].order,
        };
        let mut v = u.truncate(rr).scale(t.inv(x0)?).truncate(rr);
        for m in 1..self.r as usize {
            let c = t.retag(v.coeff(m as i64), self.lf.ext());
            if c.is_zero() {
                continue;
            }
            let step = self.peel[m].as_ref().expect("levels prime to p or their p-powers");
            let rhs = {
                let mut x = t.coefficients(c);
                x.resize(t.layer_degree(self.lf.ext()) as usize, 0);
                x
            };
            let digits = solve_mod_p(&self.frob_cols[step.e as usize], &rhs, t.p())
                .ok_or_else(|| Error::Domain(format!("element leaves the torus at level {m}")))?;
            let pe = t.p().pow(step.e);
            for (j, &d) in digits.iter().enumerate() {
                if d == 0 {
                    continue;
                }
                let f = step.first_factor + j;
                let g = &self.inv_pows[f][step.e as usize];
                for _ in 0..d {
                    v = v.mul(g).truncate(rr);
                }
                coords[f] = (coords[f] + d * pe) % self.factors[f].order;
            }
            debug_assert!(v.coeff(m as i64).is_zero());
        }
        Ok(coords)
    }

    /// `Π g_i^{x_i}` modulo `w^R`.
    pub fn element(&self, coords: &[u64]) -> LaurentElem {
        let rr = self.r as i64;
        let mut acc = self.lf.one().truncate(rr);
        for (g, &x) in self.gens.iter().zip(coords) {
            if x != 0 {
                acc = acc.mul(&g.pow(x as u128).truncate(rr)).truncate(rr);
            }
        }
        acc
    }

    pub fn add(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        a.iter().zip(b).zip(&self.factors).map(|((x, y), f)| (x + y) % f.order).collect()
    }
    pub fn neg(&self, a: &[u64]) -> Vec<u64> {
        a.iter().zip(&self.factors).map(|(x, f)| (f.order - x % f.order) % f.order).collect()
    }
    pub fn scale(&self, a: &[u64], k: i64) -> Vec<u64> {
        a.iter()
            .zip(&self.factors)
            .map(|(&x, f)| ((x as i128 * k as i128).rem_euclid(f.order as i128)) as u64)
            .collect()
    }

    /// Largest `s ≤ R` with the class inside `T_s/T_R`.
    pub fn level_of(&self, x: &[u64]) -> u32 {
        if x[0] != 0 {
            return 0;
        }
        let p = self.lf.p();
        let mut best = self.r;
        for (f, &v) in self.factors.iter().zip(x).skip(1) {
            if v == 0 {
                continue;
            }
            let mut lvl = f.level as u64;
            let mut w = v;
            while w % p == 0 {
                w /= p;
                lvl *= p;
            }
            best = best.min(lvl.min(self.r as u64) as u32);
        }
        best
    }

    /// `ψ_a(x) = ζ_E^{pairing}`.
    pub fn pairing(&self, a: &[u64], x: &[u64]) -> u64 {
        let e = self.exponent as u128;
        let mut acc: u128 = 0;
        for ((&ai, &xi), &s) in a.iter().zip(x).zip(&self.steps) {
            acc = (acc + (ai as u128 * xi as u128 % e) * s as u128) % e;
        }
        acc as u64
    }

    /// Depth of `ψ_a` read from the coordinates; `None` for the trivial character.
    pub fn character_depth(&self, a: &[u64]) -> Option<u32> {
        let p = self.lf.p();
        let mut depth: Option<u32> = if a[0] != 0 { Some(0) } else { None };
        for (f, &v) in self.factors.iter().zip(a).skip(1) {
            if v == 0 {
                continue;
            }
            let mut val = 0u32;
            let mut w = v;
            while w % p == 0 {
                w /= p;
                val += 1;
            }
            let e_k = f.order.trailing_zeros_base(p);
            let d = f.level as u64 * p.pow(e_k - 1 - val);
            depth = Some(depth.map_or(d as u32, |x| x.max(d as u32)));
        }
        depth
    }

    /// `1 + y w^s` projected into the torus (exactly `1 + y w^s` for units).
    pub fn level_lift(&self, s: u32, y: FqElem) -> Result<LaurentElem> {
        let t = self.lf.tower();
        let u = self
            .lf
            .one()
            .add(&LaurentElem::monomial(t, self.lf.ext(), y, s as i64))
            .truncate(self.r as i64);
        match self.kind {
            TorusKind::NormOne => Ok(self.lf.principal_norm_one(&u)?.truncate(self.r as i64)),
            TorusKind::Units => Ok(u),
        }
    }

    /// Generators of `S^M = ker N_{E/M} ∩ T` modulo `T_R`, grouped by level
    /// (index 0 holds the residue generator).
    pub fn norm_kernel_generators(&self, m: u32) -> Result<Vec<Vec<Vec<u64>>>> {
        let lf = &self.lf;
        let q = lf.q();
        let n = lf.n();
        let mut out = vec![Vec::new(); self.r as usize];
        if m == n {
            return Ok(out);
        }
        let qm = q.pow(m);
        let mut res = vec![0u64; self.factors.len()];
        res[0] = match self.kind {
            TorusKind::NormOne => ((qm - 1) / (q - 1)) % self.factors[0].order,
            TorusKind::Units => (qm - 1) % self.factors[0].order,
        };
        out[0].push(res);
        let basis = trace_kernel_basis(lf, m);
        let t = lf.tower();
        for s in 1..self.r {
            for &b in &basis {
                let u = lf
                    .one()
                    .add(&LaurentElem::monomial(t, lf.ext(), b, s as i64))
                    .truncate(self.r as i64);
                let g = lf.principal_norm_one_to(&u, m)?.truncate(self.r as i64);
                out[s as usize].push(self.dlog(&g)?);
            }
        }
        Ok(out)
    }

    /// All coordinate vectors (small groups only).
    pub fn all_elements(&self) -> Vec<Vec<u64>> {
        let orders = self.orders();
        let mut out = Vec::new();
        let mut cur = vec![0u64; orders.len()];
        loop {
            out.push(cur.clone());
            let mut i = 0;
            loop {
                if i == orders.len() {
                    return out;
                }
                cur[i] += 1;
                if cur[i] < orders[i] {
                    break;
                }
                cur[i] = 0;
                i += 1;
            }
        }
    }
}

trait PowerOf {
    fn trailing_zeros_base(self, p: u64) -> u32;
}

impl PowerOf for u64 {
    fn trailing_zeros_base(self, p: u64) -> u32 {
        let mut e = 0;
        let mut x = self;
        while x > 1 && x % p == 0 {
            x /= p;
            e += 1;
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm_one_units_mod(lf: &LocalField, r: u32) -> Vec<LaurentElem> {
        // Enumerate all units modulo w^R and keep those of norm one.
        let t = lf.tower();
        let ext = lf.ext();
        let all = t.elements(ext);
        let mut out = Vec::new();
        let levels = r as usize;
        let total = all.len().pow(levels as u32);
        for idx in 0..total {
            let mut x = idx;
            let mut coeffs = Vec::with_capacity(levels);
            for _ in 0..levels {
                coeffs.push(all[x % all.len()]);
                x /= all.len();
            }
            if coeffs[0].is_zero() {
                continue;
            }
            let u = LaurentElem::from_coeffs(t, ext, 0, coeffs, Some(r as i64));
            let nm = lf.norm_to(&u, 1).unwrap();
            if nm.sub(&LaurentElem::one(t, nm.layer())).is_zero_class() {
                out.push(u);
            }
        }
        out
    }

    #[test]
    fn orders_match_enumeration() {
        for &(p, n, r, expect) in &[(3u64, 2u32, 1u32, 4u128), (5, 3, 1, 31), (3, 2, 2, 12)] {
            let lf = LocalField::new(p, 1, n, 8).unwrap();
            let g = QuotientGroup::new(&lf, TorusKind::NormOne, r).unwrap();
            assert_eq!(g.order(), expect);
            if r <= 2 && p.pow(n * r) < 100_000 {
                assert_eq!(norm_one_units_mod(&lf, r).len() as u128, expect);
            }
        }
    }

    #[test]
    fn dlog_is_a_bijective_homomorphism() {
        let lf = LocalField::new(3, 1, 2, 8).unwrap();
        let g = QuotientGroup::new(&lf, TorusKind::NormOne, 3).unwrap();
        let elems = norm_one_units_mod(&lf, 3);
        assert_eq!(elems.len() as u128, g.order());
        let logs: Vec<Vec<u64>> = elems.iter().map(|u| g.dlog(u).unwrap()).collect();
        let distinct: std::collections::HashSet<_> = logs.iter().cloned().collect();
        assert_eq!(distinct.len(), logs.len());
        for i in (0..elems.len()).step_by(7) {
            for j in (0..elems.len()).step_by(5) {
                let prod = elems[i].mul(&elems[j]).truncate(3);
                assert_eq!(g.dlog(&prod).unwrap(), g.add(&logs[i], &logs[j]));
            }
        }
    }

    #[test]
    fn element_round_trip() {
        for kind in [TorusKind::NormOne, TorusKind::Units] {
            let lf = LocalField::new(5, 1, 3, 10).unwrap();
            let g = QuotientGroup::new(&lf, kind, 6).unwrap();
            let orders = g.orders();
            let mut seed = 17u64;
            for _ in 0..40 {
                let x: Vec<u64> = orders
                    .iter()
                    .map(|&o| {
                        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        (seed >> 33) % o
                    })
                    .collect();
                let u = g.element(&x);
                assert_eq!(g.dlog(&u).unwrap(), x);
            }
        }
    }

    #[test]
    fn torsion_profile_matches_enumerated_group() {
        // The abelian group type is pinned down by the number of d-torsion
        // elements for every d.
        let lf = LocalField::new(3, 1, 2, 8).unwrap();
        let g = QuotientGroup::new(&lf, TorusKind::NormOne, 3).unwrap();
        let elems = norm_one_units_mod(&lf, 3);
        let one = LaurentElem::one(lf.tower(), lf.ext());
        for d in [1u128, 2, 3, 4, 6, 8, 9, 12, 36] {
            let brute = elems
                .iter()
                .filter(|u| u.pow(d).truncate(3).sub(&one).is_zero_class())
                .count();
            let coords = g
                .all_elements()
                .iter()
                .filter(|x| g.scale(x, d as i64).iter().all(|&v| v == 0))
                .count();
            assert_eq!(brute, coords, "d = {d}");
        }
    }

    #[test]
    fn levels_and_depths() {
        let lf = LocalField::new(5, 1, 3, 10).unwrap();
        let g = QuotientGroup::new(&lf, TorusKind::NormOne, 6).unwrap();
        assert_eq!(g.exponent(), 775);
        let t = lf.tower();
        let b = g.graded_basis()[0];
        for s in 1..6 {
            let u = g.level_lift(s, b).unwrap();
            assert_eq!(g.level_of(&g.dlog(&u).unwrap()), s);
        }
        assert_eq!(g.level_of(&g.dlog(&lf.residue_power(4)).unwrap()), 0);
        assert_eq!(g.level_of(&vec![0; g.factors().len()]), 6);
        let _ = t;
    }
}
