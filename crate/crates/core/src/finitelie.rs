//! Deligne–Lusztig characters of `GL_n(f)` at regular elements of the
//! anisotropic torus `T(f) = f_{q^n}^×`, and the finite transform
//! `L(g, t) = |T(f)|⁻¹ Σ_ϑ R_{T,ϑ}(g) ϑ(t⁻¹)`.

use crate::chargroup::{CycNumber, PowerHistogram};
use crate::error::{Error, Result};
use crate::ffield::{FieldTower, FqElem};
use num_bigint::BigInt;
use num_rational::BigRational;

/// `T(f) = f_{q^n}^×` with a fixed generator.
#[derive(Debug)]
pub struct FiniteTorus {
    tower: FieldTower,
    layer: usize,
    q: u64,
    n: u32,
}

/// `ϑ_k(g^a) = ζ^{ka}`, `ζ` a primitive `(q^n − 1)`-th root of unity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FiniteTorusChar {
    pub k: u64,
}

impl FiniteTorus {
    /// `f = F_{p^k}`, torus in `GL_n(f)`.
    pub fn new(p: u64, k: u32, n: u32) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::Config("degrees must be positive".into()));
        }
        let tower = FieldTower::new(p, &[k, k * n])?;
        let layer = tower
            .layer_of_degree(k * n)
            .ok_or_else(|| Error::Config(format!("no layer of degree {}", k * n)))?;
        Ok(FiniteTorus { tower, layer, q: p.pow(k), n })
    }

    pub fn q(&self) -> u64 {
        self.q
    }
    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn order(&self) -> u64 {
        self.q.pow(self.n) - 1
    }
    pub fn tower(&self) -> &FieldTower {
        &self.tower
    }

    pub fn elements(&self) -> Vec<FqElem> {
        (0..self.order()).map(|a| self.tower.gen_pow(self.layer, a as i64)).collect()
    }

    pub fn characters(&self) -> impl Iterator<Item = FiniteTorusChar> {
        (0..self.order()).map(|k| FiniteTorusChar { k })
    }

    fn log(&self, g: FqElem) -> Result<u64> {
        let g = self.tower.embed(g, self.layer)?;
        self.tower.layer_log(g).ok_or_else(|| Error::Domain("0 is not in T(f)".into()))
    }

    /// `g ↦ g^q`.
    pub fn frobenius(&self, g: FqElem) -> FqElem {
        self.tower.pow(g, self.q as i128)
    }

    /// Logs of `g, g^q, …, g^{q^{n−1}}`.
    fn orbit_logs(&self, g: FqElem) -> Result<Vec<u64>> {
        let a = self.log(g)?;
        let ord = self.order();
        let mut out = Vec::with_capacity(self.n as usize);
        let mut x = a;
        for _ in 0..self.n {
            out.push(x);
            x = ((x as u128 * self.q as u128) % ord as u128) as u64;
        }
        Ok(out)
    }

    /// Whether the `n` Frobenius conjugates of `g` are distinct.
    pub fn is_regular(&self, g: FqElem) -> Result<bool> {
        let mut v = self.orbit_logs(g)?;
        v.sort_unstable();
        v.dedup();
        Ok(v.len() == self.n as usize)
    }

    pub fn char_mul(&self, a: FiniteTorusChar, b: FiniteTorusChar) -> FiniteTorusChar {
        FiniteTorusChar { k: (a.k + b.k) % self.order() }
    }

    pub fn eval(&self, theta: FiniteTorusChar, g: FqElem) -> Result<CycNumber> {
        let a = self.log(g)?;
        let ord = self.order();
        Ok(CycNumber::root_of_unity(ord, ((theta.k as u128 * a as u128) % ord as u128) as i64))
    }

    /// `R_{T,ϑ}(g) = Σ_i ϑ(g^{q^i})` for regular `g`.
    pub fn dl_value_regular(&self, theta: FiniteTorusChar, g: FqElem) -> Result<CycNumber> {
        if !self.is_regular(g)? {
            return Err(Error::Domain("g is not regular".into()));
        }
        let ord = self.order() as u128;
        let mut h = PowerHistogram::new(self.order());
        for x in self.orbit_logs(g)? {
            h.bump(((theta.k as u128 * x as u128) % ord) as u64);
        }
        Ok(h.value())
    }

    /// `|T(f)|⁻¹ Σ_ϑ R_{T,ϑ}(g) ϑ(t⁻¹)`, summed over every character.
    pub fn finite_l(&self, g: FqElem, t: FqElem) -> Result<CycNumber> {
        if !self.is_regular(g)? {
            return Err(Error::Domain("g is not regular".into()));
        }
        let ord = self.order() as u128;
        let b = self.log(t)? as u128;
        let orbit = self.orbit_logs(g)?;
        let mut h = PowerHistogram::new(self.order());
        for k in 0..ord {
            for &x in &orbit {
                let e = (k * ((x as u128 + ord - b) % ord)) % ord;
                h.bump(e as u64);
            }
        }
        let inv = BigRational::new(BigInt::from(1), BigInt::from(self.order()));
        Ok(h.value().scale(&inv))
    }

    /// `#{i : g^{q^i} = t}`.
    pub fn twist_count(&self, g: FqElem, t: FqElem) -> Result<usize> {
        let b = self.log(t)?;
        Ok(self.orbit_logs(g)?.into_iter().filter(|&x| x == b).count())
    }
}

/// Outcome of the exhaustive `L(g, t) = #{i : g^{q^i} = t}` check.
#[derive(Clone, Debug, Default)]
pub struct FiniteCheck {
    pub pairs: usize,
    pub regular: usize,
    pub failures: Vec<(u64, u64)>,
}

impl FiniteCheck {
    pub fn holds(&self) -> bool {
        self.failures.is_empty() && self.pairs > 0
    }
}

/// Every regular `g` against every `t`; failures are recorded by discrete log.
pub fn exhaustive_check(torus: &FiniteTorus) -> Result<FiniteCheck> {
    use rayon::prelude::*;
    let elems = torus.elements();
    let regular: Vec<(u64, FqElem)> = elems
        .iter()
        .enumerate()
        .filter(|(_, &g)| torus.is_regular(g).unwrap_or(false))
        .map(|(a, &g)| (a as u64, g))
        .collect();
    let per_g: Vec<Result<(usize, Vec<(u64, u64)>)>> = regular
        .par_iter()
        .map(|&(a, g)| {
            let mut bad = Vec::new();
            let mut total = 0usize;
            for (b, &t) in elems.iter().enumerate() {
                let l = torus.finite_l(g, t)?;
                let want = torus.twist_count(g, t)?;
                let v = l.to_integer();
                if v != Some(BigInt::from(want)) || want > 1 {
                    bad.push((a, b as u64));
                }
                total += want;
            }
            if total != torus.n() as usize {
                bad.push((a, u64::MAX));
            }
            Ok((elems.len(), bad))
        })
        .collect();
    let mut out = FiniteCheck { regular: regular.len(), ..Default::default() };
    for r in per_g {
        let (pairs, bad) = r?;
        out.pairs += pairs;
        out.failures.extend(bad);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_character_gives_n() {
        let t = FiniteTorus::new(3, 1, 3).unwrap();
        let g = t.tower().generator(t.layer);
        let v = t.dl_value_regular(FiniteTorusChar { k: 0 }, g).unwrap();
        assert_eq!(v.to_i64(), Some(3));
    }

    #[test]
    fn irregular_is_rejected() {
        let t = FiniteTorus::new(5, 1, 2).unwrap();
        let one = t.tower().one(t.layer);
        assert!(t.dl_value_regular(FiniteTorusChar { k: 1 }, one).is_err());
        assert!(t.finite_l(one, one).is_err());
    }

    #[test]
    fn orbit_examples() {
        let t = FiniteTorus::new(5, 1, 2).unwrap();
        let g = t.tower().generator(t.layer);
        assert_eq!(t.finite_l(g, g).unwrap().to_i64(), Some(1));
        assert_eq!(t.finite_l(g, t.frobenius(g)).unwrap().to_i64(), Some(1));
        let h = t.tower().gen_pow(t.layer, 2);
        assert_eq!(t.finite_l(g, h).unwrap().to_i64(), Some(0));
    }

    #[test]
    fn frobenius_invariance_and_characters_multiply() {
        let t = FiniteTorus::new(3, 1, 3).unwrap();
        let g = t.tower().gen_pow(t.layer, 5);
        for theta in t.characters().take(8) {
            let a = t.dl_value_regular(theta, g).unwrap();
            let b = t.dl_value_regular(theta, t.frobenius(g)).unwrap();
            assert_eq!(a, b);
        }
        let (a, b) = (FiniteTorusChar { k: 4 }, FiniteTorusChar { k: 11 });
        let lhs = t.eval(t.char_mul(a, b), g).unwrap();
        let rhs = t.eval(a, g).unwrap().mul(&t.eval(b, g).unwrap());
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn exhaustive_small() {
        for (p, k, n) in [(3, 1, 2), (5, 1, 2), (7, 1, 2), (3, 1, 3), (3, 2, 2)] {
            let t = FiniteTorus::new(p, k, n).unwrap();
            let c = exhaustive_check(&t).unwrap();
            assert!(c.holds(), "{p}^{k}, n={n}: {:?}", &c.failures[..c.failures.len().min(5)]);
        }
    }
}
