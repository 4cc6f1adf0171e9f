//! Depths of torus and matrix elements: root-value orders `d_α`, the torus
//! depth, the Newton-polygon depth of the centred characteristic polynomial,
//! goodness, and Weyl discriminants as exact `q`-powers.

use crate::chargroup::HoweTower;
use crate::error::{Error, Result};
use crate::lseries::{LaurentElem, LocalField, Matrix};
use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::One;

/// `q^e` as an exact rational.
pub fn exp_q(q: u64, e: i64) -> BigRational {
    let base = BigInt::from(q).pow(e.unsigned_abs() as u32);
    if e >= 0 {
        BigRational::from_integer(base)
    } else {
        BigRational::new(BigInt::one(), base)
    }
}

/// `d_{ij} = ord(λ_i/λ_j − 1)` for every ordered pair of eigenvalues; `None`
/// on the diagonal and where `λ_i = λ_j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootOrderVector {
    n: usize,
    values: Vec<Option<i64>>,
}

impl RootOrderVector {
    /// From eigenvalues living in a common field.
    pub fn from_eigenvalues(eigs: &[LaurentElem]) -> Result<Self> {
        let n = eigs.len();
        let mut values = vec![None; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let diff = eigs[i].sub(&eigs[j]);
                if diff.is_zero() {
                    continue;
                }
                let num = diff.ord()?.ok_or_else(|| {
                    Error::Precision(format!("cannot separate eigenvalues {i} and {j}"))
                })?;
                values[i * n + j] = Some(num - eigs[j].ord_finite()?);
            }
        }
        Ok(RootOrderVector { n, values })
    }

    /// Roots of the torus `E^×`: eigenvalues `σ^i(γ)`.
    pub fn of_torus(lf: &LocalField, gamma: &LaurentElem) -> Result<Self> {
        let eigs: Vec<LaurentElem> = (0..lf.n() as i64).map(|i| lf.sigma(gamma, i)).collect();
        Self::from_eigenvalues(&eigs)
    }

    /// Every root with the same order `d`.
    pub fn uniform(n: usize, d: i64) -> Self {
        let values = (0..n * n).map(|k| if k / n == k % n { None } else { Some(d) }).collect();
        RootOrderVector { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    /// `d_{α_ij}`; `None` means `α(γ) = 1`.
    pub fn get(&self, i: usize, j: usize) -> Option<i64> {
        self.values[i * self.n + j]
    }
    /// Ordered pairs `(i, j, d_ij)` with `i ≠ j`.
    pub fn roots(&self) -> impl Iterator<Item = (usize, usize, Option<i64>)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j, self.get(i, j))))
    }
    /// Minimum over roots, `None` for a central element.
    pub fn min(&self) -> Option<i64> {
        self.values.iter().flatten().copied().min()
    }
    pub fn is_regular(&self) -> bool {
        self.roots().all(|r| r.2.is_some())
    }
    /// `Σ d_α` over roots selected by `keep`; fails if one of them is infinite.
    pub fn sum_over(&self, keep: impl Fn(usize, usize) -> bool) -> Result<i64> {
        let mut s = 0;
        for (i, j, d) in self.roots() {
            if keep(i, j) {
                s += d.ok_or_else(|| Error::Domain("irregular element: α(γ) = 1".into()))?;
            }
        }
        Ok(s)
    }
}

/// `d(γ) = min_α ord(α(γ) − 1)` for `γ ∈ T_0`; `None` is `+∞` (central).
pub fn torus_depth(lf: &LocalField, gamma: &LaurentElem) -> Result<Option<i64>> {
    if gamma.ord()? != Some(0) {
        return Err(Error::Domain("torus depth needs a unit".into()));
    }
    Ok(RootOrderVector::of_torus(lf, gamma)?.min())
}

/// Largest `s` with `γ ∈ 1 + w^s O_E` (`None` for `γ = 1`).
pub fn level(lf: &LocalField, gamma: &LaurentElem) -> Result<Option<i64>> {
    let d = gamma.sub(&lf.one());
    if d.is_zero() {
        return Ok(None);
    }
    Ok(Some(d.ord()?.ok_or_else(|| Error::Precision("γ − 1 unresolved".into()))?.max(0)))
}

/// Good of depth `r`: every finite root order equals `r`, and `d(γ) = r`.
pub fn is_good(lf: &LocalField, gamma: &LaurentElem, r: i64) -> Result<bool> {
    let rov = RootOrderVector::of_torus(lf, gamma)?;
    Ok(rov.min() == Some(r) && rov.roots().all(|x| x.2.map_or(true, |d| d == r)))
}

fn binomial(n: usize, k: usize) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

/// Minimal Newton-polygon slope of `ch_γ(x + Tr γ / n)`, i.e. the smallest
/// valuation of a root of the centred characteristic polynomial.
pub fn newton_depth(m: &Matrix) -> Result<Rational64> {
    let n = m.n;
    if m.min_ord().map_or(false, |v| v < 0) {
        return Err(Error::Domain("matrix is not integral".into()));
    }
    let c = m.charpoly()?;
    let t = c[0].tower().clone();
    let layer = c[0].layer();
    let shift = m.trace().scale(t.inv(t.from_int(layer, n as i64))?);
    // b_j = Σ_{i ≥ j} C(i, j) c_i shift^{i−j}
    let mut powers = vec![LaurentElem::one(&t, layer)];
    for _ in 0..n {
        powers.push(powers.last().unwrap().mul(&shift));
    }
    let b: Vec<LaurentElem> = (0..=n)
        .map(|j| {
            (j..=n).fold(LaurentElem::zero(&t, layer), |acc, i| {
                acc.add(&c[i].mul(&powers[i - j]).scale(t.from_int(layer, binomial(i, j))))
            })
        })
        .collect();
    let mut best: Option<Rational64> = None;
    let mut floor_unresolved: Option<Rational64> = None;
    for j in 1..=n {
        let coef = &b[n - j];
        if coef.is_zero() {
            continue;
        }
        match coef.ord() {
            Ok(Some(v)) => {
                let s = Rational64::new(v, j as i64);
                best = Some(best.map_or(s, |b| b.min(s)));
            }
            Ok(None) => {}
            Err(Error::Precision(_)) => {
                let s = Rational64::new(coef.prec().unwrap_or(i64::MAX / 2), j as i64);
                floor_unresolved = Some(floor_unresolved.map_or(s, |f| f.min(s)));
            }
            Err(e) => return Err(e),
        }
    }
    match (best, floor_unresolved) {
        (None, Some(f)) => Err(Error::Precision(format!("every coefficient unresolved, slopes ≥ {f}"))),
        (None, None) => Err(Error::Domain("central or nilpotent-shifted element has no finite slope".into())),
        (Some(b), Some(f)) if f <= b => {
            Err(Error::Precision(format!("slope {b} not certified: unresolved coefficient bound {f}")))
        }
        (Some(b), _) => Ok(b),
    }
}

/// Depth of `g` at the hyperspecial vertex: `min ord(g − 1)` when positive,
/// `0` on `GL_n(O)`, `None` outside it (or `Some(i64::MAX)` for `g = 1`).
pub fn matrix_depth(g: &Matrix) -> Result<Option<i64>> {
    if g.min_ord().map_or(true, |v| v < 0) {
        return Ok(None);
    }
    if g.det()?.ord()? != Some(0) {
        return Ok(None);
    }
    let t = g.rows[0][0].tower().clone();
    let ident = Matrix::identity(&t, g.rows[0][0].layer(), g.n);
    let d = g.sub(&ident);
    if d.rows.iter().flatten().all(|x| x.is_zero()) {
        return Ok(Some(i64::MAX));
    }
    let mut m = i64::MAX;
    for x in d.rows.iter().flatten() {
        if x.is_zero() {
            continue;
        }
        match x.ord()? {
            Some(v) => m = m.min(v),
            None => m = m.min(x.prec().unwrap_or(i64::MAX)),
        }
    }
    Ok(Some(m.max(0)))
}

/// `max_z` of the vertex depth of `z·M(γ)` over residue constants `z ∈ f^×`.
pub fn twisted_matrix_depth(lf: &LocalField, gamma: &LaurentElem) -> Result<Option<i64>> {
    let t = lf.tower();
    let base = lf.base();
    let mut best: Option<i64> = None;
    for z in t.elements(base).into_iter().filter(|z| !z.is_zero()) {
        let zg = gamma.mul(&lf.constant(t.retag(z, lf.ext())));
        let d = matrix_depth(&lf.regular_matrix(&zg))?;
        if let Some(d) = d {
            best = Some(best.map_or(d, |b: i64| b.max(d)));
        }
    }
    Ok(best)
}

/// Exponent `e` with `|D(γ)| = q^{−e}`, summing `d_α` over roots kept by `keep`.
pub fn discriminant_exponent(rov: &RootOrderVector, keep: impl Fn(usize, usize) -> bool) -> Result<i64> {
    rov.sum_over(keep)
}

/// `|D_G(γ)| = q^{−Σ_α d_α(γ)}`.
pub fn weyl_discriminant(q: u64, rov: &RootOrderVector) -> Result<BigRational> {
    Ok(exp_q(q, -rov.sum_over(|_, _| true)?))
}

/// `|D_M(γ)|` for the Levi of eigenvalue blocks `blocks` (block index per eigenvalue).
pub fn weyl_discriminant_levi(q: u64, rov: &RootOrderVector, blocks: &[usize]) -> Result<BigRational> {
    Ok(exp_q(q, -rov.sum_over(|i, j| blocks[i] == blocks[j])?))
}

/// Exponent of `|D_G(X*_ψ)| = q^{Σ r_i (|Φ(G,T^i)| − |Φ(G,T^{i+1})|)}` with
/// `|Φ(G,T^i)| = n² − n[E:E^i]`; the step after the last is `F`.
pub fn representative_discriminant_exponent(n: u32, tower: &HoweTower) -> i64 {
    let n = n as i64;
    let phi = |deg: u32| n * n - n * (n / deg as i64);
    let mut e = 0;
    for (i, &(deg, r)) in tower.steps.iter().enumerate() {
        let next = tower.steps.get(i + 1).map_or(0, |s| phi(s.0));
        e += r as i64 * (phi(deg) - next);
    }
    e
}

pub fn discriminant_of_representative(q: u64, n: u32, tower: &HoweTower) -> Result<BigRational> {
    if !tower.is_well_formed() || tower.steps.iter().any(|s| n % s.0 != 0) {
        return Err(Error::Domain(format!("malformed Howe tower {tower}")));
    }
    Ok(exp_q(q, representative_discriminant_exponent(n, tower)))
}

/// `q^{e/2}` for even `e`; panics on an odd exponent (never produced here).
pub fn sqrt_q_power(q: u64, e: i64) -> BigRational {
    assert!(e % 2 == 0, "half-integral q-power {e}/2");
    exp_q(q, e / 2)
}
