//! The building of `GL_n(F)` as additive norms `x(v) = min_i ord(a_i) + c_i`
//! (`v = Σ a_i b_i`): evaluation, the `G(F)`-action, canonical forms in the
//! simplex `Δ`, parahoric and Moy–Prasad membership, affine root groups.

use crate::error::{Error, Result};
use crate::ffield::FieldTower;
use crate::lseries::{LaurentElem, Matrix};
use num_integer::Integer;
use num_rational::Rational64;
use std::sync::Arc;

/// Offsets are multiples of `1/OFFSET_DENOMINATOR`.
pub const OFFSET_DENOMINATOR: i64 = 60;

/// Working precision for inverting bases.
const WORK_PREC: i64 = 40;

fn check_offset(c: Rational64) -> Result<i64> {
    let scaled = c * OFFSET_DENOMINATOR;
    if !scaled.is_integer() {
        return Err(Error::Domain(format!("offset {c} is not a multiple of 1/{OFFSET_DENOMINATOR}")));
    }
    Ok(scaled.to_integer())
}

/// Valuation with a certified lower bound: `Exact(v)`, `AtLeast(b)` for an
/// unresolved zero, `Infinite` for an exact zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ord {
    Exact(i64),
    AtLeast(i64),
    Infinite,
}

fn ord_of(x: &LaurentElem) -> Ord {
    if x.is_zero() {
        return Ord::Infinite;
    }
    match x.ord() {
        Ok(Some(v)) => Ord::Exact(v),
        _ => Ord::AtLeast(x.ord_lower_bound().unwrap_or(i64::MAX / 4)),
    }
}

/// Decides `ord(x) ≥ bound` (rational bound), or reports missing precision.
fn ord_at_least(x: &LaurentElem, bound: Rational64, strict: bool) -> Result<bool> {
    let ok = |v: i64| {
        let v = Rational64::from_integer(v);
        if strict {
            v > bound
        } else {
            v >= bound
        }
    };
    match ord_of(x) {
        Ord::Infinite => Ok(true),
        Ord::Exact(v) => Ok(ok(v)),
        Ord::AtLeast(b) if ok(b) => Ok(true),
        Ord::AtLeast(b) => Err(Error::Precision(format!("entry known only to w^{b}, bound {bound}"))),
    }
}

/// An additive norm `x_{{b_i}, c}` on `F^n`.
#[derive(Clone, Debug)]
pub struct AdditiveNorm {
    basis: Matrix,
    offsets: Vec<i64>,
}

impl AdditiveNorm {
    /// Norm with basis the columns of `basis`.
    pub fn new(basis: Matrix, offsets: &[Rational64]) -> Result<Self> {
        if basis.n != offsets.len() {
            return Err(Error::Domain("offset count differs from the dimension".into()));
        }
        if basis.n > 8 {
            return Err(Error::Config("n ≤ 8 required".into()));
        }
        let offsets = offsets.iter().map(|&c| check_offset(c)).collect::<Result<_>>()?;
        Ok(AdditiveNorm { basis, offsets })
    }
    /// `x_c` in the standard basis.
    pub fn standard(tower: &Arc<FieldTower>, layer: usize, offsets: &[Rational64]) -> Result<Self> {
        Self::new(Matrix::identity(tower, layer, offsets.len()), offsets)
    }
    pub fn dim(&self) -> usize {
        self.basis.n
    }
    pub fn basis(&self) -> &Matrix {
        &self.basis
    }
    pub fn offsets(&self) -> Vec<Rational64> {
        self.offsets.iter().map(|&c| Rational64::new(c, OFFSET_DENOMINATOR)).collect()
    }
    fn tower(&self) -> (Arc<FieldTower>, usize) {
        let e = &self.basis.rows[0][0];
        (e.tower().clone(), e.layer())
    }
    /// Whether the basis is the standard one (the norm lies in the standard apartment as stored).
    pub fn is_standard(&self) -> bool {
        let (t, l) = self.tower();
        self.basis == Matrix::identity(&t, l, self.dim())
    }

    fn coordinates(&self, v: &[LaurentElem]) -> Result<Vec<LaurentElem>> {
        if self.is_standard() {
            return Ok(v.to_vec());
        }
        Ok(self.basis.inverse(WORK_PREC)?.mul_vec(v))
    }

    /// `x(v)`; `None` is `+∞` (`v = 0`).
    pub fn evaluate(&self, v: &[LaurentElem]) -> Result<Option<Rational64>> {
        let a = self.coordinates(v)?;
        let mut best: Option<Rational64> = None;
        for (ai, &ci) in a.iter().zip(&self.offsets) {
            match ord_of(ai) {
                Ord::Infinite => {}
                Ord::Exact(o) => {
                    let val = Rational64::new(o * OFFSET_DENOMINATOR + ci, OFFSET_DENOMINATOR);
                    best = Some(best.map_or(val, |b| b.min(val)));
                }
                Ord::AtLeast(_) => {
                    return Err(Error::Precision("coordinate of v is an unresolved zero".into()))
                }
            }
        }
        Ok(best)
    }

    /// Decides `x(v) ≥ bound` using certified lower bounds.
    fn at_least(&self, v: &[LaurentElem], bound: Rational64) -> Result<bool> {
        let a = self.coordinates(v)?;
        for (ai, &ci) in a.iter().zip(&self.offsets) {
            let need = bound - Rational64::new(ci, OFFSET_DENOMINATOR);
            if !ord_at_least(ai, need, false)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `g·x`, i.e. `v ↦ x(g⁻¹v)`; the basis becomes `g·basis`.
    pub fn act(&self, g: &Matrix) -> Result<Self> {
        if ord_of(&g.det()?) == Ord::Infinite {
            return Err(Error::Domain("singular matrix".into()));
        }
        Ok(AdditiveNorm { basis: g.mul(&self.basis), offsets: self.offsets.clone() })
    }

    /// Equality of norms: `y ≥ x` iff `y(b_j) ≥ c_j` on a splitting basis of `x`.
    pub fn same_norm(&self, other: &AdditiveNorm) -> Result<bool> {
        let dominates = |a: &AdditiveNorm, b: &AdditiveNorm| -> Result<bool> {
            for j in 0..b.dim() {
                let col: Vec<LaurentElem> = (0..b.dim()).map(|i| b.basis.rows[i][j].clone()).collect();
                if !a.at_least(&col, Rational64::new(b.offsets[j], OFFSET_DENOMINATOR))? {
                    return Ok(false);
                }
            }
            Ok(true)
        };
        Ok(dominates(self, other)? && dominates(other, self)?)
    }

    /// The `Δ`-representative `1 > c_1 ≥ … ≥ c_n ≥ 0` of the orbit and a
    /// witness `g` with `g·x = x_c`.
    pub fn canonicalize(&self) -> Result<Canonical> {
        let n = self.dim();
        let (t, l) = self.tower();
        let binv = if self.is_standard() { self.basis.clone() } else { self.basis.inverse(WORK_PREC)? };
        let shifts: Vec<i64> = self.offsets.iter().map(|c| c.div_floor(&OFFSET_DENOMINATOR)).collect();
        let fracs: Vec<i64> = self.offsets.iter().map(|c| c.mod_floor(&OFFSET_DENOMINATOR)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| fracs[b].cmp(&fracs[a]));
        let mut w = Matrix::identity(&t, l, n);
        for k in 0..n {
            for i in 0..n {
                w.rows[k][i] = if i == order[k] {
                    LaurentElem::monomial(&t, l, t.one(l), shifts[i])
                } else {
                    LaurentElem::zero(&t, l)
                };
            }
        }
        let offsets = order.iter().map(|&i| Rational64::new(fracs[i], OFFSET_DENOMINATOR)).collect();
        Ok(Canonical { offsets, witness: w.mul(&binv) })
    }
}

/// Output of [`AdditiveNorm::canonicalize`].
#[derive(Clone, Debug)]
pub struct Canonical {
    pub offsets: Vec<Rational64>,
    pub witness: Matrix,
}

fn apartment_offsets(x: &AdditiveNorm) -> Result<Vec<Rational64>> {
    if !x.is_standard() {
        return Err(Error::Domain("point must be given in the standard apartment".into()));
    }
    Ok(x.offsets())
}

/// Whether `x` lies in `Δ`.
pub fn in_simplex(offsets: &[Rational64]) -> bool {
    let zero = Rational64::from_integer(0);
    let one = Rational64::from_integer(1);
    offsets.iter().all(|&c| c >= zero && c < one) && offsets.windows(2).all(|w| w[0] >= w[1])
}

/// Stabiliser test `g·x = x`, by evaluation.
pub fn stabilizes(x: &AdditiveNorm, g: &Matrix) -> Result<bool> {
    x.act(g)?.same_norm(x)
}

/// Block criterion for `x ∈ Δ`: `g ∈ GL_n(O)` and its residue lies in the
/// block upper triangular parabolic cut out by equal offsets.
pub fn parahoric_member(x: &AdditiveNorm, g: &Matrix) -> Result<bool> {
    let c = apartment_offsets(x)?;
    if !in_simplex(&c) {
        return Err(Error::Domain("point is not in Δ".into()));
    }
    let zero = Rational64::from_integer(0);
    for row in &g.rows {
        for e in row {
            if !ord_at_least(e, zero, false)? {
                return Ok(false);
            }
        }
    }
    if ord_of(&g.det()?) != Ord::Exact(0) {
        return Ok(false);
    }
    let n = g.n;
    for i in 0..n {
        for j in 0..n {
            if c[j] > c[i] && !ord_at_least(&g.rows[i][j], Rational64::from_integer(1), false)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `X ∈ g_{x,r}` (or `g_{x,r+}`): `ord X_ij ≥ r + c_j − c_i` (strict for `r+`).
pub fn mp_lie_member(x: &AdditiveNorm, big_x: &Matrix, r: Rational64, plus: bool) -> Result<bool> {
    let c = apartment_offsets(x)?;
    for i in 0..big_x.n {
        for j in 0..big_x.n {
            if !ord_at_least(&big_x.rows[i][j], r + c[j] - c[i], plus)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `g ∈ G_{x,r}` (or `G_{x,r+}`), `r ≥ 0`.
pub fn mp_group_member(x: &AdditiveNorm, g: &Matrix, r: Rational64, plus: bool) -> Result<bool> {
    let zero = Rational64::from_integer(0);
    if r < zero {
        return Err(Error::Domain("group filtration needs r ≥ 0".into()));
    }
    if r == zero && !plus {
        if !mp_lie_member(x, g, zero, false)? {
            return Ok(false);
        }
        return Ok(ord_of(&g.det()?) == Ord::Exact(0));
    }
    let e = &g.rows[0][0];
    let ident = Matrix::identity(e.tower(), e.layer(), g.n);
    mp_lie_member(x, &g.sub(&ident), r, plus)
}

/// `g ↦ g − 1` on `G_{x,r}`, a representative of its class mod `g_{x,2r}`.
pub fn mp_iso(x: &AdditiveNorm, g: &Matrix, r: Rational64) -> Result<Matrix> {
    if r <= Rational64::from_integer(0) || !mp_group_member(x, g, r, false)? {
        return Err(Error::Domain(format!("element is not in G_(x,{r})")));
    }
    let e = &g.rows[0][0];
    Ok(g.sub(&Matrix::identity(e.tower(), e.layer(), g.n)))
}

/// `X ↦ 1 + X` on `g_{x,r}`, a representative of its class mod `G_{x,2r}`.
pub fn mp_iso_inv(x: &AdditiveNorm, big_x: &Matrix, r: Rational64) -> Result<Matrix> {
    if r <= Rational64::from_integer(0) || !mp_lie_member(x, big_x, r, false)? {
        return Err(Error::Domain(format!("element is not in g_(x,{r})")));
    }
    let e = &big_x.rows[0][0];
    Ok(big_x.add(&Matrix::identity(e.tower(), e.layer(), big_x.n)))
}

/// The affine function `α_ij + m` on the standard apartment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AffineRoot {
    pub i: usize,
    pub j: usize,
    pub m: i64,
}

impl AffineRoot {
    pub fn new(i: usize, j: usize, m: i64) -> Result<Self> {
        if i == j {
            return Err(Error::Domain("affine root needs i ≠ j".into()));
        }
        Ok(AffineRoot { i, j, m })
    }
    /// `c_i − c_j + m`.
    pub fn value_at(&self, offsets: &[Rational64]) -> Rational64 {
        offsets[self.i] - offsets[self.j] + self.m
    }
    /// `1 + a E_ij`.
    pub fn root_element(&self, n: usize, a: &LaurentElem) -> Matrix {
        let mut u = Matrix::identity(a.tower(), a.layer(), n);
        u.rows[self.i][self.j] = a.clone();
        u
    }
}

/// `u ∈ U_{α+m}`: `u = 1 + a E_ij` with `ord a ≥ m`.
pub fn affine_root_member(psi: &AffineRoot, u: &Matrix) -> Result<bool> {
    let n = u.n;
    for i in 0..n {
        for j in 0..n {
            let e = &u.rows[i][j];
            let shape_ok = if i == j {
                e.sub(&LaurentElem::one(e.tower(), e.layer())).is_zero()
            } else if (i, j) == (psi.i, psi.j) {
                true
            } else {
                e.is_zero()
            };
            if !shape_ok {
                return Err(Error::Domain("not an element of the root group U_α".into()));
            }
        }
    }
    ord_at_least(&u.rows[psi.i][psi.j], Rational64::from_integer(psi.m), false)
}

/// Whether `U_{α+m}` fixes the apartment point `x`, i.e. `(α + m)(x) ≥ 0`.
pub fn half_plane_fixes(psi: &AffineRoot, x: &AdditiveNorm) -> Result<bool> {
    Ok(psi.value_at(&apartment_offsets(x)?) >= Rational64::from_integer(0))
}

/// `g = diag(d) · ∏ u_k` with each `u_k` in an affine root group fixing `x`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub diagonal: Vec<LaurentElem>,
    pub factors: Vec<(AffineRoot, LaurentElem)>,
}

impl Decomposition {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.diagonal.len();
        let e = &self.diagonal[0];
        let mut m = Matrix::identity(e.tower(), e.layer(), n);
        for i in 0..n {
            m.rows[i][i] = self.diagonal[i].clone();
        }
        for (psi, a) in &self.factors {
            m = m.mul(&psi.root_element(n, a));
        }
        m
    }
}

/// Row reduction of a parahoric element at `x ∈ Δ` by elementary operations
/// that stay inside `G_x`.
pub fn decompose(x: &AdditiveNorm, g: &Matrix) -> Result<Decomposition> {
    if !parahoric_member(x, g)? {
        return Err(Error::Domain("element is not in the parahoric".into()));
    }
    let c = apartment_offsets(x)?;
    let n = g.n;
    let mut a = g.clone();
    // row ops: row_i += s·row_j is left multiplication by 1 + s E_ij
    let mut ops: Vec<(usize, usize, LaurentElem)> = Vec::new();
    let mut row_add = |a: &mut Matrix, i: usize, j: usize, s: LaurentElem| {
        for k in 0..n {
            let v = a.rows[i][k].add(&s.mul(&a.rows[j][k]));
            a.rows[i][k] = v;
        }
        ops.push((i, j, s));
    };
    for k in 0..n {
        if ord_of(&a.rows[k][k]) != Ord::Exact(0) {
            let r = (k + 1..n)
                .find(|&r| c[r] == c[k] && ord_of(&a.rows[r][k]) == Ord::Exact(0))
                .ok_or_else(|| Error::Precision("no unit pivot found".into()))?;
            let one = LaurentElem::one(g.rows[0][0].tower(), g.rows[0][0].layer());
            row_add(&mut a, k, r, one);
        }
        let pivot_inv = a.rows[k][k].invert_to(WORK_PREC)?;
        for i in 0..n {
            if i == k || a.rows[i][k].is_zero() {
                continue;
            }
            let s = a.rows[i][k].mul(&pivot_inv).neg();
            row_add(&mut a, i, k, s);
        }
    }
    // E_m ⋯ E_1 g = D, so g = E_1⁻¹ ⋯ E_m⁻¹ D = D ∏ D⁻¹E_k⁻¹D.
    let diagonal: Vec<LaurentElem> = (0..n).map(|i| a.rows[i][i].clone()).collect();
    let mut factors = Vec::new();
    for (i, j, s) in ops {
        let conj = s.neg().mul(&diagonal[j]).mul(&diagonal[i].invert_to(WORK_PREC)?);
        let m = (c[j] - c[i]).ceil().to_integer();
        factors.push((AffineRoot::new(i, j, m)?, conj));
    }
    Ok(Decomposition { diagonal, factors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lseries::LocalField;
    use crate::sample;

    fn setup() -> (Arc<FieldTower>, usize) {
        let lf = LocalField::new(5, 1, 3, 12).unwrap();
        (lf.tower().clone(), lf.base())
    }
    fn r(a: i64, b: i64) -> Rational64 {
        Rational64::new(a, b)
    }
    fn w(t: &Arc<FieldTower>, l: usize, k: i64) -> LaurentElem {
        LaurentElem::monomial(t, l, t.one(l), k)
    }

    #[test]
    fn evaluation_examples() {
        let (t, l) = setup();
        let x0 = AdditiveNorm::standard(&t, l, &[r(0, 1), r(0, 1)]).unwrap();
        let e1 = vec![LaurentElem::one(&t, l), LaurentElem::zero(&t, l)];
        assert_eq!(x0.evaluate(&e1).unwrap(), Some(r(0, 1)));
        let x = AdditiveNorm::standard(&t, l, &[r(1, 2), r(0, 1)]).unwrap();
        let v = vec![w(&t, l, 1), LaurentElem::one(&t, l).add(&w(&t, l, 1))];
        assert_eq!(x.evaluate(&v).unwrap(), Some(r(0, 1)));
        let wv: Vec<LaurentElem> = v.iter().map(|a| a.mul(&w(&t, l, 1))).collect();
        assert_eq!(x.evaluate(&wv).unwrap(), Some(r(1, 1)));
    }

    #[test]
    fn action_by_diagonal_uniformizer() {
        let (t, l) = setup();
        let x0 = AdditiveNorm::standard(&t, l, &[r(0, 1), r(0, 1)]).unwrap();
        let mut g = Matrix::identity(&t, l, 2);
        g.rows[0][0] = w(&t, l, 1);
        let y = x0.act(&g).unwrap();
        let e1 = vec![LaurentElem::one(&t, l), LaurentElem::zero(&t, l)];
        let e2 = vec![LaurentElem::zero(&t, l), LaurentElem::one(&t, l)];
        assert_eq!(y.evaluate(&e1).unwrap(), Some(r(-1, 1)));
        assert_eq!(y.evaluate(&e2).unwrap(), Some(r(0, 1)));
        let expected = AdditiveNorm::standard(&t, l, &[r(-1, 1), r(0, 1)]).unwrap();
        assert!(y.same_norm(&expected).unwrap());
        assert_eq!(y.canonicalize().unwrap().offsets, vec![r(0, 1), r(0, 1)]);
    }

    #[test]
    fn canonical_form_and_witness() {
        let (t, l) = setup();
        let x = AdditiveNorm::standard(&t, l, &[r(3, 2), r(3, 10)]).unwrap();
        let can = x.canonicalize().unwrap();
        assert_eq!(can.offsets, vec![r(1, 2), r(3, 10)]);
        let target = AdditiveNorm::standard(&t, l, &can.offsets).unwrap();
        assert!(x.act(&can.witness).unwrap().same_norm(&target).unwrap());
    }

    #[test]
    fn parahoric_examples() {
        let (t, l) = setup();
        let x0 = AdditiveNorm::standard(&t, l, &[r(0, 1), r(0, 1)]).unwrap();
        let id = Matrix::identity(&t, l, 2);
        assert!(parahoric_member(&x0, &id).unwrap());
        let mut g = id.clone();
        g.rows[0][1] = w(&t, l, -1);
        assert!(!parahoric_member(&x0, &g).unwrap());
        assert!(!stabilizes(&x0, &g).unwrap());
    }

    #[test]
    fn block_test_matches_stabiliser_on_random_matrices() {
        let (t, l) = setup();
        let mut rng = sample::rng(7);
        let x = AdditiveNorm::standard(&t, l, &[r(1, 2), r(3, 10), r(3, 10)]).unwrap();
        let mut agree = 0;
        for k in 0..60 {
            let lo = if k % 3 == 0 { -1 } else { 0 };
            let g = sample::random_matrix(&mut rng, &t, l, 3, lo, 3);
            if g.det().unwrap().is_zero() {
                continue;
            }
            assert_eq!(parahoric_member(&x, &g).unwrap(), stabilizes(&x, &g).unwrap());
            agree += 1;
        }
        assert!(agree > 50);
    }

    #[test]
    fn moy_prasad_examples() {
        let (t, l) = setup();
        let x0 = AdditiveNorm::standard(&t, l, &[r(0, 1), r(0, 1)]).unwrap();
        let mut g = Matrix::identity(&t, l, 2);
        g.rows[0][1] = w(&t, l, 1);
        assert!(mp_group_member(&x0, &g, r(1, 1), false).unwrap());
        assert!(!mp_group_member(&x0, &g, r(1, 1), true).unwrap());
        assert!(mp_group_member(&x0, &Matrix::identity(&t, l, 2), r(5, 1), true).unwrap());
        let big = mp_iso(&x0, &g, r(1, 1)).unwrap();
        assert!(mp_lie_member(&x0, &big, r(1, 1), false).unwrap());
        assert_eq!(mp_iso_inv(&x0, &big, r(1, 1)).unwrap(), g);
    }

    #[test]
    fn affine_roots_fix_half_planes() {
        let (t, l) = setup();
        let psi = AffineRoot::new(0, 1, 1).unwrap();
        let u = psi.root_element(2, &w(&t, l, 1));
        assert!(affine_root_member(&psi, &u).unwrap());
        assert!(affine_root_member(&psi, &Matrix::identity(&t, l, 2)).unwrap());
        for (c1, c2) in [(r(0, 1), r(9, 10)), (r(1, 2), r(0, 1)), (r(-3, 2), r(1, 5))] {
            let x = AdditiveNorm::standard(&t, l, &[c1, c2]).unwrap();
            let u = psi.root_element(2, &w(&t, l, psi.m));
            assert_eq!(half_plane_fixes(&psi, &x).unwrap(), stabilizes(&x, &u).unwrap());
        }
    }

    #[test]
    fn decomposition_reconstructs() {
        let (t, l) = setup();
        let mut rng = sample::rng(3);
        let x = AdditiveNorm::standard(&t, l, &[r(1, 2), r(3, 10), r(3, 10)]).unwrap();
        let mut done = 0;
        while done < 10 {
            let g = sample::random_matrix(&mut rng, &t, l, 3, 0, 3);
            if g.det().unwrap().is_zero() || !parahoric_member(&x, &g).unwrap() {
                continue;
            }
            let dec = decompose(&x, &g).unwrap();
            for (psi, a) in &dec.factors {
                assert!(half_plane_fixes(psi, &x).unwrap());
                assert!(affine_root_member(psi, &psi.root_element(3, a)).unwrap());
            }
            let back = dec.reconstruct();
            for i in 0..3 {
                for j in 0..3 {
                    assert!(back.rows[i][j].agrees_with(&g.rows[i][j]));
                }
            }
            done += 1;
        }
    }
}
