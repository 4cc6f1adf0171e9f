//! Seeded random elements for property checks and the CLI verify suites.

use crate::chargroup::TorusKind;
use crate::error::Result;
use crate::ffield::{FieldTower, FqElem};
use crate::lseries::{LaurentElem, LocalField, Matrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_fq(rng: &mut SampleRng, tower: &FieldTower, layer: usize) -> FqElem {
    let size = tower.layer_size(layer);
    let k = rng.gen_range(0..size);
    if k == 0 {
        tower.zero(layer)
    } else {
        tower.gen_pow(layer, k as i64)
    }
}

pub fn random_nonzero_fq(rng: &mut SampleRng, tower: &FieldTower, layer: usize) -> FqElem {
    let size = tower.layer_size(layer);
    tower.gen_pow(layer, rng.gen_range(0..size - 1) as i64)
}

/// Exact Laurent polynomial with random coefficients at `w^lo … w^{hi−1}`.
pub fn random_laurent(rng: &mut SampleRng, tower: &Arc<FieldTower>, layer: usize, lo: i64, hi: i64) -> LaurentElem {
    let coeffs = (lo..hi).map(|_| random_fq(rng, tower, layer)).collect();
    LaurentElem::from_coeffs(tower, layer, lo, coeffs, None)
}

/// Random `n×n` matrix over the layer with entries supported on `[lo, hi)`.
pub fn random_matrix(rng: &mut SampleRng, tower: &Arc<FieldTower>, layer: usize, n: usize, lo: i64, hi: i64) -> Matrix {
    let rows = (0..n)
        .map(|_| (0..n).map(|_| random_laurent(rng, tower, layer, lo, hi)).collect())
        .collect();
    Matrix::from_rows(rows)
}

/// Random element of `1 + w^d O_E`, truncated at the field precision.
pub fn random_principal(rng: &mut SampleRng, lf: &LocalField, d: i64) -> LaurentElem {
    let tail = random_laurent(rng, lf.tower(), lf.ext(), d, lf.prec());
    lf.one().add(&tail).truncate(lf.prec())
}

/// Whether `f(x) = f_E`.
pub fn generates_extension(lf: &LocalField, x: FqElem) -> bool {
    lf.residue_degree(x) == lf.n()
}

/// A residue `ζ ∈ f_E` generating `f_E` over `f`, lying in `T(f)` for the kind.
pub fn random_generating_residue(rng: &mut SampleRng, lf: &LocalField, kind: TorusKind) -> FqElem {
    let t = lf.tower();
    let ext = lf.ext();
    let q = lf.q() as i64;
    let order = t.layer_size(ext) as i64 - 1;
    loop {
        let k = rng.gen_range(0..order);
        let z = match kind {
            TorusKind::Units => t.gen_pow(ext, k),
            TorusKind::NormOne => t.gen_pow(ext, k * (q - 1)),
        };
        if generates_extension(lf, z) {
            return z;
        }
    }
}

/// A good torus element of depth `d` (residue generating `f_E` at `d = 0`,
/// residue one and generating leading term otherwise), in the given torus.
pub fn good_element(rng: &mut SampleRng, lf: &LocalField, kind: TorusKind, d: i64) -> Result<LaurentElem> {
    let t = lf.tower();
    let ext = lf.ext();
    if d == 0 {
        let z = random_generating_residue(rng, lf, kind);
        let u = random_principal(rng, lf, 1);
        let u = match kind {
            TorusKind::Units => u,
            TorusKind::NormOne => lf.principal_norm_one(&u)?,
        };
        return Ok(lf.constant(z).mul(&u));
    }
    loop {
        let beta = random_nonzero_fq(rng, t, ext);
        if !generates_extension(lf, beta) {
            continue;
        }
        let mut u = lf.one().add(&lf.constant(beta).shift(d));
        if d + 1 < lf.prec() {
            u = u.add(&random_laurent(rng, t, ext, d + 1, lf.prec()));
        }
        let u = u.truncate(lf.prec());
        return match kind {
            TorusKind::Units => Ok(u),
            TorusKind::NormOne => lf.principal_norm_one(&u),
        };
    }
}
