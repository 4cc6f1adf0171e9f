//! Characters of `Q = T/T_R`: handles, depth, leading term `β_ψ`, the
//! restriction profile along intermediate fields and the Howe tower.

use super::cyc::CycNumber;
use super::group::{residue_basis, QuotientGroup, TorusKind};
use crate::error::{Error, Result};
use crate::ffield::{solve_mod_p, FqElem};
use crate::lseries::{LaurentElem, LocalField};
use std::fmt;
use std::sync::Arc;

/// Decreasing fields `E^0 ⊋ E^1 ⊋ …` (degrees over `F`) with increasing depths.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HoweTower {
    pub steps: Vec<(u32, u32)>,
}

impl HoweTower {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
    /// `E^ψ = E^{d-1}`, the field of the deepest step.
    pub fn top_field(&self) -> Option<u32> {
        self.steps.last().map(|s| s.0)
    }
    pub fn depth(&self) -> Option<u32> {
        self.steps.last().map(|s| s.1)
    }
    /// Steps with `r_i ≤ bound`.
    pub fn truncated(&self, bound: u32) -> HoweTower {
        HoweTower { steps: self.steps.iter().copied().filter(|s| s.1 <= bound).collect() }
    }
    pub fn is_well_formed(&self) -> bool {
        self.steps.windows(2).all(|w| w[0].0 > w[1].0 && w[0].0 % w[1].0 == 0 && w[0].1 < w[1].1)
    }
}

impl fmt::Display for HoweTower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.steps.iter().map(|(m, r)| format!("(E{m},{r})")).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// A character `ψ_a` of `T/T_R` with cached invariants.
#[derive(Clone, Debug, PartialEq)]
pub struct CharacterHandle {
    pub coords: Vec<u64>,
    pub level: u32,
    pub depth: Option<u32>,
    pub beta: Option<FqElem>,
    /// `(m, s_M)`: depth of the restriction to `ker N_{E/M}` (−1 if trivial).
    pub profile: Vec<(u32, i32)>,
    pub tower: HoweTower,
}

impl CharacterHandle {
    pub fn is_trivial(&self) -> bool {
        self.depth.is_none()
    }
    /// Label `psi=[a0,a1,…]@r=R`.
    pub fn label(&self) -> String {
        let xs: Vec<String> = self.coords.iter().map(|x| x.to_string()).collect();
        format!("psi=[{}]@r={}", xs.join(","), self.level)
    }
}

/// Parses `psi=[2,0,1]@r=2` into coordinates and quotient level.
pub fn parse_label(text: &str) -> Result<(Vec<u64>, u32)> {
    let bad = || Error::Parse(format!("bad character label `{text}`"));
    let body = text.trim().strip_prefix("psi=").ok_or_else(bad)?;
    let (vec, lvl) = body.split_once("]@r=").ok_or_else(bad)?;
    let vec = vec.strip_prefix('[').ok_or_else(bad)?;
    let coords = if vec.trim().is_empty() {
        Vec::new()
    } else {
        vec.split(',').map(|x| x.trim().parse::<u64>().map_err(|_| bad())).collect::<Result<_>>()?
    };
    let level = lvl.trim().parse::<u32>().map_err(|_| bad())?;
    Ok((coords, level))
}

/// Dual of `T/T_R` with the probe data needed for `β_ψ` and the Howe tower.
#[derive(Debug)]
pub struct Dual {
    group: Arc<QuotientGroup>,
    /// `beta_probes[s]`: coordinates of lifts of the graded basis at level `s`.
    beta_probes: Vec<Vec<Vec<u64>>>,
    /// Trace form `Tr_{f_E/F_p}(b_i b_j)` on the graded basis.
    trace_form: Vec<Vec<u64>>,
    /// `(m, generators of ker N_{E/M} by level)` for proper divisors `m` of `n`.
    kernels: Vec<(u32, Vec<Vec<Vec<u64>>>)>,
    /// Lifts of a full `F_p`-basis of `f_E` at each level (depth oracle).
    full_lifts: Vec<Vec<Vec<u64>>>,
}

/// `Tr_{f_E/F_p}` as an integer mod p.
pub fn absolute_trace(lf: &LocalField, x: FqElem) -> u64 {
    let t = lf.tower();
    let x = t.retag(x, lf.ext());
    let d = t.layer_degree(lf.ext());
    let mut acc = t.zero(lf.ext());
    for i in 0..d {
        acc = t.add(acc, t.frobenius(x, i as i64));
    }
    t.to_int(acc).expect("absolute trace lies in the prime field")
}

impl Dual {
    pub fn new(group: QuotientGroup) -> Result<Self> {
        let group = Arc::new(group);
        let lf = group.field().clone();
        let basis = group.graded_basis().to_vec();
        let r = group.level();
        let mut beta_probes = vec![Vec::new()];
        let mut full_lifts = vec![Vec::new()];
        let full = residue_basis(&lf);
        for s in 1..r {
            let mut v = Vec::new();
            for &b in &basis {
                v.push(group.dlog(&group.level_lift(s, b)?)?);
            }
            beta_probes.push(v);
            let mut w = Vec::new();
            for &b in &full {
                w.push(group.dlog(&group.level_lift(s, b)?)?);
            }
            full_lifts.push(w);
        }
        let t = lf.tower();
        let trace_form = basis
            .iter()
            .map(|&a| basis.iter().map(|&b| absolute_trace(&lf, t.mul(a, b))).collect())
            .collect();
        let n = lf.n();
        let mut kernels = Vec::new();
        for &m in lf.subfield_degrees() {
            if m != n {
                kernels.push((m, group.norm_kernel_generators(m)?));
            }
        }
        Ok(Dual { group, beta_probes, trace_form, kernels, full_lifts })
    }

    pub fn build(lf: &LocalField, kind: TorusKind, r: u32) -> Result<Self> {
        Self::new(QuotientGroup::new(lf, kind, r)?)
    }

    pub fn group(&self) -> &Arc<QuotientGroup> {
        &self.group
    }
    pub fn field(&self) -> &Arc<LocalField> {
        self.group.field()
    }
    pub fn beta_probes(&self, s: u32) -> &[Vec<u64>] {
        &self.beta_probes[s as usize]
    }
    pub fn kernel_generators(&self) -> &[(u32, Vec<Vec<Vec<u64>>>)] {
        &self.kernels
    }

    pub fn character(&self, coords: &[u64]) -> Result<CharacterHandle> {
        let g = &self.group;
        if coords.len() != g.factors().len() {
            return Err(Error::Domain(format!(
                "expected {} coordinates, got {}",
                g.factors().len(),
                coords.len()
            )));
        }
        let coords: Vec<u64> =
            coords.iter().zip(g.factors()).map(|(&a, f)| a % f.order).collect();
        let depth = g.character_depth(&coords);
        let beta = match depth {
            Some(r) if r >= 1 => Some(self.beta_from_exponents(&self.probe_exponents(&coords, r))?),
            _ => None,
        };
        let profile = self.profile(&coords);
        let tower = self.tower_from_profile(&profile)?;
        Ok(CharacterHandle { coords, level: g.level(), depth, beta, profile, tower })
    }

    pub fn parse(&self, label: &str) -> Result<CharacterHandle> {
        let (coords, level) = parse_label(label)?;
        if level != self.group.level() {
            return Err(Error::Parse(format!(
                "label is for level {level}, dual is for level {}",
                self.group.level()
            )));
        }
        self.character(&coords)
    }

    fn probe_exponents(&self, coords: &[u64], s: u32) -> Vec<u64> {
        let g = &self.group;
        let unit = g.exponent() / g.field().p();
        self.beta_probes[s as usize]
            .iter()
            .map(|x| {
                let e = g.pairing(coords, x);
                debug_assert_eq!(e % unit, 0);
                e / unit
            })
            .collect()
    }

    /// `β` with `Tr_{f_E/F_p}(β b_j) = c_j`, inside the graded piece.
    pub fn beta_from_exponents(&self, c: &[u64]) -> Result<FqElem> {
        let lf = self.field();
        let t = lf.tower();
        let p = lf.p();
        let cols: Vec<Vec<u64>> =
            (0..self.trace_form.len()).map(|i| self.trace_form[i].clone()).collect();
        let x = solve_mod_p(&cols, c, p)
            .ok_or_else(|| Error::Domain("trace form is degenerate on the graded piece".into()))?;
        let mut beta = t.zero(lf.ext());
        for (xi, &b) in x.iter().zip(self.group.graded_basis()) {
            beta = t.add(beta, t.scale_int(b, *xi as i64));
        }
        Ok(beta)
    }

    /// Depth of `ψ` restricted to `ker N_{E/M}`, from the level generators.
    fn restricted_depth(&self, coords: &[u64], gens: &[Vec<Vec<u64>>]) -> i32 {
        let g = &self.group;
        for s in (1..gens.len()).rev() {
            if gens[s].iter().any(|x| g.pairing(coords, x) != 0) {
                return s as i32;
            }
        }
        if gens.first().map_or(false, |v| v.iter().any(|x| g.pairing(coords, x) != 0)) {
            0
        } else {
            -1
        }
    }

    pub fn profile(&self, coords: &[u64]) -> Vec<(u32, i32)> {
        let mut out: Vec<(u32, i32)> =
            self.kernels.iter().map(|(m, gens)| (*m, self.restricted_depth(coords, gens))).collect();
        out.push((self.field().n(), -1));
        out
    }

    /// Howe tower from the restriction profile.
    pub fn tower_from_profile(&self, profile: &[(u32, i32)]) -> Result<HoweTower> {
        tower_from_profile(profile)
    }

    /// Depth by restriction to the filtration subgroups (definitional).
    pub fn depth_by_restriction(&self, coords: &[u64]) -> Option<u32> {
        let g = &self.group;
        for s in (1..g.level()).rev() {
            if self.full_lifts[s as usize].iter().any(|x| g.pairing(coords, x) != 0) {
                return Some(s);
            }
        }
        if coords.iter().any(|&a| a != 0) {
            Some(0)
        } else {
            None
        }
    }

    /// `E^ψ` as a degree over `F`.
    pub fn field_of_psi(&self, psi: &CharacterHandle) -> Result<u32> {
        psi.tower
            .top_field()
            .ok_or_else(|| Error::Domain("the trivial character has no field".into()))
    }

    /// Whether `ψ` is trivial on `ker N_{E/M}`.
    pub fn factors_through_norm(&self, psi: &CharacterHandle, m: u32) -> bool {
        psi.profile.iter().find(|(d, _)| *d == m).map_or(false, |(_, s)| *s < 0)
    }

    /// `ψ(t)` as an exact root of unity.
    pub fn eval(&self, psi: &CharacterHandle, t: &LaurentElem) -> Result<CycNumber> {
        let x = self.group.dlog(t)?;
        Ok(CycNumber::root_of_unity(self.group.exponent(), self.group.pairing(&psi.coords, &x) as i64))
    }

    /// `Σ_i ψ(γ^{σ^i})`.
    pub fn galois_orbit_sum(&self, psi: &CharacterHandle, gamma: &LaurentElem) -> Result<CycNumber> {
        let lf = self.field();
        let e = self.group.exponent();
        let mut counts = vec![0i64; e as usize];
        for i in 0..lf.n() {
            let x = self.group.dlog(&lf.sigma(gamma, i as i64))?;
            counts[self.group.pairing(&psi.coords, &x) as usize] += 1;
        }
        Ok(CycNumber::from_power_counts(e, &counts))
    }

    /// `β`-lookup keyed by the level-`r` probe exponents: the degree of `F(β)`.
    pub fn beta_field_table(&self) -> Result<Vec<u32>> {
        let lf = self.field();
        let p = lf.p();
        let dim = self.group.graded_basis().len();
        let size = p.pow(dim as u32) as usize;
        let mut table = vec![0u32; size];
        let mut c = vec![0u64; dim];
        for (idx, slot) in table.iter_mut().enumerate() {
            let mut x = idx;
            for cj in c.iter_mut() {
                *cj = (x as u64) % p;
                x /= p as usize;
            }
            if idx == 0 {
                continue;
            }
            let beta = self.beta_from_exponents(&c)?;
            *slot = lf.residue_degree(beta);
        }
        Ok(table)
    }

    /// Index into [`Dual::beta_field_table`] from level-`r` probe exponents
    /// (raw pairings, multiples of `E/p`).
    pub fn beta_key(&self, raw: &[u32]) -> usize {
        let p = self.field().p() as usize;
        let unit = (self.group.exponent() / self.field().p()) as usize;
        let mut key = 0usize;
        for &e in raw.iter().rev() {
            key = key * p + (e as usize / unit);
        }
        key
    }
}

/// Howe tower from `(m, s_M)` pairs (the pair for `m = n` has `s = −1`).
pub fn tower_from_profile(profile: &[(u32, i32)]) -> Result<HoweTower> {
    let s_of = |m: u32| profile.iter().find(|(d, _)| *d == m).map(|x| x.1);
    let mut cur_m = 1u32;
    let mut cur_s = s_of(1).unwrap_or(-1);
    let mut steps = Vec::new();
    while cur_s >= 0 {
        let cands: Vec<u32> = profile
            .iter()
            .filter(|(m, s)| *m != cur_m && m % cur_m == 0 && *s < cur_s)
            .map(|x| x.0)
            .collect();
        let min = *cands
            .iter()
            .min()
            .ok_or_else(|| Error::Domain("restriction profile has no smaller field".into()))?;
        if cands.iter().any(|m| m % min != 0) {
            return Err(Error::Domain("restriction profile has no unique minimal field".into()));
        }
        steps.push((min, cur_s as u32));
        cur_m = min;
        cur_s = s_of(min).unwrap_or(-1);
    }
    steps.reverse();
    Ok(HoweTower { steps })
}

/// Number of nontrivial characters of depth exactly `r` (closed count).
pub fn count_by_depth(q: u64, n: u32, r: u32, kind: TorusKind) -> u128 {
    let qn = (q as u128).pow(n);
    let (res, graded) = match kind {
        TorusKind::NormOne => ((qn - 1) / (q as u128 - 1), (q as u128).pow(n - 1)),
        TorusKind::Units => (qn - 1, qn),
    };
    if r == 0 {
        res - 1
    } else {
        res * (graded - 1) * graded.pow(r - 1)
    }
}
