//! The stable transfer sum `L(γ, t) = Σ_{ψ ≠ 1} Θ_ψ(γ) ψ(t⁻¹)` on unramified
//! elliptic tori of `SL_n`: exhaustive summation over the dual of `T/T_R`,
//! closed finite sums, the `SL_2` near-conjugate case, pairings with balls
//! (where the delta masses live) and the `E^ψ` strata for composite `n`.

use crate::chargroup::dual::tower_from_profile;
use crate::chargroup::enumerate::{enumerate_dual, Visitor};
use crate::chargroup::{count_by_depth, CycNumber, Dual, HoweTower, PowerHistogram, TorusKind};
use crate::charform::{
    conjecture_coefficient, lce_sum, lce_term, table_coefficient, BlockElement, Gamma, SignConvention,
};
use crate::depth::{exp_q, level, torus_depth};
use crate::error::{Error, Result};
use crate::ffield::{divisors, is_prime, moebius};
use crate::lseries::{LaurentElem, LocalField};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

/// A point mass `weight · δ_location`.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub location: LaurentElem,
    pub weight: BigRational,
}

/// `L(γ, ·)` near one `t`: the value of its smooth part and the point masses.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferValue {
    pub smooth: CycNumber,
    pub atoms: Vec<Atom>,
}

/// How the brute sum behaved depth by depth.
#[derive(Clone, Debug)]
pub struct SummationReport {
    /// `Σ_{d(ψ) = r} Θ_ψ(γ) ψ(t⁻¹)` for `r = 0..=cap`.
    pub stratum_sums: Vec<CycNumber>,
    /// Running totals of `stratum_sums`.
    pub partial_sums: Vec<CycNumber>,
    /// Depth beyond which every stratum vanishes, when certified.
    pub stabilization: Option<u32>,
    pub certificate: String,
}

/// Which formula supplies `Θ_ψ(γ)` inside the sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThetaModel {
    /// The prime-degree character table.
    Table,
    /// The conjectural discriminant formula.
    Conjecture(SignConvention),
}

impl ThetaModel {
    pub fn for_degree(n: u32) -> Self {
        if is_prime(n as u64) {
            ThetaModel::Table
        } else {
            ThetaModel::Conjecture(SignConvention::Table)
        }
    }
}

/// One `(γ, t)` pair.
#[derive(Clone, Debug)]
pub struct Query {
    pub gamma: Gamma,
    pub t: LaurentElem,
}

impl Query {
    pub fn torus(gamma: LaurentElem, t: LaurentElem) -> Self {
        Query { gamma: Gamma::Torus(gamma), t }
    }
}

const MAX_SUBFIELDS: usize = 4;
type ClassKey = (u32, [i8; MAX_SUBFIELDS]);

struct Layout {
    /// `(subfield slot, level)` for each kernel probe.
    kernel: Vec<(usize, u32)>,
    n_targets: usize,
    e: u64,
}

struct ClassVisitor {
    layout: Arc<Layout>,
    map: HashMap<ClassKey, Vec<PowerHistogram>>,
}

impl Visitor for ClassVisitor {
    fn visit(&mut self, _a0: u64, depth: Option<u32>, exps: &[u32]) {
        let Some(d) = depth else { return };
        let lay = &*self.layout;
        let mut key = [-1i8; MAX_SUBFIELDS];
        for (k, &(slot, lvl)) in lay.kernel.iter().enumerate() {
            if exps[k] != 0 && key[slot] < lvl as i8 {
                key[slot] = lvl as i8;
            }
        }
        let nk = lay.kernel.len();
        let entry = self
            .map
            .entry((d, key))
            .or_insert_with(|| vec![PowerHistogram::new(lay.e); lay.n_targets]);
        for (h, &x) in entry.iter_mut().zip(&exps[nk..]) {
            h.bump(x as u64);
        }
    }
    fn merge(&mut self, other: Self) {
        for (k, v) in other.map {
            match self.map.get_mut(&k) {
                Some(mine) => {
                    for (a, b) in mine.iter_mut().zip(&v) {
                        a.merge(b);
                    }
                }
                None => {
                    self.map.insert(k, v);
                }
            }
        }
    }
}

/// Nontrivial characters sharing a depth and a Howe tower, with their
/// pairing histograms against each target.
#[derive(Clone, Debug)]
pub struct CharacterClass {
    pub depth: u32,
    pub tower: HoweTower,
    pub sums: Vec<PowerHistogram>,
}

impl CharacterClass {
    pub fn field(&self) -> u32 {
        self.tower.top_field().unwrap_or(0)
    }
    pub fn size(&self) -> i128 {
        self.sums.first().map_or(0, |h| h.total())
    }
}

/// Walks the whole dual once, splitting the nontrivial characters into
/// classes by `(depth, Howe tower)` and recording `ψ(x)` for each target
/// coordinate vector `x`.
pub fn enumerate_classes(dual: &Dual, targets: &[Vec<u64>]) -> Result<Vec<CharacterClass>> {
    let g = dual.group();
    let lf = dual.field();
    let n = lf.n();
    let mut slots: Vec<u32> = Vec::new();
    let mut kernel = Vec::new();
    let mut probes = Vec::new();
    for (m, gens) in dual.kernel_generators() {
        // on the norm-one torus the restriction to ker N_{E/F} is ψ itself
        if *m == 1 && g.kind() == TorusKind::NormOne {
            continue;
        }
        let slot = slots.len();
        slots.push(*m);
        for (s, level_gens) in gens.iter().enumerate() {
            for x in level_gens {
                kernel.push((slot, s as u32));
                probes.push(x.clone());
            }
        }
    }
    if slots.len() > MAX_SUBFIELDS {
        return Err(Error::Unsupported(format!("too many intermediate fields for n = {n}")));
    }
    probes.extend(targets.iter().cloned());
    let layout = Arc::new(Layout { kernel, n_targets: targets.len(), e: g.exponent() });
    let make = || ClassVisitor { layout: layout.clone(), map: HashMap::new() };
    let out = enumerate_dual(g, &probes, make);
    let mut classes = Vec::new();
    let mut keys: Vec<ClassKey> = out.map.keys().copied().collect();
    keys.sort();
    let mut map = out.map;
    for key in keys {
        let (d, prof) = key;
        let mut profile: Vec<(u32, i32)> = Vec::new();
        if g.kind() == TorusKind::NormOne {
            profile.push((1, d as i32));
        }
        for (slot, &m) in slots.iter().enumerate() {
            profile.push((m, prof[slot] as i32));
        }
        profile.push((n, -1));
        let tower = tower_from_profile(&profile)?;
        let sums = map.remove(&key).expect("key present");
        classes.push(CharacterClass { depth: d, tower, sums });
    }
    Ok(classes)
}

/// `|T/T_λ|` for the torus kind.
pub fn quotient_order(q: u64, n: u32, kind: TorusKind, lambda: u32) -> u128 {
    if lambda == 0 {
        return 1;
    }
    let qn = (q as u128).pow(n);
    let (res, graded) = match kind {
        TorusKind::NormOne => ((qn - 1) / (q as u128 - 1), (q as u128).pow(n - 1)),
        TorusKind::Units => (qn - 1, qn),
    };
    res * graded.pow(lambda - 1)
}

/// `Σ_{d(ψ) = r} ψ(u)` from orthogonality, `λ` the level of `u` (`None` for `u = 1`).
pub fn stratum_character_sum(q: u64, n: u32, kind: TorusKind, r: u32, lambda: Option<u32>) -> BigInt {
    match lambda {
        Some(l) if r > l => BigInt::zero(),
        Some(l) if r == l => -BigInt::from(quotient_order(q, n, kind, l)),
        _ => BigInt::from(count_by_depth(q, n, r, kind)),
    }
}

/// Level of `u`, with `None` when `u − 1` vanishes to working precision:
/// every dual we sum over lives far below it, so such `u` act as `1`.
fn level_u32(lf: &LocalField, u: &LaurentElem) -> Result<Option<u32>> {
    match level(lf, u) {
        Ok(l) => Ok(l.map(|l| l as u32)),
        Err(Error::Precision(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn depth_of(lf: &LocalField, g: &LaurentElem) -> Result<i64> {
    torus_depth(lf, g)?.ok_or_else(|| Error::Domain("central element".into()))
}

fn to_cyc(e: u64, r: &BigRational) -> CycNumber {
    CycNumber::from_rational(e, r)
}

/// Result of the exhaustive summation for one query.
#[derive(Clone, Debug)]
pub struct BruteResult {
    pub value: TransferValue,
    pub report: SummationReport,
    /// `L^M`: the smooth value split by `E^ψ` (degree over `F`); only
    /// meaningful without atoms.
    pub by_field: BTreeMap<u32, CycNumber>,
    /// Depth-0 characters with `E^ψ = M`, by degree of `M`.
    pub depth0_counts: BTreeMap<u32, i128>,
}

struct Prepared {
    offset: usize,
    /// One target for each `σ` (on the torus) or a single `t⁻¹` (off it).
    levels: Vec<Option<u32>>,
}

/// Exhaustive `L(γ, t)` for several queries at once, summing every character
/// of depth `≤ cap = R − 1`.
pub fn brute_batch(dual: &Dual, queries: &[Query], model: ThetaModel) -> Result<Vec<BruteResult>> {
    let g = dual.group();
    let lf = dual.field();
    let n = lf.n();
    let q = lf.q();
    let kind = g.kind();
    let cap = g.level() - 1;
    let e = g.exponent();
    let mut targets = Vec::new();
    let mut prepared = Vec::new();
    for qu in queries {
        let offset = targets.len();
        let t_inv = g.neg(&g.dlog(&qu.t)?);
        let mut levels = Vec::new();
        match &qu.gamma {
            Gamma::Torus(gm) => {
                let t_inv_elem = qu.t.invert()?;
                for s in 0..n {
                    let gs = lf.sigma(gm, s as i64);
                    targets.push(g.add(&g.dlog(&gs)?, &t_inv));
                    levels.push(level_u32(lf, &gs.mul(&t_inv_elem))?);
                }
            }
            Gamma::Blocks(_) => {
                targets.push(t_inv);
                levels.push(level_u32(lf, &qu.t)?);
            }
        }
        prepared.push(Prepared { offset, levels });
    }
    let classes = enumerate_classes(dual, &targets)?;
    let mut out = Vec::new();
    for (qu, prep) in queries.iter().zip(&prepared) {
        out.push(evaluate_query(lf, kind, cap, e, q, model, qu, prep, &classes)?);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_query(
    lf: &LocalField,
    kind: TorusKind,
    cap: u32,
    e: u64,
    q: u64,
    model: ThetaModel,
    qu: &Query,
    prep: &Prepared,
    classes: &[CharacterClass],
) -> Result<BruteResult> {
    let n = lf.n();
    let nt = prep.levels.len();
    let coefficient = |c: &CharacterClass| -> Result<BigRational> {
        match (&qu.gamma, model) {
            (Gamma::Torus(gm), ThetaModel::Table) => Ok(table_coefficient(q, n, c.depth, depth_of(lf, gm)?)),
            (Gamma::Torus(gm), ThetaModel::Conjecture(conv)) => {
                conjecture_coefficient(lf, &c.tower, c.depth, gm, conv)
            }
            (Gamma::Blocks(b), _) => {
                if b.depth() > c.depth as i64 {
                    lce_sum(q, c.depth, b, SignConvention::Table)
                } else {
                    Ok(BigRational::zero())
                }
            }
        }
    };
    let mut stratum_sums = vec![CycNumber::zero(e); cap as usize + 1];
    let mut by_field: BTreeMap<u32, CycNumber> = BTreeMap::new();
    let mut depth0_counts: BTreeMap<u32, i128> = BTreeMap::new();
    let exact: Vec<usize> = (0..nt).filter(|&i| prep.levels[i].is_none()).collect();
    if exact.len() > 1 {
        return Err(Error::Domain("γ is not regular".into()));
    }
    let mut coeffs = Vec::with_capacity(classes.len());
    for c in classes {
        let coef = coefficient(c)?;
        let mut hist = PowerHistogram::new(e);
        for i in 0..nt {
            hist.merge(&c.sums[prep.offset + i]);
        }
        let v = hist.value().scale(&coef);
        stratum_sums[c.depth as usize] = stratum_sums[c.depth as usize].add(&v);
        if c.depth == 0 {
            *depth0_counts.entry(c.field()).or_insert(0) += c.size();
        }
        if exact.is_empty() {
            let slot = by_field.entry(c.field()).or_insert_with(|| CycNumber::zero(e));
            *slot = slot.add(&v);
        }
        coeffs.push(coef);
    }
    let mut partial_sums = Vec::new();
    let mut acc = CycNumber::zero(e);
    for s in &stratum_sums {
        acc = acc.add(s);
        partial_sums.push(acc.clone());
    }
    let depth_only = matches!(model, ThetaModel::Table) || matches!(qu.gamma, Gamma::Blocks(_));
    let (stabilization, certificate) = match &qu.gamma {
        Gamma::Blocks(b) => {
            let last = (b.depth() - 1).max(0) as u32;
            let m0 = prep.levels[0].map_or(last, |l| l.min(last));
            (Some(m0), format!("Θ_ψ(γ) = 0 for d(ψ) ≥ d(γ) = {}; the sum is finite", b.depth()))
        }
        Gamma::Torus(_) => {
            let m0 = prep.levels.iter().flatten().copied().max().unwrap_or(0);
            if depth_only {
                (
                    Some(m0),
                    format!("every γ^σ t⁻¹ ≠ 1 lies outside T_{}; deeper strata cancel by orthogonality", m0 + 1),
                )
            } else {
                (None, "Θ_ψ(γ) depends on the Howe tower; no orthogonality certificate".into())
            }
        }
    };
    if let Some(m0) = stabilization {
        if m0 > cap {
            return Err(Error::NotStabilised(format!("strata up to depth {m0} are needed, cap is {cap}")));
        }
    }
    let report = SummationReport { stratum_sums, partial_sums, stabilization, certificate };
    let total = report.partial_sums[cap as usize].clone();
    if exact.is_empty() {
        return Ok(BruteResult {
            value: TransferValue { smooth: total, atoms: Vec::new() },
            report,
            by_field,
            depth0_counts,
        });
    }
    // t is a Galois twist of γ: the σ₀ direction carries a point mass.
    let Gamma::Torus(gm) = &qu.gamma else { unreachable!() };
    if !matches!(model, ThetaModel::Table) {
        return Err(Error::Unsupported("point masses are computed for the prime-degree table only".into()));
    }
    let d = depth_of(lf, gm)?;
    let limit = table_coefficient(q, n, d as u32 + 1, d);
    if (d as u32 + 2..d as u32 + 4).any(|r| table_coefficient(q, n, r, d) != limit) {
        return Err(Error::NotStabilised(format!(
            "Θ_ψ(γ) does not settle for d(ψ) > d(γ) when n = {n}: no point-mass limit"
        )));
    }
    if cap < d as u32 {
        return Err(Error::NotStabilised(format!("cap {cap} is below d(γ) = {d}")));
    }
    let s0 = exact[0];
    let mut smooth = CycNumber::zero(e);
    for (c, coef) in classes.iter().zip(&coeffs) {
        let mut hist = PowerHistogram::new(e);
        for i in 0..nt {
            if i != s0 {
                hist.merge(&c.sums[prep.offset + i]);
            }
        }
        smooth = smooth.add(&hist.value().scale(coef));
        if c.depth as i64 <= d {
            let count = BigRational::from_integer(c.sums[prep.offset + s0].total().into());
            smooth = smooth.add(&to_cyc(e, &((coef - &limit) * count)));
        }
    }
    smooth = smooth.sub(&to_cyc(e, &limit));
    let _ = kind;
    Ok(BruteResult {
        value: TransferValue {
            smooth,
            atoms: vec![Atom { location: qu.t.clone(), weight: limit }],
        },
        report,
        by_field,
        depth0_counts,
    })
}

/// Exhaustive `L(γ, t)` on the norm-one torus with a fresh dual of level `depth_cap + 1`.
pub fn brute_l(lf: &LocalField, gamma: &Gamma, t: &LaurentElem, depth_cap: u32) -> Result<BruteResult> {
    let dual = Dual::build(lf, TorusKind::NormOne, depth_cap + 1)?;
    let model = ThetaModel::for_degree(lf.n());
    let mut v = brute_batch(&dual, &[Query { gamma: gamma.clone(), t: t.clone() }], model)?;
    Ok(v.remove(0))
}

/// The packaged `E + C·x^μ` form next to its exact counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct PackagedForm {
    pub exponent: i64,
    pub e_stated: BigRational,
    pub c_stated: BigRational,
    pub e_exact: BigRational,
    pub c_exact: BigRational,
    pub stated: BigRational,
    pub exact: BigRational,
    /// `stated − finite sum`.
    pub diff: BigRational,
}

/// Closed evaluation of `L(γ, t)` for prime `ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedValue {
    pub value: TransferValue,
    pub packaged: Option<PackagedForm>,
    /// Set when an `SL_2` near-conjugate pair was routed to the sign formula.
    pub sl2: Option<Sl2Value>,
}

fn geometric_ratio(q: u64, h_exp: i64, x_exp: i64) -> BigRational {
    // (h − 1)/(x − 1)
    (exp_q(q, h_exp) - BigRational::one()) / (exp_q(q, x_exp) - BigRational::one())
}

/// `Σ_{r<λ} c_r N_r − c_λ |T/T_λ|` with the table coefficients `c_r` and
/// closed stratum counts; `λ = None` is not allowed here.
fn direction_sum(q: u64, l: u32, kind: TorusKind, d: i64, lambda: u32) -> BigRational {
    let mut acc = BigRational::zero();
    for r in 0..=lambda {
        let c = table_coefficient(q, l, r, d);
        acc += c * BigRational::from_integer(stratum_character_sum(q, l, kind, r, Some(lambda)));
    }
    acc
}

/// `L(γ, t)` by finite sums for prime `ℓ` on the norm-one torus; the packaged
/// constants are evaluated alongside when `γ, t` are on the torus and not
/// nearly conjugate, or `γ` is off the torus.
pub fn closed_l_prime(lf: &LocalField, gamma: &Gamma, t: &LaurentElem) -> Result<ClosedValue> {
    let l = lf.n();
    if !is_prime(l as u64) {
        return Err(Error::Unsupported(format!("closed forms need prime degree, got {l}")));
    }
    let q = lf.q();
    let kind = TorusKind::NormOne;
    let e = 1;
    let t_size = BigRational::from_integer(quotient_order(q, l, kind, 1).into());
    let sgn_l = if l % 2 == 0 { 1 } else { -1 };
    match gamma {
        Gamma::Torus(gm) => {
            let d = depth_of(lf, gm)?;
            let dt = depth_of(lf, t)?;
            let t_inv = t.invert()?;
            let levels: Vec<Option<u32>> = (0..l)
                .map(|s| level_u32(lf, &lf.sigma(gm, s as i64).mul(&t_inv)))
                .collect::<Result<_>>()?;
            let near = levels.iter().any(|x| x.map_or(false, |v| v as i64 > d));
            if l == 2 && near && levels.iter().all(|x| x.is_some()) && d == dt {
                let s = closed_l_sl2(lf, gm, t)?;
                return Ok(ClosedValue {
                    value: TransferValue { smooth: to_cyc(e, &s.formula), atoms: Vec::new() },
                    packaged: None,
                    sl2: Some(s),
                });
            }
            let mut smooth = BigRational::zero();
            let mut atoms = Vec::new();
            for lam in &levels {
                match lam {
                    Some(lam) => smooth += direction_sum(q, l, kind, d, *lam),
                    None => {
                        if l == 2 {
                            return Err(Error::NotStabilised("no point-mass limit for ℓ = 2".into()));
                        }
                        let limit = table_coefficient(q, l, d as u32 + 1, d);
                        for r in 0..=d as u32 {
                            let c = table_coefficient(q, l, r, d) - &limit;
                            smooth += c * BigRational::from_integer(count_by_depth(q, l, r, kind).into());
                        }
                        smooth -= &limit;
                        atoms.push(Atom { location: t.clone(), weight: limit });
                    }
                }
            }
            let packaged = if near || !atoms.is_empty() {
                None
            } else {
                let mu = d.min(dt);
                let h_exp = ((l * l - l) / 2) as i64;
                let x_exp = ((l * l + l - 2) / 2) as i64;
                let ratio = geometric_ratio(q, h_exp, x_exp);
                let a = BigRational::from_integer(BigInt::from(l as i64 * sgn_l));
                let e_exact = &a * (&t_size * &ratio - BigRational::one());
                let c_exact = -(&a * &t_size * &ratio);
                let e_stated = &e_exact - &a * &t_size;
                let c_stated = -c_exact.clone();
                let xm = exp_q(q, x_exp * mu);
                let exact = &e_exact + &c_exact * &xm;
                let stated = &e_stated + &c_stated * &xm;
                Some(PackagedForm {
                    exponent: x_exp * mu,
                    diff: &stated - &smooth,
                    e_stated,
                    c_stated,
                    e_exact,
                    c_exact,
                    stated,
                    exact,
                })
            };
            Ok(ClosedValue { value: TransferValue { smooth: to_cyc(e, &smooth), atoms }, packaged, sl2: None })
        }
        Gamma::Blocks(b) => {
            let dg = b.depth();
            let lam = level_u32(lf, t)?;
            let mut smooth = BigRational::zero();
            for r in 0..dg.max(0) as u32 {
                let s = stratum_character_sum(q, l, kind, r, lam);
                smooth += lce_sum(q, r, b, SignConvention::Table)? * BigRational::from_integer(s);
            }
            let packaged = Some(off_torus_packaged(q, l, b, lam, &t_size, &smooth)?);
            Ok(ClosedValue { value: TransferValue { smooth: to_cyc(e, &smooth), atoms: Vec::new() }, packaged, sl2: None })
        }
    }
}

/// Orbit-by-orbit `E_O + C_O q^{min(d(t), d(γ)−1)(|Φ_O|/2 + ℓ − 1)}`, stated
/// (raw sign) and exact (summed finite series with the table sign).
fn off_torus_packaged(
    q: u64,
    l: u32,
    b: &BlockElement,
    lam: Option<u32>,
    t_size: &BigRational,
    smooth: &BigRational,
) -> Result<PackagedForm> {
    let dmax = b.depth() - 1;
    let mu = lam.map_or(dmax, |x| (x as i64).min(dmax));
    let one = BigRational::one();
    let (mut e_stated, mut c_stated, mut e_exact, mut c_exact) =
        (BigRational::zero(), BigRational::zero(), BigRational::zero(), BigRational::zero());
    let mut stated = BigRational::zero();
    let mut exact = BigRational::zero();
    for o in b.admissible_orbits() {
        // a_O q^{X_O} with the table sign, at d(ψ) = 0
        let a_table = lce_term(q, &o, 0, b, SignConvention::Table)?;
        let a_raw = lce_term(q, &o, 0, b, SignConvention::Raw)?;
        let h_exp = (o.levi_roots() / 2) as i64;
        let x_exp = h_exp + l as i64 - 1;
        let ratio = geometric_ratio(q, h_exp, x_exp);
        let x_mu = exp_q(q, x_exp * mu);
        let es = &a_raw * (t_size * (&ratio - &one) - &one);
        let cs = if lam.map_or(false, |x| (x as i64) < b.depth()) {
            &a_raw * t_size * &ratio
        } else {
            &a_raw * t_size * (&ratio - &one)
        };
        stated += &es + &cs * &x_mu;
        let (ee, ce) = if lam.map_or(false, |x| x as i64 <= dmax) {
            (&a_table * (t_size * &ratio - &one), -(&a_table * t_size * &ratio))
        } else {
            let x = exp_q(q, x_exp);
            let h = exp_q(q, h_exp);
            let e0 = &a_table * (t_size * &ratio - &one);
            let c0 = &a_table * t_size * (&x - &h) / (&x - &one);
            (e0, c0)
        };
        exact += &ee + &ce * &x_mu;
        e_stated += es;
        c_stated += cs;
        e_exact += ee;
        c_exact += ce;
    }
    Ok(PackagedForm {
        exponent: mu,
        diff: &stated - smooth,
        e_stated,
        c_stated,
        e_exact,
        c_exact,
        stated,
        exact,
    })
}

/// The `SL_2` near-conjugate value `2(−1)^{d+M} q^{d+M}` and the trace form
/// `2 sgn_E(Tr γ − Tr t) / |Tr γ − Tr t|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sl2Value {
    pub d: i64,
    pub m: i64,
    pub formula: BigRational,
    pub trace_form: BigRational,
}

impl Sl2Value {
    pub fn agrees(&self) -> bool {
        self.formula == self.trace_form
    }
}

pub fn closed_l_sl2(lf: &LocalField, gamma: &LaurentElem, t: &LaurentElem) -> Result<Sl2Value> {
    if lf.n() != 2 {
        return Err(Error::Domain("the sign formula is for SL_2".into()));
    }
    let d = depth_of(lf, gamma)?;
    if depth_of(lf, t)? != d {
        return Err(Error::Domain("d(γ) ≠ d(t)".into()));
    }
    let t_inv = t.invert()?;
    let mut near = Vec::new();
    for s in 0..2 {
        let u = lf.sigma(gamma, s).mul(&t_inv);
        match level_u32(lf, &u)? {
            None => return Err(Error::Domain("γ and t are stably conjugate".into())),
            Some(l) if l as i64 > d => near.push(u),
            _ => {}
        }
    }
    if near.len() != 1 {
        return Err(Error::Domain(format!("{} Galois twists of γ are close to t", near.len())));
    }
    let m = depth_of(lf, &near[0])?;
    let two = BigRational::from_integer(2.into());
    let sgn = |v: i64| if v % 2 == 0 { BigRational::one() } else { -BigRational::one() };
    let formula = &two * sgn(d + m) * exp_q(lf.q(), d + m);
    let tr = lf.trace_to(gamma, 1)?.sub(&lf.trace_to(t, 1)?);
    let v = tr.ord()?.ok_or_else(|| Error::Precision("Tr γ − Tr t unresolved".into()))?;
    let trace_form = &two * sgn(v) / exp_q(lf.q(), -v);
    Ok(Sl2Value { d, m, formula, trace_form })
}

/// `⟨L(γ, ·), 1_{u T_{m+1}}⟩` with `meas(T) = 1`.
#[derive(Clone, Debug)]
pub struct BallPairing {
    pub m: u32,
    pub measure: BigRational,
    pub pairing: CycNumber,
    /// Value of the smooth part on the ball (when the ball holds a twist of `γ`).
    pub smooth: Option<CycNumber>,
    /// `pairing − measure · smooth`.
    pub atom: Option<CycNumber>,
}

/// Pairs `L(γ, ·)` with the ball `u T_{m+1}`; the dual must have level `≥ m + 1`.
pub fn pair_l(dual: &Dual, gamma: &LaurentElem, u: &LaurentElem, m: u32) -> Result<BallPairing> {
    let g = dual.group();
    let lf = dual.field();
    if g.level() < m + 1 {
        return Err(Error::Domain(format!("dual of level {} is too coarse for the ball", g.level())));
    }
    let measure = BigRational::new(BigInt::one(), BigInt::from(g.index_of_level(m + 1)));
    let u_inv = u.invert()?;
    let inside = (0..lf.n() as i64).map(|s| lf.sigma(gamma, s)).find(|gs| {
        level_u32(lf, &gs.mul(&u_inv)).map_or(false, |l| l.map_or(true, |l| l > m))
    });
    let model = ThetaModel::for_degree(lf.n());
    let mut queries = vec![Query::torus(gamma.clone(), u.clone())];
    if let Some(gs) = &inside {
        queries.push(Query::torus(gamma.clone(), gs.clone()));
    }
    // the ball pairing only needs strata up to m, which never raises a
    // stabilisation error
    let raw = raw_partial(dual, &queries[0], model, m)?;
    let pairing = raw.scale(&measure);
    let (smooth, atom) = if inside.is_some() {
        let at = brute_batch(dual, &queries[1..], model)?.remove(0);
        let atom = pairing.sub(&at.value.smooth.scale(&measure));
        (Some(at.value.smooth), Some(atom))
    } else {
        (None, None)
    };
    Ok(BallPairing { m, measure, pairing, smooth, atom })
}

/// `Σ_{ψ ≠ 1, d(ψ) ≤ m} Θ_ψ(γ) ψ(t⁻¹)` without any stabilisation bookkeeping.
fn raw_partial(dual: &Dual, qu: &Query, model: ThetaModel, m: u32) -> Result<CycNumber> {
    let g = dual.group();
    let lf = dual.field();
    let Gamma::Torus(gm) = &qu.gamma else {
        return Err(Error::Unsupported("ball pairings are for torus elements".into()));
    };
    let t_inv = g.neg(&g.dlog(&qu.t)?);
    let targets: Vec<Vec<u64>> = (0..lf.n())
        .map(|s| Ok(g.add(&g.dlog(&lf.sigma(gm, s as i64))?, &t_inv)))
        .collect::<Result<_>>()?;
    let classes = enumerate_classes(dual, &targets)?;
    let e = g.exponent();
    let mut acc = CycNumber::zero(e);
    for c in classes.iter().filter(|c| c.depth <= m) {
        let coef = match model {
            ThetaModel::Table => table_coefficient(lf.q(), lf.n(), c.depth, depth_of(lf, gm)?),
            ThetaModel::Conjecture(conv) => conjecture_coefficient(lf, &c.tower, c.depth, gm, conv)?,
        };
        let mut hist = PowerHistogram::new(e);
        for h in &c.sums {
            hist.merge(h);
        }
        acc = acc.add(&hist.value().scale(&coef));
    }
    Ok(acc)
}

/// `L^M(γ, t)` for every `M` by brute force, with the fibre counts `C_{M,r}`
/// checked against the enumerated strata.
#[derive(Clone, Debug)]
pub struct StratumReport {
    pub total: CycNumber,
    pub by_field: BTreeMap<u32, CycNumber>,
    pub depth0_counts: BTreeMap<u32, i128>,
    pub stated: Vec<StratumDisplay>,
}

/// A closed display for one `L^M` against the brute stratum.
#[derive(Clone, Debug)]
pub struct StratumDisplay {
    pub m: u32,
    pub name: &'static str,
    pub stated: BigRational,
    pub brute: CycNumber,
    pub diff: CycNumber,
}

pub fn l_m_strata(dual: &Dual, gamma: &LaurentElem, t: &LaurentElem) -> Result<StratumReport> {
    let lf = dual.field();
    let n = lf.n();
    let q = lf.q();
    let e = dual.group().exponent();
    let model = ThetaModel::for_degree(n);
    let res = brute_batch(dual, &[Query::torus(gamma.clone(), t.clone())], model)?.remove(0);
    if !res.value.atoms.is_empty() {
        return Err(Error::Unsupported("strata are split for non-conjugate pairs only".into()));
    }
    let dg = depth_of(lf, gamma)?;
    let dt = depth_of(lf, t)?;
    let mut stated = Vec::new();
    for &m in lf.subfield_degrees() {
        let brute = res.by_field.get(&m).cloned().unwrap_or_else(|| CycNumber::zero(e));
        let n0 = *res.depth0_counts.get(&m).unwrap_or(&0);
        let display = if m == n {
            Some(("Eform", eform_display(q, n, n0, dg.min(dt))))
        } else if m > 1 && is_prime((n / m) as u64) && dt >= 1 && dt < dg {
            Some(("Mprimeform", mprimeform_display(q, n, m, n0, dt)?))
        } else {
            None
        };
        if let Some((name, v)) = display {
            let diff = to_cyc(e, &v).sub(&brute);
            stated.push(StratumDisplay { m, name, stated: v, brute, diff });
        }
    }
    Ok(StratumReport { total: res.value.smooth, by_field: res.by_field, depth0_counts: res.depth0_counts, stated })
}

fn stabilizer_sum(q: u64, m: u32) -> BigRational {
    let s: i64 = divisors(m as u64)
        .into_iter()
        .map(|d| moebius(m as u64 / d) * (q as i64).pow(d as u32 - 1))
        .sum();
    BigRational::from_integer(s.into())
}

fn half(num: i64) -> Result<i64> {
    if num % 2 != 0 {
        return Err(Error::Domain(format!("odd exponent {num}/2")));
    }
    Ok(num / 2)
}

fn torus_residue_order(q: u64, m: u32) -> BigRational {
    BigRational::from_integer(((q as u128).pow(m) - 1).into()) / BigRational::from_integer((q - 1).into())
}

/// The `M = E` display for `A = min(d(t), d(γ))`.
pub fn eform_display(q: u64, n: u32, depth0_count: i128, a: i64) -> BigRational {
    let n64 = n as i64;
    let s = BigRational::from_integer(BigInt::from(n64 * if n % 2 == 0 { 1 } else { -1 }));
    let t = torus_residue_order(q, n);
    let h = exp_q(q, (n64 * n64 - n64) / 2);
    let x_exp = (n64 * n64 + n64 - 2) / 2;
    let x = exp_q(q, x_exp);
    let sn = stabilizer_sum(q, n);
    let one = BigRational::one();
    let mu = BigRational::from_integer(moebius(n as u64).into());
    let ratio = &sn / (&x - &one);
    &s * BigRational::from_integer(depth0_count.into()) - &s * &t * &h * &ratio
        + &s * &t * &h * (&ratio + mu) * exp_q(q, (a - 1) * x_exp)
}

/// The `[E:M]` prime display for `1 ≤ d(t) < d(γ)`.
pub fn mprimeform_display(q: u64, n: u32, m: u32, depth0_count: i128, dt: i64) -> Result<BigRational> {
    let (n, m64) = (n as i64, m as i64);
    let s = BigRational::from_integer(BigInt::from(n * if n % 2 == 0 { 1 } else { -1 }));
    let one = BigRational::one();
    let t = torus_residue_order(q, n as u32);
    let tm = torus_residue_order(q, m);
    let sm = stabilizer_sum(q, m);
    let mu = BigRational::from_integer(moebius(m as u64).into());
    let k = exp_q(q, half(n * n + n * n / m64 - n * m64 - n)?) * (exp_q(q, n - m64) - &one)
        / (exp_q(q, half(n * n / m64 + n - 2 * m64)?) - &one);
    let y_exp = half(n * n - n * m64)? + m64 - 1;
    let z_exp = half(n * n + n * n / m64 - n * m64 + n - 2)?;
    let (y, z) = (exp_q(q, y_exp), exp_q(q, z_exp));
    let base = exp_q(q, half(n * n - n * m64)?);
    let mut v = &s * BigRational::from_integer(depth0_count.into());
    v -= &s * &t * &k * &sm * (&one / (&y - &one) + &one / (&z - &one));
    v += &s * &tm * &base * &sm / (&y - &one);
    v += &s * &t * &k * (&sm / (&y - &one) + &mu) * exp_q(q, (dt - 1) * y_exp);
    v -= &s * &tm * &base * (&sm / (&y - &one) + &mu) * exp_q(q, (dt - 1) * y_exp);
    v += &s * &t * &k * (&sm / (&z - &one) + &mu) * exp_q(q, (dt - 1) * z_exp);
    Ok(v)
}

/// The named constants of the `n = ℓ²` and `n = ℓ₁ℓ₂` (odd primes) expansions.
pub fn composite_constants(n: u32, q: u64) -> Result<Vec<(String, BigRational)>> {
    let primes = crate::ffield::prime_factors(n as u64);
    let odd_primes = primes.iter().all(|&p| p % 2 == 1);
    let fac: Vec<(u64, u32)> = primes
        .iter()
        .map(|&p| {
            let mut e = 0;
            let mut m = n as u64;
            while m % p == 0 {
                m /= p;
                e += 1;
            }
            (p, e)
        })
        .collect();
    let one = BigRational::one();
    let qp = |e: i64| exp_q(q, e);
    let t = torus_residue_order(q, n);
    let mut out = Vec::new();
    match fac.as_slice() {
        [(l, 2)] if odd_primes => {
            let l = *l as i64;
            let te = torus_residue_order(q, l as u32);
            let inner = (qp(half(l.pow(3) - l * l)?) - &one) / (qp(half(l.pow(3) + l * l - 2 * l)?) - &one) - &one;
            let ll = BigRational::from_integer((l * l).into());
            let b = -(&ll) * (&t * &inner + &te) * (qp(half(l.pow(4) - l.pow(3))?) - &one)
                / (qp(half(l.pow(4) - l.pow(3))? + l - 1) - &one);
            let c = -(&ll) * &t * &inner * (qp(half(l.pow(4) - l.pow(3))?) - &one)
                / (qp(half(l.pow(4) + l * l - 2)?) - &one);
            out.push((format!("B_{{{n}}}"), b));
            out.push((format!("C_{{{n}}}"), c));
        }
        [(l1, 1), (l2, 1)] if odd_primes => {
            let (l1, l2) = (*l1 as i64, *l2 as i64);
            let nn = l1 * l2;
            let nr = BigRational::from_integer(nn.into());
            for (i, (li, lj)) in [(l1, l2), (l2, l1)].into_iter().enumerate() {
                let te = torus_residue_order(q, lj as u32);
                let inner = (qp(half(li * lj * lj - nn)?) - &one) / (qp(half(li * lj * lj + nn - 2 * li)?) - &one) - &one;
                let b = -(&nr) * (&t * &inner + &te) * (qp(half(nn * nn - li * li * lj)?) - &one)
                    / (qp(half(nn * nn - li * li * lj)? + li - 1) - &one);
                let c = &nr * &t * qp(li - nn) * (qp(nn - li) - &one) / (qp(half(li * lj * lj + nn - 2 * li)?) - &one)
                    * (qp(half(nn * nn + li * lj * lj - li * li * lj + nn - 2 * li)?) - &one)
                    / (qp(half(nn * nn + li * lj * lj - li * li * lj + nn - 2)?) - &one);
                out.push((format!("B^{}_{{{n}}}", i + 1), b));
                out.push((format!("C^{}_{{{n}}}", i + 1), c));
            }
            let c = -(&nr) * &t * qp(1 - nn)
                * ((qp(nn - 1) - qp(l1 - 1) - qp(l2 - 1) + &one) / (qp(half(nn * nn + nn - 2)?) - &one) + &one);
            out.push((format!("C_{{{n}}}"), c));
        }
        _ => return Err(Error::Unsupported(format!("n = {n} is neither ℓ² nor ℓ₁ℓ₂ with odd primes"))),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{good_element, rng};

    fn field(p: u64, n: u32) -> LocalField {
        LocalField::new(p, 1, n, 14).unwrap()
    }

    #[test]
    fn anchors_for_l3_q5() {
        let lf = field(5, 3);
        let mut r = rng(1);
        let g = good_element(&mut r, &lf, TorusKind::NormOne, 2).unwrap();
        let t0 = good_element(&mut r, &lf, TorusKind::NormOne, 0).unwrap();
        let t1 = good_element(&mut r, &lf, TorusKind::NormOne, 1).unwrap();
        let c0 = closed_l_prime(&lf, &Gamma::Torus(g.clone()), &t0).unwrap();
        let c1 = closed_l_prime(&lf, &Gamma::Torus(g.clone()), &t1).unwrap();
        assert_eq!(c0.value.smooth.to_i64(), Some(3));
        assert_eq!(c1.value.smooth.to_i64(), Some(11535));
        let b = brute_l(&lf, &Gamma::Torus(g.clone()), &t1, 2).unwrap();
        assert_eq!(b.value.smooth.to_i64(), Some(11535));
        assert_eq!(b.report.stabilization, Some(1));
        let b0 = brute_l(&lf, &Gamma::Torus(g), &t0, 1).unwrap();
        assert_eq!(b0.value.smooth.to_i64(), Some(3));
    }

    #[test]
    fn packaged_constants_at_l2_q3() {
        let lf = field(3, 2);
        let mut r = rng(2);
        let g = good_element(&mut r, &lf, TorusKind::NormOne, 2).unwrap();
        let t = good_element(&mut r, &lf, TorusKind::NormOne, 1).unwrap();
        let c = closed_l_prime(&lf, &Gamma::Torus(g), &t).unwrap();
        let p = c.packaged.unwrap();
        assert_eq!(p.e_stated, BigRational::from_integer((-8).into()));
        assert_eq!(p.c_stated, BigRational::from_integer(2.into()));
        assert_eq!(p.e_exact, BigRational::zero());
        assert_eq!(p.c_exact, BigRational::from_integer((-2).into()));
        assert_eq!(p.exact, c.value.smooth.to_rational().unwrap());
    }

    #[test]
    fn brute_matches_closed_on_torus_l2() {
        let lf = field(3, 2);
        let mut r = rng(5);
        for dg in 0..3 {
            for dt in 0..3 {
                if dg == dt {
                    continue;
                }
                let g = good_element(&mut r, &lf, TorusKind::NormOne, dg).unwrap();
                let t = good_element(&mut r, &lf, TorusKind::NormOne, dt).unwrap();
                let b = brute_l(&lf, &Gamma::Torus(g.clone()), &t, 3).unwrap();
                let c = closed_l_prime(&lf, &Gamma::Torus(g), &t).unwrap();
                assert_eq!(b.value.smooth, c.value.smooth.lift_to(b.value.smooth.modulus()), "{dg} {dt}");
                // partial sums settle after the certified depth
                let m0 = b.report.stabilization.unwrap() as usize;
                for s in &b.report.partial_sums[m0..] {
                    assert_eq!(s, &b.value.smooth);
                }
            }
        }
    }

    #[test]
    fn galois_symmetry() {
        let lf = field(5, 3);
        let mut r = rng(9);
        let g = good_element(&mut r, &lf, TorusKind::NormOne, 1).unwrap();
        let t = good_element(&mut r, &lf, TorusKind::NormOne, 0).unwrap();
        let dual = Dual::build(&lf, TorusKind::NormOne, 2).unwrap();
        let qs: Vec<Query> = vec![
            Query::torus(g.clone(), t.clone()),
            Query::torus(lf.sigma(&g, 1), t.clone()),
            Query::torus(g.clone(), lf.sigma(&t, 2)),
        ];
        let res = brute_batch(&dual, &qs, ThetaModel::Table).unwrap();
        assert_eq!(res[0].value.smooth, res[1].value.smooth);
        assert_eq!(res[0].value.smooth, res[2].value.smooth);
    }

    #[test]
    fn orthogonality_for_strata() {
        let lf = field(3, 2);
        let dual = Dual::build(&lf, TorusKind::NormOne, 4).unwrap();
        let g = dual.group();
        let mut r = rng(4);
        for lam in 0..3 {
            let u = good_element(&mut r, &lf, TorusKind::NormOne, lam).unwrap();
            let classes = enumerate_classes(&dual, &[g.dlog(&u).unwrap()]).unwrap();
            for depth in 0..4 {
                let mut h = PowerHistogram::new(g.exponent());
                for c in classes.iter().filter(|c| c.depth == depth) {
                    h.merge(&c.sums[0]);
                }
                let want = stratum_character_sum(3, 2, TorusKind::NormOne, depth, Some(lam as u32));
                assert_eq!(h.value(), CycNumber::from_int(g.exponent(), want));
            }
        }
    }

    #[test]
    fn sl2_trace_identity() {
        let lf = field(3, 2);
        let mut r = rng(6);
        for d in 1..3 {
            let g = good_element(&mut r, &lf, TorusKind::NormOne, d).unwrap();
            let u = good_element(&mut r, &lf, TorusKind::NormOne, d + 1).unwrap();
            let t = g.mul(&u).truncate(lf.prec());
            let s = closed_l_sl2(&lf, &g, &t).unwrap();
            assert!(s.agrees(), "{s:?}");
            assert_eq!(s.m, d + 1);
            assert_eq!(s.formula, BigRational::from_integer(2.into()) * exp_q(3, 2 * d + 1) * BigInt::from(-1));
        }
    }

    #[test]
    fn off_torus_sum_is_finite_and_matches() {
        let lf = field(5, 3);
        let base = LocalField::new(5, 1, 1, 14).unwrap();
        let _ = base;
        let t_ = lf.tower();
        let x = lf.constant(t_.from_int(lf.ext(), 2));
        let w = lf.uniformizer();
        // three F-rational eigenvalues at mutual distance w^2
        let a = lf.one().add(&w.mul(&w).mul(&x));
        let b = lf.one().add(&w.mul(&w).mul(&lf.constant(t_.from_int(lf.ext(), 3))));
        let c = lf.one();
        let blk = BlockElement::from_blocks(&lf, &[1, 1, 1], &[a, b, c]).unwrap();
        assert_eq!(blk.depth(), 2);
        let mut r = rng(8);
        for dt in 0..3 {
            let t = good_element(&mut r, &lf, TorusKind::NormOne, dt).unwrap();
            let gamma = Gamma::Blocks(blk.clone());
            let br = brute_l(&lf, &gamma, &t, 2).unwrap();
            let cl = closed_l_prime(&lf, &gamma, &t).unwrap();
            assert_eq!(br.value.smooth, cl.value.smooth.lift_to(br.value.smooth.modulus()));
            let p = cl.packaged.unwrap();
            assert_eq!(p.exact, cl.value.smooth.to_rational().unwrap());
        }
    }

    #[test]
    fn composite_constants_are_finite() {
        for n in [9, 15, 21, 25] {
            let cs = composite_constants(n, 5).unwrap();
            assert!(!cs.is_empty());
        }
        assert!(composite_constants(4, 5).is_err());
        assert!(composite_constants(6, 5).is_err());
    }
}
