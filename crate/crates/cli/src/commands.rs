//! `depth`, `theta` and `transfer`.

use crate::config::{Format, RunConfig};
use crate::render::{self, csv_table};
use serde_json::{json, Value};
use std::fmt;
use tortf::chargroup::{Dual, TorusKind};
use tortf::charform::{theta_conjecture, theta_table, Gamma};
use tortf::depth::{is_good, newton_depth, weyl_discriminant, RootOrderVector};
use tortf::ffield::is_prime;
use tortf::lseries::{LaurentElem, LocalField, Matrix};
use tortf::transfer::{brute_batch, closed_l_prime, Query, ThetaModel};

/// Exit code 2 for usage problems, 1 for failed computations.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(m) => write!(f, "{m}"),
        }
    }
}

impl From<tortf::Error> for CliError {
    fn from(e: tortf::Error) -> Self {
        match e {
            tortf::Error::Parse(_) | tortf::Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Run(e.to_string()),
        }
    }
}

pub fn field(cfg: &RunConfig) -> Result<LocalField, CliError> {
    Ok(LocalField::new(cfg.p, cfg.k, cfg.n, cfg.prec)?)
}

fn finish(cfg: &RunConfig, value: Value, header: &[&str], rows: Vec<Vec<String>>) -> String {
    match cfg.format {
        Format::Json => serde_json::to_string_pretty(&value).expect("serialisable") + "\n",
        Format::Csv => csv_table(header, &rows),
    }
}

/// Rows separated by `;`, entries by `,`, each a base-field Laurent literal.
fn parse_matrix(lf: &LocalField, text: &str) -> Result<Matrix, CliError> {
    let rows: Vec<Vec<LaurentElem>> = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|e| LaurentElem::parse(e, lf.tower(), lf.base()))
                .collect::<tortf::Result<Vec<_>>>()
        })
        .collect::<tortf::Result<_>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Usage(format!("`{text}` is not a square matrix")));
    }
    Ok(Matrix::from_rows(rows))
}

fn opt_string<T: ToString, E>(r: Result<T, E>) -> Option<String> {
    r.ok().map(|x| x.to_string())
}

pub fn depth(cfg: &RunConfig, gamma: Option<&str>, matrix: Option<&str>) -> Result<String, CliError> {
    let lf = field(cfg)?;
    let (label, depth, newton, good, disc) = match (gamma, matrix) {
        (Some(text), None) => {
            let g = lf.parse(text)?.truncate(lf.prec());
            if g.ord()? != Some(0) {
                return Err(CliError::Run("γ must be a unit of E".into()));
            }
            let rov = RootOrderVector::of_torus(&lf, &g)?;
            let d = rov.min();
            let newton = if rov.is_regular() { opt_string(newton_depth(&lf.regular_matrix(&g))) } else { None };
            let good = match d {
                Some(d) => is_good(&lf, &g, d)?,
                None => false,
            };
            let disc = if rov.is_regular() { opt_string(weyl_discriminant(lf.q(), &rov)) } else { None };
            (g.render(), d.map_or("inf".to_string(), |d| d.to_string()), newton, Some(good), disc)
        }
        (None, Some(text)) => {
            let m = parse_matrix(&lf, text)?;
            let nd = newton_depth(&m)?;
            (text.to_string(), nd.to_string(), Some(nd.to_string()), None, None)
        }
        _ => return Err(CliError::Usage("give exactly one of --gamma and --matrix".into())),
    };
    let value = json!({
        "gamma": label,
        "depth": depth,
        "newton_depth": newton,
        "good": good,
        "discriminant": disc,
    });
    let show = |x: &Option<String>| x.clone().unwrap_or_default();
    let row = vec![label.clone(), depth.clone(), show(&newton), good.map_or(String::new(), |g| g.to_string()), show(&disc)];
    Ok(finish(cfg, value, &["gamma", "depth", "newton_depth", "good", "discriminant"], vec![row]))
}

pub fn theta(cfg: &RunConfig, label: &str, gamma: &str) -> Result<String, CliError> {
    let lf = field(cfg)?;
    let (_, level) = tortf::chargroup::dual::parse_label(label)?;
    let dual = Dual::build(&lf, TorusKind::NormOne, level)?;
    let psi = dual.parse(label)?;
    let g = lf.parse(gamma)?.truncate(lf.prec());
    let conj = theta_conjecture(&dual, &psi, &g, cfg.sign_convention)?;
    let (model, value) = if is_prime(cfg.n as u64) {
        ("table", theta_table(&dual, &psi, &Gamma::Torus(g.clone()))?)
    } else {
        ("conjecture", conj.clone())
    };
    let out = json!({
        "psi": psi.label(),
        "gamma": g.render(),
        "model": model,
        "value": render::cyc(&value),
        "conjecture": render::cyc(&conj),
        "sign_convention": format!("{:?}", cfg.sign_convention).to_lowercase(),
    });
    let row = vec![psi.label(), g.render(), model.to_string(), value.to_string(), conj.to_string()];
    Ok(finish(cfg, out, &["psi", "gamma", "model", "value", "conjecture"], vec![row]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Brute,
    Closed,
    Both,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "brute" => Ok(Mode::Brute),
            "closed" => Ok(Mode::Closed),
            "both" => Ok(Mode::Both),
            _ => Err(format!("unknown mode `{s}` (brute|closed|both)")),
        }
    }
}

pub fn transfer(cfg: &RunConfig, gamma: &str, t: &str, mode: Mode) -> Result<String, CliError> {
    let lf = field(cfg)?;
    let g = lf.parse(gamma)?.truncate(lf.prec());
    let t = lf.parse(t)?.truncate(lf.prec());
    let prime = is_prime(cfg.n as u64);
    let model = if prime { ThetaModel::Table } else { ThetaModel::Conjecture(cfg.sign_convention) };
    let brute = if mode != Mode::Closed {
        let dual = Dual::build(&lf, TorusKind::NormOne, cfg.depth_cap + 1)?;
        Some(brute_batch(&dual, &[Query::torus(g.clone(), t.clone())], model)?.remove(0))
    } else {
        None
    };
    let closed = if mode != Mode::Brute {
        if !prime {
            return Err(CliError::Run(format!("closed forms need prime n, got {}", cfg.n)));
        }
        Some(closed_l_prime(&lf, &Gamma::Torus(g.clone()), &t)?)
    } else {
        None
    };
    let smooth = brute.as_ref().map(|b| &b.value.smooth).or(closed.as_ref().map(|c| &c.value.smooth)).expect("one mode");
    let atoms = brute.as_ref().map(|b| &b.value.atoms).or(closed.as_ref().map(|c| &c.value.atoms)).expect("one mode");
    let closed_json = closed.as_ref().map(|c| {
        json!({
            "smooth": render::cyc(&c.value.smooth),
            "atoms": render::atoms(&c.value.atoms),
            "packaged": c.packaged.as_ref().map(render::packaged),
            "sl2": c.sl2.as_ref().map(|s| json!({
                "d": s.d, "m": s.m,
                "formula": render::rational(&s.formula),
                "trace_form": render::rational(&s.trace_form),
            })),
        })
    });
    let diff = match (&brute, &closed) {
        (Some(b), Some(c)) => {
            let modulus = b.value.smooth.modulus();
            let d = b.value.smooth.sub(&c.value.smooth.lift_to(modulus));
            json!({
                "brute_minus_closed": render::cyc(&d),
                "packaged_stated_minus_sum": c.packaged.as_ref().map(|p| render::rational(&p.diff)),
            })
        }
        (None, Some(c)) => json!({
            "packaged_stated_minus_sum": c.packaged.as_ref().map(|p| render::rational(&p.diff)),
        }),
        _ => Value::Null,
    };
    let value = json!({
        "gamma": g.render(),
        "t": t.render(),
        "model": format!("{model:?}"),
        "smooth": render::cyc(smooth),
        "atoms": render::atoms(atoms),
        "report": brute.as_ref().map(|b| render::report(&b.report)),
        "closed_form": closed_json,
        "diff": diff,
    });
    let (header, rows): (Vec<&str>, Vec<Vec<String>>) = match &brute {
        Some(b) => (
            vec!["gamma", "t", "depth", "stratum_sum", "partial_sum"],
            b.report
                .stratum_sums
                .iter()
                .zip(&b.report.partial_sums)
                .enumerate()
                .map(|(r, (s, p))| vec![g.render(), t.render(), r.to_string(), s.to_string(), p.to_string()])
                .collect(),
        ),
        None => {
            let c = closed.as_ref().expect("closed mode");
            let (stated, d) = c
                .packaged
                .as_ref()
                .map_or((String::new(), String::new()), |p| (p.stated.to_string(), p.diff.to_string()));
            (
                vec!["gamma", "t", "closed", "packaged_stated", "packaged_diff"],
                vec![vec![g.render(), t.render(), c.value.smooth.to_string(), stated, d]],
            )
        }
    };
    Ok(finish(cfg, value, &header, rows))
}
