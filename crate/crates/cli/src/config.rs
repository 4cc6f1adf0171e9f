//! Run configuration: flat `key=value` file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use tortf::charform::SignConvention;
use tortf::ffield::is_prime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format `{s}` (csv|json)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub p: u64,
    pub k: u32,
    pub n: u32,
    pub prec: i64,
    pub depth_cap: u32,
    pub format: Format,
    pub seed: u64,
    pub sign_convention: SignConvention,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            p: 3,
            k: 1,
            n: 2,
            prec: 10,
            depth_cap: 3,
            format: Format::Json,
            seed: 0,
            sign_convention: SignConvention::Table,
            jobs: None,
        }
    }
}

/// Values given explicitly, from a file or from flags.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub p: Option<u64>,
    pub k: Option<u32>,
    pub n: Option<u32>,
    pub prec: Option<i64>,
    pub depth_cap: Option<u32>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub sign_convention: Option<SignConvention>,
    pub jobs: Option<usize>,
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("bad value `{v}` for `{key}`"))
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            map.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        let mut o = Overrides::default();
        for (k, v) in &map {
            match k.as_str() {
                "p" => o.p = Some(parse_value(k, v)?),
                "k" => o.k = Some(parse_value(k, v)?),
                "n" => o.n = Some(parse_value(k, v)?),
                "prec" => o.prec = Some(parse_value(k, v)?),
                "depth_cap" => o.depth_cap = Some(parse_value(k, v)?),
                "format" => o.format = Some(v.parse()?),
                "seed" => o.seed = Some(parse_value(k, v)?),
                "sign_convention" => o.sign_convention = Some(v.parse().map_err(|e| format!("{e}"))?),
                "jobs" => o.jobs = Some(parse_value(k, v)?),
                _ => return Err(format!("unknown configuration key `{k}`")),
            }
        }
        Ok(o)
    }

    /// `self` wins over `base`.
    pub fn over(self, base: Overrides) -> Overrides {
        Overrides {
            p: self.p.or(base.p),
            k: self.k.or(base.k),
            n: self.n.or(base.n),
            prec: self.prec.or(base.prec),
            depth_cap: self.depth_cap.or(base.depth_cap),
            format: self.format.or(base.format),
            seed: self.seed.or(base.seed),
            sign_convention: self.sign_convention.or(base.sign_convention),
            jobs: self.jobs.or(base.jobs),
        }
    }

    pub fn resolve(self) -> Result<RunConfig, String> {
        let d = RunConfig::default();
        let depth_cap = self.depth_cap.unwrap_or(d.depth_cap);
        let cfg = RunConfig {
            p: self.p.unwrap_or(d.p),
            k: self.k.unwrap_or(d.k),
            n: self.n.unwrap_or(d.n),
            prec: self.prec.unwrap_or(2 * depth_cap as i64 + 4),
            depth_cap,
            format: self.format.unwrap_or(d.format),
            seed: self.seed.unwrap_or(d.seed),
            sign_convention: self.sign_convention.unwrap_or(d.sign_convention),
            jobs: self.jobs,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !is_prime(self.p) {
            return Err(format!("p = {} is not prime", self.p));
        }
        if self.k == 0 {
            return Err("k must be positive".into());
        }
        if self.n < 1 || self.n > 8 {
            return Err(format!("n = {} outside 1..=8", self.n));
        }
        if self.p <= self.n as u64 {
            return Err(format!("p = {} must exceed n = {}", self.p, self.n));
        }
        if self.prec < 2 * self.depth_cap as i64 + 4 {
            return Err(format!("prec = {} is below 2·depth_cap + 4 = {}", self.prec, 2 * self.depth_cap + 4));
        }
        if self.jobs == Some(0) {
            return Err("jobs must be positive".into());
        }
        Ok(())
    }

    pub fn q(&self) -> u64 {
        self.p.pow(self.k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_are_overridden_by_flags() {
        let file = Overrides::from_text("p = 5\nn=3 # cubic\n\ndepth-cap=2\n").unwrap();
        let flags = Overrides { n: Some(2), ..Default::default() };
        let cfg = flags.over(file).resolve().unwrap();
        assert_eq!((cfg.p, cfg.n, cfg.depth_cap, cfg.prec), (5, 2, 2, 8));
    }

    #[test]
    fn invariants_are_enforced() {
        let bad = |s: &str| Overrides::from_text(s).and_then(|o| o.resolve()).is_err();
        assert!(bad("p=4"));
        assert!(bad("p=3\nn=3"));
        assert!(bad("p=11\nn=9"));
        assert!(bad("depth_cap=5\nprec=10"));
        assert!(bad("colour=red"));
        assert!(bad("p"));
        assert!(!bad("p=7\nn=4\nsign_convention=raw\nformat=csv"));
    }
}
