//! `tortf`: depths, character values, transfer sums and verification suites.

mod commands;
mod config;
mod render;
mod verify;

use clap::{Args, Parser, Subcommand};
use commands::{CliError, Mode};
use config::{Format, Overrides, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;
use tortf::charform::SignConvention;

#[derive(Parser)]
#[command(name = "tortf", version, about = "Characters and transfer sums on unramified tori")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct GlobalArgs {
    /// Residue characteristic
    #[arg(long, global = true)]
    p: Option<u64>,
    /// Residue field is F_{p^k}
    #[arg(long, global = true)]
    k: Option<u32>,
    /// Rank of the group / degree of the torus splitting field
    #[arg(long, global = true)]
    n: Option<u32>,
    /// Working w-adic precision (default 2·depth-cap + 4)
    #[arg(long, global = true)]
    prec: Option<i64>,
    #[arg(long, global = true)]
    depth_cap: Option<u32>,
    /// json or csv
    #[arg(long, global = true)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// table or raw
    #[arg(long, global = true, value_parser = parse_sign)]
    sign_convention: Option<SignConvention>,
    /// Worker threads
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// key=value file; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

fn parse_sign(s: &str) -> Result<SignConvention, String> {
    s.parse().map_err(|e: tortf::Error| e.to_string())
}

#[derive(Subcommand)]
enum Cmd {
    /// Depth, Newton depth, goodness and discriminant of γ
    Depth {
        /// Element of E, e.g. "2+z*w+w^3"
        gamma: Option<String>,
        /// Matrix over F, rows split by ';' and entries by ','
        #[arg(long)]
        matrix: Option<String>,
    },
    /// Character value Θ_ψ(γ)
    Theta {
        /// Character label, e.g. "psi=[1,0,2]@r=2"
        psi: String,
        gamma: String,
    },
    /// Transfer sum L(γ, t)
    Transfer {
        gamma: String,
        t: String,
        /// brute, closed or both (default: both for prime n, else brute)
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Run a verification suite, or `all`
    Verify { suite: String },
}

impl GlobalArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let flags = Overrides {
            p: self.p,
            k: self.k,
            n: self.n,
            prec: self.prec,
            depth_cap: self.depth_cap,
            format: self.format,
            seed: self.seed,
            sign_convention: self.sign_convention,
            jobs: self.jobs,
        };
        let file = match &self.config {
            Some(path) => Overrides::from_file(path).map_err(CliError::Usage)?,
            None => Overrides::default(),
        };
        flags.over(file).resolve().map_err(CliError::Usage)
    }
}

fn suite_names(arg: &str) -> Result<Vec<&'static str>, CliError> {
    if arg == "all" {
        return Ok(verify::SUITES.to_vec());
    }
    verify::SUITES
        .iter()
        .find(|&&s| s == arg)
        .map(|&s| vec![s])
        .ok_or_else(|| CliError::Usage(format!("unknown suite `{arg}`; expected one of {} or all", verify::SUITES.join(", "))))
}

fn execute(cli: Cli) -> Result<(String, bool), CliError> {
    let cfg = cli.global.resolve()?;
    if let Some(j) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Run(e.to_string()))?;
    }
    match cli.cmd {
        Cmd::Depth { gamma, matrix } => Ok((commands::depth(&cfg, gamma.as_deref(), matrix.as_deref())?, true)),
        Cmd::Theta { psi, gamma } => Ok((commands::theta(&cfg, &psi, &gamma)?, true)),
        Cmd::Transfer { gamma, t, mode } => {
            let mode = mode.unwrap_or(if tortf::ffield::is_prime(cfg.n as u64) { Mode::Both } else { Mode::Brute });
            Ok((commands::transfer(&cfg, &gamma, &t, mode)?, true))
        }
        Cmd::Verify { suite } => {
            let names = suite_names(&suite)?;
            let suites = verify::run(&cfg, &names)?;
            let ok = suites.iter().all(|s| s.status != verify::Status::Fail);
            Ok((verify::render(&cfg, &suites), ok))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok((out, ok)) => {
            print!("{out}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("tortf: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
