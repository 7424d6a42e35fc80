mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::{Count, List, Real};

/// Exit-code classes.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or inputs: 64.
    Usage(String),
    /// A check or a row failed: 1.
    Check(String),
    /// An estimator could not produce a value: 2.
    Degenerate(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 64,
            Failure::Check(_) => 1,
            Failure::Degenerate(_) => 2,
        }
    }
}

impl From<qex::Error> for Failure {
    fn from(e: qex::Error) -> Self {
        use qex::Error as E;
        match e {
            E::Degenerate(_) | E::Sampling(_) | E::NonTermination { .. } => Failure::Degenerate(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Check(m) => write!(f, "check failed: {m}"),
            Failure::Degenerate(m) => write!(f, "degenerate estimate: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "qex", version, about = "Quasi-extremal pairs for the spherical averaging operator")]
pub struct Cli {
    /// TOML run file: top-level `seed`, `workers`, `out`; one section per command; `[constants]`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Flat TOML table overriding the shipped constants.
    #[arg(long, global = true)]
    pub constants: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Base seed (default: config `seed`, then QEX_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for CSV and manifest files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Quasi-extremality report of one pair.
    Ratio(RatioArgs),
    /// Reports over a family of radii.
    Sweep(SweepArgs),
    /// Degeneracy probe for r = (rho^a, rho^b) in d = 3.
    Probe(ProbeArgs),
    /// Re-measure the pinned constants and compare.
    Verify(VerifyArgs),
    /// Cap decomposition, coverage and pigeonhole over pieces.
    Decompose(DecomposeArgs),
    /// Refinement tower and its inflation, containment and slicing checks.
    Tower(TowerArgs),
}

#[derive(Args, Debug)]
pub struct RatioArgs {
    #[arg(long)]
    pub d: Option<usize>,
    /// Radii r_1..r_{d-1}, comma separated.
    #[arg(long)]
    pub r: Option<List>,
    #[arg(long)]
    pub rho: Option<Real>,
    #[arg(long)]
    pub n: Option<Count>,
    /// `identity` or `random`.
    #[arg(long)]
    pub frame: Option<String>,
    /// `sphere` or `parab`.
    #[arg(long)]
    pub surface: Option<String>,
    /// Accept radii violating the admissibility conditions.
    #[arg(long)]
    pub relaxed: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub d: Option<usize>,
    /// `ball`, `knapp`, `grid` or `power`.
    #[arg(long)]
    pub family: Option<String>,
    /// Exponents a_i of the power family r_i = rho^{a_i}.
    #[arg(long)]
    pub a: Option<List>,
    #[arg(long)]
    pub rho_list: Option<List>,
    /// Dyadic levels of the grid family.
    #[arg(long)]
    pub levels: Option<u32>,
    #[arg(long)]
    pub n: Option<Count>,
    #[arg(long)]
    pub surface: Option<String>,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub a: Option<Real>,
    #[arg(long)]
    pub b: Option<Real>,
    #[arg(long)]
    pub rho_list: Option<List>,
    #[arg(long)]
    pub n: Option<Count>,
    #[arg(long)]
    pub surface: Option<String>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// `fast` or `full`.
    #[arg(long)]
    pub suite: Option<String>,
    /// Write the re-measured table to `<out>/constants.toml`.
    #[arg(long)]
    pub repin: bool,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub r: Option<List>,
    #[arg(long)]
    pub rho: Option<Real>,
    #[arg(long)]
    pub lambda: Option<Real>,
    /// Piece enlargement (default: pinned `c_piece`).
    #[arg(long)]
    pub c: Option<Real>,
    #[arg(long)]
    pub n: Option<Count>,
}

#[derive(Args, Debug)]
pub struct TowerArgs {
    #[arg(long)]
    pub d: Option<usize>,
    /// `ball`, `knapp`, or explicit radii via --r.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub r: Option<List>,
    #[arg(long)]
    pub rho: Option<Real>,
    #[arg(long)]
    pub n: Option<Count>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qex: {f}");
            ExitCode::from(f.code())
        }
    }
}
