//! `eot`: solve entropic OT instances through the semi-dual, run the
//! reference solver, the property suite and the bridge and flow demos.
//!
//! Exit codes: 0 on success, 2 when a run finished without meeting its
//! target (no convergence, failed property), 1 on input or runtime errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "eot", version, about = "Semi-dual solvers for entropic optimal transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one of the iterative methods on an instance.
    Solve(SolveArgs),
    /// Solve to high accuracy with the reference solver.
    Oracle(OracleArgs),
    /// Run the seeded property suite.
    Verify(VerifyArgs),
    /// Simulate the 1-D bridge driven by a potential.
    Bridge(BridgeArgs),
    /// Integrate the accelerated mirror flow.
    Flow(FlowArgs),
    /// Check an instance file and print its shape and digest.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum MethodName {
    Sinkhorn,
    EtaSinkhorn,
    Sga,
    Ksga,
    Chi2,
    SignSga,
    ProjSga,
    ProjSgaPp,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodName,
    /// `auto` or a positive number.
    #[arg(long, default_value = "auto")]
    pub eta: String,
    /// `identity`, `gaussian:<sigma>` or `laplace:<scale>`. Defaults to a
    /// gaussian at the median pairwise distance for `ksga`; for other methods
    /// it only adds the `mmd_sq` trace column.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Box radius for the projected methods: `auto` or a number.
    #[arg(long = "B", default_value = "auto")]
    pub bound: String,
    /// Pinned atom for sign ascent: `auto` or an index.
    #[arg(long, default_value = "auto")]
    pub anchor: String,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Stop once the L1 marginal residual is at most this.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Accepted for uniformity; solving is deterministic.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
    /// Check the method's convergence-rate bound against a reference solve.
    #[arg(long)]
    pub bounds: bool,
    /// Add wall-clock columns and fields (outputs are then not reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value_t = eot_core::solvers::DEFAULT_ORACLE_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
    /// Where to write the potential.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Run only these properties (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// List property names and exit.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PotentialChoice {
    /// `φ = 0` on the atoms of ν.
    Zero,
    /// The reference solution.
    Oracle,
    /// `g_T ≡ 1` on the whole grid: the unconditioned reference process.
    Constant,
}

#[derive(Debug, Args)]
pub struct BridgeArgs {
    /// 1-D instance on equally spaced nodes with cost `half_sqeuclidean`.
    /// Without it, a two-bump demo on [-1, 1] with 64 nodes is used.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "oracle")]
    pub potential: PotentialChoice,
    /// Time nodes on [0, T].
    #[arg(long, default_value_t = 401)]
    pub n_t: usize,
    #[arg(long, default_value_t = 100_000)]
    pub particles: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Drift field CSV.
    #[arg(long)]
    pub drift: Option<PathBuf>,
    /// Terminal histogram against the static marginal, CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub r: f64,
    #[arg(long, default_value_t = 0.01)]
    pub t0: f64,
    #[arg(long, default_value_t = 50.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 100)]
    pub record_every: usize,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub instance: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Bridge(a) => commands::bridge(&a),
        Command::Flow(a) => commands::flow(&a),
        Command::Validate(a) => commands::validate(&a),
    };
    match result {
        Ok(code) => code.into(),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
