use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ocp_relax::problem::degree_profile;
use ocp_relax::sdpbackend::SolverSettings;
use ocp_relax_cli::commands::{
    cmd_export_sdp, cmd_solve, cmd_sweep, cmd_value, OracleKind,
};
use ocp_relax_cli::grid::GridSpec;
use ocp_relax_cli::problem_file::{load, FileOptions, LoadedProblem};

#[derive(Parser)]
#[command(
    name = "ocprelax",
    about = "Lower bounds and infeasibility certificates for polynomial optimal control via moment relaxations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    DoubleIntegrator,
    Brockett,
}

impl From<OracleArg> for OracleKind {
    fn from(value: OracleArg) -> Self {
        match value {
            OracleArg::DoubleIntegrator => OracleKind::DoubleIntegrator,
            OracleArg::Brockett => OracleKind::Brockett,
        }
    }
}

#[derive(clap::Args)]
struct CommonFlags {
    /// TOML problem file.
    problem: PathBuf,
    /// Duality-gap and feasibility tolerance for the interior-point solver.
    #[arg(long)]
    tol: Option<f64>,
    /// Relative threshold below which an infeasibility certificate is
    /// accepted.
    #[arg(long)]
    certificate_threshold: Option<f64>,
    /// Append a redundant ball constraint to the state set, certifying the
    /// compactness condition the convergence theory assumes.
    #[arg(long)]
    ball_constraint: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the hierarchy of relaxations over a range of orders.
    Solve {
        #[command(flatten)]
        common: CommonFlags,
        /// First relaxation order (default: the problem's minimal order).
        #[arg(long)]
        r_min: Option<u32>,
        /// Last relaxation order (default: r_min + 2).
        #[arg(long)]
        r_max: Option<u32>,
        /// Write the per-order table as CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Solve one relaxation order over a grid of initial states.
    Sweep {
        #[command(flatten)]
        common: CommonFlags,
        /// Relaxation order.
        #[arg(long)]
        r: u32,
        /// Grid as comma-separated lo:hi:count axes, one per state.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Concurrent solves.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Annotate rows with a built-in closed-form time oracle.
        #[arg(long, value_enum)]
        oracle: Option<OracleArg>,
        /// Write the grid table as CSV to this path (default: stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Reconstruct the dual value polynomial and tabulate it over a grid.
    Value {
        #[command(flatten)]
        common: CommonFlags,
        /// Relaxation order.
        #[arg(long)]
        r: u32,
        /// Grid as comma-separated lo:hi:count axes, one per state.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Annotate rows with a built-in closed-form time oracle.
        #[arg(long, value_enum)]
        oracle: Option<OracleArg>,
        /// Write the table as CSV to this path (default: stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the assembled relaxation in SDPA sparse format.
    ExportSdp {
        #[command(flatten)]
        common: CommonFlags,
        /// Relaxation order.
        #[arg(long)]
        r: u32,
        /// Output path (conventionally .dat-s).
        #[arg(long, short)]
        output: PathBuf,
    },
}

fn settings_from(options: &FileOptions, common: &CommonFlags) -> SolverSettings {
    let mut settings = SolverSettings::default();
    if let Some(tol) = common.tol.or(options.tol) {
        settings.tol_gap = tol;
        settings.tol_feas = tol;
    }
    if let Some(threshold) = common.certificate_threshold.or(options.certificate_threshold) {
        settings.certificate_threshold = threshold;
    }
    settings
}

fn load_with_flags(common: &CommonFlags) -> Result<LoadedProblem, String> {
    let mut loaded = load(&common.problem).map_err(|e| e.to_string())?;
    if common.ball_constraint {
        loaded.problem.add_ball_constraint = true;
    }
    Ok(loaded)
}

fn run() -> Result<i32, String> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Solve { common, r_min, r_max, csv } => {
            let loaded = load_with_flags(common)?;
            let settings = settings_from(&loaded.options, common);
            let r0 = degree_profile(&loaded.problem).r0;
            let r_min = r_min.or(loaded.options.r_min).unwrap_or(r0);
            let r_max = r_max.or(loaded.options.r_max).unwrap_or(r_min + 2);
            cmd_solve(&loaded.problem, r_min, r_max, &settings, csv.as_deref())
                .map_err(|e| e.to_string())
        }
        Command::Sweep { common, r, grid, workers, oracle, csv } => {
            let loaded = load_with_flags(common)?;
            let settings = settings_from(&loaded.options, common);
            let grid = GridSpec::parse(grid).map_err(|e| e.to_string())?;
            cmd_sweep(
                &loaded.problem,
                *r,
                &grid,
                *workers,
                oracle.map(OracleKind::from),
                &settings,
                csv.as_deref(),
            )
            .map_err(|e| e.to_string())
        }
        Command::Value { common, r, grid, oracle, csv } => {
            let loaded = load_with_flags(common)?;
            let settings = settings_from(&loaded.options, common);
            let grid = GridSpec::parse(grid).map_err(|e| e.to_string())?;
            cmd_value(
                &loaded.problem,
                *r,
                &grid,
                oracle.map(OracleKind::from),
                &settings,
                csv.as_deref(),
            )
            .map_err(|e| e.to_string())
        }
        Command::ExportSdp { common, r, output } => {
            let loaded = load_with_flags(common)?;
            cmd_export_sdp(&loaded.problem, *r, output).map_err(|e| e.to_string())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
