//! The four subcommands: hierarchy solves, grid sweeps, dual value tables,
//! and SDP export.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use ocp_relax::dualcert::{extract_value_polynomial, CertError, ValueCertificate};
use ocp_relax::export::write_sdpa_sparse;
use ocp_relax::oracles::{brockett_time, double_integrator_time};
use ocp_relax::problem::{canonicalize, degree_profile, OcpProblem, ProblemError};
use ocp_relax::relaxation::{build, describe, RelaxError};
use ocp_relax::sdpbackend::{solve, solve_with_rhs, SolveError, SolveStatus, SolverSettings};

use crate::grid::GridSpec;

/// Exit codes: 0 when at least one order yields a lower bound, 2 when the
/// relaxations certify infeasibility, 3 when nothing conclusive was solved.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Debug, Error)]
pub enum CmdError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Closed-form minimum-time oracles that can annotate sweep and value
/// tables for the built-in benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    DoubleIntegrator,
    Brockett,
}

impl OracleKind {
    pub fn value(self, x: &[f64]) -> Option<f64> {
        match self {
            OracleKind::DoubleIntegrator => double_integrator_time([x[0], x[1]]).ok(),
            OracleKind::Brockett => Some(brockett_time([x[0], x[1], x[2]])),
        }
    }
}

fn status_word(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::LowerBound => "LOWER_BOUND",
        SolveStatus::InfeasibleCertificate => "INFEASIBLE",
        SolveStatus::Unbounded => "UNBOUNDED",
        SolveStatus::Inaccurate => "INACCURATE",
    }
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), CmdError> {
    match path {
        Some(path) => std::fs::write(path, content).map_err(|source| CmdError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn exit_code(statuses: &[SolveStatus]) -> i32 {
    if statuses.contains(&SolveStatus::LowerBound) {
        EXIT_OK
    } else if statuses.contains(&SolveStatus::InfeasibleCertificate) {
        EXIT_INFEASIBLE
    } else {
        EXIT_INCONCLUSIVE
    }
}

/// Run the hierarchy over `r_min..=r_max`, print a per-order table, and
/// optionally write it as CSV (without timings, which are not
/// deterministic).
pub fn cmd_solve(
    problem: &OcpProblem,
    r_min: u32,
    r_max: u32,
    settings: &SolverSettings,
    csv: Option<&Path>,
) -> Result<i32, CmdError> {
    if r_min > r_max {
        return Err(CmdError::Invalid(format!("r_min {r_min} > r_max {r_max}")));
    }
    let (canon, _) = canonicalize(problem)?;
    let mut csv_text = String::from("r,status,bound,iterations,decision_length,equalities,max_block_side\n");
    let mut statuses = Vec::new();
    println!("{:>3}  {:<12} {:>18}  {:>5}  {:>8}  {:>10}  {:>9}", "r", "status", "bound", "iters", "seconds", "moments", "max block");
    for r in r_min..=r_max {
        let sdp = build(&canon, r)?;
        let report = describe(&sdp);
        let max_side = report.blocks.iter().map(|&(_, s)| s).max().unwrap_or(0);
        let outcome = solve(&sdp, settings)?;
        let bound_text = outcome.bound.map(|b| b.to_string()).unwrap_or_default();
        println!(
            "{:>3}  {:<12} {:>18}  {:>5}  {:>8.3}  {:>10}  {:>9}",
            r,
            status_word(outcome.status),
            bound_text,
            outcome.iterations,
            outcome.solve_seconds,
            report.decision_len,
            max_side
        );
        let _ = writeln!(
            csv_text,
            "{r},{},{bound_text},{},{},{},{max_side}",
            status_word(outcome.status),
            outcome.iterations,
            report.decision_len,
            report.equality_count
        );
        statuses.push(outcome.status);
        if outcome.status == SolveStatus::InfeasibleCertificate {
            break;
        }
    }
    if let Some(path) = csv {
        write_output(Some(path), &csv_text)?;
    }
    Ok(exit_code(&statuses))
}

/// Solve the order-`r` relaxation once per grid point by swapping the
/// initial state into the equality right-hand sides, in parallel, emitting
/// rows in grid order.
pub fn cmd_sweep(
    problem: &OcpProblem,
    r: u32,
    grid: &GridSpec,
    workers: usize,
    oracle: Option<OracleKind>,
    settings: &SolverSettings,
    csv: Option<&Path>,
) -> Result<i32, CmdError> {
    if grid.dimension() != problem.n {
        return Err(CmdError::Invalid(format!(
            "grid has {} axes for {} states",
            grid.dimension(),
            problem.n
        )));
    }
    let points = grid.points();
    for point in &points {
        if !problem.x_set.contains_box(point) {
            return Err(CmdError::Invalid(format!(
                "grid point {point:?} lies outside the state bounding box"
            )));
        }
    }
    let (canon, record) = canonicalize(problem)?;
    let sdp = build(&canon, r)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CmdError::Invalid(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<(SolveStatus, Option<f64>), String>> = pool.install(|| {
        use rayon::prelude::*;
        points
            .par_iter()
            .map(|point| {
                let rhs = sdp.rhs_for(&record.state_to_canonical(point));
                solve_with_rhs(&sdp, &rhs, settings)
                    .map(|o| (o.status, o.bound))
                    .map_err(|e| e.to_string())
            })
            .collect()
    });

    let coord_header = (1..=problem.n)
        .map(|i| problem.block.names[problem.block.state_index(i - 1)].clone())
        .collect::<Vec<_>>()
        .join(",");
    let mut text = match oracle {
        Some(_) => format!("{coord_header},bound,oracle,ratio\n"),
        None => format!("{coord_header},bound\n"),
    };
    let mut statuses = Vec::new();
    for (point, result) in points.iter().zip(&results) {
        let coords = point
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let bound_cell = match result {
            Ok((SolveStatus::LowerBound, Some(b))) => b.to_string(),
            Ok((status, _)) => status_word(*status).to_string(),
            Err(message) => format!("ERROR: {message}"),
        };
        if let Ok((status, _)) = result {
            statuses.push(*status);
        }
        match oracle {
            Some(kind) => {
                let oracle_value = kind.value(point);
                let oracle_cell = oracle_value.map(|t| t.to_string()).unwrap_or_default();
                let ratio_cell = match (result, oracle_value) {
                    (Ok((SolveStatus::LowerBound, Some(b))), Some(t)) if t > 0.0 => {
                        (b / t).to_string()
                    }
                    _ => String::new(),
                };
                let _ = writeln!(text, "{coords},{bound_cell},{oracle_cell},{ratio_cell}");
            }
            None => {
                let _ = writeln!(text, "{coords},{bound_cell}");
            }
        }
    }
    write_output(csv, &text)?;
    Ok(exit_code(&statuses))
}

/// Solve at order `r`, reconstruct the dual value polynomial, and tabulate
/// it (against the oracle when one is registered) over the grid.
pub fn cmd_value(
    problem: &OcpProblem,
    r: u32,
    grid: &GridSpec,
    oracle: Option<OracleKind>,
    settings: &SolverSettings,
    csv: Option<&Path>,
) -> Result<i32, CmdError> {
    let profile = degree_profile(problem);
    if r < profile.r0 {
        return Err(CmdError::Invalid(format!(
            "order {r} is below the minimal order r0 = {} for this problem",
            profile.r0
        )));
    }
    if grid.dimension() != problem.n {
        return Err(CmdError::Invalid(format!(
            "grid has {} axes for {} states",
            grid.dimension(),
            problem.n
        )));
    }
    let (canon, record) = canonicalize(problem)?;
    let sdp = build(&canon, r)?;
    let outcome = solve(&sdp, settings)?;
    if outcome.status != SolveStatus::LowerBound {
        eprintln!("order {r}: {}", status_word(outcome.status));
        return Ok(exit_code(&[outcome.status]));
    }
    let cert = extract_value_polynomial(&outcome, &sdp, &record)?;
    let text = value_table(problem, &cert, grid, oracle);
    write_output(csv, &text)?;
    Ok(EXIT_OK)
}

fn value_table(
    problem: &OcpProblem,
    cert: &ValueCertificate,
    grid: &GridSpec,
    oracle: Option<OracleKind>,
) -> String {
    let coord_header = (1..=problem.n)
        .map(|i| problem.block.names[problem.block.state_index(i - 1)].clone())
        .collect::<Vec<_>>()
        .join(",");
    let mut text = match oracle {
        Some(_) => format!("{coord_header},lambda,oracle,gap\n"),
        None => format!("{coord_header},lambda\n"),
    };
    for point in grid.points() {
        let coords = point
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let lambda = cert.eval_initial(&point);
        match oracle {
            Some(kind) => match kind.value(&point) {
                Some(t) => {
                    let _ = writeln!(text, "{coords},{lambda},{t},{}", lambda - t);
                }
                None => {
                    let _ = writeln!(text, "{coords},{lambda},,");
                }
            },
            None => {
                let _ = writeln!(text, "{coords},{lambda}");
            }
        }
    }
    text
}

/// Assemble the order-`r` relaxation and write it in SDPA sparse format.
pub fn cmd_export_sdp(problem: &OcpProblem, r: u32, output: &Path) -> Result<i32, CmdError> {
    let (canon, _) = canonicalize(problem)?;
    let sdp = build(&canon, r)?;
    let file = std::fs::File::create(output).map_err(|source| CmdError::Io {
        path: output.display().to_string(),
        source,
    })?;
    let mut writer = std::io::BufWriter::new(file);
    write_sdpa_sparse(&sdp, &mut writer).map_err(|source| CmdError::Io {
        path: output.display().to_string(),
        source,
    })?;
    Ok(EXIT_OK)
}
