//! Conic-solver boundary: translate an assembled relaxation into a
//! primal-dual interior-point solve and classify the outcome.
//!
//! The relaxation's decision vector becomes the conic variable, equalities
//! map to a zero cone, and every symbolic PSD block to a scaled-triangle PSD
//! cone. Solver statuses are folded into a small taxonomy where infeasibility
//! is only reported when the solver produces a genuine improving-ray
//! certificate; anything ambiguous degrades to `Inaccurate`, never to a
//! wrong uncontrollability claim.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use thiserror::Error;

use crate::problem::{canonicalize, OcpProblem, ProblemError, ScalingRecord};
use crate::relaxation::{build, RelaxError, RelaxationSdp};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("order {r}: {source}")]
    Relaxation { r: u32, source: RelaxError },
    #[error("solver setup failed: {0}")]
    Setup(String),
}

/// Outcome taxonomy of one relaxation solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// The relaxation solved to tolerance; its optimum is a valid lower
    /// bound on the control problem's value.
    LowerBound,
    /// The relaxation is provably infeasible: no admissible trajectory
    /// exists (uncontrollability certificate).
    InfeasibleCertificate,
    /// The relaxation is unbounded below.
    Unbounded,
    /// The solver stalled or hit limits; no claim can be made.
    Inaccurate,
}

/// Result of solving one relaxation order.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub r: u32,
    pub status: SolveStatus,
    /// Lower bound in original cost units (present on `LowerBound`).
    pub bound: Option<f64>,
    /// Full decision vector `[y | z]` (present on `LowerBound`).
    pub moments: Option<Vec<f64>>,
    /// Dual multipliers of the adjoint equalities, aligned with the
    /// relaxation's test monomials (present on `LowerBound`).
    pub equality_duals: Option<Vec<f64>>,
    pub iterations: u32,
    pub solve_seconds: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Controllability reading of an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    ProvablyUnreachable,
    BoundOnly,
    Unknown,
}

pub fn classify_certificate(outcome: &SolveOutcome) -> Verdict {
    match outcome.status {
        SolveStatus::InfeasibleCertificate => Verdict::ProvablyUnreachable,
        SolveStatus::LowerBound => Verdict::BoundOnly,
        SolveStatus::Unbounded | SolveStatus::Inaccurate => Verdict::Unknown,
    }
}

/// Interior-point settings surfaced to callers.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Absolute and relative duality-gap tolerance.
    pub tol_gap: f64,
    /// Primal/dual feasibility tolerance.
    pub tol_feas: f64,
    /// Relative infeasibility-certificate tolerance; certificates weaker
    /// than this degrade to `Inaccurate`.
    pub certificate_threshold: f64,
    pub max_iter: u32,
    pub verbose: bool,
    /// KKT factorization backend: "qdldl" (serial) or "faer"
    /// (multithreaded; markedly faster on large moment-matrix cones).
    pub direct_solve_method: String,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol_gap: 1e-8,
            tol_feas: 1e-8,
            certificate_threshold: 1e-6,
            max_iter: 500,
            verbose: false,
            direct_solve_method: "faer".to_string(),
        }
    }
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Solve the relaxation with its built-in right-hand sides.
pub fn solve(sdp: &RelaxationSdp, settings: &SolverSettings) -> Result<SolveOutcome, SolveError> {
    solve_with_rhs(sdp, &sdp.rhs, settings)
}

/// Solve with substituted equality right-hand sides (grid sweeps reuse the
/// assembled structure across initial states).
pub fn solve_with_rhs(
    sdp: &RelaxationSdp,
    rhs: &[f64],
    settings: &SolverSettings,
) -> Result<SolveOutcome, SolveError> {
    let num_vars = sdp.decision_len;
    let neq = sdp.equalities.len();

    let mut cones: Vec<SupportedConeT<f64>> = vec![SupportedConeT::ZeroConeT(neq)];
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut b: Vec<f64> = Vec::with_capacity(neq);

    for (row, (form, &r)) in sdp.equalities.iter().zip(rhs).enumerate() {
        for &(pos, c) in &form.terms {
            triplets.push((row, pos, c));
        }
        b.push(r - form.constant);
    }

    let mut row_base = neq;
    for block in &sdp.psd_blocks {
        let side = block.matrix.side;
        cones.push(SupportedConeT::PSDTriangleConeT(side));
        // svec order: columns outer, rows inner over the upper triangle,
        // off-diagonal entries scaled by sqrt(2).
        let mut offset = 0;
        for col in 0..side {
            for row in 0..=col {
                let scale = if row == col { 1.0 } else { SQRT2 };
                let form = block.matrix.entry(row, col);
                for &(pos, c) in &form.terms {
                    triplets.push((row_base + offset, pos, -scale * c));
                }
                b.push(scale * form.constant);
                offset += 1;
            }
        }
        row_base += offset;
    }

    let a = csc_from_triplets(row_base, num_vars, &mut triplets);
    let p = CscMatrix::zeros((num_vars, num_vars));
    let mut q = vec![0.0; num_vars];
    for &(pos, c) in &sdp.objective.terms {
        q[pos] += c;
    }

    let clarabel_settings = DefaultSettings {
        verbose: settings.verbose,
        max_iter: settings.max_iter,
        tol_gap_abs: settings.tol_gap,
        tol_gap_rel: settings.tol_gap,
        tol_feas: settings.tol_feas,
        tol_infeas_abs: settings.certificate_threshold.min(1e-8),
        tol_infeas_rel: settings.certificate_threshold.min(1e-8),
        direct_solve_method: settings.direct_solve_method.clone(),
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, clarabel_settings)
        .map_err(|e| SolveError::Setup(format!("{e:?}")))?;
    solver.solve();
    let solution = &solver.solution;

    let constant = sdp.objective.constant + sdp.objective_constant;
    let status = match solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::LowerBound,
        SolverStatus::PrimalInfeasible => SolveStatus::InfeasibleCertificate,
        SolverStatus::DualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::Inaccurate,
    };
    let solved = status == SolveStatus::LowerBound;
    Ok(SolveOutcome {
        r: sdp.r,
        status,
        bound: solved.then(|| solution.obj_val + constant),
        moments: solved.then(|| solution.x.clone()),
        equality_duals: solved.then(|| solution.z[..neq].to_vec()),
        iterations: solution.iterations,
        solve_seconds: solution.solve_time,
        primal_residual: solution.r_prim,
        dual_residual: solution.r_dual,
    })
}

fn csc_from_triplets(
    rows: usize,
    cols: usize,
    triplets: &mut Vec<(usize, usize, f64)>,
) -> CscMatrix<f64> {
    triplets.sort_unstable_by_key(|&(r, c, _)| (c, r));
    let mut colptr = vec![0usize; cols + 1];
    let mut rowval = Vec::with_capacity(triplets.len());
    let mut nzval = Vec::with_capacity(triplets.len());
    for &(r, c, v) in triplets.iter() {
        colptr[c + 1] += 1;
        rowval.push(r);
        nzval.push(v);
    }
    for c in 0..cols {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(rows, cols, colptr, rowval, nzval)
}

/// Canonicalize once and solve orders `r_min..=r_max`, stopping early after
/// an infeasibility certificate (all higher orders are then infeasible too).
pub fn run_hierarchy(
    problem: &OcpProblem,
    r_min: u32,
    r_max: u32,
    settings: &SolverSettings,
) -> Result<(Vec<SolveOutcome>, ScalingRecord), SolveError> {
    let (canonical, record) = canonicalize(problem)?;
    let mut outcomes = Vec::new();
    for r in r_min..=r_max {
        let sdp = build(&canonical, r).map_err(|source| SolveError::Relaxation { r, source })?;
        let outcome = solve(&sdp, settings)?;
        let stop = outcome.status == SolveStatus::InfeasibleCertificate;
        outcomes.push(outcome);
        if stop {
            break;
        }
    }
    Ok((outcomes, record))
}
