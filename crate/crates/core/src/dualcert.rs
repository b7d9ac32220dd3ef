//! Reconstruction of the dual value polynomial from equality multipliers.
//!
//! Each adjoint equality of the relaxation is indexed by a test monomial
//! `t^p x^alpha`; the dual multipliers are therefore the coefficients of a
//! polynomial `Lambda(t, x)` whose value at `(0, x0)` is the dual objective,
//! a smooth lower approximation of the value function. This module rebuilds
//! `Lambda` in original (unscaled) units, compares it against exact oracles
//! on grids, and samples the dual feasibility residuals `h + A Lambda` on
//! the constraint set and `H - Lambda(T, .)` on the target.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::polyalg::{apply_generator, MultiIndex, PolyError, Polynomial, VariableBlock};
use crate::problem::{OcpProblem, ScalingRecord, SemialgebraicSet, TargetSet};
use crate::relaxation::RelaxationSdp;
use crate::sdpbackend::{SolveOutcome, SolveStatus};

#[derive(Debug, Error)]
pub enum CertError {
    #[error("solve outcome carries no equality multipliers")]
    MissingDuals,
    #[error("solve outcome has status {0:?}, need a lower bound")]
    NotLowerBound(SolveStatus),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Dual value polynomial of a solved relaxation, in original units.
#[derive(Debug, Clone)]
pub struct ValueCertificate {
    pub r: u32,
    /// Polynomial in `(t, x)`, or in `x` alone for time-homogeneous
    /// problems.
    pub lambda: Polynomial,
    pub scaling: ScalingRecord,
    /// The dual objective `Lambda(0, x0)`.
    pub dual_value: f64,
}

impl ValueCertificate {
    /// Evaluate `Lambda` at initial time for a state in original units.
    pub fn eval_initial(&self, x: &[f64]) -> f64 {
        self.eval_at(0.0, x)
    }

    /// Evaluate `Lambda` at terminal time for a state in original units.
    pub fn eval_terminal(&self, x: &[f64]) -> f64 {
        self.eval_at(self.scaling.t_ref, x)
    }

    fn eval_at(&self, t: f64, x: &[f64]) -> f64 {
        if self.lambda.block.has_time {
            let mut point = Vec::with_capacity(1 + x.len());
            point.push(t);
            point.extend_from_slice(x);
            self.lambda.eval(&point)
        } else {
            self.lambda.eval(x)
        }
    }
}

/// Rebuild the dual polynomial of a solved relaxation.
///
/// The multiplier of the equality indexed by `t^p x^alpha` becomes the
/// coefficient of that monomial. The overall sign is not assumed from any
/// solver convention: it is fixed by matching the dual inner product
/// `sum(lambda_i * rhs_i)` against the primal bound. A constant shift then
/// anchors `Lambda(0, x0)` at the dual objective, which for an eliminated
/// point target makes `Lambda` vanish at the target as the value function
/// does. Finally the polynomial is composed with the inverse scaling maps so
/// it evaluates in original units.
pub fn extract_value_polynomial(
    outcome: &SolveOutcome,
    sdp: &RelaxationSdp,
    scaling: &ScalingRecord,
) -> Result<ValueCertificate, CertError> {
    if outcome.status != SolveStatus::LowerBound {
        return Err(CertError::NotLowerBound(outcome.status));
    }
    let duals = outcome
        .equality_duals
        .as_ref()
        .ok_or(CertError::MissingDuals)?;
    let bound = outcome.bound.ok_or(CertError::MissingDuals)?;

    let n = sdp.x0.len();
    let block = if sdp.test_monomials.iter().all(|(p, _)| *p == 0)
        && !matches!(sdp.time, crate::problem::TimeMode::FreeHorizon(_))
    {
        VariableBlock::state(n)
    } else {
        VariableBlock::time_state(n)
    };

    let mut raw = Polynomial::zero(block.clone());
    for ((p, alpha), &lam) in sdp.test_monomials.iter().zip(duals) {
        let mono = if block.has_time {
            let mut e = Vec::with_capacity(1 + n);
            e.push(*p);
            e.extend_from_slice(&alpha.0);
            MultiIndex(e)
        } else {
            alpha.clone()
        };
        raw = raw.add(&Polynomial::monomial(block.clone(), mono, lam));
    }

    let inner: f64 = duals.iter().zip(&sdp.rhs).map(|(l, r)| l * r).sum();
    let target = bound - sdp.objective_constant;
    let sign = if (inner - target).abs() <= (-inner - target).abs() {
        1.0
    } else {
        -1.0
    };
    let dual_value = sign * inner + sdp.objective_constant;

    let mut point0 = vec![0.0; block.num_vars()];
    let x_start = if block.has_time { 1 } else { 0 };
    point0[x_start..].copy_from_slice(&sdp.x0);
    let shift = dual_value - sign * raw.eval(&point0);
    let lambda_canonical = raw
        .scale(sign)
        .add(&Polynomial::constant(block.clone(), shift));

    // Compose with t -> t / t_ref, x_i -> (x_i - c_i) / w_i.
    let mut maps = Vec::with_capacity(block.num_vars());
    if block.has_time {
        maps.push((1.0 / scaling.t_ref, 0.0));
    }
    for i in 0..n {
        let w = scaling.state_half_width[i];
        let c = scaling.state_center[i];
        maps.push((1.0 / w, -c / w));
    }
    let lambda = lambda_canonical.affine_substitute(&maps);

    Ok(ValueCertificate {
        r: sdp.r,
        lambda,
        scaling: scaling.clone(),
        dual_value: scaling.objective_rescale * dual_value,
    })
}

/// One comparison row of [`value_gap_grid`].
#[derive(Debug, Clone)]
pub struct GapRow {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub oracle: f64,
    /// `lambda - oracle`; nonpositive up to solver tolerance when the dual
    /// polynomial is a genuine subsolution.
    pub gap: f64,
}

/// Evaluate the dual polynomial against an exact value oracle over a grid of
/// initial states. Points where the oracle is undefined are skipped.
pub fn value_gap_grid(
    cert: &ValueCertificate,
    oracle: &dyn Fn(&[f64]) -> Option<f64>,
    grid: &[Vec<f64>],
) -> Vec<GapRow> {
    grid.iter()
        .filter_map(|x| {
            let t = oracle(x)?;
            let l = cert.eval_initial(x);
            Some(GapRow { x: x.clone(), lambda: l, oracle: t, gap: l - t })
        })
        .collect()
}

/// Sampled dual feasibility residuals.
#[derive(Debug, Clone)]
pub struct PutinarReport {
    /// `min (h + A Lambda)` over samples of the time/state/control set.
    pub min_flow_residual: f64,
    /// `min (H - Lambda(T, .))` over samples of the target set.
    pub min_terminal_residual: f64,
    pub flow_samples: usize,
    pub terminal_samples: usize,
}

/// Sample the two dual feasibility inequalities on the original problem.
///
/// Points are drawn uniformly from the bounding boxes and rejected unless
/// they satisfy every set inequality, so only admissible samples contribute.
/// Both residuals are nonnegative up to solver tolerance for a feasible
/// dual; no sum-of-squares multipliers are reconstructed.
pub fn putinar_residual_check(
    cert: &ValueCertificate,
    problem: &OcpProblem,
    samples: usize,
    seed: u64,
) -> Result<PutinarReport, CertError> {
    let flow = problem.h.add(&apply_generator(&cert.lambda, &problem.f)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let x_ineqs = restricted(&problem.x_set, &VariableBlock::state(problem.n))?;
    let u_ineqs = restricted(&problem.u_set, &VariableBlock::control_only(problem.m))?;

    let mut point = vec![0.0; problem.block.num_vars()];
    let mut min_flow = f64::INFINITY;
    let mut flow_samples = 0;
    let mut attempts = 0usize;
    while flow_samples < samples && attempts < 100 * samples {
        attempts += 1;
        let x = sample_in_set(&mut rng, &problem.x_set.bounding_box, &x_ineqs);
        let u = sample_in_set(&mut rng, &problem.u_set.bounding_box, &u_ineqs);
        let (Some(x), Some(u)) = (x, u) else { continue };
        point[0] = rng.gen_range(0.0..=cert.scaling.t_ref);
        point[1..1 + problem.n].copy_from_slice(&x);
        point[1 + problem.n..].copy_from_slice(&u);
        min_flow = min_flow.min(flow.eval(&point));
        flow_samples += 1;
    }

    let mut terminal_residual = |x: &[f64]| {
        point[0] = cert.scaling.t_ref;
        point[1..1 + problem.n].copy_from_slice(x);
        for v in &mut point[1 + problem.n..] {
            *v = 0.0;
        }
        problem.big_h.eval(&point) - cert.eval_terminal(x)
    };
    let mut min_terminal = f64::INFINITY;
    let mut terminal_samples = 0;
    match &problem.k_set {
        TargetSet::Point(p) => {
            min_terminal = terminal_residual(p);
            terminal_samples = 1;
        }
        TargetSet::Set(k) => {
            let k_ineqs = restricted(k, &VariableBlock::state(problem.n))?;
            let mut attempts = 0usize;
            while terminal_samples < samples && attempts < 100 * samples {
                attempts += 1;
                if let Some(x) = sample_in_set(&mut rng, &k.bounding_box, &k_ineqs) {
                    min_terminal = min_terminal.min(terminal_residual(&x));
                    terminal_samples += 1;
                }
            }
        }
    }

    Ok(PutinarReport {
        min_flow_residual: min_flow,
        min_terminal_residual: min_terminal,
        flow_samples,
        terminal_samples,
    })
}

/// Set inequalities rewritten over the block the samples live in.
fn restricted(
    set: &SemialgebraicSet,
    block: &std::sync::Arc<VariableBlock>,
) -> Result<Vec<Polynomial>, CertError> {
    set.inequalities
        .iter()
        .map(|g| g.restrict(block).map_err(CertError::from))
        .collect()
}

/// One rejection-sampling draw from a box; `None` when the draw violates an
/// inequality of the set.
fn sample_in_set(
    rng: &mut ChaCha8Rng,
    bounding_box: &[(f64, f64)],
    inequalities: &[Polynomial],
) -> Option<Vec<f64>> {
    let x: Vec<f64> = bounding_box
        .iter()
        .map(|&(lo, hi)| if lo < hi { rng.gen_range(lo..=hi) } else { lo })
        .collect();
    inequalities.iter().all(|g| g.eval(&x) >= 0.0).then_some(x)
}
