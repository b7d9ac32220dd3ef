//! Optimal control problem description and canonicalization.
//!
//! An [`OcpProblem`] carries polynomial dynamics `f`, running cost `h`,
//! terminal cost `H`, semialgebraic sets `X`, `K`, `U`, an initial state, and
//! a time mode. [`canonicalize`] maps everything onto the normalized domain
//! used by the relaxation: time in `[0, 1]`, states and controls in
//! `[-1, 1]`, recording the affine maps so bounds and value polynomials can
//! be reported in original units.

use std::sync::Arc;

use thiserror::Error;

use crate::polyalg::{Polynomial, VariableBlock};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("bounding box coordinate {index} has zero or negative width [{lo}, {hi}]")]
    DegenerateBox { index: usize, lo: f64, hi: f64 },
    #[error("initial state coordinate {index} = {value} lies outside the X box [{lo}, {hi}]")]
    X0OutsideBox { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("target point coordinate {index} = {value} lies outside the X box [{lo}, {hi}]")]
    TargetOutsideBox { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("time-homogeneous mode requires t-independent {0}")]
    TimeDependent(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Set `{v : g_j(v) >= 0 for all j}` with an explicit bounding box.
#[derive(Debug, Clone)]
pub struct SemialgebraicSet {
    pub dimension: usize,
    pub inequalities: Vec<Polynomial>,
    pub bounding_box: Vec<(f64, f64)>,
}

impl SemialgebraicSet {
    pub fn new(
        dimension: usize,
        inequalities: Vec<Polynomial>,
        bounding_box: Vec<(f64, f64)>,
    ) -> Self {
        debug_assert_eq!(bounding_box.len(), dimension);
        SemialgebraicSet { dimension, inequalities, bounding_box }
    }

    pub fn contains_box(&self, point: &[f64]) -> bool {
        point
            .iter()
            .zip(&self.bounding_box)
            .all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        self.contains_box(point) && self.inequalities.iter().all(|g| g.eval(point) >= 0.0)
    }
}

/// Target set: general semialgebraic or an exact point (eliminates the
/// terminal moment block in the relaxation).
#[derive(Debug, Clone)]
pub enum TargetSet {
    Set(SemialgebraicSet),
    Point(Vec<f64>),
}

/// Horizon handling: fixed `T`, free `T <= T0`, or free with t-independent
/// data so test functions need no time variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeMode {
    FixedHorizon(f64),
    FreeHorizon(f64),
    FreeHomogeneous(f64),
}

impl TimeMode {
    /// The reference time used as the scaling factor: `T` when fixed, `T0`
    /// when free.
    pub fn t_ref(&self) -> f64 {
        match *self {
            TimeMode::FixedHorizon(t) | TimeMode::FreeHorizon(t) | TimeMode::FreeHomogeneous(t) => {
                t
            }
        }
    }

    pub fn is_free(&self) -> bool {
        !matches!(self, TimeMode::FixedHorizon(_))
    }
}

/// Polynomial optimal control problem
/// `min int_0^T h dt + H(x(T))` subject to `xdot = f(t, x, u)`,
/// `(x, u) in X x U`, `x(T) in K`.
#[derive(Debug, Clone)]
pub struct OcpProblem {
    pub n: usize,
    pub m: usize,
    /// Full variable block `(t, x1..xn, u1..um)`; all polynomials below are
    /// stored over it.
    pub block: Arc<VariableBlock>,
    pub f: Vec<Polynomial>,
    pub h: Polynomial,
    pub big_h: Polynomial,
    pub x_set: SemialgebraicSet,
    pub u_set: SemialgebraicSet,
    pub k_set: TargetSet,
    pub x0: Vec<f64>,
    pub time: TimeMode,
    pub add_ball_constraint: bool,
}

impl OcpProblem {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.f.len() != self.n {
            return Err(ProblemError::Dimension(format!(
                "{} dynamics components for {} states",
                self.f.len(),
                self.n
            )));
        }
        if self.x0.len() != self.n {
            return Err(ProblemError::Dimension(format!(
                "x0 has {} coordinates for {} states",
                self.x0.len(),
                self.n
            )));
        }
        for (i, (&v, &(lo, hi))) in self.x0.iter().zip(&self.x_set.bounding_box).enumerate() {
            if v < lo || v > hi {
                return Err(ProblemError::X0OutsideBox { index: i, value: v, lo, hi });
            }
        }
        if let TargetSet::Point(p) = &self.k_set {
            for (i, (&v, &(lo, hi))) in p.iter().zip(&self.x_set.bounding_box).enumerate() {
                if v < lo || v > hi {
                    return Err(ProblemError::TargetOutsideBox { index: i, value: v, lo, hi });
                }
            }
        }
        if matches!(self.time, TimeMode::FreeHomogeneous(_)) {
            let ti = self.block.time_index().unwrap();
            if !self.f.iter().all(|fk| fk.independent_of(ti)) {
                return Err(ProblemError::TimeDependent("dynamics"));
            }
            if !self.h.independent_of(ti) {
                return Err(ProblemError::TimeDependent("running cost"));
            }
        }
        Ok(())
    }

    /// True when the target is a single point.
    pub fn singleton_target(&self) -> Option<&[f64]> {
        match &self.k_set {
            TargetSet::Point(p) => Some(p),
            TargetSet::Set(_) => None,
        }
    }
}

/// Affine maps taking canonical variables back to original units:
/// `x_i = center_i + half_width_i * x~_i`, `u_j` likewise, `t = t_ref * s`.
#[derive(Debug, Clone)]
pub struct ScalingRecord {
    pub state_center: Vec<f64>,
    pub state_half_width: Vec<f64>,
    pub control_center: Vec<f64>,
    pub control_half_width: Vec<f64>,
    pub t_ref: f64,
    /// Multiply a canonical running-cost integral by this to get original
    /// units. Canonicalization folds `t_ref` into the scaled `h`, so the
    /// factor is 1; it is recorded for transparency.
    pub objective_rescale: f64,
}

impl ScalingRecord {
    pub fn identity(n: usize, m: usize) -> Self {
        ScalingRecord {
            state_center: vec![0.0; n],
            state_half_width: vec![1.0; n],
            control_center: vec![0.0; m],
            control_half_width: vec![1.0; m],
            t_ref: 1.0,
            objective_rescale: 1.0,
        }
    }

    /// Canonical state coordinates of an original-unit point.
    pub fn state_to_canonical(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.state_center[i]) / self.state_half_width[i])
            .collect()
    }

    /// Original-unit state coordinates of a canonical point.
    pub fn state_from_canonical(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| self.state_center[i] + self.state_half_width[i] * v)
            .collect()
    }
}

fn box_maps(bounding_box: &[(f64, f64)]) -> Result<(Vec<f64>, Vec<f64>), ProblemError> {
    let mut centers = Vec::with_capacity(bounding_box.len());
    let mut half_widths = Vec::with_capacity(bounding_box.len());
    for (i, &(lo, hi)) in bounding_box.iter().enumerate() {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(ProblemError::DegenerateBox { index: i, lo, hi });
        }
        centers.push(0.5 * (lo + hi));
        half_widths.push(0.5 * (hi - lo));
    }
    Ok((centers, half_widths))
}

/// Append `dim - sum v_i^2 >= 0` over the named coordinates of the full
/// block.
fn ball_inequality(block: &Arc<VariableBlock>, vars: &[usize]) -> Polynomial {
    let mut p = Polynomial::constant(block.clone(), vars.len() as f64);
    for &v in vars {
        let x = Polynomial::variable(block.clone(), v);
        p = p.sub(&x.mul(&x));
    }
    p
}

/// Rewrite the problem on `s in [0, 1]`, states and controls in `[-1, 1]`.
///
/// Dynamics become `dx~/ds = (t_ref / w_k) f_k(t_ref s, c + W x~, ...)` and
/// the running cost `t_ref * h(...)`, so reported integrals are already in
/// original cost units.
pub fn canonicalize(problem: &OcpProblem) -> Result<(OcpProblem, ScalingRecord), ProblemError> {
    problem.validate()?;
    let (state_center, state_half_width) = box_maps(&problem.x_set.bounding_box)?;
    let (control_center, control_half_width) = if problem.m > 0 {
        box_maps(&problem.u_set.bounding_box)?
    } else {
        (Vec::new(), Vec::new())
    };
    let t_ref = problem.time.t_ref();
    let record = ScalingRecord {
        state_center,
        state_half_width,
        control_center,
        control_half_width,
        t_ref,
        objective_rescale: 1.0,
    };

    let block = &problem.block;
    // Substitution maps sending canonical variables to original ones.
    let mut maps = Vec::with_capacity(block.num_vars());
    maps.push((t_ref, 0.0));
    for i in 0..problem.n {
        maps.push((record.state_half_width[i], record.state_center[i]));
    }
    for j in 0..problem.m {
        maps.push((record.control_half_width[j], record.control_center[j]));
    }

    let f: Vec<Polynomial> = problem
        .f
        .iter()
        .enumerate()
        .map(|(k, fk)| {
            fk.affine_substitute(&maps)
                .scale(t_ref / record.state_half_width[k])
        })
        .collect();
    let h = problem.h.affine_substitute(&maps).scale(t_ref);
    let big_h = problem.big_h.affine_substitute(&maps);

    let scale_set = |set: &SemialgebraicSet| SemialgebraicSet {
        dimension: set.dimension,
        inequalities: set
            .inequalities
            .iter()
            .map(|g| g.affine_substitute(&maps))
            .collect(),
        bounding_box: vec![(-1.0, 1.0); set.dimension],
    };

    let mut x_set = scale_set(&problem.x_set);
    let mut u_set = scale_set(&problem.u_set);
    if problem.add_ball_constraint {
        let state_vars: Vec<usize> = (0..problem.n).map(|i| block.state_index(i)).collect();
        x_set.inequalities.push(ball_inequality(block, &state_vars));
        if problem.m > 0 {
            let control_vars: Vec<usize> =
                (0..problem.m).map(|j| block.control_index(j)).collect();
            u_set.inequalities.push(ball_inequality(block, &control_vars));
        }
    }

    let k_set = match &problem.k_set {
        TargetSet::Point(p) => TargetSet::Point(record.state_to_canonical(p)),
        TargetSet::Set(s) => {
            let mut scaled = scale_set(s);
            if problem.add_ball_constraint {
                let state_vars: Vec<usize> =
                    (0..problem.n).map(|i| block.state_index(i)).collect();
                scaled.inequalities.push(ball_inequality(block, &state_vars));
            }
            TargetSet::Set(scaled)
        }
    };

    let canonical = OcpProblem {
        n: problem.n,
        m: problem.m,
        block: block.clone(),
        f,
        h,
        big_h,
        x_set,
        u_set,
        k_set,
        x0: record.state_to_canonical(&problem.x0),
        time: match problem.time {
            TimeMode::FixedHorizon(_) => TimeMode::FixedHorizon(1.0),
            TimeMode::FreeHorizon(_) => TimeMode::FreeHorizon(1.0),
            TimeMode::FreeHomogeneous(_) => TimeMode::FreeHomogeneous(1.0),
        },
        add_ball_constraint: false,
    };
    Ok((canonical, record))
}

/// Compactness precheck for Putinar-type convergence guarantees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompactnessReport {
    /// A single inequality certifies a compact level set (ball pattern or a
    /// full polytope of linear constraints).
    Certified { reason: String },
    /// No certifying inequality found; enabling the redundant ball
    /// constraint restores the guarantee.
    RecommendBall,
}

/// Detect either an inequality `M^2 - sum v_i^2 >= 0` whose quadratic form is
/// negative definite, or a polytope (at least 2*dim linear inequalities that
/// bound every coordinate from both sides via the bounding box faces).
pub fn putinar_precheck(set: &SemialgebraicSet, vars: &[usize]) -> CompactnessReport {
    for g in &set.inequalities {
        if is_concentric_ball(g, vars) {
            return CompactnessReport::Certified { reason: format!("ball inequality {g}") };
        }
    }
    let all_linear = !set.inequalities.is_empty()
        && set.inequalities.iter().all(|g| g.degree() <= 1);
    if all_linear && bounds_all_coordinates(set, vars) {
        return CompactnessReport::Certified {
            reason: "linear inequalities form a bounded polytope".to_string(),
        };
    }
    CompactnessReport::RecommendBall
}

fn is_concentric_ball(g: &Polynomial, vars: &[usize]) -> bool {
    let mut has_negative_square = vec![false; vars.len()];
    for (mono, &c) in &g.terms {
        let deg = mono.degree();
        if deg == 0 {
            if c <= 0.0 {
                return false;
            }
            continue;
        }
        if deg == 2 {
            if let Some(k) = vars.iter().position(|&v| mono.0[v] == 2) {
                if c < 0.0 {
                    has_negative_square[k] = true;
                    continue;
                }
            }
            return false;
        }
        return false;
    }
    has_negative_square.iter().all(|&b| b)
}

fn bounds_all_coordinates(set: &SemialgebraicSet, vars: &[usize]) -> bool {
    // Linear inequalities a0 + sum a_i v_i >= 0 bound coordinate k from above
    // when some inequality has a_k < 0 and no other variable, and from below
    // symmetrically. Axis-aligned faces cover the common box case.
    vars.iter().all(|&v| {
        let mut upper = false;
        let mut lower = false;
        for g in &set.inequalities {
            let mut coeff = 0.0;
            let mut pure = true;
            for (mono, &c) in &g.terms {
                if mono.degree() == 0 {
                    continue;
                }
                if mono.degree() == 1 && mono.0[v] == 1 {
                    coeff = c;
                } else {
                    pure = false;
                }
            }
            if pure && coeff < 0.0 {
                upper = true;
            }
            if pure && coeff > 0.0 {
                lower = true;
            }
        }
        upper && lower
    })
}

/// Degree data of a canonical problem and the smallest order at which every
/// piece of the relaxation is expressible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeProfile {
    pub deg_f: u32,
    pub deg_h: u32,
    pub deg_big_h: u32,
    /// Max degree over all constraint polynomials of X, K, U.
    pub d_sets: u32,
    /// Minimal order satisfying 2*r0 >= max(deg f, deg h, deg H, 2*d_sets).
    pub r0: u32,
}

pub fn degree_profile(problem: &OcpProblem) -> DegreeProfile {
    let deg_f = problem.f.iter().map(|p| p.degree()).max().unwrap_or(0);
    let deg_h = problem.h.degree();
    let deg_big_h = problem.big_h.degree();
    let mut d_sets = 0u32;
    let mut sets: Vec<&SemialgebraicSet> = vec![&problem.x_set, &problem.u_set];
    if let TargetSet::Set(k) = &problem.k_set {
        sets.push(k);
    }
    for set in sets {
        for g in &set.inequalities {
            d_sets = d_sets.max(g.degree());
        }
    }
    let two_r0 = deg_f.max(deg_h).max(deg_big_h).max(2 * d_sets).max(2);
    DegreeProfile { deg_f, deg_h, deg_big_h, d_sets, r0: two_r0.div_ceil(2) }
}
