//! Assembly of the order-`r` moment relaxation of a canonical problem.
//!
//! The decision vector concatenates the terminal moment sequence `y` (moments
//! of the measure at final time) and the occupation moment sequence `z`. The
//! relaxation minimizes `L_z(h) + L_y(H)` subject to positive semidefinite
//! moment and localizing matrices and the adjoint equalities
//! `L_y(g_T) - L_z(Ag) = g(0, x0)` over a truncated family of test monomials
//! `g = t^p x^alpha`.
//!
//! When the target set is a single point the terminal measure is the Dirac at
//! that point, so `y` is eliminated and its moments enter the equalities and
//! the objective as constants.

use std::sync::Arc;

use thiserror::Error;

use crate::momentstruct::{
    localizing_matrix, marginal_projection, moment_matrix, LinearForm, Marginal, MomentError,
    MomentVectorLayout, SymbolicMatrix,
};
use crate::polyalg::{monomial_basis, MultiIndex, PolyError, Polynomial, VariableBlock};
use crate::problem::{OcpProblem, TargetSet, TimeMode};

#[derive(Debug, Error)]
pub enum RelaxError {
    #[error("order r = {r} too small: {reason}")]
    OrderTooSmall { r: u32, reason: String },
    #[error("problem is not canonical: {0}")]
    NotCanonical(String),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// One PSD block of the relaxation, with positions referring to the
/// concatenated decision vector.
#[derive(Debug, Clone)]
pub struct PsdBlock {
    pub label: String,
    pub matrix: SymbolicMatrix,
}

/// The assembled semidefinite relaxation at a fixed order.
#[derive(Debug, Clone)]
pub struct RelaxationSdp {
    pub r: u32,
    pub time: TimeMode,
    /// Terminal moment layout; `None` when eliminated by a point target.
    pub y_layout: Option<MomentVectorLayout>,
    pub z_layout: MomentVectorLayout,
    /// Offset of the `z` moments inside the decision vector (`y` sits at 0).
    pub z_offset: usize,
    pub decision_len: usize,
    pub psd_blocks: Vec<PsdBlock>,
    /// Left-hand sides of the adjoint equalities, aligned with
    /// [`Self::test_monomials`].
    pub equalities: Vec<LinearForm>,
    pub rhs: Vec<f64>,
    /// Test monomials `t^p x^alpha` as `(p, alpha)`; `p = 0` always in
    /// time-homogeneous mode.
    pub test_monomials: Vec<(u32, MultiIndex)>,
    pub objective: LinearForm,
    /// Added to the solver objective; carries `L_y(H)` when `y` is
    /// eliminated.
    pub objective_constant: f64,
    /// Canonical target point when `y` was eliminated.
    pub eliminated_target: Option<Vec<f64>>,
    pub x0: Vec<f64>,
}

impl RelaxationSdp {
    /// Right-hand sides of the equalities for a different canonical initial
    /// state, enabling grid sweeps without reassembly.
    pub fn rhs_for(&self, x0_canonical: &[f64]) -> Vec<f64> {
        self.test_monomials
            .iter()
            .map(|(p, alpha)| {
                let g_x0 = if *p == 0 { alpha.eval(x0_canonical) } else { 0.0 };
                match &self.eliminated_target {
                    // L_y(g_T) = g_T(x_K) = x_K^alpha regardless of p.
                    Some(xk) => g_x0 - alpha.eval(xk),
                    None => g_x0,
                }
            })
            .collect()
    }

    /// Split a decision vector into its `y` and `z` moment parts.
    pub fn split_moments<'a>(&self, decision: &'a [f64]) -> (Option<&'a [f64]>, &'a [f64]) {
        if self.y_layout.is_some() {
            (Some(&decision[..self.z_offset]), &decision[self.z_offset..])
        } else {
            (None, decision)
        }
    }
}

/// Per-block dimensions and counts of an assembled relaxation.
#[derive(Debug, Clone)]
pub struct SizeReport {
    pub decision_len: usize,
    pub y_len: usize,
    pub z_len: usize,
    pub equality_count: usize,
    pub blocks: Vec<(String, usize)>,
}

impl std::fmt::Display for SizeReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "decision length {} (y {}, z {}), {} equalities",
            self.decision_len, self.y_len, self.z_len, self.equality_count
        )?;
        for (label, side) in &self.blocks {
            writeln!(f, "  {side}x{side}  {label}")?;
        }
        Ok(())
    }
}

pub fn describe(sdp: &RelaxationSdp) -> SizeReport {
    let y_len = sdp.y_layout.as_ref().map_or(0, |l| l.len());
    SizeReport {
        decision_len: sdp.decision_len,
        y_len,
        z_len: sdp.z_layout.len(),
        equality_count: sdp.equalities.len(),
        blocks: sdp
            .psd_blocks
            .iter()
            .map(|b| (b.label.clone(), b.matrix.side))
            .collect(),
    }
}

/// Assemble the relaxation appropriate for the problem's time mode.
pub fn build(problem: &OcpProblem, r: u32) -> Result<RelaxationSdp, RelaxError> {
    match problem.time {
        TimeMode::FixedHorizon(_) => build_fixed_time(problem, r),
        TimeMode::FreeHorizon(_) | TimeMode::FreeHomogeneous(_) => build_free_time(problem, r),
    }
}

pub fn build_fixed_time(problem: &OcpProblem, r: u32) -> Result<RelaxationSdp, RelaxError> {
    check_canonical(problem)?;
    if !matches!(problem.time, TimeMode::FixedHorizon(_)) {
        return Err(RelaxError::NotCanonical("time mode is not FixedHorizon".into()));
    }
    assemble(problem, r)
}

pub fn build_free_time(problem: &OcpProblem, r: u32) -> Result<RelaxationSdp, RelaxError> {
    check_canonical(problem)?;
    if matches!(problem.time, TimeMode::FixedHorizon(_)) {
        return Err(RelaxError::NotCanonical("time mode is not free".into()));
    }
    assemble(problem, r)
}

fn check_canonical(problem: &OcpProblem) -> Result<(), RelaxError> {
    if (problem.time.t_ref() - 1.0).abs() > 1e-12 {
        return Err(RelaxError::NotCanonical(format!(
            "horizon {} (canonicalize first)",
            problem.time.t_ref()
        )));
    }
    let boxes = problem
        .x_set
        .bounding_box
        .iter()
        .chain(&problem.u_set.bounding_box);
    for &(lo, hi) in boxes {
        if (lo + 1.0).abs() > 1e-12 || (hi - 1.0).abs() > 1e-12 {
            return Err(RelaxError::NotCanonical(format!(
                "bounding box [{lo}, {hi}] (canonicalize first)"
            )));
        }
    }
    Ok(())
}

fn localizer_order(r: u32, theta_deg: u32) -> Option<u32> {
    let half = theta_deg.div_ceil(2);
    (r >= half).then(|| r - half)
}

struct Assembler {
    psd_blocks: Vec<PsdBlock>,
}

impl Assembler {
    /// Localize `theta` on the given layout and remap into decision
    /// coordinates via `map` (marginal positions to layout positions) and
    /// `offset`.
    fn push_localizer(
        &mut self,
        label: String,
        layout: &MomentVectorLayout,
        theta: &Polynomial,
        r: u32,
        map: Option<&[usize]>,
        offset: usize,
    ) -> Result<(), RelaxError> {
        let d = localizer_order(r, theta.degree()).ok_or_else(|| RelaxError::OrderTooSmall {
            r,
            reason: format!("constraint of degree {} needs a higher order", theta.degree()),
        })?;
        let mut m = localizing_matrix(layout, theta, d)?;
        if let Some(map) = map {
            m = m.remap(map);
        }
        self.psd_blocks.push(PsdBlock { label, matrix: m.offset(offset) });
        Ok(())
    }
}

fn assemble(problem: &OcpProblem, r: u32) -> Result<RelaxationSdp, RelaxError> {
    let n = problem.n;
    let homogeneous = matches!(problem.time, TimeMode::FreeHomogeneous(_));
    let max_deg = 2 * r;

    let data_deg = problem
        .f
        .iter()
        .map(|p| p.degree())
        .max()
        .unwrap_or(0)
        .max(problem.h.degree())
        .max(problem.big_h.degree());
    if data_deg > max_deg {
        return Err(RelaxError::OrderTooSmall {
            r,
            reason: format!("problem data has degree {data_deg} > 2r"),
        });
    }
    let deg_f = problem.f.iter().map(|p| p.degree()).max().unwrap_or(0);

    // Moment layouts.
    let z_block: Arc<VariableBlock> = if homogeneous {
        VariableBlock::state_control(n, problem.m)
    } else {
        problem.block.clone()
    };
    let z_layout = MomentVectorLayout::new(z_block.clone(), max_deg);

    let eliminated_target = match (&problem.k_set, problem.time) {
        (TargetSet::Point(p), TimeMode::FixedHorizon(_) | TimeMode::FreeHomogeneous(_)) => {
            Some(p.clone())
        }
        _ => None,
    };
    let y_block: Arc<VariableBlock> = if matches!(problem.time, TimeMode::FreeHorizon(_)) {
        VariableBlock::time_state(n)
    } else {
        VariableBlock::state(n)
    };
    let y_layout = if eliminated_target.is_some() {
        None
    } else {
        Some(MomentVectorLayout::new(y_block.clone(), max_deg))
    };
    let y_len = y_layout.as_ref().map_or(0, |l| l.len());
    let z_offset = y_len;
    let decision_len = y_len + z_layout.len();

    let mut asm = Assembler { psd_blocks: Vec::new() };

    // Moment matrices.
    asm.psd_blocks.push(PsdBlock {
        label: "M_r(z)".to_string(),
        matrix: moment_matrix(&z_layout, r)?.offset(z_offset),
    });
    if let Some(yl) = &y_layout {
        asm.psd_blocks.push(PsdBlock {
            label: "M_r(y)".to_string(),
            matrix: moment_matrix(yl, r)?,
        });
    }

    // Localizers on the occupation moments: X constraints act on the state
    // marginal, U constraints on the control marginal, and the time window
    // on the time marginal.
    let (zx_layout, zx_map) = marginal_projection(&z_layout, Marginal::State)?;
    for (j, v) in problem.x_set.inequalities.iter().enumerate() {
        let vj = v.restrict(&zx_layout.block)?;
        asm.push_localizer(
            format!("M(v{} z(x))", j + 1),
            &zx_layout,
            &vj,
            r,
            Some(&zx_map),
            z_offset,
        )?;
    }
    if problem.m > 0 {
        let (zu_layout, zu_map) = marginal_projection(&z_layout, Marginal::Control)?;
        for (k, w) in problem.u_set.inequalities.iter().enumerate() {
            let wk = w.restrict(&zu_layout.block)?;
            asm.push_localizer(
                format!("M(w{} z(u))", k + 1),
                &zu_layout,
                &wk,
                r,
                Some(&zu_map),
                z_offset,
            )?;
        }
    }
    if !homogeneous {
        let (zt_layout, zt_map) = marginal_projection(&z_layout, Marginal::Time)?;
        let window = window_polynomial(&zt_layout.block);
        asm.push_localizer(
            "M(t(1-t) z(t))".to_string(),
            &zt_layout,
            &window,
            r,
            Some(&zt_map),
            z_offset,
        )?;
    }

    // Localizers on the terminal moments.
    if let Some(yl) = &y_layout {
        let thetas: Vec<Polynomial> = match &problem.k_set {
            TargetSet::Set(k) => k
                .inequalities
                .iter()
                .map(|g| g.restrict(&y_block).map_err(RelaxError::from))
                .collect::<Result<_, _>>()?,
            // A point target with non-eliminable y (free horizon): pin each
            // coordinate with a pair of opposing linear inequalities.
            TargetSet::Point(p) => {
                let mut out = Vec::new();
                for (i, &ci) in p.iter().enumerate() {
                    let xi = Polynomial::variable(y_block.clone(), y_block.state_index(i));
                    let c = Polynomial::constant(y_block.clone(), ci);
                    out.push(xi.sub(&c));
                    out.push(c.sub(&xi));
                }
                out
            }
        };
        for (j, theta) in thetas.iter().enumerate() {
            asm.push_localizer(format!("M(theta{} y)", j + 1), yl, theta, r, None, 0)?;
        }
        if matches!(problem.time, TimeMode::FreeHorizon(_)) {
            let (yt_layout, yt_map) = marginal_projection(yl, Marginal::Time)?;
            let window = window_polynomial(&yt_layout.block);
            asm.push_localizer(
                "M(t(1-t) y(t))".to_string(),
                &yt_layout,
                &window,
                r,
                Some(&yt_map),
                0,
            )?;
        }
    }

    // Adjoint equalities over test monomials g = t^p x^alpha with
    // p + |alpha| - 1 + deg f <= 2r.
    let cutoff = max_deg + 1 - deg_f.max(1);
    let test_block: Arc<VariableBlock> = if homogeneous {
        VariableBlock::state(n)
    } else {
        VariableBlock::time_state(n)
    };
    let mut equalities = Vec::new();
    let mut rhs = Vec::new();
    let mut test_monomials = Vec::new();
    for mono in monomial_basis(test_block.num_vars(), cutoff) {
        let (p, alpha) = if homogeneous {
            (0u32, mono.clone())
        } else {
            (mono.0[0], MultiIndex(mono.0[1..].to_vec()))
        };
        if homogeneous && mono.degree() == 0 && eliminated_target.is_some() {
            // g = 1 reduces to 0 = 0.
            continue;
        }
        // L_y must be expressible inside the y layout.
        if eliminated_target.is_none() {
            let y_deg = if matches!(problem.time, TimeMode::FreeHorizon(_)) {
                p + alpha.degree()
            } else {
                alpha.degree()
            };
            if y_deg > max_deg {
                continue;
            }
        }

        let g = Polynomial::monomial(test_block.clone(), mono.clone(), 1.0);
        let a_g = if homogeneous {
            let mut out = Polynomial::zero(problem.block.clone());
            let g_full = g.embed(&problem.block);
            for (k, fk) in problem.f.iter().enumerate() {
                out = out.add(&fk.mul(&g_full.differentiate(problem.block.state_index(k))));
            }
            out.restrict(&z_block)?
        } else {
            crate::polyalg::apply_generator(&g, &problem.f)?
        };
        let mut lhs = z_layout.linear_functional(&a_g)?;
        lhs = LinearForm {
            constant: 0.0,
            terms: lhs.terms.iter().map(|&(pos, c)| (pos + z_offset, -c)).collect(),
        };

        let rhs_val;
        match (&y_layout, &eliminated_target) {
            (Some(yl), None) => {
                let g_y = if matches!(problem.time, TimeMode::FreeHorizon(_)) {
                    g.clone()
                } else {
                    // g_T = g(1, x)
                    let mut maps = vec![(1.0, 0.0); test_block.num_vars()];
                    maps[0] = (0.0, 1.0);
                    let g1 = if homogeneous { g.clone() } else { g.affine_substitute(&maps) };
                    g1.restrict(&y_block)?
                };
                lhs.add_scaled(&yl.linear_functional(&g_y)?, 1.0);
                rhs_val = if p == 0 { alpha.eval(&problem.x0) } else { 0.0 };
            }
            (None, Some(xk)) => {
                // L_y(g_T) = g_T(x_K) is a constant; move it to the right.
                let g_t_at_xk = alpha.eval(xk);
                let g_at_x0 = if p == 0 { alpha.eval(&problem.x0) } else { 0.0 };
                rhs_val = g_at_x0 - g_t_at_xk;
            }
            _ => unreachable!(),
        }
        lhs.normalize();
        if lhs.is_zero() && rhs_val.abs() < 1e-14 {
            continue;
        }
        equalities.push(lhs);
        rhs.push(rhs_val);
        test_monomials.push((p, alpha));
    }

    // Objective L_z(h) + L_y(H).
    let h_z = if homogeneous { problem.h.restrict(&z_block)? } else { problem.h.clone() };
    let mut objective = LinearForm {
        constant: 0.0,
        terms: z_layout
            .linear_functional(&h_z)?
            .terms
            .iter()
            .map(|&(pos, c)| (pos + z_offset, c))
            .collect(),
    };
    let mut objective_constant = 0.0;
    match (&y_layout, &eliminated_target) {
        (Some(yl), None) => {
            let h_y = problem.big_h.restrict(&y_block)?;
            objective.add_scaled(&yl.linear_functional(&h_y)?, 1.0);
        }
        (None, Some(xk)) => {
            let h_y = problem.big_h.restrict(&VariableBlock::state(n))?;
            objective_constant = h_y.eval(xk);
        }
        _ => unreachable!(),
    }
    objective.normalize();

    Ok(RelaxationSdp {
        r,
        time: problem.time,
        y_layout,
        z_layout,
        z_offset,
        decision_len,
        psd_blocks: asm.psd_blocks,
        equalities,
        rhs,
        test_monomials,
        objective,
        objective_constant,
        eliminated_target,
        x0: problem.x0.clone(),
    })
}

/// `t(1 - t)` over a time-only block.
fn window_polynomial(block: &Arc<VariableBlock>) -> Polynomial {
    let t = Polynomial::variable(block.clone(), 0);
    t.sub(&t.mul(&t))
}
