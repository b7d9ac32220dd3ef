//! Ground truth for validation: closed-form minimum-time functions for the
//! double and Brockett integrators, an analytic unreachability check for the
//! Zermelo navigation problem, a trajectory simulator that produces
//! empirical occupation-measure moments for feasibility tests, and the
//! benchmark problem definitions those oracles describe.

use std::f64::consts::PI;

use thiserror::Error;

use crate::momentstruct::MomentVectorLayout;
use crate::polyalg::{parse_poly, Polynomial, VariableBlock};
use crate::problem::{OcpProblem, SemialgebraicSet, TargetSet, TimeMode};
use crate::sdpbackend::Verdict;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("x2 = {0} < -1: the double integrator time function requires x2 >= -1")]
    BelowVelocityFloor(f64),
    #[error("point lies outside the problem's state box")]
    OutsideStateBox,
    #[error("step must be positive, got {0}")]
    BadStep(f64),
}

/// Minimum time to steer the double integrator (positions and velocities,
/// `|u| <= 1`, `x2 >= -1`) from `x` to the origin.
pub fn double_integrator_time(x: [f64; 2]) -> Result<f64, OracleError> {
    let [x1, x2] = x;
    if x2 < -1.0 {
        return Err(OracleError::BelowVelocityFloor(x2));
    }
    let half = x2 * x2 / 2.0;
    if x1 >= 1.0 - half {
        Ok(half + x1 + x2 + 1.0)
    } else if x1 >= -half * x2.signum() {
        Ok(2.0 * (half + x1).sqrt() + x2)
    } else {
        Ok(2.0 * (half - x1).sqrt() - x2)
    }
}

/// Squared distance from the singular line below which the closed-form line
/// formula is used directly.
const BROCKETT_LINE_EPS: f64 = 1e-12;

/// Minimum time to steer the Brockett integrator from the origin to `x`
/// under `u1^2 + u2^2 <= 1`.
pub fn brockett_time(x: [f64; 3]) -> f64 {
    let [x1, x2, x3] = x;
    let rho2 = x1 * x1 + x2 * x2;
    let v = 2.0 * x3.abs();
    if rho2 <= BROCKETT_LINE_EPS {
        return (PI * v).sqrt();
    }
    if v == 0.0 {
        return rho2.sqrt();
    }
    let theta = solve_brockett_theta(v / rho2);
    let s = theta.sin();
    theta * (rho2 + v).sqrt() / (theta + s * s - s * theta.cos()).sqrt()
}

/// Residual of the implicit equation at the angle returned for `x`, relative
/// to `max(1, target)` where `target = 2|x3| / (x1^2 + x2^2)`. The target
/// grows without bound near the singular line and the equation's left side
/// is equally steep there, so one ulp of angle already moves the raw
/// residual by `target`-sized amounts; the relative measure is what double
/// precision can certify. Zero for points on the singular line, where no
/// angle is solved for.
pub fn brockett_theta_residual(x: [f64; 3]) -> f64 {
    let [x1, x2, x3] = x;
    let rho2 = x1 * x1 + x2 * x2;
    let v = 2.0 * x3.abs();
    if rho2 <= BROCKETT_LINE_EPS || v == 0.0 {
        return 0.0;
    }
    let target = v / rho2;
    let theta = solve_brockett_theta(target);
    let s = theta.sin();
    ((theta - s * theta.cos()) / (s * s) - target) / target.max(1.0)
}

/// Solve `(theta - sin(theta) cos(theta)) / sin(theta)^2 = target` for
/// `theta` in `[0, pi)`. The left side increases monotonically from 0 to
/// infinity; bisection is unconditionally safe even though the derivative
/// degenerates at both endpoints.
fn solve_brockett_theta(target: f64) -> f64 {
    // Bisect the cleared form (theta - sin cos) - target sin^2 = 0: it has
    // the same sign pattern but stays well conditioned as theta approaches
    // pi, where the quotient's derivative blows up and would otherwise
    // amplify the angle tolerance into a visible residual.
    let cleared = |theta: f64| {
        let s = theta.sin();
        (theta - s * theta.cos()) - target * s * s
    };
    let mut lo = 0.0f64;
    let mut hi = PI;
    // The quotient increases to infinity as theta -> pi, so the root is
    // bracketed; bisect until the interval cannot shrink further (well
    // past the 1e-12 angle tolerance).
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        if cleared(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Zermelo navigation (drift `1 - 0.1 x2` on `X = [-6,2] x [-2,2]`,
/// control and target balls of radius 0.44): the drift dominates the control,
/// so `x1` strictly increases and any start with `x1 > 0.44` can never enter
/// the target ball. A one-sided analytic check used to validate solver
/// certificates.
pub fn zermelo_unreachable(x: [f64; 2]) -> Result<Verdict, OracleError> {
    let [x1, x2] = x;
    if !(-6.0..=2.0).contains(&x1) || !(-2.0..=2.0).contains(&x2) {
        return Err(OracleError::OutsideStateBox);
    }
    if x1 > 0.44 {
        Ok(Verdict::ProvablyUnreachable)
    } else {
        Ok(Verdict::Unknown)
    }
}

/// Half-width of the state box used by [`brockett_problem`]. The minimum-time
/// dynamics are scale-invariant, but the relaxation needs a compact state set
/// for its Putinar certificates, so the benchmark carries an explicit box
/// large enough to hold the optimal trajectories of every tabulated start.
pub const BROCKETT_BOX_HALF_WIDTH: f64 = 4.0;

/// Minimum-time double integrator: `x1' = x2`, `x2' = u`, `|u| <= 1`,
/// velocity floor `x2 >= -1`, steering to the origin.
pub fn double_integrator_problem(x0: [f64; 2]) -> OcpProblem {
    let block = VariableBlock::time_state_control(2, 1);
    OcpProblem {
        n: 2,
        m: 1,
        block: block.clone(),
        f: vec![
            parse_poly("x2", &block).unwrap(),
            parse_poly("u1", &block).unwrap(),
        ],
        h: parse_poly("1", &block).unwrap(),
        big_h: Polynomial::zero(block.clone()),
        x_set: SemialgebraicSet::new(
            2,
            vec![
                parse_poly("x2 + 1", &block).unwrap(),
                parse_poly("2 - x2", &block).unwrap(),
                parse_poly("3 - x1", &block).unwrap(),
                parse_poly("x1 + 3", &block).unwrap(),
            ],
            vec![(-3.0, 3.0), (-1.0, 2.0)],
        ),
        u_set: SemialgebraicSet::new(
            1,
            vec![
                parse_poly("1 - u1", &block).unwrap(),
                parse_poly("1 + u1", &block).unwrap(),
            ],
            vec![(-1.0, 1.0)],
        ),
        k_set: TargetSet::Point(vec![0.0, 0.0]),
        x0: x0.to_vec(),
        time: TimeMode::FreeHomogeneous(6.0),
        add_ball_constraint: false,
    }
}

/// Minimum-time Brockett integrator: `x1' = u1`, `x2' = u2`,
/// `x3' = u1 x2 - u2 x1`, `u1^2 + u2^2 <= 1`, steering to the origin inside
/// the box of half-width [`BROCKETT_BOX_HALF_WIDTH`].
pub fn brockett_problem(x0: [f64; 3]) -> OcpProblem {
    let b = BROCKETT_BOX_HALF_WIDTH;
    let block = VariableBlock::time_state_control(3, 2);
    let faces = (1..=3)
        .map(|i| parse_poly(&format!("{} - x{i}^2", b * b), &block).unwrap())
        .collect();
    OcpProblem {
        n: 3,
        m: 2,
        block: block.clone(),
        f: vec![
            parse_poly("u1", &block).unwrap(),
            parse_poly("u2", &block).unwrap(),
            parse_poly("u1*x2 - u2*x1", &block).unwrap(),
        ],
        h: parse_poly("1", &block).unwrap(),
        big_h: Polynomial::zero(block.clone()),
        x_set: SemialgebraicSet::new(3, faces, vec![(-b, b); 3]),
        u_set: SemialgebraicSet::new(
            2,
            vec![parse_poly("1 - u1^2 - u2^2", &block).unwrap()],
            vec![(-1.0, 1.0); 2],
        ),
        k_set: TargetSet::Point(vec![0.0; 3]),
        x0: x0.to_vec(),
        time: TimeMode::FreeHomogeneous(5.0),
        add_ball_constraint: false,
    }
}

/// Zermelo navigation: drift `x1' = 1 - 0.1 x2 + u1`, `x2' = u2`, speed
/// `|u| <= 0.44`, minimum time to the ball of radius 0.44 at the origin
/// inside `X = [-6, 2] x [-2, 2]`.
pub fn zermelo_problem(x0: [f64; 2]) -> OcpProblem {
    let block = VariableBlock::time_state_control(2, 2);
    let faces = vec![
        parse_poly("2 - x1", &block).unwrap(),
        parse_poly("x1 + 6", &block).unwrap(),
        parse_poly("2 - x2", &block).unwrap(),
        parse_poly("x2 + 2", &block).unwrap(),
    ];
    let rho = 0.44f64;
    OcpProblem {
        n: 2,
        m: 2,
        block: block.clone(),
        f: vec![
            parse_poly("1 - 0.1*x2 + u1", &block).unwrap(),
            parse_poly("u2", &block).unwrap(),
        ],
        h: parse_poly("1", &block).unwrap(),
        big_h: Polynomial::zero(block.clone()),
        x_set: SemialgebraicSet::new(2, faces, vec![(-6.0, 2.0), (-2.0, 2.0)]),
        u_set: SemialgebraicSet::new(
            2,
            vec![parse_poly(&format!("{} - u1^2 - u2^2", rho * rho), &block).unwrap()],
            vec![(-rho, rho); 2],
        ),
        k_set: TargetSet::Set(SemialgebraicSet::new(
            2,
            vec![parse_poly(&format!("{} - x1^2 - x2^2", rho * rho), &block).unwrap()],
            vec![(-rho, rho); 2],
        )),
        x0: x0.to_vec(),
        time: TimeMode::FreeHomogeneous(25.0),
        add_ball_constraint: false,
    }
}

/// Simulated admissible trajectory.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub terminal_state: Vec<f64>,
    /// Set when the trajectory left the state bounding box; moments are
    /// still returned and the caller decides.
    pub left_state_box: bool,
}

/// Empirical moments of the terminal Dirac (`y`) and the occupation measure
/// (`z`) of a simulated trajectory.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub y: Vec<f64>,
    pub y_layout: MomentVectorLayout,
    pub z: Vec<f64>,
    pub z_layout: MomentVectorLayout,
    pub step: f64,
    pub trajectory: TrajectorySample,
}

/// Integrate the problem's dynamics under a feedback law with fixed-step
/// fourth-order Runge-Kutta and accumulate occupation moments
/// `z = integral of t^p x^alpha u^beta dt` with composite Simpson
/// quadrature on the same grid. `y` holds the monomials of the terminal
/// state. The moment layouts match those used by the relaxation at order
/// `max_deg / 2`.
pub fn simulate_occupation(
    problem: &OcpProblem,
    control_law: &dyn Fn(f64, &[f64]) -> Vec<f64>,
    horizon: f64,
    max_deg: u32,
    step: f64,
) -> Result<EmpiricalMoments, OracleError> {
    if step <= 0.0 {
        return Err(OracleError::BadStep(step));
    }
    let n = problem.n;
    // Simpson needs an even number of intervals.
    let mut num_steps = (horizon / step).ceil() as usize;
    if num_steps % 2 == 1 {
        num_steps += 1;
    }
    let num_steps = num_steps.max(2);
    let h = horizon / num_steps as f64;

    let eval_f = |t: f64, x: &[f64], u: &[f64]| -> Vec<f64> {
        let mut point = Vec::with_capacity(problem.block.num_vars());
        point.push(t);
        point.extend_from_slice(x);
        point.extend_from_slice(u);
        problem.f.iter().map(|fk| fk.eval(&point)).collect()
    };

    let mut times = Vec::with_capacity(num_steps + 1);
    let mut states = Vec::with_capacity(num_steps + 1);
    let mut controls = Vec::with_capacity(num_steps + 1);
    let mut x = problem.x0.clone();
    let mut left_state_box = false;
    for i in 0..=num_steps {
        let t = i as f64 * h;
        let u = control_law(t, &x);
        if !problem.x_set.contains_box(&x) {
            left_state_box = true;
        }
        times.push(t);
        states.push(x.clone());
        controls.push(u.clone());
        if i == num_steps {
            break;
        }
        // classical RK4 step
        let k1 = eval_f(t, &x, &u);
        let mid = |k: &[f64], scale: f64| -> Vec<f64> {
            (0..n).map(|j| x[j] + scale * h * k[j]).collect()
        };
        let x2 = mid(&k1, 0.5);
        let u2 = control_law(t + 0.5 * h, &x2);
        let k2 = eval_f(t + 0.5 * h, &x2, &u2);
        let x3 = mid(&k2, 0.5);
        let u3 = control_law(t + 0.5 * h, &x3);
        let k3 = eval_f(t + 0.5 * h, &x3, &u3);
        let x4 = mid(&k3, 1.0);
        let u4 = control_law(t + h, &x4);
        let k4 = eval_f(t + h, &x4, &u4);
        for j in 0..n {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }

    let z_layout = MomentVectorLayout::new(problem.block.clone(), max_deg);
    let y_layout = MomentVectorLayout::new(VariableBlock::state(n), max_deg);

    let mut z = vec![0.0; z_layout.len()];
    let mut point = vec![0.0; problem.block.num_vars()];
    for i in 0..=num_steps {
        let weight = h / 3.0
            * if i == 0 || i == num_steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
        point[0] = times[i];
        point[1..1 + n].copy_from_slice(&states[i]);
        point[1 + n..].copy_from_slice(&controls[i]);
        for (k, mono) in z_layout.basis.iter().enumerate() {
            z[k] += weight * mono.eval(&point);
        }
    }

    let terminal = states[num_steps].clone();
    let y = y_layout
        .basis
        .iter()
        .map(|mono| mono.eval(&terminal))
        .collect();

    Ok(EmpiricalMoments {
        y,
        y_layout,
        z,
        z_layout,
        step: h,
        trajectory: TrajectorySample {
            times,
            states,
            controls,
            terminal_state: terminal,
            left_state_box,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{parse_poly, MultiIndex, Polynomial};
    use crate::problem::{SemialgebraicSet, TargetSet, TimeMode};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn double_integrator_examples() {
        assert_eq!(double_integrator_time([0.0, 0.0]).unwrap(), 0.0);
        assert_relative_eq!(double_integrator_time([1.0, 1.0]).unwrap(), 3.5);
        assert_relative_eq!(
            double_integrator_time([0.0, -1.0]).unwrap(),
            1.0 + 2.0f64.sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(double_integrator_time([1.0, 0.0]).unwrap(), 2.0);
        assert!(double_integrator_time([0.0, -1.1]).is_err());
    }

    #[test]
    fn double_integrator_continuous_across_region_boundaries() {
        // Adjacent branch formulas, evaluated at the exact boundary points
        // (the square roots are not Lipschitz there, so comparing values at
        // perturbed points would only see O(sqrt(eps)) agreement).
        let first = |x1: f64, x2: f64| x2 * x2 / 2.0 + x1 + x2 + 1.0;
        let second = |x1: f64, x2: f64| 2.0 * (x2 * x2 / 2.0 + x1).sqrt() + x2;
        let third = |x1: f64, x2: f64| 2.0 * (x2 * x2 / 2.0 - x1).sqrt() - x2;
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..200 {
            let x2: f64 = rng.gen_range(-1.0..2.0);
            let half = x2 * x2 / 2.0;
            let x1 = 1.0 - half;
            assert!((first(x1, x2) - second(x1, x2)).abs() < 1e-9);
            let x1 = -half * x2.signum();
            assert!(
                (second(x1, x2) - third(x1, x2)).abs() < 1e-9,
                "x2={x2}: {} vs {}",
                second(x1, x2),
                third(x1, x2)
            );
        }
    }

    #[test]
    fn brockett_examples() {
        assert_eq!(brockett_time([0.0, 0.0, 0.0]), 0.0);
        assert_relative_eq!(
            brockett_time([0.0, 0.0, 1.0]),
            (2.0 * PI).sqrt(),
            epsilon = 1e-9
        );
        assert_relative_eq!(brockett_time([0.0, 1.0, 0.0]), 1.0, epsilon = 1e-9);
        assert_relative_eq!(brockett_time([0.0, 3.0, 3.0]), 3.4392, epsilon = 5e-4);
    }

    #[test]
    fn brockett_residual_and_continuity() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..10_000 {
            let x = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ];
            if x[0] * x[0] + x[1] * x[1] > 1e-6 {
                assert!(brockett_theta_residual(x).abs() <= 1e-10, "x = {x:?}");
            }
        }
        // continuity across the singular line x1 = x2 = 0
        for _ in 0..10_000 {
            let x3 = rng.gen_range(-3.0..3.0f64);
            let dx = rng.gen_range(-1e-3..1e-3f64);
            let dy = rng.gen_range(-1e-3..1e-3f64);
            let on_line = brockett_time([0.0, 0.0, x3]);
            let near = brockett_time([dx, dy, x3]);
            assert!(
                (on_line - near).abs() <= 0.02,
                "x3={x3} dx={dx} dy={dy}: {on_line} vs {near}"
            );
        }
    }

    #[test]
    fn zermelo_verdicts() {
        assert_eq!(
            zermelo_unreachable([1.0, 0.0]).unwrap(),
            Verdict::ProvablyUnreachable
        );
        assert_eq!(zermelo_unreachable([0.44, 0.0]).unwrap(), Verdict::Unknown);
        assert_eq!(zermelo_unreachable([-2.0, 0.0]).unwrap(), Verdict::Unknown);
        assert!(zermelo_unreachable([3.0, 0.0]).is_err());
    }

    fn fixed_time_double_integrator(x0: [f64; 2]) -> OcpProblem {
        let block = VariableBlock::time_state_control(2, 1);
        OcpProblem {
            n: 2,
            m: 1,
            block: block.clone(),
            f: vec![
                parse_poly("x2", &block).unwrap(),
                parse_poly("u1", &block).unwrap(),
            ],
            h: parse_poly("1", &block).unwrap(),
            big_h: Polynomial::zero(block.clone()),
            x_set: SemialgebraicSet::new(2, vec![], vec![(-3.0, 3.0), (-1.0, 2.0)]),
            u_set: SemialgebraicSet::new(1, vec![], vec![(-1.0, 1.0)]),
            k_set: TargetSet::Point(vec![0.0, 0.0]),
            x0: x0.to_vec(),
            time: TimeMode::FixedHorizon(1.0),
            add_ball_constraint: false,
        }
    }

    #[test]
    fn stationary_trajectory_moments() {
        // f vanishes along u = 0 from the origin with zero velocity: the
        // occupation moments of x-monomials are T * x0^alpha.
        let mut problem = fixed_time_double_integrator([0.5, 0.0]);
        problem.f[0] = Polynomial::zero(problem.block.clone());
        problem.f[1] = Polynomial::zero(problem.block.clone());
        let law = |_t: f64, _x: &[f64]| vec![0.0];
        let em = simulate_occupation(&problem, &law, 2.0, 4, 1e-3).unwrap();
        let pos = em
            .z_layout
            .position(&MultiIndex(vec![0, 2, 0, 0]))
            .unwrap();
        assert_relative_eq!(em.z[pos], 2.0 * 0.25, epsilon = 1e-10);
        assert_relative_eq!(em.z[0], 2.0, epsilon = 1e-12);
        assert_eq!(em.y[0], 1.0);
    }

    #[test]
    fn closed_form_trajectory_integral() {
        // u = 1 from (0, -1): x2(t) = t - 1, x1(t) = t^2/2 - t, and
        // the occupation moment of x1 over [0, 1] is -1/3.
        let problem = fixed_time_double_integrator([0.0, -1.0]);
        let law = |_t: f64, _x: &[f64]| vec![1.0];
        let em = simulate_occupation(&problem, &law, 1.0, 4, 1e-3).unwrap();
        let pos = em
            .z_layout
            .position(&MultiIndex(vec![0, 1, 0, 0]))
            .unwrap();
        assert_relative_eq!(em.z[pos], -1.0 / 3.0, epsilon = 1e-8);
        assert_relative_eq!(
            em.trajectory.terminal_state[0],
            -0.5,
            epsilon = 1e-8
        );
    }

    #[test]
    fn adjoint_identity_residual_shrinks_at_fourth_order() {
        // L_y(g(T, .)) - g(0, x0) must equal L_z(Ag); the discretization
        // error decays at the integrator's order as the step is halved.
        let problem = fixed_time_double_integrator([0.2, 0.1]);
        let law = |t: f64, x: &[f64]| vec![(0.8 * (t * 3.1).sin() - 0.3 * x[1]).clamp(-1.0, 1.0)];
        let g_block = VariableBlock::time_state(2);
        let monomials = crate::polyalg::monomial_basis(3, 4);

        let residual = |step: f64| -> f64 {
            let em = simulate_occupation(&problem, &law, 1.0, 6, step).unwrap();
            let mut worst: f64 = 0.0;
            for mono in &monomials {
                let g = Polynomial::monomial(g_block.clone(), mono.clone(), 1.0);
                let a_g = crate::polyalg::apply_generator(&g, &problem.f).unwrap();
                let lz = a_g
                    .terms
                    .iter()
                    .map(|(m, c)| c * em.z[em.z_layout.position(m).unwrap()])
                    .sum::<f64>();
                let mut terminal_point = vec![1.0];
                terminal_point.extend_from_slice(&em.trajectory.terminal_state);
                let ly = g.eval(&terminal_point);
                let mut x0_point = vec![0.0];
                x0_point.extend_from_slice(&problem.x0);
                worst = worst.max((ly - g.eval(&x0_point) - lz).abs());
            }
            worst
        };

        let coarse = residual(4e-2);
        let fine = residual(2e-2);
        let order = (coarse / fine).log2();
        assert!(
            order >= 3.5 || fine < 1e-12,
            "observed order {order} (coarse {coarse}, fine {fine})"
        );
        // and at the production step the residual is tiny
        assert!(residual(1e-3) < 1e-9);
    }
}
