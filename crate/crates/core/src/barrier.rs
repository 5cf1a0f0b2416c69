//! Lower-level value approximation and the log-barrier objective
//! `G(x, y) = F(x, y) + tau * ln(f_J(x) + eps - f(x, y))`.

use crate::error::{PvfimError, Result};
use crate::problem::{check_point, BilevelProblem};

/// Default bisection tolerance on the slack when restoring feasibility.
pub const RESTORE_TOL: f64 = 1e-10;

/// Parameters of one barrier subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams {
    /// Barrier weight.
    pub tau: f64,
    /// Number of lower-level projected-descent steps.
    pub j: usize,
    /// Restricted-set margin: iterates keep slack at least `c0 / 2`.
    pub c0: f64,
    /// Lower-level stepsize.
    pub alpha: f64,
}

impl BarrierParams {
    pub fn new(tau: f64, j: usize, c0: f64, alpha: f64) -> Result<Self> {
        let p = Self { tau, j, c0, alpha };
        p.validate()?;
        Ok(p)
    }

    /// `tau = 0` and `alpha = 0` are admitted as degenerate limits (no barrier,
    /// no descent); schedules only ever produce `tau` in `(0, 1)`.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && (0.0..1.0).contains(&self.tau)) {
            return Err(PvfimError::InvalidArgument(format!(
                "tau must lie in [0, 1), got {}",
                self.tau
            )));
        }
        if self.j == 0 {
            return Err(PvfimError::InvalidArgument("J must be at least 1".into()));
        }
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(PvfimError::InvalidArgument(format!(
                "c0 must be positive, got {}",
                self.c0
            )));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(PvfimError::InvalidArgument(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Checks the parameters against a problem; `c0 <= eps` keeps `y_J(x)` inside `Y_J(x)`.
    pub fn validate_for(&self, prob: &BilevelProblem) -> Result<()> {
        self.validate()?;
        if self.c0 > prob.eps() {
            return Err(PvfimError::InvalidArgument(format!(
                "c0 = {} exceeds eps = {}",
                self.c0,
                prob.eps()
            )));
        }
        Ok(())
    }
}

/// Output of the lower-level projected gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerApprox {
    pub y_j: Vec<f64>,
    /// `f(x, y_J)`.
    pub f_j: f64,
    /// `y_0, ..., y_J` when requested.
    pub trajectory: Option<Vec<Vec<f64>>>,
}

/// Runs exactly `J` steps of `y <- proj_Y(y - alpha * grad_y f(x, y))` from `y0`.
pub fn approx_lower_solution(
    prob: &BilevelProblem,
    x: &[f64],
    params: &BarrierParams,
    y0: &[f64],
    record_trajectory: bool,
) -> Result<LowerApprox> {
    params.validate()?;
    prob.check_x(x)?;
    prob.check_y(y0)?;
    let mut y = y0.to_vec();
    prob.y_set().clamp_in_place(&mut y);
    let mut trajectory = record_trajectory.then(|| vec![y.clone()]);
    let mut g = vec![0.0; prob.m()];
    for j in 0..params.j {
        prob.lower_grad_y(x, &y, &mut g);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(PvfimError::NumericalFailure {
                iteration: j,
                message: "non-finite lower-level gradient".into(),
            });
        }
        for (yi, gi) in y.iter_mut().zip(&g) {
            *yi -= params.alpha * gi;
        }
        prob.y_set().clamp_in_place(&mut y);
        if let Some(t) = trajectory.as_mut() {
            t.push(y.clone());
        }
    }
    let f_j = prob.lower_value(x, &y);
    if !f_j.is_finite() {
        return Err(PvfimError::NumericalFailure {
            iteration: params.j,
            message: "non-finite lower-level value".into(),
        });
    }
    Ok(LowerApprox {
        y_j: y,
        f_j,
        trajectory,
    })
}

/// Forward-difference gradient of `x -> f_J(x)`.
pub fn lower_approx_gradient(
    prob: &BilevelProblem,
    x: &[f64],
    params: &BarrierParams,
    y0: &[f64],
    base: f64,
) -> Result<Vec<f64>> {
    let mut grad = Vec::with_capacity(x.len());
    let mut shifted = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-7 * x[i].abs().max(1.0);
        shifted[i] = x[i] + h;
        let up = approx_lower_solution(prob, &shifted, params, y0, false)?;
        grad.push((up.f_j - base) / h);
        shifted[i] = x[i];
    }
    Ok(grad)
}

/// Log-barrier objective and its partial gradients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_y: Vec<f64>,
    /// `f_J(x) + eps - f(x, y)`.
    pub slack: f64,
}

/// Evaluates `G` at `(x, y)`.
///
/// `grad_x = grad_x F + (tau / slack) * (grad f_J - grad_x f)`. When `grad_f_j`
/// is `None` the `grad f_J` term is dropped, which is the form the solver's
/// gradient estimate uses.
pub fn barrier_eval(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    f_j: f64,
    params: &BarrierParams,
    grad_f_j: Option<&[f64]>,
) -> Result<BarrierEval> {
    prob.check_x(x)?;
    prob.check_y(y)?;
    if let Some(g) = grad_f_j {
        check_point("gradient of f_J", g, prob.n())?;
    }
    let upper = prob.upper_eval(x, y);
    let lower = prob.lower_eval(x, y);
    let slack = f_j + prob.eps() - lower.value;
    if !(slack > 0.0) {
        return Err(PvfimError::BarrierDomain { slack });
    }
    let w = params.tau / slack;
    let grad_y = upper
        .grad_y
        .iter()
        .zip(&lower.grad_y)
        .map(|(a, b)| a - w * b)
        .collect();
    let grad_x = upper
        .grad_x
        .iter()
        .zip(&lower.grad_x)
        .enumerate()
        .map(|(i, (a, b))| a + w * (grad_f_j.map_or(0.0, |g| g[i]) - b))
        .collect();
    let value = if params.tau == 0.0 {
        upper.value
    } else {
        upper.value + params.tau * slack.ln()
    };
    if !value.is_finite() {
        return Err(PvfimError::NumericalFailure {
            iteration: 0,
            message: "non-finite barrier value".into(),
        });
    }
    Ok(BarrierEval {
        value,
        grad_x,
        grad_y,
        slack,
    })
}

/// Membership in `Y_J(x) = {y in Y : f_J(x) + eps - f(x, y) >= c0 / 2}`.
pub fn in_restricted_set(prob: &BilevelProblem, x: &[f64], y: &[f64], f_j: f64, c0: f64) -> bool {
    if x.len() != prob.n() || !prob.y_set().contains(y) {
        return false;
    }
    f_j + prob.eps() - prob.lower_value(x, y) >= c0 / 2.0
}

/// Pulls an infeasible trial point back into `Y_J(x)` along the segment from a
/// feasible anchor.
///
/// Returns `y_trial` if it is already feasible; otherwise bisects the segment
/// `[y_feasible, y_trial]` until the slack lies in `[c0/2, c0/2 + tol]`. This is
/// a feasibility restoration, not the Euclidean projection onto `Y_J(x)`.
pub fn restore_feasibility(
    prob: &BilevelProblem,
    x: &[f64],
    y_feasible: &[f64],
    y_trial: &[f64],
    f_j: f64,
    c0: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    prob.check_x(x)?;
    prob.check_y(y_feasible)?;
    prob.check_y(y_trial)?;
    if !prob.y_set().contains(y_trial) {
        return Err(PvfimError::ContractViolation(
            "trial point lies outside Y".into(),
        ));
    }
    let target = c0 / 2.0;
    let slack_at = |p: &[f64]| f_j + prob.eps() - prob.lower_value(x, p);
    if slack_at(y_trial) >= target {
        return Ok(y_trial.to_vec());
    }
    let mut lo_slack = slack_at(y_feasible);
    if !(lo_slack >= target) || !prob.y_set().contains(y_feasible) {
        return Err(PvfimError::ContractViolation(format!(
            "anchor point is not in the restricted set (slack {lo_slack:e} < {target:e})"
        )));
    }
    let point = |t: f64| -> Vec<f64> {
        y_feasible
            .iter()
            .zip(y_trial)
            .map(|(a, b)| a + t * (b - a))
            .collect()
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut best = y_feasible.to_vec();
    for _ in 0..200 {
        if lo_slack <= target + tol || hi - lo <= f64::EPSILON {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let p = point(mid);
        let s = slack_at(&p);
        if s >= target {
            lo = mid;
            lo_slack = s;
            best = p;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// The solver's estimate of `grad phi(x)` and its correction term.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub a: Vec<f64>,
    /// `grad_x f(x, y_J) - grad_x f(x, y_K)`.
    pub b: Vec<f64>,
    pub slack: f64,
}

/// `a = grad_x F(x, y_K) + tau / (f_J + eps - f(x, y_K)) * b`.
pub fn grad_estimate(
    prob: &BilevelProblem,
    x: &[f64],
    lower: &LowerApprox,
    y_k: &[f64],
    params: &BarrierParams,
) -> Result<GradientEstimate> {
    prob.check_x(x)?;
    prob.check_y(y_k)?;
    let upper = prob.upper_eval(x, y_k);
    let at_k = prob.lower_eval(x, y_k);
    let at_j = prob.lower_eval(x, &lower.y_j);
    let slack = lower.f_j + prob.eps() - at_k.value;
    if !(slack > 0.0) {
        return Err(PvfimError::BarrierDomain { slack });
    }
    let b: Vec<f64> = at_j
        .grad_x
        .iter()
        .zip(&at_k.grad_x)
        .map(|(p, q)| p - q)
        .collect();
    let w = params.tau / slack;
    let a: Vec<f64> = upper.grad_x.iter().zip(&b).map(|(g, bi)| g + w * bi).collect();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(PvfimError::NumericalFailure {
            iteration: 0,
            message: "non-finite gradient estimate".into(),
        });
    }
    Ok(GradientEstimate { a, b, slack })
}

/// Result of the restricted projected gradient ascent on `G(x, .)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AscentResult {
    pub y: Vec<f64>,
    /// Smallest slack over the accepted iterates, including the start point.
    pub min_slack: f64,
    /// Steps actually taken.
    pub steps: usize,
}

/// `K` steps of `y <- restore(proj_Y(y + beta * grad_y G(x, y)))` from `y_start`.
///
/// `y_start` must belong to `Y_J(x)`. With `stop_tol` set, iteration ends early
/// once a step moves less than the tolerance. Errors carry the step index in
/// an [`PvfimError::AtIteration`] wrapper with `l = t = 0`.
#[allow(clippy::too_many_arguments)]
pub fn restricted_ascent(
    prob: &BilevelProblem,
    x: &[f64],
    lower: &LowerApprox,
    params: &BarrierParams,
    beta: f64,
    k_steps: usize,
    y_start: &[f64],
    stop_tol: Option<f64>,
) -> Result<AscentResult> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(PvfimError::InvalidArgument(format!(
            "beta must be nonnegative, got {beta}"
        )));
    }
    if !in_restricted_set(prob, x, y_start, lower.f_j, params.c0) {
        return Err(PvfimError::ContractViolation(
            "ascent start point is outside the restricted set".into(),
        ));
    }
    let mut y = y_start.to_vec();
    let mut min_slack = lower.f_j + prob.eps() - prob.lower_value(x, &y);
    let mut steps = 0;
    for k in 0..k_steps {
        let eval = barrier_eval(prob, x, &y, lower.f_j, params, None).map_err(|e| e.at(0, 0, k))?;
        let mut trial: Vec<f64> = y.iter().zip(&eval.grad_y).map(|(a, g)| a + beta * g).collect();
        prob.y_set().clamp_in_place(&mut trial);
        let next = restore_feasibility(prob, x, &y, &trial, lower.f_j, params.c0, RESTORE_TOL)
            .map_err(|e| e.at(0, 0, k))?;
        let slack = lower.f_j + prob.eps() - prob.lower_value(x, &next);
        min_slack = min_slack.min(slack);
        let moved = crate::problem::distance(&y, &next);
        y = next;
        steps = k + 1;
        if stop_tol.is_some_and(|tol| moved <= tol) {
            break;
        }
    }
    Ok(AscentResult { y, min_slack, steps })
}

/// Approximates `phi_{eps,tau,J}(x) = max_{y in Y_J(x)} G(x, y)` by running the
/// restricted ascent from `y_J(x)` to convergence.
///
/// Returns the maximal value and the maximizer.
pub fn inner_maximum(
    prob: &BilevelProblem,
    x: &[f64],
    params: &BarrierParams,
    y0: &[f64],
    beta: f64,
    max_steps: usize,
) -> Result<(f64, Vec<f64>)> {
    let lower = approx_lower_solution(prob, x, params, y0, false)?;
    let asc = restricted_ascent(prob, x, &lower, params, beta, max_steps, &lower.y_j, Some(0.0))?;
    let eval = barrier_eval(prob, x, &asc.y, lower.f_j, params, None)?;
    Ok((eval.value, asc.y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example3::{example3_problem, project_sublevel_slab};
    use std::f64::consts::PI;

    fn params(tau: f64, j: usize, alpha: f64) -> BarrierParams {
        BarrierParams::new(tau, j, 0.25, alpha).unwrap()
    }

    #[test]
    fn one_lower_step_by_hand() {
        // grad_y f(3.03, (0, 9)) = (-36, 72); one step of 0.1
        let prob = example3_problem(0.5).unwrap();
        let r = approx_lower_solution(&prob, &[3.03], &params(0.5, 1, 0.1), &[0.0, 9.0], true).unwrap();
        assert!((r.y_j[0] - 3.6).abs() < 1e-12);
        assert!((r.y_j[1] - 1.8).abs() < 1e-12);
        assert_eq!(r.trajectory.unwrap().len(), 2);
    }

    #[test]
    fn lower_fixed_point_on_zero_set() {
        let prob = example3_problem(0.5).unwrap();
        for j in [1, 3, 17] {
            let r = approx_lower_solution(&prob, &[2.5], &params(0.5, j, 0.1), &[4.0, 2.0], false).unwrap();
            assert_eq!(r.y_j, vec![4.0, 2.0]);
            assert_eq!(r.f_j, 2.5);
        }
    }

    #[test]
    fn zero_step_keeps_start() {
        let prob = example3_problem(0.5).unwrap();
        let r = approx_lower_solution(&prob, &[2.0], &params(0.5, 1, 0.0), &[1.0, 7.0], false).unwrap();
        assert_eq!(r.y_j, vec![1.0, 7.0]);
        assert_eq!(r.f_j, prob.lower_value(&[2.0], &[1.0, 7.0]));
    }

    #[test]
    fn zero_lower_steps_rejected() {
        assert!(BarrierParams::new(0.5, 0, 0.25, 0.1).is_err());
    }

    #[test]
    fn c0_above_eps_rejected() {
        let prob = example3_problem(0.5).unwrap();
        let p = BarrierParams::new(0.5, 1, 0.75, 0.1).unwrap();
        assert!(p.validate_for(&prob).is_err());
    }

    #[test]
    fn barrier_on_response_curve() {
        let prob = example3_problem(0.5).unwrap();
        let x = 2.2;
        let e = barrier_eval(&prob, &[x], &[x, x / 2.0], x, &params(0.3, 1, 0.1), None).unwrap();
        assert!((e.slack - 0.5).abs() < 1e-15);
        assert!((e.value - (x.sin() + 0.3 * 0.5f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn barrier_formula_value() {
        // slack = eps = 0.5, tau = 0.5, F = 2
        let v = 2.0 + 0.5 * 0.5f64.ln();
        assert!((v - 1.65343).abs() < 1e-5);
    }

    #[test]
    fn barrier_vanishes_without_weight() {
        let prob = example3_problem(0.5).unwrap();
        let (x, y) = ([3.0], [2.0, 1.2]);
        let f_j = 3.0;
        let e = barrier_eval(&prob, &x, &y, f_j, &params(0.0, 1, 0.1), None).unwrap();
        assert_eq!(e.value, prob.upper_value(&x, &y));
    }

    #[test]
    fn barrier_domain_error() {
        let prob = example3_problem(0.5).unwrap();
        let err = barrier_eval(&prob, &[3.0], &[3.0, 0.0], 3.0, &params(0.5, 1, 0.1), None).unwrap_err();
        assert!(matches!(err, PvfimError::BarrierDomain { .. }));
    }

    #[test]
    fn restricted_set_membership() {
        let prob = example3_problem(0.5).unwrap();
        let x = [PI];
        // ([y]1 - 2[y]2)^2 must be at most eps - c0/2 = 0.375
        assert!(in_restricted_set(&prob, &x, &[0.6, 0.0], PI, 0.25));
        assert!(!in_restricted_set(&prob, &x, &[0.62, 0.0], PI, 0.25));
        assert!(!in_restricted_set(&prob, &x, &[41.0, 20.5], PI, 0.25));
        let lower = approx_lower_solution(&prob, &x, &params(0.5, 2, 0.1), &[0.0, 9.0], false).unwrap();
        assert!(in_restricted_set(&prob, &x, &lower.y_j, lower.f_j, 0.5));
    }

    #[test]
    fn restore_keeps_feasible_trial() {
        let prob = example3_problem(0.5).unwrap();
        let (x, f_j) = ([PI], PI);
        let a = [PI, PI / 2.0];
        let t = [PI + 0.1, PI / 2.0];
        assert_eq!(restore_feasibility(&prob, &x, &a, &t, f_j, 0.25, 1e-10).unwrap(), t.to_vec());
        assert_eq!(restore_feasibility(&prob, &x, &a, &a, f_j, 0.25, 1e-10).unwrap(), a.to_vec());
    }

    #[test]
    fn restore_bisects_to_margin() {
        let prob = example3_problem(0.5).unwrap();
        let (x, f_j) = ([PI], PI);
        let anchor = [PI, PI / 2.0];
        // move along the slab normal (1, -2)/sqrt(5) until r = sqrt(0.6), i.e. slack = -0.1
        let s = 0.6f64.sqrt() / 5f64.sqrt();
        let trial = [PI + s / 5f64.sqrt(), PI / 2.0 - 2.0 * s / 5f64.sqrt()];
        let y = restore_feasibility(&prob, &x, &anchor, &trial, f_j, 0.25, 1e-10).unwrap();
        let slack = f_j + 0.5 - prob.lower_value(&x, &y);
        assert!((0.125..=0.125 + 1e-10).contains(&slack), "slack {slack}");
        // along the normal the exact projection lands on the same point
        let exact = project_sublevel_slab(PI, &trial, f_j + 0.5 - 0.125).unwrap();
        assert!(crate::problem::distance(&y, &exact) < 1e-9);
    }

    #[test]
    fn restore_rejects_infeasible_anchor() {
        let prob = example3_problem(0.5).unwrap();
        let err = restore_feasibility(&prob, &[PI], &[PI + 1.0, PI / 2.0], &[PI + 2.0, PI / 2.0], PI, 0.25, 1e-10)
            .unwrap_err();
        assert!(matches!(err, PvfimError::ContractViolation(_)));
    }

    #[test]
    fn estimate_without_ascent_progress() {
        let prob = example3_problem(0.5).unwrap();
        let x = [4.0];
        let lower = approx_lower_solution(&prob, &x, &params(0.5, 3, 0.1), &[0.0, 9.0], false).unwrap();
        let est = grad_estimate(&prob, &x, &lower, &lower.y_j, &params(0.5, 3, 0.1)).unwrap();
        assert_eq!(est.b, vec![0.0]);
        let mut gx = [0.0];
        let mut gy = [0.0; 2];
        crate::problem::SmoothFunction::gradient(&crate::example3::Upper, &x, &lower.y_j, &mut gx, &mut gy);
        assert_eq!(est.a, gx.to_vec());
    }

    #[test]
    fn estimate_closed_form() {
        // b is always zero here, so a = 2(y1 - x) + (y2 - x/2) + cos x
        let prob = example3_problem(0.5).unwrap();
        let x = 5.0;
        let lower = approx_lower_solution(&prob, &[x], &params(0.7, 2, 0.1), &[0.0, 9.0], false).unwrap();
        let y_k = [5.1, 2.45];
        let est = grad_estimate(&prob, &[x], &lower, &y_k, &params(0.7, 2, 0.1)).unwrap();
        let expect = 2.0 * (y_k[0] - x) + (y_k[1] - x / 2.0) + x.cos();
        assert!((est.a[0] - expect).abs() < 1e-14);
        assert_eq!(est.b, vec![0.0]);
    }

    #[test]
    fn ascent_moves_toward_response() {
        let prob = example3_problem(0.5).unwrap();
        let x = [4.0];
        let p = params(0.5, 1, 0.1);
        let lower = approx_lower_solution(&prob, &x, &p, &[0.0, 9.0], false).unwrap();
        let asc = restricted_ascent(&prob, &x, &lower, &p, 0.1, 200, &lower.y_j, None).unwrap();
        assert!((asc.y[0] - 4.0).abs() < 1e-9 && (asc.y[1] - 2.0).abs() < 1e-9);
        assert!(asc.min_slack >= 0.125 - 1e-12);
    }

    #[test]
    fn ascent_rejects_infeasible_start() {
        let prob = example3_problem(0.5).unwrap();
        let p = params(0.5, 1, 0.1);
        let lower = approx_lower_solution(&prob, &[4.0], &p, &[0.0, 9.0], false).unwrap();
        assert!(restricted_ascent(&prob, &[4.0], &lower, &p, 0.1, 3, &[10.0, 0.0], None).is_err());
    }
}
