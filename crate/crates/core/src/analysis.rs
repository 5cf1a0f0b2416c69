//! Theory constants, stationarity certificates and finite-difference checks.

use crate::error::{PvfimError, Result};
use crate::problem::{norm, BilevelProblem, LipschitzSpec, ValueBounds};

/// Every constant the convergence theory derives from a [`LipschitzSpec`] at a
/// given number of lower steps `J`.
///
/// Two families share the letter `M` in the literature: the gradient bounds of
/// `f_J` (`m0_j`, `m1_j`, `m2_j`) and the global value bounds of `F` and `f`
/// (`value_min_upper`, `value_max_upper`, `value_max_abs_lower`). They are kept
/// under distinct names here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantsReport {
    pub j: usize,
    /// Bound on the Jacobian of `y_J`: `J`.
    pub m0_j: f64,
    /// Lipschitz constant of `f_J`: `L0 (J + 1)`.
    pub m1_j: f64,
    /// Smoothness of `f_J`.
    pub m2_j: f64,
    pub l11: f64,
    pub l12: f64,
    /// Smoothness of the barrier objective in `y` on the restricted set.
    pub l_g: f64,
    /// Smoothness of the barrier value function.
    pub l_phi: f64,
    /// `1 - mu / L_G`, the inner contraction factor.
    pub contraction: f64,
    pub value_min_upper: f64,
    pub value_max_upper: f64,
    pub value_max_abs_lower: f64,
    pub m3: f64,
    pub l1_j: f64,
    pub lbar_j: f64,
    pub l2: f64,
    pub sigma: f64,
    /// Largest admissible barrier weight at `sigma`.
    pub tau_bound: f64,
    /// Smallest admissible number of upper steps at `sigma`.
    pub t_min: f64,
    /// Smallest admissible number of ascent steps at `sigma`.
    pub k_min: f64,
}

/// Constants independent of `sigma`; `sigma`-dependent fields are filled by
/// [`ConstantsReport::at_sigma`].
pub(crate) fn structural_constants(
    spec: &LipschitzSpec,
    bounds: &ValueBounds,
    eps: f64,
    j: usize,
    l2: f64,
) -> Result<ConstantsReport> {
    if j == 0 {
        return Err(PvfimError::InvalidArgument("J must be at least 1".into()));
    }
    if !(l2 > 0.0 && l2 < 1.0) {
        return Err(PvfimError::InvalidArgument(format!("l2 must lie in (0, 1), got {l2}")));
    }
    if !(spec.c > 0.0) {
        return Err(PvfimError::InvalidArgument(format!("c must be positive, got {}", spec.c)));
    }
    if !(eps > 0.0) {
        return Err(PvfimError::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let LipschitzSpec { h0, h1, l0, l1, l2: lip2, l3, mu, h, c, .. } = *spec;
    if !(l1 > 0.0 && mu > 0.0) {
        return Err(PvfimError::InvalidArgument("L1 and mu must be positive".into()));
    }
    let jf = j as f64;

    let m0_j = jf;
    let m1_j = l0 * (jf + 1.0);
    let m2_j = l1 * (1.0 + jf).powi(2) + (l0 * jf / l1) * (1.0 + jf) * (lip2 + l3 * jf);
    let l11 = h1 + (m2_j + l1) / c + (m1_j + l0).powi(2) / (c * c);
    let l12 = h1 + l1 / c + l0 * (m1_j + l0) / (c * c);
    let l_g = h1 + 2.0 * l1 / c + 4.0 * l0 * l0 / (c * c);
    if mu >= l_g {
        return Err(PvfimError::InvalidArgument(format!(
            "mu = {mu} must be below L_G = {l_g}"
        )));
    }
    let l_phi = l11 * (1.0 + l12 / mu);

    let m3 = (bounds.min_upper + c.ln())
        .abs()
        .max((bounds.max_upper + (2.0 * bounds.max_abs_lower + eps).ln()).abs());
    let l1_j = 1.0_f64.max(l11 * h).max(l_g);
    let lbar_j = ((2.0 * h * (l_phi / 2.0 + l2) + h0 + 4.0 * l0 / c).powi(2) / l2).max(l1_j);

    Ok(ConstantsReport {
        j,
        m0_j,
        m1_j,
        m2_j,
        l11,
        l12,
        l_g,
        l_phi,
        contraction: 1.0 - mu / l_g,
        value_min_upper: bounds.min_upper,
        value_max_upper: bounds.max_upper,
        value_max_abs_lower: bounds.max_abs_lower,
        m3,
        l1_j,
        lbar_j,
        l2,
        sigma: f64::NAN,
        tau_bound: f64::NAN,
        t_min: f64::NAN,
        k_min: f64::NAN,
    })
}

impl ConstantsReport {
    /// The report with the accuracy-dependent bounds evaluated at `sigma`.
    ///
    /// `spec` must be the one the report was built from.
    pub fn at_sigma(&self, spec: &LipschitzSpec, sigma: f64) -> Self {
        let s2 = sigma * sigma;
        let jf = self.j as f64;
        let ln_q = (-spec.mu / self.l_g).ln_1p();
        Self {
            sigma,
            tau_bound: spec.c * s2 / (36.0 * spec.h * jf * spec.l0 * self.lbar_j),
            t_min: 9.0 * self.m3 * self.lbar_j / s2,
            k_min: 2.0 * (s2 / (36.0 * spec.m * self.lbar_j * self.lbar_j)).ln() / ln_q,
            ..*self
        }
    }

    /// Whether `(tau, T, K)` satisfy the step-count premises at this report's `sigma`.
    pub fn admits(&self, tau: f64, t_steps: f64, k_steps: f64) -> ParameterCheck {
        ParameterCheck {
            tau_ok: tau <= self.tau_bound,
            t_ok: t_steps >= self.t_min,
            k_ok: k_steps >= self.k_min,
        }
    }

    /// Name/value pairs in a fixed order, for reports.
    pub fn fields(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("J", self.j as f64),
            ("M0_J", self.m0_j),
            ("M1_J", self.m1_j),
            ("M2_J", self.m2_j),
            ("L11", self.l11),
            ("L12", self.l12),
            ("L_G", self.l_g),
            ("L_phi", self.l_phi),
            ("contraction", self.contraction),
            ("value_min_F", self.value_min_upper),
            ("value_max_F", self.value_max_upper),
            ("value_max_abs_f", self.value_max_abs_lower),
            ("M3", self.m3),
            ("l1_J", self.l1_j),
            ("lbar_J", self.lbar_j),
            ("l2", self.l2),
            ("sigma", self.sigma),
            ("tau_bound", self.tau_bound),
            ("T_min", self.t_min),
            ("K_min", self.k_min),
        ]
    }
}

/// Outcome of checking a proposed `(tau, T, K)` against a [`ConstantsReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterCheck {
    pub tau_ok: bool,
    pub t_ok: bool,
    pub k_ok: bool,
}

impl ParameterCheck {
    pub fn all(&self) -> bool {
        self.tau_ok && self.t_ok && self.k_ok
    }
}

/// Computes every constant at `J` lower steps and accuracy `sigma`.
pub fn compute_constants(
    spec: &LipschitzSpec,
    bounds: &ValueBounds,
    eps: f64,
    j: usize,
    sigma: f64,
    l2: f64,
) -> Result<ConstantsReport> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(PvfimError::InvalidArgument(format!(
            "sigma must lie in (0, 1), got {sigma}"
        )));
    }
    Ok(structural_constants(spec, bounds, eps, j, l2)?.at_sigma(spec, sigma))
}

/// Source of the lower value function `f*(x)` and the pessimistic value `F*(x)`.
pub trait ValueOracle {
    fn lower_value(&self, x: &[f64]) -> Result<f64>;
    fn pessimistic_value(&self, x: &[f64]) -> Result<f64>;
}

/// Closed-form oracle for the benchmark instance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Example3Oracle;

impl ValueOracle for Example3Oracle {
    fn lower_value(&self, x: &[f64]) -> Result<f64> {
        Ok(crate::example3::lower_value_function(x[0]))
    }

    fn pessimistic_value(&self, x: &[f64]) -> Result<f64> {
        Ok(crate::example3::pessimistic_value(x[0]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Gradient norms of `F`.
    pub grad: f64,
    /// Lower residual beyond `eps`.
    pub lower: f64,
    /// Upper residual.
    pub upper: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { grad: 1e-3, lower: 1e-6, upper: 1e-3 }
    }
}

/// The multiplier instance a [`StationarityReport`] certifies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multipliers {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

/// `lambda1 = 1, lambda2 = 2, lambda3 = 0`: with `grad F(x, y) = 0` and `y` an
/// eps-pessimistic response the Fritz-John system holds identically.
pub const TERMINAL_MULTIPLIERS: Multipliers = Multipliers { lambda1: 1.0, lambda2: 2.0, lambda3: 0.0 };

/// Terminal stationarity and feasibility residuals of a candidate `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityReport {
    pub grad_upper_x_norm: f64,
    pub grad_upper_y_norm: f64,
    /// `f(x, y) - f*(x) - eps`; nonpositive when `y` is eps-optimal.
    pub lower_residual: f64,
    /// `F*(x) - F(x, y)`.
    pub upper_residual: f64,
    pub multipliers: Multipliers,
    pub tolerances: Tolerances,
    pub is_stationary: bool,
}

impl StationarityReport {
    pub fn new(
        grad_upper_x_norm: f64,
        grad_upper_y_norm: f64,
        lower_residual: f64,
        upper_residual: f64,
        tolerances: Tolerances,
    ) -> Self {
        // NaN residuals fail every comparison below
        let is_stationary = grad_upper_x_norm <= tolerances.grad
            && grad_upper_y_norm <= tolerances.grad
            && lower_residual <= tolerances.lower
            && upper_residual <= tolerances.upper;
        Self {
            grad_upper_x_norm,
            grad_upper_y_norm,
            lower_residual,
            upper_residual,
            multipliers: TERMINAL_MULTIPLIERS,
            tolerances,
            is_stationary,
        }
    }
}

/// Evaluates the terminal certificate at `(x, y)` with values from `oracle`.
pub fn stationarity_report(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    oracle: &dyn ValueOracle,
    tolerances: Tolerances,
) -> Result<StationarityReport> {
    prob.check_x(x)?;
    prob.check_y(y)?;
    if !prob.x_set().contains(x) || !prob.y_set().contains(y) {
        return Err(PvfimError::InvalidArgument(
            "candidate lies outside X x Y".into(),
        ));
    }
    let upper = prob.upper_eval(x, y);
    let lower = prob.lower_value(x, y);
    let context = |e: PvfimError| PvfimError::NumericalFailure {
        iteration: 0,
        message: format!("oracle failed: {e}"),
    };
    let f_star = oracle.lower_value(x).map_err(context)?;
    let big_f_star = oracle.pessimistic_value(x).map_err(context)?;
    Ok(StationarityReport::new(
        norm(&upper.grad_x),
        norm(&upper.grad_y),
        lower - f_star - prob.eps(),
        big_f_star - upper.value,
        tolerances,
    ))
}

/// Analytic versus central-difference gradient at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FdCheck {
    pub analytic: Vec<f64>,
    pub fd: Vec<f64>,
    /// Worst `|analytic - fd| / max(1, |analytic|, |fd|)` over coordinates.
    pub max_rel_err: f64,
}

pub fn fd_gradient_check<F, G>(f: F, grad: G, point: &[f64], step: f64) -> Result<FdCheck>
where
    F: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(PvfimError::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let analytic = grad(point)?;
    if analytic.len() != point.len() {
        return Err(PvfimError::DimensionMismatch {
            context: "analytic gradient",
            expected: point.len(),
            got: analytic.len(),
        });
    }
    let mut p = point.to_vec();
    let mut fd = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        p[i] = point[i] + step;
        let up = f(&p)?;
        p[i] = point[i] - step;
        let down = f(&p)?;
        p[i] = point[i];
        let d = (up - down) / (2.0 * step);
        if !d.is_finite() {
            return Err(PvfimError::NumericalFailure {
                iteration: i,
                message: "non-finite finite-difference quotient".into(),
            });
        }
        fd.push(d);
    }
    let max_rel_err = analytic
        .iter()
        .zip(&fd)
        .map(|(a, d)| (a - d).abs() / 1f64.max(a.abs()).max(d.abs()))
        .fold(0.0, f64::max);
    if analytic.iter().any(|v| !v.is_finite()) {
        return Err(PvfimError::NumericalFailure {
            iteration: 0,
            message: "non-finite analytic gradient".into(),
        });
    }
    Ok(FdCheck { analytic, fd, max_rel_err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example3::{example3_lipschitz, example3_problem, example3_value_bounds};
    use std::f64::consts::PI;

    fn unit_spec() -> LipschitzSpec {
        LipschitzSpec {
            h0: 1.0,
            h1: 1.0,
            l0: 1.0,
            l1: 1.0,
            l2: 0.0,
            l3: 0.0,
            mu: 0.5,
            h: 1.0,
            m: 2.0,
            c: 0.5,
        }
    }

    fn unit_bounds() -> ValueBounds {
        ValueBounds { min_upper: -1.0, max_upper: 1.0, max_abs_lower: 1.0 }
    }

    #[test]
    fn lower_gradient_bounds_at_one_step() {
        let r = compute_constants(&unit_spec(), &unit_bounds(), 1.0, 1, 0.5, 0.5).unwrap();
        assert_eq!(r.m0_j, 1.0);
        assert_eq!(r.m1_j, 2.0);
    }

    #[test]
    fn barrier_smoothness_by_hand() {
        let r = compute_constants(&unit_spec(), &unit_bounds(), 1.0, 1, 0.5, 0.5).unwrap();
        assert_eq!(r.l_g, 21.0);
    }

    #[test]
    fn strong_concavity_above_smoothness_rejected() {
        let mut s = unit_spec();
        s.mu = 30.0;
        assert!(compute_constants(&s, &unit_bounds(), 1.0, 1, 0.5, 0.5).is_err());
    }

    #[test]
    fn zero_margin_rejected() {
        let mut s = unit_spec();
        s.c = 0.0;
        assert!(compute_constants(&s, &unit_bounds(), 1.0, 1, 0.5, 0.5).is_err());
    }

    #[test]
    fn stationary_at_known_minimizer() {
        let prob = example3_problem(0.5).unwrap();
        let x = 1.5 * PI;
        let r = stationarity_report(&prob, &[x], &[x, x / 2.0], &Example3Oracle, Tolerances::default()).unwrap();
        assert!(r.grad_upper_x_norm < 1e-15);
        assert_eq!(r.grad_upper_y_norm, 0.0);
        assert_eq!(r.lower_residual, -0.5);
        assert_eq!(r.upper_residual, 0.0);
        assert!(r.is_stationary);
        assert_eq!(r.multipliers, TERMINAL_MULTIPLIERS);
    }

    #[test]
    fn feasible_but_not_critical() {
        let prob = example3_problem(0.5).unwrap();
        let r = stationarity_report(&prob, &[PI], &[PI, PI / 2.0], &Example3Oracle, Tolerances::default()).unwrap();
        assert!((r.grad_upper_x_norm - 1.0).abs() < 1e-12);
        assert!(!r.is_stationary);
    }

    #[test]
    fn lower_violation_reported() {
        let prob = example3_problem(0.5).unwrap();
        let x = 1.5 * PI;
        // r^2 = eps + 0.1
        let r = 0.6f64.sqrt();
        let y = [x + r, x / 2.0];
        let rep = stationarity_report(&prob, &[x], &y, &Example3Oracle, Tolerances::default()).unwrap();
        assert!((rep.lower_residual - 0.1).abs() < 1e-12);
        assert!(!rep.is_stationary);
    }

    #[test]
    fn candidate_outside_box_rejected() {
        let prob = example3_problem(0.5).unwrap();
        assert!(stationarity_report(&prob, &[0.0], &[0.0, 0.0], &Example3Oracle, Tolerances::default()).is_err());
    }

    #[test]
    fn fd_exact_on_linear() {
        let c = fd_gradient_check(
            |p| Ok(3.0 * p[0] - 2.0 * p[1] + 1.0),
            |_| Ok(vec![3.0, -2.0]),
            &[0.3, -1.7],
            1e-3,
        )
        .unwrap();
        assert!(c.max_rel_err <= 1e-10);
    }

    #[test]
    fn fd_on_quadratic() {
        let c = fd_gradient_check(
            |p| Ok(p[0] * p[0] + 4.0 * p[0] * p[1]),
            |p| Ok(vec![2.0 * p[0] + 4.0 * p[1], 4.0 * p[0]]),
            &[1.2, 0.4],
            1e-6,
        )
        .unwrap();
        assert!(c.max_rel_err <= 1e-6);
    }

    #[test]
    fn fd_non_finite_rejected() {
        let r = fd_gradient_check(|p| Ok(p[0].ln()), |_| Ok(vec![0.0]), &[0.0], 1e-6);
        assert!(r.is_err());
    }

    #[test]
    fn benchmark_constants_are_finite() {
        let r = compute_constants(&example3_lipschitz(), &example3_value_bounds(), 0.5, 3, 0.5, 0.5).unwrap();
        for (name, v) in r.fields() {
            assert!(v.is_finite(), "{name} = {v}");
        }
        assert!(r.contraction > 0.0 && r.contraction < 1.0);
    }
}
