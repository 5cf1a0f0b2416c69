//! The inner equilibrium search and the outer interior-point loop.

use crate::barrier::{
    approx_lower_solution, barrier_eval, grad_estimate, in_restricted_set, lower_approx_gradient,
    restricted_ascent, BarrierParams, LowerApprox,
};
use crate::error::{PvfimError, Result};
use crate::problem::{distance, norm, BilevelProblem, BoxSet};
use crate::schedule::{OuterSchedule, ScheduleEntry};

/// Which inner iterate becomes the outer iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// The last upper iterate `x_T` with a fresh ascent at it.
    #[default]
    Practice,
    /// The inner iterate with the smallest equilibrium residual.
    Theory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerConfig {
    pub t_steps: usize,
    pub k_steps: usize,
    pub beta: f64,
    pub eta: f64,
    pub selection: Selection,
    /// Start each ascent from the previous `y_K` when it is still feasible.
    pub warm_start: bool,
}

impl InnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_steps == 0 || self.k_steps == 0 {
            return Err(PvfimError::InvalidArgument("T and K must be at least 1".into()));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(PvfimError::InvalidArgument(format!("beta must be nonnegative, got {}", self.beta)));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(PvfimError::InvalidArgument(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }
}

/// Measured first-order Nash residuals of a candidate pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FneCertificate {
    pub sigma: f64,
    /// `max_{x in X} -<grad_x G, x - x_bar>`.
    pub x_gap: f64,
    /// `||grad_y G(x_bar, y_bar)||`.
    pub y_grad_norm: f64,
    pub slack: f64,
    pub is_fne: bool,
}

impl FneCertificate {
    pub fn new(sigma: f64, x_gap: f64, y_grad_norm: f64, slack: f64) -> Self {
        Self {
            sigma,
            x_gap,
            y_grad_norm,
            slack,
            is_fne: x_gap <= sigma && y_grad_norm <= sigma && slack > 0.0,
        }
    }

    /// `max(x_gap, y_grad_norm)`.
    pub fn residual(&self) -> f64 {
        self.x_gap.max(self.y_grad_norm)
    }

    fn failed(sigma: f64, slack: f64) -> Self {
        Self::new(sigma, f64::INFINITY, f64::INFINITY, slack)
    }
}

/// Closed-form `max_{x in X} -<g, x - x_bar>` for a box.
pub fn box_gap(g: &[f64], x_bar: &[f64], set: &BoxSet) -> f64 {
    g.iter()
        .zip(x_bar)
        .zip(set.lo().iter().zip(set.hi()))
        .map(|((gi, xi), (lo, hi))| (-gi * (lo - xi)).max(-gi * (hi - xi)).max(0.0))
        .sum()
}

/// Evaluates the equilibrium residuals at `(x_bar, y_bar)`.
///
/// `grad_x G` includes the exact `grad f_J` term, obtained by forward
/// differences of `f_J` from the lower start `y0`. Bad inputs give a failing
/// certificate rather than an error.
pub fn check_fne(
    prob: &BilevelProblem,
    x_bar: &[f64],
    y_bar: &[f64],
    f_j: f64,
    params: &BarrierParams,
    y0: &[f64],
    sigma: f64,
) -> FneCertificate {
    let slack = if x_bar.len() == prob.n() && y_bar.len() == prob.m() {
        f_j + prob.eps() - prob.lower_value(x_bar, y_bar)
    } else {
        f64::NAN
    };
    if !(slack > 0.0) || !prob.y_set().contains(y_bar) {
        return FneCertificate::failed(sigma, slack);
    }
    let Ok(grad_f_j) = lower_approx_gradient(prob, x_bar, params, y0, f_j) else {
        return FneCertificate::failed(sigma, slack);
    };
    match barrier_eval(prob, x_bar, y_bar, f_j, params, Some(&grad_f_j)) {
        Ok(e) => FneCertificate::new(sigma, box_gap(&e.grad_x, x_bar, prob.x_set()), norm(&e.grad_y), e.slack),
        Err(_) => FneCertificate::failed(sigma, slack),
    }
}

/// One row per upper step, plus a row `t = T` holding the point returned for
/// outer iteration `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub l: usize,
    pub t: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `G(x_t, y_K)`.
    pub g_value: f64,
    pub a_norm: f64,
    pub x_gap: f64,
    pub y_grad_norm: f64,
    pub slack: f64,
    pub tau: f64,
    pub j: usize,
    pub k: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
}

impl SolveTrace {
    /// Rows `t = T` only: the outer iterates.
    pub fn outer_rows(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().enumerate().filter_map(|(i, r)| {
            let last_of_l = self.rows.get(i + 1).is_none_or(|n| n.l != r.l);
            last_of_l.then_some(r)
        })
    }
}

/// What one call of [`find_fne`] returns.
#[derive(Debug, Clone, PartialEq)]
pub struct FneOutcome {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f_j: f64,
    pub certificate: FneCertificate,
}

struct Step {
    lower: LowerApprox,
    y_k: Vec<f64>,
    a: Vec<f64>,
    g_value: f64,
    certificate: FneCertificate,
}

/// Lower descent, restricted ascent and residuals at one upper iterate.
#[allow(clippy::too_many_arguments)]
fn inner_step(
    prob: &BilevelProblem,
    x: &[f64],
    params: &BarrierParams,
    inner: &InnerConfig,
    y0: &[f64],
    warm: Option<&[f64]>,
    sigma: f64,
) -> Result<Step> {
    let lower = approx_lower_solution(prob, x, params, y0, false)?;
    let start = match warm {
        Some(w) if inner.warm_start && in_restricted_set(prob, x, w, lower.f_j, params.c0) => w.to_vec(),
        _ => lower.y_j.clone(),
    };
    let asc = restricted_ascent(prob, x, &lower, params, inner.beta, inner.k_steps, &start, None)?;
    let est = grad_estimate(prob, x, &lower, &asc.y, params)?;
    let certificate = check_fne(prob, x, &asc.y, lower.f_j, params, y0, sigma);
    let g_value = barrier_eval(prob, x, &asc.y, lower.f_j, params, None)?.value;
    Ok(Step { lower, y_k: asc.y, a: est.a, g_value, certificate })
}

fn row(l: usize, t: usize, x: &[f64], s: &Step, params: &BarrierParams, inner: &InnerConfig) -> TraceRow {
    TraceRow {
        l,
        t,
        x: x.to_vec(),
        y: s.y_k.clone(),
        g_value: s.g_value,
        a_norm: norm(&s.a),
        x_gap: s.certificate.x_gap,
        y_grad_norm: s.certificate.y_grad_norm,
        slack: s.certificate.slack,
        tau: params.tau,
        j: params.j,
        k: inner.k_steps,
        eta: inner.eta,
    }
}

/// Runs `T` upper steps of projected descent along the gradient estimate, each
/// preceded by `J` lower descent steps from `y0` and `K` restricted ascent steps.
///
/// `sigma` only labels the returned certificate. `l` tags trace rows and errors.
/// `warm` seeds the first ascent when warm starts are enabled.
#[allow(clippy::too_many_arguments)]
pub fn find_fne(
    prob: &BilevelProblem,
    params: &BarrierParams,
    inner: &InnerConfig,
    x0: &[f64],
    y0: &[f64],
    warm: Option<&[f64]>,
    sigma: f64,
    l: usize,
    trace: &mut Vec<TraceRow>,
) -> Result<FneOutcome> {
    params.validate_for(prob)?;
    inner.validate()?;
    prob.check_x(x0)?;
    prob.check_y(y0)?;
    if !prob.x_set().contains(x0) || !prob.y_set().contains(y0) {
        return Err(PvfimError::InvalidArgument("starting point lies outside X x Y".into()));
    }
    let mut x = x0.to_vec();
    let mut warm_y = warm.map(<[f64]>::to_vec);
    let mut best: Option<(f64, usize, FneOutcome)> = None;
    let first_row = trace.len();

    for t in 0..inner.t_steps {
        let s = inner_step(prob, &x, params, inner, y0, warm_y.as_deref(), sigma)
            .map_err(|e| e.relocate(l, t))?;
        trace.push(row(l, t, &x, &s, params, inner));
        if inner.selection == Selection::Theory {
            let r = s.certificate.residual();
            if best.as_ref().is_none_or(|(b, _, _)| r < *b) {
                let out = FneOutcome { x: x.clone(), y: s.y_k.clone(), f_j: s.lower.f_j, certificate: s.certificate };
                best = Some((r, t, out));
            }
        }
        for (xi, ai) in x.iter_mut().zip(&s.a) {
            *xi -= inner.eta * ai;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PvfimError::NumericalFailure {
                iteration: t,
                message: "non-finite upper iterate".into(),
            }
            .relocate(l, t));
        }
        prob.x_set().clamp_in_place(&mut x);
        warm_y = Some(s.y_k);
    }

    let t_end = inner.t_steps;
    match inner.selection {
        Selection::Practice => {
            let s = inner_step(prob, &x, params, inner, y0, warm_y.as_deref(), sigma)
                .map_err(|e| e.relocate(l, t_end))?;
            trace.push(row(l, t_end, &x, &s, params, inner));
            Ok(FneOutcome { x, y: s.y_k, f_j: s.lower.f_j, certificate: s.certificate })
        }
        Selection::Theory => {
            let (_, t_best, out) = best.ok_or_else(|| PvfimError::Internal("no inner iterate recorded".into()))?;
            let mut r = trace[first_row + t_best].clone();
            r.t = t_end;
            trace.push(r);
            Ok(out)
        }
    }
}

/// Solver-wide options that do not vary with `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub c0: f64,
    pub selection: Selection,
    pub warm_start: bool,
    /// Do not start a new outer iteration once this many function and
    /// gradient evaluations have been spent.
    pub max_evals: Option<u64>,
}

impl SolveOptions {
    pub fn new(c0: f64) -> Self {
        Self { c0, selection: Selection::Practice, warm_start: false, max_evals: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxOuter,
    Budget,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxOuter => "max_outer",
            StopReason::Budget => "budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub trace: SolveTrace,
    pub outer_iterations: usize,
    pub evaluations: u64,
    /// Cumulative evaluations after each outer iteration.
    pub outer_evaluations: Vec<u64>,
    pub stop: StopReason,
    /// Certificate of the last outer iterate at the last schedule entry.
    pub certificate: Option<FneCertificate>,
    /// The schedule entry of the last outer iteration.
    pub last_entry: Option<ScheduleEntry>,
}

/// Outer loop: for `l = 1, 2, ...` solve the `l`-th barrier problem from the
/// previous iterate until the iterates stop moving or a budget runs out.
///
/// On error the partial trace is returned alongside it.
pub fn pvfim(
    prob: &BilevelProblem,
    schedule: &OuterSchedule,
    options: &SolveOptions,
    x0: &[f64],
    y0: &[f64],
) -> std::result::Result<SolveResult, (PvfimError, SolveTrace)> {
    let fail = |e: PvfimError, rows: Vec<TraceRow>| (e, SolveTrace { rows });
    if let Err(e) = schedule.validate() {
        return Err(fail(e, Vec::new()));
    }
    let start_evals = prob.evaluations();
    let mut rows = Vec::new();
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut stop = StopReason::MaxOuter;
    let mut certificate = None;
    let mut last_entry = None;
    let mut outer = 0;
    let mut outer_evaluations = Vec::new();

    for l in 1..=schedule.l_max {
        if options.max_evals.is_some_and(|m| prob.evaluations() - start_evals >= m) {
            stop = StopReason::Budget;
            break;
        }
        let entry = match schedule.mode.entry(l) {
            Ok(e) => e,
            Err(e) => return Err(fail(e.relocate(l, 0), rows)),
        };
        let params = BarrierParams { tau: entry.tau, j: entry.j, c0: options.c0, alpha: entry.alpha };
        let inner = InnerConfig {
            t_steps: entry.t_steps,
            k_steps: entry.k_steps,
            beta: entry.beta,
            eta: entry.eta,
            selection: options.selection,
            warm_start: options.warm_start,
        };
        let warm = (l > 1 && options.warm_start).then_some(y.as_slice());
        let sigma = entry.sigma.unwrap_or(f64::NAN);
        let out = match find_fne(prob, &params, &inner, &x, y0, warm, sigma, l, &mut rows) {
            Ok(o) => o,
            Err(e) => return Err(fail(e, rows)),
        };
        let moved = (distance(&out.x, &x).powi(2) + distance(&out.y, &y).powi(2)).sqrt();
        x = out.x;
        y = out.y;
        certificate = Some(out.certificate);
        last_entry = Some(entry);
        outer = l;
        outer_evaluations.push(prob.evaluations() - start_evals);
        if moved <= schedule.stop_tol {
            stop = StopReason::Converged;
            break;
        }
    }

    Ok(SolveResult {
        x,
        y,
        trace: SolveTrace { rows },
        outer_iterations: outer,
        evaluations: prob.evaluations() - start_evals,
        outer_evaluations,
        stop,
        certificate,
        last_entry,
    })
}
