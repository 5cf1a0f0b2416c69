//! Problem data: feasible boxes, smooth objective contracts, bilevel instances
//! and the structural constants consumed by the convergence theory.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{PvfimError, Result};

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Euclidean distance between two points of equal dimension.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// Rejects points with the wrong dimension or non-finite coordinates.
pub fn check_point(context: &'static str, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(PvfimError::DimensionMismatch {
            context,
            expected: dim,
            got: v.len(),
        });
    }
    if v.iter().any(|a| !a.is_finite()) {
        return Err(PvfimError::NonFinite(context.to_string()));
    }
    Ok(())
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(PvfimError::DimensionMismatch {
                context: "box bounds",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(PvfimError::InvalidArgument("box has dimension 0".into()));
        }
        if lo.iter().chain(&hi).any(|a| !a.is_finite()) {
            return Err(PvfimError::NonFinite("box bounds".into()));
        }
        if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
            return Err(PvfimError::InvalidArgument(format!(
                "empty box: lo[{i}] = {} > hi[{i}] = {}",
                lo[i], hi[i]
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// True when every coordinate lies strictly inside its interval.
    pub fn contains_interior(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *a < *v && *v < *b)
    }

    /// Largest Euclidean norm of a point in the box.
    pub fn max_norm(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| a.abs().max(b.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        distance(&self.lo, &self.hi)
    }

    /// In-place clamp; assumes the dimension was already checked.
    pub(crate) fn clamp_in_place(&self, p: &mut [f64]) {
        for (v, (a, b)) in p.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*a, *b);
        }
    }
}

/// Euclidean projection onto a box (a coordinatewise clamp).
pub fn project_box(p: &[f64], set: &BoxSet) -> Result<Vec<f64>> {
    check_point("projection input", p, set.dim())?;
    let mut out = p.to_vec();
    set.clamp_in_place(&mut out);
    Ok(out)
}

/// Value and both partial gradients of a smooth function at `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_y: Vec<f64>,
}

/// A twice continuously differentiable `f(x, y)` with analytic gradients.
///
/// Implementations must be pure: identical inputs give identical outputs and
/// concurrent calls from several threads are allowed.
pub trait SmoothFunction: Send + Sync {
    fn value(&self, x: &[f64], y: &[f64]) -> f64;

    /// Writes `grad_x f(x, y)` and `grad_y f(x, y)` into the given buffers.
    fn gradient(&self, x: &[f64], y: &[f64], grad_x: &mut [f64], grad_y: &mut [f64]);

    fn evaluate(&self, x: &[f64], y: &[f64]) -> Evaluation {
        let mut grad_x = vec![0.0; x.len()];
        let mut grad_y = vec![0.0; y.len()];
        self.gradient(x, y, &mut grad_x, &mut grad_y);
        Evaluation {
            value: self.value(x, y),
            grad_x,
            grad_y,
        }
    }
}

type ValueFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync;

/// Adapter turning a pair of closures into a [`SmoothFunction`].
pub struct ClosureFunction {
    value: Box<ValueFn>,
    gradient: Box<GradFn>,
}

impl ClosureFunction {
    pub fn new<V, G>(value: V, gradient: G) -> Self
    where
        V: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            value: Box::new(value),
            gradient: Box::new(gradient),
        }
    }
}

impl SmoothFunction for ClosureFunction {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.value)(x, y)
    }

    fn gradient(&self, x: &[f64], y: &[f64], grad_x: &mut [f64], grad_y: &mut [f64]) {
        (self.gradient)(x, y, grad_x, grad_y)
    }
}

/// A perturbed pessimistic bilevel instance
/// `min_x max_{y in S_eps(x)} F(x, y)` with `S_eps(x) = {y in Y : f(x, y) <= f*(x) + eps}`.
///
/// Every evaluation made through the accessor methods is tallied in a shared
/// counter so solvers can report their work.
#[derive(Clone)]
pub struct BilevelProblem {
    name: String,
    upper: Arc<dyn SmoothFunction>,
    lower: Arc<dyn SmoothFunction>,
    x_set: BoxSet,
    y_set: BoxSet,
    eps: f64,
    evaluations: Arc<AtomicU64>,
}

impl fmt::Debug for BilevelProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BilevelProblem")
            .field("name", &self.name)
            .field("x_set", &self.x_set)
            .field("y_set", &self.y_set)
            .field("eps", &self.eps)
            .finish_non_exhaustive()
    }
}

impl BilevelProblem {
    pub fn new(
        name: impl Into<String>,
        upper: Arc<dyn SmoothFunction>,
        lower: Arc<dyn SmoothFunction>,
        x_set: BoxSet,
        y_set: BoxSet,
        eps: f64,
    ) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(PvfimError::InvalidArgument(format!(
                "eps must be positive, got {eps}"
            )));
        }
        Ok(Self {
            name: name.into(),
            upper,
            lower,
            x_set,
            y_set,
            eps,
            evaluations: Arc::new(AtomicU64::new(0)),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn x_set(&self) -> &BoxSet {
        &self.x_set
    }

    pub fn y_set(&self) -> &BoxSet {
        &self.y_set
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n(&self) -> usize {
        self.x_set.dim()
    }

    pub fn m(&self) -> usize {
        self.y_set.dim()
    }

    /// Same functions and sets with a different perturbation level and a
    /// fresh evaluation counter.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.upper.clone(),
            self.lower.clone(),
            self.x_set.clone(),
            self.y_set.clone(),
            eps,
        )
    }

    /// Upper objective, bypassing the evaluation counter.
    pub fn upper_fn(&self) -> &dyn SmoothFunction {
        self.upper.as_ref()
    }

    /// Lower objective, bypassing the evaluation counter.
    pub fn lower_fn(&self) -> &dyn SmoothFunction {
        self.lower.as_ref()
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset_evaluations(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
    }

    fn tick(&self) {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
    }

    pub fn upper_value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.tick();
        self.upper.value(x, y)
    }

    pub fn lower_value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.tick();
        self.lower.value(x, y)
    }

    pub fn upper_eval(&self, x: &[f64], y: &[f64]) -> Evaluation {
        self.tick();
        self.upper.evaluate(x, y)
    }

    pub fn lower_eval(&self, x: &[f64], y: &[f64]) -> Evaluation {
        self.tick();
        self.lower.evaluate(x, y)
    }

    /// `grad_y f(x, y)` written into `out`.
    pub fn lower_grad_y(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.tick();
        let mut gx = vec![0.0; x.len()];
        self.lower.gradient(x, y, &mut gx, out);
    }

    pub(crate) fn check_x(&self, x: &[f64]) -> Result<()> {
        check_point("upper variable x", x, self.n())
    }

    pub(crate) fn check_y(&self, y: &[f64]) -> Result<()> {
        check_point("lower variable y", y, self.m())
    }
}

/// Lipschitz and structure constants of a bilevel instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzSpec {
    /// Lipschitz constant of `F`.
    pub h0: f64,
    /// Lipschitz constant of `grad F`.
    pub h1: f64,
    /// Lipschitz constant of `f`.
    pub l0: f64,
    /// Lipschitz constant of `grad f`.
    pub l1: f64,
    /// Lipschitz constant of the mixed Hessian `grad_yx f`.
    pub l2: f64,
    /// Lipschitz constant of `grad_yy f`.
    pub l3: f64,
    /// Strong-concavity modulus of `F(x, .)`.
    pub mu: f64,
    /// Norm bound on `X`.
    pub h: f64,
    /// Norm bound on `Y`.
    pub m: f64,
    /// Margin of the restricted feasible set.
    pub c: f64,
}

impl LipschitzSpec {
    pub fn validate(&self, eps: f64) -> Result<()> {
        let named = [
            ("h0", self.h0),
            ("h1", self.h1),
            ("L0", self.l0),
            ("L1", self.l1),
            ("L2", self.l2),
            ("L3", self.l3),
            ("mu", self.mu),
            ("H", self.h),
            ("M", self.m),
            ("c", self.c),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(PvfimError::InvalidArgument(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        for (name, v) in [("mu", self.mu), ("H", self.h), ("L1", self.l1), ("c", self.c)] {
            if v <= 0.0 {
                return Err(PvfimError::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.m <= 1.0 {
            return Err(PvfimError::InvalidArgument(format!(
                "M must exceed 1, got {}",
                self.m
            )));
        }
        let cap = (eps / 2.0).min(self.l0 * self.h).min(1.0);
        if self.c > cap {
            return Err(PvfimError::InvalidArgument(format!(
                "c = {} exceeds min(eps/2, L0*H, 1) = {cap}",
                self.c
            )));
        }
        Ok(())
    }
}

/// Global value bounds over `X x Y`: `min F`, `max F`, and `max |f|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueBounds {
    pub min_upper: f64,
    pub max_upper: f64,
    pub max_abs_lower: f64,
}
