//! Per-outer-iteration parameter schedules.

use std::fmt;

use crate::analysis::{structural_constants, ConstantsReport};
use crate::error::{PvfimError, Result};
use crate::expr::Expr;
use crate::problem::{LipschitzSpec, ValueBounds};

/// Parameters of outer iteration `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEntry {
    /// Target accuracy; only the theory schedule sets it.
    pub sigma: Option<f64>,
    pub tau: f64,
    pub j: usize,
    pub t_steps: usize,
    pub k_steps: usize,
    pub eta: f64,
    pub beta: f64,
    pub alpha: f64,
}

impl ScheduleEntry {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PvfimError::ScheduleInvalid(m));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau = {} outside (0, 1)", self.tau));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s < 1.0) {
                return bad(format!("sigma = {s} outside (0, 1)"));
            }
        }
        if self.j == 0 || self.t_steps == 0 || self.k_steps == 0 {
            return bad("J, T and K must be at least 1".into());
        }
        for (name, v) in [("eta", self.eta), ("beta", self.beta), ("alpha", self.alpha)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be finite and nonnegative"));
            }
        }
        if self.eta == 0.0 {
            return bad("eta must be positive".into());
        }
        Ok(())
    }
}

pub const APPENDIX_C_ALPHA: f64 = 0.1;
pub const APPENDIX_C_BETA: f64 = 1e-4;

/// `tau = 0.999^l`, `J = l`, `T = ceil(0.999^-l)`, `K = 2l`, `alpha = 0.1`,
/// `beta = 1e-4`, `eta = 1 / (l^3 + 0.1)`.
pub fn schedule_appendix_c(l: usize) -> Result<ScheduleEntry> {
    if l == 0 {
        return Err(PvfimError::InvalidArgument("outer index starts at 1".into()));
    }
    let lf = l as f64;
    let t = (1.0 / 0.999_f64).powf(lf).ceil();
    Ok(ScheduleEntry {
        sigma: None,
        tau: 0.999_f64.powf(lf),
        j: l,
        t_steps: to_count("T", t)?,
        k_steps: 2 * l,
        eta: 1.0 / (lf.powi(3) + 0.1),
        beta: APPENDIX_C_BETA,
        alpha: APPENDIX_C_ALPHA,
    })
}

fn to_count(name: &str, v: f64) -> Result<usize> {
    if !v.is_finite() || v < 1.0 || v > usize::MAX as f64 || v >= 2f64.powi(53) {
        return Err(PvfimError::ScheduleInvalid(format!(
            "{name} = {v:e} is not an executable step count"
        )));
    }
    Ok(v as usize)
}

/// Rounds up, treating values within `1e-9` of an integer as that integer.
fn ceil_count(name: &str, v: f64) -> Result<usize> {
    let r = v.round();
    to_count(name, if (v - r).abs() <= 1e-9 { r } else { v.ceil() })
}

/// The theory schedule with `J = l + l0` and `q = 1 - mu / L_G`:
/// `sigma = sigma_bar(J) q^(J/2)`, `tau = q^J`, `T = q^-J`, `K = 2J`,
/// with stepsizes `alpha = 1/L1`, `beta = 1/L_G`, `eta = 1/(L_phi/2 + l2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem4Schedule {
    pub spec: LipschitzSpec,
    pub bounds: ValueBounds,
    pub eps: f64,
    pub l2: f64,
    pub l0: usize,
}

/// One theory-schedule entry in full precision, before rounding to step counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem4Entry {
    pub j: usize,
    pub sigma_bar: f64,
    pub sigma: f64,
    pub tau: f64,
    pub t_real: f64,
    pub k_real: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    /// Constants at `J`, with the accuracy bounds evaluated at `sigma`.
    pub constants: ConstantsReport,
}

impl Theorem4Entry {
    /// Checks the barrier-weight and step-count premises on the unrounded values.
    ///
    /// The schedule meets each bound with equality in exact arithmetic, so a
    /// relative slack of `1e-12` absorbs roundoff.
    pub fn premises_hold(&self) -> bool {
        let c = &self.constants;
        let slack = 1e-12;
        self.tau <= c.tau_bound * (1.0 + slack)
            && self.t_real >= c.t_min * (1.0 - slack)
            && self.k_real >= c.k_min - slack * c.k_min.abs().max(1.0)
    }

    /// Rounds `T` and `K` up; fails if they do not fit a step counter.
    pub fn to_entry(&self) -> Result<ScheduleEntry> {
        let e = ScheduleEntry {
            sigma: Some(self.sigma),
            tau: self.tau,
            j: self.j,
            t_steps: ceil_count("T", self.t_real)?,
            k_steps: ceil_count("K", self.k_real)?,
            eta: self.eta,
            beta: self.beta,
            alpha: self.alpha,
        };
        e.validate()?;
        Ok(e)
    }
}

impl Theorem4Schedule {
    pub fn entry(&self, l: usize) -> Result<Theorem4Entry> {
        if l == 0 || self.l0 == 0 {
            return Err(PvfimError::InvalidArgument("l and l0 must be at least 1".into()));
        }
        let j = l.checked_add(self.l0).ok_or_else(|| PvfimError::InvalidArgument("l + l0 overflows".into()))?;
        let base = structural_constants(&self.spec, &self.bounds, self.eps, j, self.l2)?;
        let ratio = self.spec.mu / base.l_g;
        if ratio >= 1.0 {
            return Err(PvfimError::ScheduleInvalid("1 - mu/L_G is not positive".into()));
        }
        let jf = j as f64;
        let ln_q = (-ratio).ln_1p();
        let q_j = (jf * ln_q).exp();
        let sigma_bar = sigma_bar(&self.spec, &base);
        let sigma = sigma_bar * (0.5 * jf * ln_q).exp();
        if !(sigma < 1.0) {
            return Err(PvfimError::ScheduleInvalid(format!(
                "sigma_{l} = {sigma:e} is not below 1; increase l0 (currently {})",
                self.l0
            )));
        }
        if !(q_j > 0.0) {
            return Err(PvfimError::ScheduleInvalid(format!("tau_{l} underflows to zero")));
        }
        Ok(Theorem4Entry {
            j,
            sigma_bar,
            sigma,
            tau: q_j,
            t_real: (-jf * ln_q).exp(),
            k_real: 2.0 * jf,
            alpha: 1.0 / self.spec.l1,
            beta: 1.0 / base.l_g,
            eta: 1.0 / (base.l_phi / 2.0 + self.l2),
            constants: base.at_sigma(&self.spec, sigma),
        })
    }

    /// `sigma_{1}` as a function of `l0`, or `None` if the constants are invalid.
    fn first_sigma(&self, l0: usize) -> Option<f64> {
        let s = Self { l0, ..*self };
        let j = l0 + 1;
        let base = structural_constants(&s.spec, &s.bounds, s.eps, j, s.l2).ok()?;
        let ln_q = (-s.spec.mu / base.l_g).ln_1p();
        Some(sigma_bar(&s.spec, &base) * (0.5 * j as f64 * ln_q).exp())
    }

    /// Smallest `l0` with `sigma_1 < 1`, found by doubling then bisection.
    ///
    /// Assumes `sigma_1(l0)` crosses 1 once from above, which holds because it is
    /// a polynomial in `l0` times a decaying exponential.
    pub fn min_valid_l0(&self) -> Result<usize> {
        let ok = |l0: usize| self.first_sigma(l0).is_some_and(|s| s < 1.0);
        if self.first_sigma(1).is_none() {
            return Err(PvfimError::InvalidArgument("constants are invalid".into()));
        }
        if ok(1) {
            return Ok(1);
        }
        let mut hi = 2usize;
        while !ok(hi) {
            hi = hi.checked_mul(2).filter(|h| *h < (1usize << 62)).ok_or_else(|| {
                PvfimError::ScheduleInvalid("no l0 makes sigma_1 < 1".into())
            })?;
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// `max{6 sqrt(H J L0 lbar / c), sqrt(9 M3 lbar), 6 lbar sqrt(M)}`.
fn sigma_bar(spec: &LipschitzSpec, c: &ConstantsReport) -> f64 {
    let jf = c.j as f64;
    let a = 6.0 * (spec.h * jf * spec.l0 * c.lbar_j / spec.c).sqrt();
    let b = (9.0 * c.m3 * c.lbar_j).sqrt();
    let d = 6.0 * c.lbar_j * spec.m.sqrt();
    a.max(b).max(d)
}

/// A schedule given as `key=expression` pairs, e.g. `T=2,J=l,K=2l`.
///
/// Keys: `tau J T K eta beta alpha sigma`. Missing keys take their `appendix_c`
/// formulas. Integer quantities are rounded up.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomSchedule {
    pub tau: Expr,
    pub j: Expr,
    pub t: Expr,
    pub k: Expr,
    pub eta: Expr,
    pub beta: Expr,
    pub alpha: Expr,
    pub sigma: Option<Expr>,
}

impl Default for CustomSchedule {
    fn default() -> Self {
        let e = |s: &str| Expr::parse(s).expect("static expression");
        Self {
            tau: e("0.999^l"),
            j: e("l"),
            t: e("ceil((1/0.999)^l)"),
            k: e("2l"),
            eta: e("1/(l^3 + 0.1)"),
            beta: e("1e-4"),
            alpha: e("0.1"),
            sigma: None,
        }
    }
}

impl CustomSchedule {
    pub fn parse(spec: &str) -> Result<Self> {
        let body = spec.trim();
        let body = body.strip_prefix("custom:").unwrap_or(body);
        let mut out = Self::default();
        for part in split_top_level(body) {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (key, value) = part.split_once('=').ok_or_else(|| {
                PvfimError::InvalidArgument(format!("schedule item '{part}' is not key=expression"))
            })?;
            let e = Expr::parse(value)?;
            match key.trim() {
                "tau" => out.tau = e,
                "J" | "j" => out.j = e,
                "T" | "t" => out.t = e,
                "K" | "k" => out.k = e,
                "eta" => out.eta = e,
                "beta" => out.beta = e,
                "alpha" => out.alpha = e,
                "sigma" => out.sigma = Some(e),
                other => {
                    return Err(PvfimError::InvalidArgument(format!(
                        "unknown schedule key '{other}'"
                    )))
                }
            }
        }
        Ok(out)
    }

    pub fn entry(&self, l: usize) -> Result<ScheduleEntry> {
        if l == 0 {
            return Err(PvfimError::InvalidArgument("outer index starts at 1".into()));
        }
        let e = ScheduleEntry {
            sigma: self.sigma.as_ref().map(|s| s.eval(l)),
            tau: self.tau.eval(l),
            j: ceil_count("J", self.j.eval(l))?,
            t_steps: ceil_count("T", self.t.eval(l))?,
            k_steps: ceil_count("K", self.k.eval(l))?,
            eta: self.eta.eval(l),
            beta: self.beta.eval(l),
            alpha: self.alpha.eval(l),
        };
        e.validate()?;
        Ok(e)
    }
}

impl fmt::Display for CustomSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "custom:tau={};J={};T={};K={};eta={};beta={};alpha={}",
            self.tau, self.j, self.t, self.k, self.eta, self.beta, self.alpha
        )?;
        if let Some(s) = &self.sigma {
            write!(f, ";sigma={s}")?;
        }
        Ok(())
    }
}

/// Splits on `,` or `;` outside parentheses so `max(l, 3)` stays whole.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' | ';' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum ScheduleMode {
    AppendixC,
    Theorem4(Theorem4Schedule),
    Custom(CustomSchedule),
}

impl ScheduleMode {
    pub fn entry(&self, l: usize) -> Result<ScheduleEntry> {
        match self {
            ScheduleMode::AppendixC => schedule_appendix_c(l),
            ScheduleMode::Theorem4(s) => s.entry(l)?.to_entry(),
            ScheduleMode::Custom(s) => s.entry(l),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ScheduleMode::AppendixC => "appendix_c".into(),
            ScheduleMode::Theorem4(s) => format!("theorem4(l0={}, l2={})", s.l0, s.l2),
            ScheduleMode::Custom(s) => s.to_string(),
        }
    }
}

/// The outer loop: a schedule plus stopping rules.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterSchedule {
    pub mode: ScheduleMode,
    pub l_max: usize,
    /// Stop once successive `(x_l, y_l)` move less than this.
    pub stop_tol: f64,
}

pub const DEFAULT_L_MAX: usize = 5000;
pub const DEFAULT_STOP_TOL: f64 = 1e-6;

impl OuterSchedule {
    pub fn new(mode: ScheduleMode) -> Self {
        Self { mode, l_max: DEFAULT_L_MAX, stop_tol: DEFAULT_STOP_TOL }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_max == 0 {
            return Err(PvfimError::InvalidArgument("lmax must be at least 1".into()));
        }
        if !(self.stop_tol.is_finite() && self.stop_tol > 0.0) {
            return Err(PvfimError::InvalidArgument(format!(
                "stop tolerance must be positive, got {}",
                self.stop_tol
            )));
        }
        Ok(())
    }
}
