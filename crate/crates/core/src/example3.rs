//! The synthetic benchmark instance with a known solution.
//!
//! `X = [pi/2, 4 pi]`, `Y = [-40, 40] x [-20, 20]`,
//! `F(x, y) = -(y1 - x)^2 - (y2 - x/2)^2 + sin x`, `f(x, y) = (y1 - 2 y2)^2 + x`.
//!
//! The lower value function is `f*(x) = x` and the pessimistic value is
//! `phi_eps(x) = sin x`, attained at `y = (x, x/2)`. Global minimizers are
//! `x = 3 pi / 2` and `x = 7 pi / 2`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Matrix3;

use crate::error::Result;
use crate::problem::{BilevelProblem, BoxSet, LipschitzSpec, SmoothFunction, ValueBounds};

pub const X_LO: f64 = PI / 2.0;
pub const X_HI: f64 = 4.0 * PI;
pub const Y_LO: [f64; 2] = [-40.0, -20.0];
pub const Y_HI: [f64; 2] = [40.0, 20.0];

/// Margin used for the restricted set in the benchmark runs.
pub const MARGIN_C: f64 = 0.25;
/// Perturbation level used in the benchmark runs.
pub const DEFAULT_EPS: f64 = 0.5;

/// Upper objective `F`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Upper;

/// Lower objective `f`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lower;

impl SmoothFunction for Upper {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let x = x[0];
        let u = y[0] - x;
        let v = y[1] - 0.5 * x;
        -u * u - v * v + x.sin()
    }

    fn gradient(&self, x: &[f64], y: &[f64], grad_x: &mut [f64], grad_y: &mut [f64]) {
        let x = x[0];
        let u = y[0] - x;
        let v = y[1] - 0.5 * x;
        grad_x[0] = 2.0 * u + v + x.cos();
        grad_y[0] = -2.0 * u;
        grad_y[1] = -2.0 * v;
    }
}

impl SmoothFunction for Lower {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let r = y[0] - 2.0 * y[1];
        r * r + x[0]
    }

    fn gradient(&self, _x: &[f64], y: &[f64], grad_x: &mut [f64], grad_y: &mut [f64]) {
        let r = y[0] - 2.0 * y[1];
        grad_x[0] = 1.0;
        grad_y[0] = 2.0 * r;
        grad_y[1] = -4.0 * r;
    }
}

pub fn x_set() -> BoxSet {
    BoxSet::new(vec![X_LO], vec![X_HI]).expect("static box")
}

pub fn y_set() -> BoxSet {
    BoxSet::new(Y_LO.to_vec(), Y_HI.to_vec()).expect("static box")
}

pub fn example3_problem(eps: f64) -> Result<BilevelProblem> {
    BilevelProblem::new(
        "example3",
        Arc::new(Upper),
        Arc::new(Lower),
        x_set(),
        y_set(),
        eps,
    )
}

/// Closed-form interval `[lo, hi]` of `a*s + b*t` for `s in [s_lo, s_hi]`, `t in [t_lo, t_hi]`.
fn linear_range(a: f64, s: (f64, f64), b: f64, t: (f64, f64)) -> (f64, f64) {
    let (s0, s1) = (a * s.0, a * s.1);
    let (t0, t1) = (b * t.0, b * t.1);
    (s0.min(s1) + t0.min(t1), s0.max(s1) + t0.max(t1))
}

fn abs_max(r: (f64, f64)) -> f64 {
    r.0.abs().max(r.1.abs())
}

fn spectral_norm(m: Matrix3<f64>) -> f64 {
    m.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, e| acc.max(e.abs()))
}

/// Hessian of `F` in `(x, y1, y2)` as a function of `sin x`.
fn upper_hessian(sin_x: f64) -> Matrix3<f64> {
    Matrix3::new(
        -2.5 - sin_x, 2.0, 1.0, //
        2.0, -2.0, 0.0, //
        1.0, 0.0, -2.0,
    )
}

/// Constants of the benchmark instance. Gradient-norm suprema are bounded
/// coordinatewise with interval arithmetic over `X x Y`; Hessian constants come
/// from eigen-decompositions. The margin `c` is fixed at 0.25.
pub fn example3_lipschitz() -> LipschitzSpec {
    let xs = (X_LO, X_HI);
    let y1 = (Y_LO[0], Y_HI[0]);
    let y2 = (Y_LO[1], Y_HI[1]);

    // u = y1 - x, v = y2 - x/2, r = y1 - 2 y2
    let u = linear_range(1.0, y1, -1.0, xs);
    let v = linear_range(1.0, y2, -0.5, xs);
    let r = linear_range(1.0, y1, -2.0, y2);
    let (um, vm, rm) = (abs_max(u), abs_max(v), abs_max(r));

    // grad F = (2u + v + cos x, -2u, -2v)
    let h0 = ((2.0 * um + vm + 1.0).powi(2) + 4.0 * um * um + 4.0 * vm * vm).sqrt();
    // grad f = (1, 2r, -4r)
    let l0 = (1.0 + 20.0 * rm * rm).sqrt();

    // The spectral norm is convex in sin x, so its maximum over [-1, 1] is at an endpoint.
    let h1 = spectral_norm(upper_hessian(-1.0)).max(spectral_norm(upper_hessian(1.0)));

    let lower_hessian = Matrix3::new(
        0.0, 0.0, 0.0, //
        0.0, 2.0, -4.0, //
        0.0, -4.0, 8.0,
    );
    let l1 = spectral_norm(lower_hessian);

    // Hessian of F in y is -2 I.
    let mu = nalgebra::Matrix2::new(2.0, 0.0, 0.0, 2.0)
        .symmetric_eigen()
        .eigenvalues
        .min();

    LipschitzSpec {
        h0,
        h1,
        l0,
        l1,
        // grad_yx f and grad_yy f are constant
        l2: 0.0,
        l3: 0.0,
        mu,
        h: x_set().max_norm(),
        m: y_set().max_norm(),
        c: MARGIN_C,
    }
}

/// `min F` is attained at `x = 4 pi`, `y = (-40, -20)`; `max F = 1` at
/// `x = 5 pi / 2`, `y = (x, x/2)`; `max |f|` at `|y1 - 2 y2| = 80`, `x = 4 pi`.
pub fn example3_value_bounds() -> ValueBounds {
    let far1 = X_HI - Y_LO[0];
    let far2 = 0.5 * X_HI - Y_LO[1];
    ValueBounds {
        min_upper: -(far1 * far1 + far2 * far2),
        max_upper: 1.0,
        max_abs_lower: 6400.0 + X_HI,
    }
}

/// `f*(x) = x`.
pub fn lower_value_function(x: f64) -> f64 {
    x
}

/// `phi_eps(x) = F*(x) = sin x`.
pub fn pessimistic_value(x: f64) -> f64 {
    x.sin()
}

/// The unique pessimistic response `(x, x/2)`.
pub fn pessimistic_response(x: f64) -> [f64; 2] {
    [x, 0.5 * x]
}

/// Exact Euclidean projection of `y` onto `Y ∩ {y : f(x, y) <= level}`.
///
/// The sublevel set is the slab `|y1 - 2 y2| <= sqrt(level - x)`. When the slab
/// projection lands in `Y` it is also the projection onto the intersection;
/// otherwise `None` is returned.
pub fn project_sublevel_slab(x: f64, y: &[f64], level: f64) -> Option<[f64; 2]> {
    let width_sq = level - x;
    if width_sq < 0.0 {
        return None;
    }
    let width = width_sq.sqrt();
    let r = y[0] - 2.0 * y[1];
    let shift = if r > width {
        r - width
    } else if r < -width {
        r + width
    } else {
        0.0
    };
    // normal (1, -2) with squared norm 5
    let p = [y[0] - shift / 5.0, y[1] + 2.0 * shift / 5.0];
    y_set().contains(&p).then_some(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upper_value_at_solution() {
        let x = 1.5 * PI;
        let v = Upper.value(&[x], &[x, 0.75 * PI]);
        assert!((v - (-1.0)).abs() < 1e-15);
    }

    #[test]
    fn lower_value_on_zero_set() {
        for x in [2.0, 5.5, 11.0] {
            assert_eq!(Lower.value(&[x], &[3.0, 1.5]), x);
        }
    }

    #[test]
    fn lower_gradient_at_unit_point() {
        let e = Lower.evaluate(&[0.0], &[1.0, 0.0]);
        assert_eq!(e.grad_y, vec![2.0, -4.0]);
        assert_eq!(e.grad_x, vec![1.0]);
    }

    #[test]
    fn margin_is_quarter() {
        assert_eq!(example3_lipschitz().c, 0.25);
    }

    #[test]
    fn spec_is_valid_for_default_eps() {
        example3_lipschitz().validate(DEFAULT_EPS).unwrap();
    }

    #[test]
    fn norm_bounds() {
        let s = example3_lipschitz();
        assert_eq!(s.h, 4.0 * PI);
        assert_eq!(s.m, 2000f64.sqrt());
        assert_eq!(s.l0, 128_001f64.sqrt());
    }

    #[test]
    fn slab_projection_inside_is_identity() {
        let p = project_sublevel_slab(PI, &[0.6, 0.0], PI + 0.375).unwrap();
        assert_eq!(p, [0.6, 0.0]);
    }

    #[test]
    fn slab_projection_lands_on_boundary() {
        let level = PI + 0.375;
        let p = project_sublevel_slab(PI, &[3.0, 0.0], level).unwrap();
        let r = p[0] - 2.0 * p[1];
        assert!((r * r + PI - level).abs() < 1e-12);
    }
}
