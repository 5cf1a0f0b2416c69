//! Brute-force reference values: `f*(x)`, `F*(x)` and the pessimistic value by
//! grid enumeration over `Y`, local refinement and projected polishing.

use rayon::prelude::*;

use crate::analysis::ValueOracle;
use crate::error::{PvfimError, Result};
use crate::problem::{distance, BilevelProblem, BoxSet, LipschitzSpec};

/// Points per dimension of each local refinement grid.
const REFINE_POINTS: usize = 21;
/// Highest lower-level dimension the oracle will enumerate.
const MAX_GRID_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    /// Grid points per dimension of `X`.
    pub x_points: usize,
    /// Grid points per dimension of `Y`.
    pub y_points_per_dim: usize,
    /// Local refinement rounds around each incumbent; each shrinks the cell tenfold.
    pub refine_rounds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { x_points: 2001, y_points_per_dim: 401, refine_rounds: 3 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.x_points < 2 || self.y_points_per_dim < 2 {
            return Err(PvfimError::InvalidArgument(format!(
                "grid needs at least 2 points per dimension, got x={} y={}",
                self.x_points, self.y_points_per_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub grid: GridSpec,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
    /// Step of the lower-level polish, normally `1 / L1`.
    pub lower_step: f64,
    /// Step of the upper-level polish, normally `1 / h1`.
    pub upper_step: f64,
    pub polish_steps: usize,
}

impl OracleConfig {
    pub fn new(grid: GridSpec, spec: &LipschitzSpec) -> Self {
        Self {
            grid,
            workers: None,
            lower_step: 1.0 / spec.l1,
            upper_step: if spec.h1 > 0.0 { 1.0 / spec.h1 } else { 1.0 },
            polish_steps: 10_000,
        }
    }

    fn validate(&self, prob: &BilevelProblem) -> Result<()> {
        self.grid.validate()?;
        if prob.m() > MAX_GRID_DIM {
            return Err(PvfimError::InvalidArgument(format!(
                "oracle enumerates at most {MAX_GRID_DIM} lower dimensions, problem has {}",
                prob.m()
            )));
        }
        if self.workers == Some(0) {
            return Err(PvfimError::InvalidArgument("workers must be at least 1".into()));
        }
        for (name, v) in [("lower step", self.lower_step), ("upper step", self.upper_step)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PvfimError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Reference values at one `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePoint {
    pub x: Vec<f64>,
    /// `min_{y in Y} f(x, y)`.
    pub f_star: f64,
    pub y_lower: Vec<f64>,
    /// `max { F(x, y) : y in Y, f(x, y) <= f*(x) + eps }`.
    pub big_f_star: f64,
    /// The pessimistic value; equal to `big_f_star`.
    pub phi_eps: f64,
    pub y_argmax: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// One entry per `X` grid point, in lexicographic grid order.
    pub points: Vec<OraclePoint>,
    pub phi_min: f64,
    pub x_argmin: Vec<f64>,
    pub y_at_min: Vec<f64>,
    /// Width of one `X` grid cell per dimension.
    pub x_cell: Vec<f64>,
}

fn grid_coord(lo: f64, hi: f64, i: usize, points: usize) -> f64 {
    if i + 1 == points {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (points - 1) as f64
    }
}

/// Visits every point of the tensor grid with `points` per dimension.
fn for_each_grid_point(set: &BoxSet, points: usize, mut visit: impl FnMut(usize, &[f64])) {
    let d = set.dim();
    let mut idx = vec![0usize; d];
    let mut p: Vec<f64> = set.lo().to_vec();
    let total = points.pow(d as u32);
    for flat in 0..total {
        for k in 0..d {
            p[k] = grid_coord(set.lo()[k], set.hi()[k], idx[k], points);
        }
        visit(flat, &p);
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < points {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Local box of half-width `half` around `center`, clipped to `set`.
fn local_box(center: &[f64], half: &[f64], set: &BoxSet) -> BoxSet {
    let lo = center.iter().zip(half).zip(set.lo()).map(|((c, h), l)| (c - h).max(*l)).collect();
    let hi = center.iter().zip(half).zip(set.hi()).map(|((c, h), u)| (c + h).min(*u)).collect();
    BoxSet::new(lo, hi).expect("clipped box around a member point")
}

fn cell_widths(set: &BoxSet, points: usize) -> Vec<f64> {
    set.lo().iter().zip(set.hi()).map(|(l, h)| (h - l) / (points - 1) as f64).collect()
}

/// Computes the reference values at `x`. `buf` is scratch space reused across calls.
pub fn oracle_at(prob: &BilevelProblem, x: &[f64], cfg: &OracleConfig, buf: &mut Vec<f64>) -> Result<OraclePoint> {
    cfg.validate(prob)?;
    prob.check_x(x)?;
    let (upper, lower, ys) = (prob.upper_fn(), prob.lower_fn(), prob.y_set());
    let m = prob.m();
    let pts = cfg.grid.y_points_per_dim;

    // lower minimum over the grid
    buf.clear();
    buf.resize(pts.pow(m as u32), 0.0);
    let mut f_best = f64::INFINITY;
    let mut y_lower = ys.lo().to_vec();
    for_each_grid_point(ys, pts, |i, y| {
        let v = lower.value(x, y);
        buf[i] = v;
        if v < f_best {
            f_best = v;
            y_lower.copy_from_slice(y);
        }
    });

    let mut half = cell_widths(ys, pts);
    for _ in 0..cfg.grid.refine_rounds {
        let local = local_box(&y_lower, &half, ys);
        let mut cand = y_lower.clone();
        for_each_grid_point(&local, REFINE_POINTS, |_, y| {
            let v = lower.value(x, y);
            if v < f_best {
                f_best = v;
                cand.copy_from_slice(y);
            }
        });
        y_lower = cand;
        half.iter_mut().for_each(|h| *h /= 10.0);
    }

    // projected gradient polish of the lower problem
    let mut y = y_lower.clone();
    let (mut gx, mut gy) = (vec![0.0; prob.n()], vec![0.0; m]);
    for _ in 0..cfg.polish_steps {
        lower.gradient(x, &y, &mut gx, &mut gy);
        let mut next: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - cfg.lower_step * g).collect();
        ys.clamp_in_place(&mut next);
        let moved = distance(&next, &y);
        y = next;
        let v = lower.value(x, &y);
        if v < f_best {
            f_best = v;
            y_lower.copy_from_slice(&y);
        }
        if moved <= 1e-15 * (1.0 + y.iter().fold(0.0f64, |a, b| a.max(b.abs()))) {
            break;
        }
    }
    let f_star = f_best;
    if !f_star.is_finite() {
        return Err(PvfimError::Internal(format!("non-finite lower minimum at x = {x:?}")));
    }

    // constrained maximum of the upper objective
    let level = f_star + prob.eps();
    let feasible = |y: &[f64]| lower.value(x, y) <= level;
    let mut big_best = upper.value(x, &y_lower);
    let mut y_arg = y_lower.clone();
    for_each_grid_point(ys, pts, |i, y| {
        if buf[i] <= level {
            let v = upper.value(x, y);
            if v > big_best {
                big_best = v;
                y_arg.copy_from_slice(y);
            }
        }
    });

    let mut half = cell_widths(ys, pts);
    for _ in 0..cfg.grid.refine_rounds {
        let local = local_box(&y_arg, &half, ys);
        let mut cand = y_arg.clone();
        for_each_grid_point(&local, REFINE_POINTS, |_, y| {
            if feasible(y) {
                let v = upper.value(x, y);
                if v > big_best {
                    big_best = v;
                    cand.copy_from_slice(y);
                }
            }
        });
        y_arg = cand;
        half.iter_mut().for_each(|h| *h /= 10.0);
    }

    // projected ascent with bisection back onto the sublevel set
    let mut y = y_arg.clone();
    for _ in 0..cfg.polish_steps {
        upper.gradient(x, &y, &mut gx, &mut gy);
        let mut trial: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a + cfg.upper_step * g).collect();
        ys.clamp_in_place(&mut trial);
        if !feasible(&trial) {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let p: Vec<f64> = y.iter().zip(&trial).map(|(a, b)| a + mid * (b - a)).collect();
                if feasible(&p) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            trial = y.iter().zip(&trial).map(|(a, b)| a + lo * (b - a)).collect();
        }
        let moved = distance(&trial, &y);
        y = trial;
        let v = upper.value(x, &y);
        if v > big_best {
            big_best = v;
            y_arg.copy_from_slice(&y);
        }
        if moved <= 1e-15 * (1.0 + y.iter().fold(0.0f64, |a, b| a.max(b.abs()))) {
            break;
        }
    }
    if !big_best.is_finite() {
        return Err(PvfimError::Internal(format!("no finite eps-feasible value at x = {x:?}")));
    }

    Ok(OraclePoint {
        x: x.to_vec(),
        f_star,
        y_lower,
        big_f_star: big_best,
        phi_eps: big_best,
        y_argmax: y_arg,
    })
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    b.build().map_err(|e| PvfimError::Internal(format!("thread pool: {e}")))
}

fn evaluate_all(prob: &BilevelProblem, xs: &[Vec<f64>], cfg: &OracleConfig) -> Result<Vec<OraclePoint>> {
    xs.par_iter()
        .map_init(Vec::new, |buf, x| oracle_at(prob, x, cfg, buf))
        .collect()
}

/// Sweeps the `X` grid, then refines the global minimizer of the pessimistic value.
pub fn oracle_sweep(prob: &BilevelProblem, cfg: &OracleConfig) -> Result<OracleResult> {
    cfg.validate(prob)?;
    let xset = prob.x_set();
    let mut xs = Vec::new();
    for_each_grid_point(xset, cfg.grid.x_points, |_, x| xs.push(x.to_vec()));
    let pool = pool(cfg.workers)?;

    pool.install(|| {
        let points = evaluate_all(prob, &xs, cfg)?;
        let best = points
            .iter()
            .min_by(|a, b| a.phi_eps.total_cmp(&b.phi_eps))
            .ok_or_else(|| PvfimError::Internal("empty grid".into()))?;
        let (mut phi_min, mut x_argmin, mut y_at_min) = (best.phi_eps, best.x.clone(), best.y_argmax.clone());

        let x_cell = cell_widths(xset, cfg.grid.x_points);
        let mut half = x_cell.clone();
        for _ in 0..cfg.grid.refine_rounds {
            let local = local_box(&x_argmin, &half, xset);
            let mut cand = Vec::new();
            for_each_grid_point(&local, REFINE_POINTS, |_, x| cand.push(x.to_vec()));
            for p in evaluate_all(prob, &cand, cfg)? {
                if p.phi_eps < phi_min {
                    phi_min = p.phi_eps;
                    x_argmin = p.x;
                    y_at_min = p.y_argmax;
                }
            }
            half.iter_mut().for_each(|h| *h /= 10.0);
        }
        Ok(OracleResult { points, phi_min, x_argmin, y_at_min, x_cell })
    })
}

/// Pointwise [`ValueOracle`] backed by the grid search.
#[derive(Debug, Clone)]
pub struct GridOracle {
    pub problem: BilevelProblem,
    pub config: OracleConfig,
}

impl ValueOracle for GridOracle {
    fn lower_value(&self, x: &[f64]) -> Result<f64> {
        Ok(oracle_at(&self.problem, x, &self.config, &mut Vec::new())?.f_star)
    }

    fn pessimistic_value(&self, x: &[f64]) -> Result<f64> {
        Ok(oracle_at(&self.problem, x, &self.config, &mut Vec::new())?.big_f_star)
    }
}
