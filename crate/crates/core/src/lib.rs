//! Perturbed value-function interior-point method for pessimistic bilevel problems
//!
//! `min_x max_{y in S_eps(x)} F(x, y)` with `S_eps(x)` the eps-optimal set of the
//! lower problem `min_y f(x, y)`. The lower value function is replaced by `J`
//! projected-descent steps, the eps-optimality constraint by a log barrier, and
//! the resulting minimax problem is solved by projected gradient descent-ascent.

// `!(a > b)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod barrier;
pub mod cli;
pub mod error;
pub mod example3;
pub mod expr;
pub mod oracle;
pub mod problem;
pub mod report;
pub mod schedule;
pub mod solver;

pub use analysis::{compute_constants, fd_gradient_check, stationarity_report, ConstantsReport, StationarityReport};
pub use barrier::{
    approx_lower_solution, barrier_eval, grad_estimate, in_restricted_set, restore_feasibility, BarrierEval,
    BarrierParams, GradientEstimate, LowerApprox,
};
pub use error::{PvfimError, Result};
pub use example3::{example3_lipschitz, example3_problem};
pub use oracle::{oracle_sweep, GridSpec, OracleConfig, OracleResult};
pub use problem::{project_box, BilevelProblem, BoxSet, LipschitzSpec, SmoothFunction, ValueBounds};
pub use schedule::{schedule_appendix_c, OuterSchedule, ScheduleEntry, ScheduleMode};
pub use solver::{check_fne, find_fne, pvfim, FneCertificate, InnerConfig, Selection, SolveOptions, SolveTrace};
