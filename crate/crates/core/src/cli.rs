//! The `pvfim` command line: `solve`, `oracle`, `constants` and `certify`.
//!
//! Every option can also come from a `key = value` file given by `--config`;
//! flags on the command line win over the file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{compute_constants, stationarity_report, Example3Oracle, Tolerances, ValueOracle};
use crate::error::PvfimError;
use crate::example3::{example3_lipschitz, example3_problem, example3_value_bounds, DEFAULT_EPS};
use crate::oracle::{oracle_sweep, GridOracle, GridSpec, OracleConfig};
use crate::problem::{BilevelProblem, LipschitzSpec, ValueBounds};
use crate::report::{self, fmt_f64, fmt_vec};
use crate::schedule::{CustomSchedule, OuterSchedule, ScheduleMode, Theorem4Schedule, DEFAULT_L_MAX, DEFAULT_STOP_TOL};
use crate::solver::{pvfim, Selection, SolveOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CERTIFY: i32 = 4;

const DEFAULT_X0: f64 = 3.03;
const DEFAULT_Y0: [f64; 2] = [0.0, 9.0];

#[derive(Debug, Parser)]
#[command(name = "pvfim", version, about = "Interior-point solver for perturbed pessimistic bilevel problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the solver and write a per-step trace.
    Solve(SolveArgs),
    /// Brute-force reference values over a grid.
    Oracle(OracleArgs),
    /// Print the theory constants and check proposed parameters.
    Constants(ConstantsArgs),
    /// Terminal stationarity certificate of a candidate point.
    Certify(CertifyArgs),
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// Problem instance (only `example3` is built in).
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<f64>,
    /// Restricted-set margin; defaults to eps / 2.
    #[arg(long, allow_hyphen_values = true)]
    pub c0: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// File of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct GridArgs {
    #[arg(long)]
    pub grid_x: Option<usize>,
    #[arg(long)]
    pub grid_y: Option<usize>,
    #[arg(long)]
    pub refine: Option<usize>,
    /// Worker threads for the grid sweep.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub grid: GridArgs,
    /// `appendix_c`, `theorem4`, or `custom:KEY=EXPR,...`.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<String>,
    #[arg(long)]
    pub lmax: Option<usize>,
    #[arg(long)]
    pub stop_tol: Option<f64>,
    /// Evaluation budget; no new outer iteration starts once it is spent.
    #[arg(long)]
    pub max_evals: Option<u64>,
    /// `practice` or `theory`.
    #[arg(long)]
    pub selection: Option<String>,
    #[arg(long)]
    pub warm_start: Option<bool>,
    /// Offset of the theory schedule; defaults to the smallest valid one.
    #[arg(long)]
    pub l0: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// Certify the final iterate and exit with 4 if it is not stationary.
    #[arg(long)]
    pub certify: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "J")]
    pub j: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// Proposed barrier weight to check.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Proposed number of upper steps to check.
    #[arg(long = "T")]
    pub t: Option<f64>,
    /// Proposed number of ascent steps to check.
    #[arg(long = "K")]
    pub k: Option<f64>,
    #[arg(long)]
    pub h0: Option<f64>,
    #[arg(long)]
    pub h1: Option<f64>,
    #[arg(long)]
    pub lip_l0: Option<f64>,
    #[arg(long)]
    pub lip_l1: Option<f64>,
    #[arg(long)]
    pub lip_l2: Option<f64>,
    #[arg(long)]
    pub lip_l3: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub bound_h: Option<f64>,
    #[arg(long)]
    pub bound_m: Option<f64>,
    #[arg(long)]
    pub margin_c: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub xbar: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub ybar: Option<String>,
    /// Take the candidate from the last row of a trace file.
    #[arg(long)]
    pub from_trace: Option<PathBuf>,
    /// `grid` (brute force) or `analytic` (closed form, example3 only).
    #[arg(long)]
    pub oracle: Option<String>,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Self { code: EXIT_CONFIG, message: format!("{}: {e}", path.display()) }
    }
}

impl From<PvfimError> for CliError {
    fn from(e: PvfimError) -> Self {
        let code = if e.is_config_error() { EXIT_CONFIG } else { EXIT_NUMERICAL };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `1.5`, `0,9` or `0 9` into a vector.
pub fn parse_vector(s: &str) -> std::result::Result<Vec<f64>, String> {
    let v: std::result::Result<Vec<f64>, _> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .map(str::parse::<f64>)
        .collect();
    match v {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("'{s}' is not a list of numbers")),
    }
}

const FILE_KEYS: &[&str] = &[
    "problem", "eps", "c0", "out", "schedule", "x0", "y0", "lmax", "stop-tol", "max-evals", "selection",
    "warm-start", "l0", "l2", "certify", "grid-x", "grid-y", "refine", "workers", "J", "sigma", "tau", "T", "K",
    "h0", "h1", "lip-l0", "lip-l1", "lip-l2", "lip-l3", "mu", "bound-h", "bound-m", "margin-c", "xbar", "ybar",
    "from-trace", "oracle",
];

/// Values read from a `--config` file, with their line numbers.
#[derive(Debug, Default)]
struct FileConfig {
    path: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut entries = BTreeMap::new();
        let name = path.display().to_string();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("{name}:{line_no}: expected key = value")))?;
            let key = k.trim().replace('_', "-");
            if !FILE_KEYS.contains(&key.as_str()) {
                return Err(CliError::config(format!("{name}:{line_no}: unknown key '{}'", k.trim())));
            }
            if entries.insert(key, (v.trim().to_string(), line_no)).is_some() {
                return Err(CliError::config(format!("{name}:{line_no}: duplicate key '{}'", k.trim())));
            }
        }
        Ok(Self { path: name, entries })
    }

    fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| {
                CliError::config(format!("{}:{line}: invalid value '{v}' for {key}: {e}", self.path))
            }),
        }
    }

    fn get_vec(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => parse_vector(v)
                .map(Some)
                .map_err(|e| CliError::config(format!("{}:{line}: {key}: {e}", self.path))),
        }
    }

    /// Flag value if given, otherwise the file value.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    fn pick_vec(&self, flag: &Option<String>, key: &str) -> CliResult<Option<Vec<f64>>> {
        match flag {
            Some(s) => parse_vector(s).map(Some).map_err(|e| CliError::config(format!("--{key}: {e}"))),
            None => self.get_vec(key),
        }
    }
}

/// Problem-level settings shared by all commands.
struct Resolved {
    problem: BilevelProblem,
    spec: LipschitzSpec,
    bounds: ValueBounds,
    eps: f64,
    c0: f64,
    out: Option<PathBuf>,
}

fn resolve_common(c: &Common, file: &FileConfig) -> CliResult<Resolved> {
    let name = file.pick(c.problem.clone(), "problem")?.unwrap_or_else(|| "example3".into());
    if name != "example3" {
        return Err(CliError::config(format!("unknown problem '{name}' (available: example3)")));
    }
    let eps = file.pick(c.eps, "eps")?.unwrap_or(DEFAULT_EPS);
    if !(eps.is_finite() && eps > 0.0) {
        return Err(CliError::config(format!("eps must be positive (eps > 0), got {eps}")));
    }
    let c0 = file.pick(c.c0, "c0")?.unwrap_or(eps / 2.0);
    if !(c0.is_finite() && c0 > 0.0 && c0 <= eps) {
        return Err(CliError::config(format!("c0 must satisfy 0 < c0 <= eps, got {c0}")));
    }
    let out = match &c.out {
        Some(p) => Some(p.clone()),
        None => file.get::<String>("out")?.map(PathBuf::from),
    };
    Ok(Resolved {
        problem: example3_problem(eps)?,
        spec: example3_lipschitz(),
        bounds: example3_value_bounds(),
        eps,
        c0,
        out,
    })
}

fn resolve_grid(g: &GridArgs, file: &FileConfig, spec: &LipschitzSpec) -> CliResult<OracleConfig> {
    let d = GridSpec::default();
    let grid = GridSpec {
        x_points: file.pick(g.grid_x, "grid-x")?.unwrap_or(d.x_points),
        y_points_per_dim: file.pick(g.grid_y, "grid-y")?.unwrap_or(d.y_points_per_dim),
        refine_rounds: file.pick(g.refine, "refine")?.unwrap_or(d.refine_rounds),
    };
    grid.validate()?;
    let mut cfg = OracleConfig::new(grid, spec);
    cfg.workers = file.pick(g.workers, "workers")?;
    if cfg.workers == Some(0) {
        return Err(CliError::config("workers must be at least 1"));
    }
    Ok(cfg)
}

fn open_out(path: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn io_err(e: io::Error) -> CliError {
    CliError::config(format!("write failed: {e}"))
}

fn check_inside(prob: &BilevelProblem, x: &[f64], y: &[f64], what: &str) -> CliResult<()> {
    if x.len() != prob.n() || y.len() != prob.m() {
        return Err(CliError::config(format!(
            "{what}: expected x of length {} and y of length {}",
            prob.n(),
            prob.m()
        )));
    }
    if !prob.x_set().contains(x) || !prob.y_set().contains(y) {
        return Err(CliError::config(format!("{what} lies outside X x Y")));
    }
    Ok(())
}

fn parse_schedule(
    s: &str,
    r: &Resolved,
    l0: Option<usize>,
    l2: f64,
) -> CliResult<ScheduleMode> {
    match s.trim() {
        "appendix_c" => Ok(ScheduleMode::AppendixC),
        "theorem4" => {
            r.spec.validate(r.eps)?;
            let mut t4 = Theorem4Schedule { spec: r.spec, bounds: r.bounds, eps: r.eps, l2, l0: 1 };
            t4.l0 = match l0 {
                Some(v) => v,
                None => t4.min_valid_l0()?,
            };
            Ok(ScheduleMode::Theorem4(t4))
        }
        other if other.starts_with("custom:") || other.contains('=') => {
            Ok(ScheduleMode::Custom(CustomSchedule::parse(other)?))
        }
        other => Err(CliError::config(format!(
            "unknown schedule '{other}' (appendix_c, theorem4, custom:...)"
        ))),
    }
}

fn make_oracle(kind: &str, r: &Resolved, cfg: OracleConfig) -> CliResult<Box<dyn ValueOracle>> {
    match kind {
        "grid" => Ok(Box::new(GridOracle { problem: r.problem.clone(), config: cfg })),
        "analytic" => Ok(Box::new(Example3Oracle)),
        other => Err(CliError::config(format!("unknown oracle '{other}' (grid, analytic)"))),
    }
}

/// Pointwise certification needs only one `x`, so the `X` grid is irrelevant.
fn certify_oracle_config(g: &GridArgs, file: &FileConfig, spec: &LipschitzSpec) -> CliResult<OracleConfig> {
    let mut cfg = resolve_grid(g, file, spec)?;
    cfg.grid.x_points = cfg.grid.x_points.max(2);
    Ok(cfg)
}

fn stationarity_text(r: &crate::analysis::StationarityReport) -> Vec<String> {
    vec![
        format!("grad_F_x_norm = {}", fmt_f64(r.grad_upper_x_norm)),
        format!("grad_F_y_norm = {}", fmt_f64(r.grad_upper_y_norm)),
        format!("lower_residual = {}", fmt_f64(r.lower_residual)),
        format!("upper_residual = {}", fmt_f64(r.upper_residual)),
        format!(
            "multipliers = ({}, {}, {})",
            r.multipliers.lambda1, r.multipliers.lambda2, r.multipliers.lambda3
        ),
        format!("stationary = {}", r.is_stationary),
    ]
}

fn cmd_solve(a: &SolveArgs) -> CliResult<i32> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let r = resolve_common(&a.common, &file)?;
    let x0 = file.pick_vec(&a.x0, "x0")?.unwrap_or_else(|| vec![DEFAULT_X0]);
    let y0 = file.pick_vec(&a.y0, "y0")?.unwrap_or_else(|| DEFAULT_Y0.to_vec());
    check_inside(&r.problem, &x0, &y0, "initial point")?;

    let l2 = file.pick(a.l2, "l2")?.unwrap_or(0.5);
    let sched_text = file.pick(a.schedule.clone(), "schedule")?.unwrap_or_else(|| "appendix_c".into());
    let mode = parse_schedule(&sched_text, &r, file.pick(a.l0, "l0")?, l2)?;
    let mut schedule = OuterSchedule::new(mode);
    schedule.l_max = file.pick(a.lmax, "lmax")?.unwrap_or(DEFAULT_L_MAX);
    schedule.stop_tol = file.pick(a.stop_tol, "stop-tol")?.unwrap_or(DEFAULT_STOP_TOL);
    schedule.validate()?;

    let mut opts = SolveOptions::new(r.c0);
    opts.selection = match file.pick(a.selection.clone(), "selection")?.as_deref() {
        None | Some("practice") => Selection::Practice,
        Some("theory") => Selection::Theory,
        Some(other) => return Err(CliError::config(format!("unknown selection '{other}'"))),
    };
    opts.warm_start = file.pick(a.warm_start, "warm-start")?.unwrap_or(false);
    opts.max_evals = file.pick(a.max_evals, "max-evals")?;
    let certify = a.certify || file.get::<bool>("certify")?.unwrap_or(false);
    let oracle_cfg = if certify { Some(certify_oracle_config(&a.grid, &file, &r.spec)?) } else { None };

    let header = vec![
        ("command".to_string(), "solve".to_string()),
        ("problem".into(), r.problem.name().to_string()),
        ("eps".into(), fmt_f64(r.eps)),
        ("c0".into(), fmt_f64(r.c0)),
        ("schedule".into(), schedule.mode.describe()),
        ("x0".into(), fmt_vec(&x0)),
        ("y0".into(), fmt_vec(&y0)),
        ("lmax".into(), schedule.l_max.to_string()),
        ("stop_tol".into(), fmt_f64(schedule.stop_tol)),
        ("selection".into(), format!("{:?}", opts.selection).to_lowercase()),
        ("warm_start".into(), opts.warm_start.to_string()),
        ("max_evals".into(), opts.max_evals.map_or("none".into(), |v| v.to_string())),
        ("certify".into(), certify.to_string()),
    ];

    let mut out = open_out(&r.out)?;
    report::write_header(&mut out, "trace", &header).map_err(io_err)?;
    let (n, m) = (r.problem.n(), r.problem.m());
    let res = match pvfim(&r.problem, &schedule, &opts, &x0, &y0) {
        Ok(res) => res,
        Err((e, partial)) => {
            report::write_trace(&mut out, &partial, n, m).map_err(io_err)?;
            out.flush().map_err(io_err)?;
            return Err(e.into());
        }
    };
    report::write_trace(&mut out, &res.trace, n, m).map_err(io_err)?;
    out.flush().map_err(io_err)?;

    let mut summary: Vec<String> = vec![
        format!("x = {}", fmt_vec(&res.x)),
        format!("y = {}", fmt_vec(&res.y)),
        format!("outer_iterations = {}", res.outer_iterations),
        format!("evaluations = {}", res.evaluations),
        format!("stop = {}", res.stop.as_str()),
    ];
    if let Some(c) = res.certificate {
        summary.push(format!("x_gap = {}", fmt_f64(c.x_gap)));
        summary.push(format!("y_grad_norm = {}", fmt_f64(c.y_grad_norm)));
        summary.push(format!("slack = {}", fmt_f64(c.slack)));
    }
    let mut code = EXIT_OK;
    if let Some(cfg) = oracle_cfg {
        let oracle = make_oracle("grid", &r, cfg)?;
        let rep = stationarity_report(&r.problem, &res.x, &res.y, oracle.as_ref(), Tolerances::default())?;
        summary.extend(stationarity_text(&rep));
        if !rep.is_stationary {
            code = EXIT_CERTIFY;
        }
    }
    print_summary(&summary, r.out.is_some());
    Ok(code)
}

/// Summary goes to stdout when data went to a file, else to stderr.
fn print_summary(lines: &[String], data_in_file: bool) {
    for l in lines {
        if data_in_file {
            println!("{l}");
        } else {
            eprintln!("{l}");
        }
    }
}

fn cmd_oracle(a: &OracleArgs) -> CliResult<i32> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let r = resolve_common(&a.common, &file)?;
    let cfg = resolve_grid(&a.grid, &file, &r.spec)?;
    let result = oracle_sweep(&r.problem, &cfg)?;
    // worker count does not affect the output, so it is not echoed
    let header = vec![
        ("command".to_string(), "oracle".to_string()),
        ("problem".into(), r.problem.name().to_string()),
        ("eps".into(), fmt_f64(r.eps)),
        ("grid_x".into(), cfg.grid.x_points.to_string()),
        ("grid_y".into(), cfg.grid.y_points_per_dim.to_string()),
        ("refine".into(), cfg.grid.refine_rounds.to_string()),
        ("phi_min".into(), fmt_f64(result.phi_min)),
        ("x_argmin".into(), fmt_vec(&result.x_argmin)),
        ("y_at_min".into(), fmt_vec(&result.y_at_min)),
    ];
    let mut out = open_out(&r.out)?;
    report::write_header(&mut out, "oracle", &header).map_err(io_err)?;
    report::write_oracle(&mut out, &result).map_err(io_err)?;
    out.flush().map_err(io_err)?;
    print_summary(
        &[
            format!("phi_min = {}", fmt_f64(result.phi_min)),
            format!("x_argmin = {}", fmt_vec(&result.x_argmin)),
        ],
        r.out.is_some(),
    );
    Ok(EXIT_OK)
}

fn cmd_constants(a: &ConstantsArgs) -> CliResult<i32> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let r = resolve_common(&a.common, &file)?;
    let mut spec = r.spec;
    for (flag, key, slot) in [
        (a.h0, "h0", &mut spec.h0),
        (a.h1, "h1", &mut spec.h1),
        (a.lip_l0, "lip-l0", &mut spec.l0),
        (a.lip_l1, "lip-l1", &mut spec.l1),
        (a.lip_l2, "lip-l2", &mut spec.l2),
        (a.lip_l3, "lip-l3", &mut spec.l3),
        (a.mu, "mu", &mut spec.mu),
        (a.bound_h, "bound-h", &mut spec.h),
        (a.bound_m, "bound-m", &mut spec.m),
        (a.margin_c, "margin-c", &mut spec.c),
    ] {
        if let Some(v) = file.pick(flag, key)? {
            *slot = v;
        }
    }
    spec.validate(r.eps)?;
    let j = file.pick(a.j, "J")?.unwrap_or(1);
    let sigma = file.pick(a.sigma, "sigma")?.unwrap_or(0.5);
    let l2 = file.pick(a.l2, "l2")?.unwrap_or(0.5);
    let report = compute_constants(&spec, &r.bounds, r.eps, j, sigma, l2)?;

    let header = vec![
        ("command".to_string(), "constants".to_string()),
        ("problem".into(), r.problem.name().to_string()),
        ("eps".into(), fmt_f64(r.eps)),
        ("h0".into(), fmt_f64(spec.h0)),
        ("h1".into(), fmt_f64(spec.h1)),
        ("L0".into(), fmt_f64(spec.l0)),
        ("L1".into(), fmt_f64(spec.l1)),
        ("L2".into(), fmt_f64(spec.l2)),
        ("L3".into(), fmt_f64(spec.l3)),
        ("mu".into(), fmt_f64(spec.mu)),
        ("H".into(), fmt_f64(spec.h)),
        ("M".into(), fmt_f64(spec.m)),
        ("c".into(), fmt_f64(spec.c)),
    ];
    let mut out = open_out(&r.out)?;
    report::write_header(&mut out, "constants", &header).map_err(io_err)?;
    report::write_constants(&mut out, &report).map_err(io_err)?;
    let tau = file.pick(a.tau, "tau")?;
    let t = file.pick(a.t, "T")?;
    let k = file.pick(a.k, "K")?;
    let mut code = EXIT_OK;
    if tau.is_some() || t.is_some() || k.is_some() {
        let check = report.admits(
            tau.unwrap_or(f64::NEG_INFINITY),
            t.unwrap_or(f64::INFINITY),
            k.unwrap_or(f64::INFINITY),
        );
        for (name, given, ok) in [("tau", tau, check.tau_ok), ("T", t, check.t_ok), ("K", k, check.k_ok)] {
            if let Some(v) = given {
                writeln!(out, "admits_{name},{},{}", fmt_f64(v), ok).map_err(io_err)?;
            }
        }
        if !check.all() {
            code = EXIT_CERTIFY;
        }
    }
    out.flush().map_err(io_err)?;
    Ok(code)
}

fn cmd_certify(a: &CertifyArgs) -> CliResult<i32> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let r = resolve_common(&a.common, &file)?;
    let trace_path = match &a.from_trace {
        Some(p) => Some(p.clone()),
        None => file.get::<String>("from-trace")?.map(PathBuf::from),
    };
    let (x, y) = match trace_path {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            report::parse_trace_last_point(&text)?
        }
        None => {
            let x = file.pick_vec(&a.xbar, "xbar")?;
            let y = file.pick_vec(&a.ybar, "ybar")?;
            match (x, y) {
                (Some(x), Some(y)) => (x, y),
                _ => return Err(CliError::config("certify needs --xbar and --ybar, or --from-trace")),
            }
        }
    };
    check_inside(&r.problem, &x, &y, "candidate")?;
    let kind = file.pick(a.oracle.clone(), "oracle")?.unwrap_or_else(|| "grid".into());
    let cfg = certify_oracle_config(&a.grid, &file, &r.spec)?;
    let oracle = make_oracle(&kind, &r, cfg)?;
    let rep = stationarity_report(&r.problem, &x, &y, oracle.as_ref(), Tolerances::default())?;

    let header = vec![
        ("command".to_string(), "certify".to_string()),
        ("problem".into(), r.problem.name().to_string()),
        ("eps".into(), fmt_f64(r.eps)),
        ("oracle".into(), kind),
        ("xbar".into(), fmt_vec(&x)),
        ("ybar".into(), fmt_vec(&y)),
    ];
    let mut out = open_out(&r.out)?;
    report::write_header(&mut out, "certificate", &header).map_err(io_err)?;
    for line in stationarity_text(&rep) {
        writeln!(out, "# {line}").map_err(io_err)?;
    }
    writeln!(out, "{}", report::stationarity_columns()).map_err(io_err)?;
    writeln!(out, "{}", report::stationarity_row(&rep)).map_err(io_err)?;
    out.flush().map_err(io_err)?;
    Ok(if rep.is_stationary { EXIT_OK } else { EXIT_CERTIFY })
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Constants(a) => cmd_constants(a),
        Command::Certify(a) => cmd_certify(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pvfim: {}", e.message);
            e.code
        }
    }
}
