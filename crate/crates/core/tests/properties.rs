use proptest::prelude::*;

use pvfim::analysis::{compute_constants, fd_gradient_check, stationarity_report, Example3Oracle, Tolerances};
use pvfim::barrier::{
    approx_lower_solution, barrier_eval, grad_estimate, inner_maximum, restore_feasibility, restricted_ascent,
    BarrierParams,
};
use pvfim::example3::{example3_lipschitz, example3_problem, example3_value_bounds, X_HI, X_LO, Y_HI, Y_LO};
use pvfim::problem::{distance, project_box, BoxSet, SmoothFunction};
use pvfim::report::fmt_f64;
use pvfim::schedule::{CustomSchedule, OuterSchedule, ScheduleMode, Theorem4Schedule};
use pvfim::solver::{box_gap, check_fne, find_fne, pvfim, FneCertificate, InnerConfig, Selection, SolveOptions};

const EPS: f64 = 0.5;
const C0: f64 = 0.25;

fn xs() -> impl Strategy<Value = f64> {
    X_LO..=X_HI
}

fn ys() -> impl Strategy<Value = [f64; 2]> {
    (Y_LO[0]..=Y_HI[0], Y_LO[1]..=Y_HI[1]).prop_map(|(a, b)| [a, b])
}

fn converging_schedule() -> ScheduleMode {
    ScheduleMode::Custom(CustomSchedule::parse("T=ceil((1/0.999)^l),J=30,K=150,beta=0.1,eta=0.1").unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projection_is_idempotent(p in prop::collection::vec(-100.0f64..100.0, 2)) {
        let set = BoxSet::new(Y_LO.to_vec(), Y_HI.to_vec()).unwrap();
        let once = project_box(&p, &set).unwrap();
        prop_assert_eq!(project_box(&once, &set).unwrap(), once);
    }

    #[test]
    fn projection_is_nonexpansive(
        p in prop::collection::vec(-100.0f64..100.0, 2),
        q in prop::collection::vec(-100.0f64..100.0, 2),
    ) {
        let set = BoxSet::new(Y_LO.to_vec(), Y_HI.to_vec()).unwrap();
        let (pp, pq) = (project_box(&p, &set).unwrap(), project_box(&q, &set).unwrap());
        prop_assert!(distance(&pp, &pq) <= distance(&p, &q) + 1e-12);
    }

    #[test]
    fn lower_objective_respects_lipschitz_bounds(x1 in xs(), y1 in ys(), x2 in xs(), y2 in ys()) {
        let spec = example3_lipschitz();
        let (z1, z2) = ([x1, y1[0], y1[1]], [x2, y2[0], y2[1]]);
        let d = distance(&z1, &z2);
        prop_assume!(d > 1e-9);
        let f = pvfim::example3::Lower;
        let (e1, e2) = (f.evaluate(&[x1], &y1), f.evaluate(&[x2], &y2));
        prop_assert!((e1.value - e2.value).abs() / d <= spec.l0 * (1.0 + 1e-12));
        let g1 = [e1.grad_x[0], e1.grad_y[0], e1.grad_y[1]];
        let g2 = [e2.grad_x[0], e2.grad_y[0], e2.grad_y[1]];
        prop_assert!(distance(&g1, &g2) / d <= spec.l1 * (1.0 + 1e-12));
    }

    #[test]
    fn upper_objective_respects_lipschitz_bounds(x1 in xs(), y1 in ys(), x2 in xs(), y2 in ys()) {
        let spec = example3_lipschitz();
        let (z1, z2) = ([x1, y1[0], y1[1]], [x2, y2[0], y2[1]]);
        let d = distance(&z1, &z2);
        prop_assume!(d > 1e-9);
        let f = pvfim::example3::Upper;
        let (e1, e2) = (f.evaluate(&[x1], &y1), f.evaluate(&[x2], &y2));
        prop_assert!((e1.value - e2.value).abs() / d <= spec.h0 * (1.0 + 1e-12));
        let g1 = [e1.grad_x[0], e1.grad_y[0], e1.grad_y[1]];
        let g2 = [e2.grad_x[0], e2.grad_y[0], e2.grad_y[1]];
        prop_assert!(distance(&g1, &g2) / d <= spec.h1 * (1.0 + 1e-12));
    }

    #[test]
    fn fne_gap_is_nonnegative(g in -1e3f64..1e3, x in xs()) {
        let set = BoxSet::new(vec![X_LO], vec![X_HI]).unwrap();
        prop_assert!(box_gap(&[g], &[x], &set) >= 0.0);
    }

    #[test]
    fn fne_verdict_is_a_function_of_residuals(
        sigma in 0.0f64..1.0, gap in 0.0f64..2.0, yn in 0.0f64..2.0, slack in -1.0f64..1.0,
    ) {
        let c = FneCertificate::new(sigma, gap, yn, slack);
        prop_assert_eq!(c.is_fne, gap <= sigma && yn <= sigma && slack > 0.0);
        prop_assert_eq!(c, FneCertificate::new(sigma, gap, yn, slack));
    }

    #[test]
    fn float_format_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn analytic_gradients_match_central_differences(x in xs(), y in ys()) {
        let z = [x, y[0], y[1]];
        for f in [&pvfim::example3::Upper as &dyn SmoothFunction, &pvfim::example3::Lower] {
            let c = fd_gradient_check(
                |p| Ok(f.value(&p[..1], &p[1..])),
                |p| {
                    let e = f.evaluate(&p[..1], &p[1..]);
                    Ok(vec![e.grad_x[0], e.grad_y[0], e.grad_y[1]])
                },
                &z,
                1e-6,
            )
            .unwrap();
            prop_assert!(c.max_rel_err <= 1e-5, "{:?}", c);
        }
    }

    #[test]
    fn lower_descent_is_monotone(x in xs(), y0 in ys(), j in 1usize..40) {
        let prob = example3_problem(EPS).unwrap();
        let p = BarrierParams::new(0.5, j, C0, 0.1).unwrap();
        let r = approx_lower_solution(&prob, &[x], &p, &y0, true).unwrap();
        let traj = r.trajectory.unwrap();
        prop_assert_eq!(traj.len(), j + 1);
        for w in traj.windows(2) {
            prop_assert!(prob.lower_value(&[x], &w[1]) <= prob.lower_value(&[x], &w[0]) + 1e-12);
            prop_assert!(prob.y_set().contains(&w[1]));
        }
        prop_assert_eq!(r.f_j, prob.lower_value(&[x], &r.y_j));
    }

    #[test]
    fn lower_approximation_is_sandwiched(x in xs(), y0 in ys(), j in 1usize..50) {
        let prob = example3_problem(EPS).unwrap();
        let spec = example3_lipschitz();
        let p = BarrierParams::new(0.5, j, C0, 0.1).unwrap();
        let r = approx_lower_solution(&prob, &[x], &p, &y0, false).unwrap();
        let f_star = x;
        let rate = spec.l1 * (2.0 * spec.m).powi(2) / (2.0 * j as f64);
        prop_assert!(f_star <= r.f_j + 1e-12);
        prop_assert!(r.f_j <= f_star + rate);
    }

    #[test]
    fn barrier_gradient_matches_differences(
        x in xs(), dr in -0.6f64..0.6, along in -5.0f64..5.0, tau in 0.01f64..0.99,
    ) {
        // points near the response line keep the slack positive
        let prob = example3_problem(EPS).unwrap();
        let p = BarrierParams::new(tau, 1, C0, 0.1).unwrap();
        let y = [x + along + dr, x / 2.0 + along / 2.0];
        prop_assume!(prob.y_set().contains_interior(&y));
        let f_j = x;
        let c = fd_gradient_check(
            |q| Ok(barrier_eval(&prob, &[x], q, f_j, &p, None)?.value),
            |q| Ok(barrier_eval(&prob, &[x], q, f_j, &p, None)?.grad_y),
            &y,
            1e-6,
        )
        .unwrap();
        prop_assert!(c.max_rel_err <= 1e-4, "{:?}", c);
    }

    #[test]
    fn restored_points_are_feasible(x in xs(), trial in ys()) {
        let prob = example3_problem(EPS).unwrap();
        let anchor = [x, x / 2.0];
        let f_j = x;
        let y = restore_feasibility(&prob, &[x], &anchor, &trial, f_j, C0, 1e-10).unwrap();
        let slack = f_j + EPS - prob.lower_value(&[x], &y);
        prop_assert!(slack >= C0 / 2.0 - 1e-12);
        prop_assert!(prob.y_set().contains(&y));
    }

    #[test]
    fn ascent_iterates_keep_margin(x in xs(), y0 in ys(), beta in 0.0f64..0.5, k in 1usize..60) {
        let prob = example3_problem(EPS).unwrap();
        let p = BarrierParams::new(0.3, 2, C0, 0.1).unwrap();
        let lower = approx_lower_solution(&prob, &[x], &p, &y0, false).unwrap();
        let asc = restricted_ascent(&prob, &[x], &lower, &p, beta, k, &lower.y_j, None).unwrap();
        prop_assert!(asc.min_slack >= C0 / 2.0 - 1e-12);
    }

    #[test]
    fn feasible_points_have_nonnegative_upper_residual(x in xs(), dr in -0.7f64..0.7, along in -3.0f64..3.0) {
        let prob = example3_problem(EPS).unwrap();
        let y = [x + along + dr, x / 2.0 + along / 2.0];
        prop_assume!(dr * dr <= EPS && prob.y_set().contains(&y));
        let r = stationarity_report(&prob, &[x], &y, &Example3Oracle, Tolerances::default()).unwrap();
        prop_assert!(r.upper_residual >= -Tolerances::default().upper);
        prop_assert!(r.lower_residual <= 1e-12);
    }

    #[test]
    fn constants_grow_with_lower_steps(j in 1usize..2000) {
        let (spec, b) = (example3_lipschitz(), example3_value_bounds());
        let a = compute_constants(&spec, &b, EPS, j, 0.5, 0.5).unwrap();
        let n = compute_constants(&spec, &b, EPS, j + 1, 0.5, 0.5).unwrap();
        prop_assert!(n.m0_j >= a.m0_j && n.m1_j >= a.m1_j && n.m2_j >= a.m2_j && n.l11 >= a.l11);
        prop_assert_eq!(a.m0_j, j as f64);
        prop_assert_eq!(a.m1_j, spec.l0 * (j as f64 + 1.0));
        prop_assert_eq!(a.l_g, spec.h1 + 2.0 / spec.c * spec.l1 + 4.0 / (spec.c * spec.c) * spec.l0 * spec.l0);
        prop_assert_eq!(a.l_phi, a.l11 * (1.0 + a.l12 / spec.mu));
    }

    #[test]
    fn implicit_and_explicit_products_agree(l in 1usize..500) {
        let a = CustomSchedule::parse("K=2l,J=3(l+1)").unwrap().entry(l).unwrap();
        let b = CustomSchedule::parse("K=2*l,J=3*(l+1)").unwrap().entry(l).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn gradient_estimate_matches_value_function_slope() {
    let prob = example3_problem(EPS).unwrap();
    let p = BarrierParams::new(0.1, 20, C0, 0.1).unwrap();
    let y0 = [0.0, 9.0];
    let h = 1e-5;
    for i in 0..10 {
        let x = X_LO + (i as f64 + 0.5) * (X_HI - X_LO) / 10.0;
        let lower = approx_lower_solution(&prob, &[x], &p, &y0, false).unwrap();
        let asc = restricted_ascent(&prob, &[x], &lower, &p, 0.1, 2000, &lower.y_j, None).unwrap();
        let a = grad_estimate(&prob, &[x], &lower, &asc.y, &p).unwrap().a[0];
        let (up, _) = inner_maximum(&prob, &[x + h], &p, &y0, 0.1, 100_000).unwrap();
        let (down, _) = inner_maximum(&prob, &[x - h], &p, &y0, 0.1, 100_000).unwrap();
        let fd = (up - down) / (2.0 * h);
        assert!((a - fd).abs() <= 1e-3, "x={x}: a={a} fd={fd}");
    }
}

#[test]
fn solver_iterates_stay_feasible() {
    let prob = example3_problem(EPS).unwrap();
    let mut sched = OuterSchedule::new(converging_schedule());
    sched.l_max = 60;
    let res = pvfim(&prob, &sched, &SolveOptions::new(C0), &[2.0], &[0.0, 9.0]).unwrap();
    assert!(!res.trace.rows.is_empty());
    for r in &res.trace.rows {
        assert!(prob.x_set().contains(&r.x), "{r:?}");
        assert!(prob.y_set().contains(&r.y), "{r:?}");
        assert!(r.slack >= C0 / 2.0 - 1e-12, "{r:?}");
    }
}

#[test]
fn traces_are_bit_identical_across_runs() {
    let run = || {
        let prob = example3_problem(EPS).unwrap();
        let mut sched = OuterSchedule::new(ScheduleMode::AppendixC);
        sched.l_max = 40;
        pvfim(&prob, &sched, &SolveOptions::new(C0), &[3.03], &[0.0, 9.0]).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.trace.rows.len(), b.trace.rows.len());
    for (ra, rb) in a.trace.rows.iter().zip(&b.trace.rows) {
        let bits = |r: &pvfim::solver::TraceRow| {
            r.x.iter()
                .chain(&r.y)
                .chain([r.g_value, r.a_norm, r.x_gap, r.y_grad_norm, r.slack, r.tau, r.eta].iter())
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(ra), bits(rb));
    }
}

#[test]
fn appendix_c_residual_falls_below_threshold() {
    let prob = example3_problem(EPS).unwrap();
    let sched = OuterSchedule::new(ScheduleMode::AppendixC);
    let mut opts = SolveOptions::new(C0);
    opts.max_evals = Some(10_000_000);
    let res = pvfim(&prob, &sched, &opts, &[3.03], &[0.0, 9.0]).unwrap();
    let last = res.trace.outer_rows().last().unwrap();
    let residual = last.x_gap.max(last.y_grad_norm);
    assert!(
        residual < 1e-2,
        "after {} outer iterations: x = {:?}, residual = {residual}",
        res.outer_iterations,
        res.x
    );
}

#[test]
fn theory_schedule_points_are_certified() {
    let t4 = Theorem4Schedule {
        spec: example3_lipschitz(),
        bounds: example3_value_bounds(),
        eps: EPS,
        l2: 0.5,
        l0: 1,
    };
    let t4 = Theorem4Schedule { l0: t4.min_valid_l0().unwrap(), ..t4 };
    let prob = example3_problem(EPS).unwrap();
    let y0 = prob.y_set().center();
    let mut x = vec![3.03];
    for l in 1..=5 {
        let e = t4.entry(l).unwrap();
        let entry = e.to_entry().unwrap_or_else(|err| panic!("l = {l}: {err}"));
        let p = BarrierParams::new(entry.tau, entry.j, example3_lipschitz().c, entry.alpha).unwrap();
        let inner = InnerConfig {
            t_steps: entry.t_steps,
            k_steps: entry.k_steps,
            beta: entry.beta,
            eta: entry.eta,
            selection: Selection::Theory,
            warm_start: false,
        };
        let out = find_fne(&prob, &p, &inner, &x, &y0, None, e.sigma, l, &mut Vec::new()).unwrap();
        let cert = check_fne(&prob, &out.x, &out.y, out.f_j, &p, &y0, e.sigma);
        assert!(cert.is_fne, "l = {l}: {cert:?}");
        x = out.x;
    }
}

#[test]
fn theory_schedule_meets_its_premises() {
    let t4 = Theorem4Schedule {
        spec: example3_lipschitz(),
        bounds: example3_value_bounds(),
        eps: EPS,
        l2: 0.5,
        l0: 1,
    };
    let l0 = t4.min_valid_l0().unwrap();
    for l0 in [l0, l0 + 1] {
        let s = Theorem4Schedule { l0, ..t4 };
        for l in 1..=5 {
            let e = s.entry(l).unwrap();
            assert!(e.sigma < 1.0 && e.tau > 0.0 && e.tau < 1.0);
            assert!(e.premises_hold(), "l0={l0} l={l}: {e:?}");
        }
    }
    let below = Theorem4Schedule { l0: l0 - 1, ..t4 };
    assert!(below.entry(1).is_err());
}

#[test]
fn stationary_verdict_is_a_function_of_residuals() {
    let tol = Tolerances::default();
    let r = pvfim::analysis::StationarityReport::new(1e-4, 0.0, -0.5, 0.0, tol);
    assert!(r.is_stationary);
    let r = pvfim::analysis::StationarityReport::new(1e-4, 0.0, 0.1, 0.0, tol);
    assert!(!r.is_stationary);
    let r = pvfim::analysis::StationarityReport::new(1e-4, 0.0, 0.0, 2e-3, tol);
    assert!(!r.is_stationary);
}
