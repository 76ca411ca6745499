//! End-to-end acceptance gate. Each test prints a single PASS/FAIL line
//! for its criterion and enforces the runtime budget it was designed for.

use cbvf_core::rng::Lcg;
use cbvf_core::{
    builtin_system, cbvf_oracle, check_barrier_guarantee, check_time_invariance, discretize,
    interpolate, limit_cbvf, pointwise_max, sample_hold_rollout, solve_cbvf,
    verify_viscosity_cbf, BarrierParams, ClassK, ControllerKind, GradientMode, Grid,
    GreedyController, InitialStates, KappaResult, LimitParams, OracleParams,
    SampleHoldController, SolverParams, Verdict,
};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

fn report(criterion: usize, ok: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn budget(criterion: usize, start: Instant, limit_s: f64) {
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < limit_s,
        "criterion {criterion} exceeded its {limit_s}s budget: {elapsed:.1}s"
    );
}

fn tent_fn(x: &[f64]) -> f64 {
    (1.0 - x[0].abs()).max(0.0)
}

fn band_fn(x: &[f64]) -> f64 {
    (1.0 - x[0] * x[0]).max(0.0)
}

fn scalar_grid() -> Grid {
    Grid::new(&[-1.5], &[1.5], &[301]).unwrap()
}

fn di_grid() -> Grid {
    Grid::new(&[-1.5, -1.5], &[1.5, 1.5], &[101, 101]).unwrap()
}

fn workdir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn criterion_1_class_k_identities() {
    let start = Instant::now();
    let bundle: Vec<(&str, ClassK)> = vec![
        ("linear", ClassK::linear(1.0).unwrap()),
        ("power_quadratic", ClassK::power(1.0, 2.0).unwrap()),
        ("power_fractional", ClassK::power(0.5, 1.5).unwrap()),
        (
            "table",
            ClassK::table(vec![[0.0, 0.0], [0.5, 0.25], [1.0, 1.0], [2.0, 3.0]]).unwrap(),
        ),
    ];
    for (name, alpha) in &bundle {
        let big_r = 2.0;
        let l = alpha.comparison_bound(big_r).unwrap();
        let mut rng = Lcg::new(1);
        let mut checked = 0;
        while checked < 1000 {
            let r = rng.uniform(0.05, big_r);
            let s = rng.uniform(0.0, 1.5);
            let t = rng.uniform(0.0, 1.5);
            checked += 1;

            let b_s = alpha.beta(r, s).unwrap();
            let chained = alpha.beta(b_s, t).unwrap();
            let direct = alpha.beta(r, s + t).unwrap();
            assert!(
                (chained - direct).abs() < 1e-6,
                "{name}: semigroup r={r} s={s} t={t}: {chained} vs {direct}"
            );

            // d_t beta = -alpha(beta)
            let e = 1e-4;
            let b = alpha.beta(r, t + e).unwrap();
            let a = alpha.beta(r, (t - e).max(0.0)).unwrap();
            let span = t + e - (t - e).max(0.0);
            let fd_t = (b - a) / span;
            let want_t = -alpha.alpha(alpha.beta(r, t).unwrap()).unwrap();
            assert!(
                (fd_t - want_t).abs() <= 1e-3 * (1.0 + want_t.abs()),
                "{name}: d_t identity r={r} t={t}: {fd_t} vs {want_t}"
            );

            // d_r beta = alpha(beta) / alpha(r)
            let er = 1e-5;
            let fd_r =
                (alpha.beta(r + er, t).unwrap() - alpha.beta(r - er, t).unwrap()) / (2.0 * er);
            let want_r = alpha.alpha(alpha.beta(r, t).unwrap()).unwrap()
                / alpha.alpha(r).unwrap();
            assert!(
                (fd_r - want_r).abs() <= 1e-3 * (1.0 + want_r.abs()),
                "{name}: d_r identity r={r} t={t}: {fd_r} vs {want_r}"
            );

            // inverse identity where the growth flow stays representable
            if let KappaResult::Value(k) = alpha.kappa(r, t).unwrap() {
                if k <= 10.0 {
                    let back = alpha.beta(k, t).unwrap();
                    assert!(
                        (back - r).abs() < 1e-5,
                        "{name}: inverse r={r} t={t}: beta(kappa)={back}"
                    );
                }
            }

            // comparison bound with the slope bound on [0, R]
            let lower = r * (-l * t).exp();
            let val = alpha.beta(r, t).unwrap();
            assert!(
                val >= lower - 1e-9,
                "{name}: comparison r={r} t={t}: {val} < {lower}"
            );
        }
    }
    budget(1, start, 5.0);
    report(1, true, "4 bundled alphas x 1000 samples");
}

#[test]
fn criterion_2_oracle_equivalence_scalar() {
    let start = Instant::now();
    let sys = builtin_system("scalar_example").unwrap();
    let alpha = ClassK::linear(1.0).unwrap();
    let g = discretize(scalar_grid(), tent_fn).unwrap();
    let params = SolverParams::new(vec![0.0, 0.5, 1.0]);
    let series = solve_cbvf(&sys, &alpha, &g, &params).unwrap();
    let oparams = OracleParams::bang_bang(&sys, 4);

    let mut max_diff = 0.0f64;
    for k in 0..20 {
        let x = -0.95 + 0.1 * k as f64;
        for (i, t) in [(1usize, 0.5), (2usize, 1.0)] {
            let v_grid = interpolate(&series.fields[i], &[x]).unwrap();
            let v_ref = cbvf_oracle(&sys, &alpha, &tent_fn, &[x], t, &oparams).unwrap();
            max_diff = max_diff.max((v_grid - v_ref).abs());
        }
    }
    budget(2, start, 120.0);
    report(
        2,
        max_diff <= 0.05,
        &format!("max |solver - oracle| = {max_diff:.4} over 20 nodes x 2 horizons"),
    );
}

#[test]
fn criterion_3_scalar_time_invariance() {
    let start = Instant::now();
    let sys = builtin_system("scalar_example").unwrap();
    let alpha = ClassK::linear(1.0).unwrap();
    let g = discretize(scalar_grid(), tent_fn).unwrap();
    let params = SolverParams::new(vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    let series = solve_cbvf(&sys, &alpha, &g, &params).unwrap();
    let rep = check_time_invariance(&series, &g, 0.02, 3).unwrap();
    budget(3, start, 60.0);
    report(
        3,
        rep.verdict == Verdict::Pass,
        &format!("sup deviation {:.4} against 0.02", rep.max_violation),
    );
}

#[test]
fn criterion_4_double_integrator_fails_with_confirmed_witness() {
    let start = Instant::now();
    let sys = builtin_system("double_integrator").unwrap();
    let alpha = ClassK::linear(1.0).unwrap();
    let g = discretize(di_grid(), band_fn).unwrap();
    let params = SolverParams::new(vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    let rep = verify_viscosity_cbf(&sys, &alpha, &g, &params, None).unwrap();
    assert_eq!(rep.verdict, Verdict::Fail, "expected an invariance failure");
    let w = &rep.witnesses[0];

    let oparams = OracleParams::for_system(&sys, 5);
    let v_ref = cbvf_oracle(&sys, &alpha, &band_fn, &w.state, w.t_or_t, &oparams).unwrap();
    let gap = (w.measured - v_ref).abs();
    let decayed = band_fn(&w.state) - v_ref;
    budget(4, start, 300.0);
    report(
        4,
        gap <= 0.05 && decayed > 0.1,
        &format!(
            "witness {:?} T={}: solver {:.4}, oracle {:.4}, decay {:.4}",
            w.state, w.t_or_t, w.measured, v_ref, decayed
        ),
    );
}

#[test]
fn criterion_5_barrier_guarantee_and_theta_logs() {
    let start = Instant::now();
    let sys = builtin_system("scalar_example").unwrap();
    let alpha = ClassK::linear(1.0).unwrap();
    let h = discretize(scalar_grid(), tent_fn).unwrap();

    let mut bp = BarrierParams::new(5.0, InitialStates::Count(5));
    bp.theta = 0.9;
    bp.seed = 11;
    bp.tol = 1e-3;
    bp.controller = ControllerKind::Greedy;
    let rep = check_barrier_guarantee(&sys, &alpha, &h, &bp).unwrap();
    assert_eq!(
        rep.verdict,
        Verdict::Pass,
        "barrier guarantee: {rep:?}"
    );

    let mut worst_theta = f64::INFINITY;
    for x0 in [-0.6, -0.3, 0.2, 0.5, 0.8] {
        let base =
            GreedyController::new(h.clone(), GradientMode::Central, sys.control_set.clone());
        let ctrl = SampleHoldController::new(base, 0.01, 0.9).unwrap();
        let (_, log) = sample_hold_rollout(&ctrl, &sys, &alpha, &[x0], 5.0).unwrap();
        for entry in &log {
            worst_theta = worst_theta.min(entry.theta_hat);
        }
    }
    budget(5, start, 120.0);
    report(
        5,
        worst_theta >= 1.0,
        &format!("5 seeded starts pass, worst measured theta-hat {worst_theta:.4}"),
    );
}

#[test]
fn criterion_6_counterexample_command() {
    let start = Instant::now();
    let out = workdir("acc_counterexample");
    let code = cbvf_cli::cmd_counterexample(&out, true);
    let summary = fs::read_to_string(out.join("report.json")).unwrap();
    budget(6, start, 60.0);
    report(
        6,
        code == 0 && out.join("worst_trajectory.csv").exists(),
        &format!("exit {code}, {}", summary.replace(['\n', ' '], "")),
    );
}

#[test]
fn criterion_7_pointwise_max_of_passing_fields() {
    let start = Instant::now();
    let sys = builtin_system("scalar_example").unwrap();
    let alpha = ClassK::linear(1.0).unwrap();
    let params = SolverParams::new(vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    let h1 = discretize(scalar_grid(), tent_fn).unwrap();
    let h2 = discretize(scalar_grid(), |x| (0.9 * (1.0 - x[0] * x[0])).max(0.0)).unwrap();

    let tol = 0.02;
    let r1 = verify_viscosity_cbf(&sys, &alpha, &h1, &params, Some(tol)).unwrap();
    let r2 = verify_viscosity_cbf(&sys, &alpha, &h2, &params, Some(tol)).unwrap();
    assert_eq!(r1.verdict, Verdict::Pass, "first field must pass: {r1:?}");
    assert_eq!(r2.verdict, Verdict::Pass, "second field must pass: {r2:?}");

    let combined = pointwise_max(&h1, &h2).unwrap();
    let rc = verify_viscosity_cbf(&sys, &alpha, &combined, &params, Some(2.0 * tol)).unwrap();
    budget(7, start, 120.0);
    report(
        7,
        rc.verdict == Verdict::Pass,
        &format!(
            "singles at {tol}: pass/pass, max at {}: deviation {:.4}",
            2.0 * tol,
            rc.max_violation
        ),
    );
}

#[test]
fn criterion_8_limit_synthesis_double_integrator() {
    let start = Instant::now();
    let sys = builtin_system("double_integrator").unwrap();
    let alpha = ClassK::linear(1.0).unwrap();
    let g = discretize(di_grid(), band_fn).unwrap();
    let params = SolverParams::new(vec![0.0, 0.5, 1.0]);
    let tol = cbvf_core::default_invariance_tol(&g);
    let mut lp = LimitParams::new(10.0);
    lp.window = 5;
    lp.tol = Some(tol);
    let outcome = limit_cbvf(&sys, &alpha, &g, &params, &lp).unwrap();
    assert!(outcome.converged_at < 10.0, "no convergence before T=10");

    let rep = verify_viscosity_cbf(&sys, &alpha, &outcome.field, &params, Some(2.0 * tol)).unwrap();

    // fixed-point re-solve: marching from h_inf stays within 2x tol
    let resolved = solve_cbvf(&sys, &alpha, &outcome.field.clamp_nonneg(), &params).unwrap();
    let mut resolve_gap = 0.0f64;
    for f in &resolved.fields {
        resolve_gap = resolve_gap.max(f.sup_dist(&outcome.field).unwrap());
    }
    budget(8, start, 600.0);
    report(
        8,
        rep.verdict == Verdict::Pass && resolve_gap <= 2.0 * tol,
        &format!(
            "converged at T={}, invariance deviation {:.4}, re-solve gap {:.4}, tol {:.4}",
            outcome.converged_at, rep.max_violation, resolve_gap, tol
        ),
    );
}

#[test]
fn criterion_9_determinism_of_artifacts() {
    let start = Instant::now();
    let base = workdir("acc_determinism");

    let scalar_cfg = base.join("scalar.json");
    fs::write(
        &scalar_cfg,
        r#"{
            "system": "scalar_example",
            "alpha": {"kind": "linear", "gamma": 1.0},
            "grid": {"lo": [-1.5], "hi": [1.5], "counts": [301]},
            "g": "tent",
            "solver": {"checkpoints": [0.0, 0.5, 1.0, 1.5, 2.0]},
            "verify": {"theta": 0.9, "horizon": 5.0, "tau": 0.01, "count": 2, "tol": 0.001},
            "seed": 11
        }"#,
    )
    .unwrap();
    let limit_cfg = base.join("limit.json");
    fs::write(
        &limit_cfg,
        r#"{
            "system": "double_integrator",
            "alpha": {"kind": "linear", "gamma": 1.0},
            "grid": {"lo": [-1.5, -1.5], "hi": [1.5, 1.5], "counts": [61, 61]},
            "g": "band",
            "solver": {"checkpoints": [0.0, 0.5, 1.0]},
            "synth": {"max_t": 8.0, "window": 5},
            "verify": {"tol": 0.12}
        }"#,
    )
    .unwrap();

    let run_all = |tag: &str| -> Vec<(String, Vec<u8>)> {
        let solve_out = base.join(format!("solve_{tag}"));
        assert_eq!(cbvf_cli::cmd_solve(&scalar_cfg, &solve_out, None, true), 0);
        let barrier_out = base.join(format!("barrier_{tag}"));
        assert_eq!(
            cbvf_cli::cmd_verify(&scalar_cfg, "barrier", &barrier_out, None, true),
            0
        );
        let ce_out = base.join(format!("ce_{tag}"));
        assert_eq!(cbvf_cli::cmd_counterexample(&ce_out, true), 0);
        let limit_out = base.join(format!("limit_{tag}"));
        assert_eq!(
            cbvf_cli::cmd_synth(&limit_cfg, "limit", &limit_out, true),
            0
        );

        let mut artifacts = Vec::new();
        for dir in [&solve_out, &barrier_out, &ce_out, &limit_out] {
            let mut names: Vec<_> = fs::read_dir(dir)
                .unwrap()
                .map(|e| e.unwrap().file_name().into_string().unwrap())
                .filter(|n| n.ends_with(".csv"))
                .collect();
            names.sort();
            for n in names {
                let rel = format!(
                    "{}/{}",
                    dir.file_name().unwrap().to_string_lossy().trim_end_matches(tag),
                    n
                );
                artifacts.push((rel, fs::read(dir.join(&n)).unwrap()));
            }
        }
        artifacts
    };

    let a = run_all("a");
    let b = run_all("b");
    assert_eq!(a.len(), b.len());
    assert!(a.len() >= 10, "expected a spread of CSV artifacts, got {}", a.len());
    let mut all_equal = true;
    for ((name_a, bytes_a), (_, bytes_b)) in a.iter().zip(&b) {
        if bytes_a != bytes_b {
            all_equal = false;
            eprintln!("artifact differs between runs: {name_a}");
        }
    }
    budget(9, start, 600.0);
    report(
        9,
        all_equal,
        &format!("{} CSV artifacts byte-identical across re-runs", a.len()),
    );
}
