//! Subcommand bodies. Every command maps its outcome onto the shared exit
//! code contract: 0 pass, 1 verification fail, 2 config error, 3 runtime
//! error, 4 inconclusive.

use crate::config::{self, ConfigError, RunConfig};
use cbvf_core::grid::write_atomic;
use cbvf_core::rng::Lcg;
use cbvf_core::{
    check_avoid_time_invariance, check_barrier_guarantee, check_classical_cbf, flow, limit_cbvf,
    limit_history_csv, pointwise_max, sample_hold_rollout, solve_avoid_traced, solve_cbvf_traced,
    theta_log_csv, verify_viscosity_cbf, BarrierParams, ClassK, ControlSignal, ControllerKind,
    Error as CoreError, GradientMode, GreedyController, InitialStates, LimitParams, Report,
    SampleHoldController, ScalarField, Verdict,
};
use serde_json::json;
use std::path::Path;
use std::time::Instant;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

enum CmdError {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        CmdError::Config(e.to_string())
    }
}

impl From<CoreError> for CmdError {
    fn from(e: CoreError) -> Self {
        CmdError::Runtime(e.to_string())
    }
}

type CmdResult = Result<i32, CmdError>;

fn finish(result: CmdResult) -> i32 {
    match result {
        Ok(code) => code,
        Err(CmdError::Config(m)) => {
            eprintln!("{m}");
            EXIT_CONFIG
        }
        Err(CmdError::Runtime(m)) => {
            eprintln!("runtime error: {m}");
            EXIT_RUNTIME
        }
    }
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => EXIT_PASS,
        Verdict::Fail => EXIT_FAIL,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn prepare_out(out: &Path) -> Result<(), CmdError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", out.display())))
}

fn write_report(out: &Path, report: &Report) -> Result<(), CmdError> {
    write_atomic(&out.join("report.json"), report.to_json().as_bytes())?;
    Ok(())
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

/// Horizon label for output filenames: 0.5 -> "0.5", 2.0 -> "2".
fn format_t(t: f64) -> String {
    if t == t.trunc() {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

pub fn cmd_solve(config_path: &Path, out: &Path, seed: Option<u64>, quiet: bool) -> i32 {
    finish(run_solve(config_path, out, seed, quiet))
}

fn run_solve(config_path: &Path, out: &Path, seed: Option<u64>, quiet: bool) -> CmdResult {
    let cfg = load_with_seed(config_path, seed)?;
    let system = cfg.build_system()?;
    let grid = cfg.build_grid()?;
    let g = cfg.build_g(grid)?;
    let alpha = cfg.build_alpha()?;
    let params = cfg.solver_params();
    prepare_out(out)?;

    let start = Instant::now();
    let (series, trace) = match &alpha {
        Some(a) => solve_cbvf_traced(&system, a, &g, &params)?,
        None => solve_avoid_traced(&system, &g, &params)?,
    };
    let wall = start.elapsed().as_secs_f64();

    for (ck, field) in series.checkpoints.iter().zip(&series.fields) {
        let name = format!("v_T{}.csv", format_t(*ck));
        field.write_csv_with_sidecar(&out.join(name), Some(*ck))?;
    }
    let manifest = json!({
        "system": system.name,
        "alpha": alpha.as_ref().map(|a| a.spec()),
        "grid": {"lo": grid.lo(), "hi": grid.hi(), "counts": grid.counts()},
        "solver": &params,
        "wall_clock_s": wall,
        "steps": trace.steps,
        "dt": trace.dt,
    });
    write_atomic(
        &out.join("run_manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap().as_bytes(),
    )?;
    say(
        quiet,
        format!(
            "solved {} checkpoints in {} steps ({wall:.2}s)",
            series.checkpoints.len(),
            trace.steps
        ),
    );
    Ok(EXIT_PASS)
}

pub fn cmd_verify(
    config_path: &Path,
    mode: &str,
    out: &Path,
    seed: Option<u64>,
    quiet: bool,
) -> i32 {
    finish(run_verify(config_path, mode, out, seed, quiet))
}

fn run_verify(
    config_path: &Path,
    mode: &str,
    out: &Path,
    seed: Option<u64>,
    quiet: bool,
) -> CmdResult {
    let cfg = load_with_seed(config_path, seed)?;
    let system = cfg.build_system()?;
    let grid = cfg.build_grid()?;
    let h_field = cfg.build_g(grid)?;
    let params = cfg.solver_params();
    let vc = cfg.verify.as_ref();
    prepare_out(out)?;

    let report = match mode {
        "viscosity" => {
            let alpha = require_alpha(&cfg)?;
            verify_viscosity_cbf(&system, &alpha, &h_field, &params, vc.and_then(|v| v.tol))?
        }
        "classical" => {
            let alpha = require_alpha(&cfg)?;
            let expr = boundary_expr(&cfg)?;
            let n = vc.and_then(|v| v.samples).unwrap_or(10_000);
            let mut rng = Lcg::new(cfg.seed);
            let samples: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..grid.dim)
                        .map(|d| rng.uniform(grid.lo()[d], grid.hi()[d]))
                        .collect()
                })
                .collect();
            let h_fn = |x: &[f64]| expr.eval(x, &[]);
            let tol = vc.and_then(|v| v.tol).unwrap_or(1e-9);
            check_classical_cbf(&system, &alpha, &h_fn, None, &samples, tol)?
        }
        "barrier" => {
            let alpha = require_alpha(&cfg)?;
            let mut bp = BarrierParams::new(
                vc.and_then(|v| v.horizon).unwrap_or(5.0),
                match vc.and_then(|v| v.initial_states.clone()) {
                    Some(list) => InitialStates::List(list),
                    None => InitialStates::Count(vc.and_then(|v| v.count).unwrap_or(5)),
                },
            );
            if let Some(theta) = vc.and_then(|v| v.theta) {
                bp.theta = theta;
            }
            if let Some(tol) = vc.and_then(|v| v.tol) {
                bp.tol = tol;
            }
            bp.seed = cfg.seed;
            if let Some(tau) = vc.and_then(|v| v.tau) {
                bp.controller = ControllerKind::SampleHold { tau };
                write_theta_logs(&cfg, &system, &alpha, &h_field, &bp, tau, out)?;
            }
            check_barrier_guarantee(&system, &alpha, &h_field, &bp)?
        }
        "avoid-invariance" => {
            let alphas: Vec<ClassK> = match vc.and_then(|v| v.alphas.clone()) {
                Some(specs) => specs
                    .into_iter()
                    .map(ClassK::from_spec)
                    .collect::<Result<_, _>>()?,
                None => vec![ClassK::linear(1.0)?],
            };
            check_avoid_time_invariance(
                &system,
                &h_field,
                &alphas,
                &params,
                vc.and_then(|v| v.tol),
            )?
        }
        other => {
            return Err(CmdError::Config(format!(
                "unknown verify mode '{other}' (expected viscosity, classical, barrier, or avoid-invariance)"
            )))
        }
    };
    write_report(out, &report)?;
    say(quiet, format!("verdict: {:?}", report.verdict));
    Ok(verdict_code(report.verdict))
}

fn write_theta_logs(
    cfg: &RunConfig,
    system: &cbvf_core::System,
    alpha: &ClassK,
    h_field: &ScalarField,
    bp: &BarrierParams,
    tau: f64,
    out: &Path,
) -> Result<(), CmdError> {
    let starts = match &bp.initial_states {
        InitialStates::List(list) => list.clone(),
        InitialStates::Count(n) => sample_starts(h_field, *n, cfg.seed)?,
    };
    for (i, x0) in starts.iter().enumerate() {
        let base = GreedyController::new(
            h_field.clone(),
            GradientMode::Central,
            system.control_set.clone(),
        );
        let ctrl = SampleHoldController::new(base, tau, bp.theta)?;
        let (traj, log) = sample_hold_rollout(&ctrl, system, alpha, x0, bp.horizon)?;
        write_atomic(
            &out.join(format!("theta_log_{i}.csv")),
            theta_log_csv(&log).as_bytes(),
        )?;
        write_atomic(
            &out.join(format!("trajectory_{i}.csv")),
            traj.to_csv().as_bytes(),
        )?;
    }
    Ok(())
}

fn sample_starts(h_field: &ScalarField, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, CmdError> {
    // mirror of the sampler used inside the barrier check, same seed
    let grid = &h_field.grid;
    let mut rng = Lcg::new(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > 100_000 {
            return Err(CmdError::Runtime(
                "could not sample initial states with h > 0".into(),
            ));
        }
        let x: Vec<f64> = (0..grid.dim)
            .map(|d| rng.uniform(grid.lo()[d], grid.hi()[d]))
            .collect();
        if cbvf_core::interpolate(h_field, &x)? > 0.05 * h_field.max_value().max(1e-12) {
            out.push(x);
        }
    }
    Ok(out)
}

pub fn cmd_counterexample(out: &Path, quiet: bool) -> i32 {
    finish(run_counterexample(out, quiet))
}

/// The 2-d disc system whose boundary function passes every pointwise
/// classical check yet fails to be invariant: from (1, 0) all bang-bang
/// inputs leave the set.
fn run_counterexample(out: &Path, quiet: bool) -> CmdResult {
    prepare_out(out)?;
    let system = cbvf_core::builtin_system("counterexample_2d")?;
    let alpha = ClassK::linear(1.0)?;
    let h = |x: &[f64]| 1.0 - x[0] * x[0] - x[1] * x[1];
    let grad = |x: &[f64]| vec![-2.0 * x[0], -2.0 * x[1]];

    let mut rng = Lcg::new(0);
    let samples: Vec<Vec<f64>> = (0..10_000)
        .map(|_| vec![rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)])
        .collect();
    let classical = check_classical_cbf(&system, &alpha, &h, Some(&grad), &samples, 1e-9)?;
    let classical_ok = classical.passed();

    // bang-bang signals with up to 6 switches: sign patterns on 7 equal
    // segments of [0, 0.5]
    let horizon = 0.5;
    let segments = 7usize;
    let seg = horizon / segments as f64;
    let mut worst_min_h = f64::NEG_INFINITY;
    let mut worst_traj = None;
    let mut all_leave = true;
    for pattern in 0u32..(1 << segments) {
        let switch_times: Vec<f64> = (0..segments).map(|k| k as f64 * seg).collect();
        let values: Vec<Vec<f64>> = (0..segments)
            .map(|k| vec![if pattern >> k & 1 == 1 { 1.0 } else { -1.0 }])
            .collect();
        let signal = ControlSignal::piecewise(switch_times, values, horizon)?;
        let traj = flow(&system, &[1.0, 0.0], &signal, horizon, 1e-3)?;
        let min_h = traj
            .states
            .iter()
            .map(|x| h(x))
            .fold(f64::INFINITY, f64::min);
        if min_h >= -1e-4 {
            all_leave = false;
        }
        if min_h > worst_min_h {
            worst_min_h = min_h;
            worst_traj = Some(traj);
        }
    }
    if let Some(traj) = &worst_traj {
        write_atomic(&out.join("worst_trajectory.csv"), traj.to_csv().as_bytes())?;
    }
    let summary = json!({
        "classical_check": if classical_ok { "pass" } else { "fail" },
        "classical_max_violation": classical.max_violation,
        "signals_checked": 1u32 << segments,
        "all_signals_leave_set": all_leave,
        "closest_approach_min_h": worst_min_h,
        "exit_threshold": -1e-4,
    });
    write_atomic(
        &out.join("report.json"),
        serde_json::to_string_pretty(&summary).unwrap().as_bytes(),
    )?;
    say(
        quiet,
        format!(
            "classical check: {}, all {} bang-bang signals leave the set: {} (closest min h = {worst_min_h:.6})",
            if classical_ok { "pass" } else { "fail" },
            1u32 << segments,
            all_leave
        ),
    );
    Ok(if classical_ok && all_leave {
        EXIT_PASS
    } else {
        EXIT_FAIL
    })
}

pub fn cmd_synth(config_path: &Path, mode: &str, out: &Path, quiet: bool) -> i32 {
    finish(run_synth(config_path, mode, out, quiet))
}

fn run_synth(config_path: &Path, mode: &str, out: &Path, quiet: bool) -> CmdResult {
    let cfg = config::load(config_path)?;
    let system = cfg.build_system()?;
    let grid = cfg.build_grid()?;
    let g = cfg.build_g(grid)?;
    let alpha = require_alpha(&cfg)?;
    let params = cfg.solver_params();
    let sc = cfg.synth.as_ref();
    let tol = cfg.verify.as_ref().and_then(|v| v.tol);
    prepare_out(out)?;

    match mode {
        "max" => {
            let g2_src = sc
                .and_then(|s| s.g2.clone())
                .ok_or_else(|| CmdError::Config("synth.g2 is required in max mode".into()))?;
            let expr = crate::expr::parse(&g2_src, false)
                .map_err(|e| CmdError::Config(format!("synth.g2: {e}")))?;
            let mut g2 = cbvf_core::discretize(grid, |x| expr.eval(x, &[]))?;
            g2.label = "g2".into();
            let combined = pointwise_max(&g, &g2)?;
            combined.write_csv_with_sidecar(&out.join("combined.csv"), None)?;
            let report = verify_viscosity_cbf(&system, &alpha, &combined, &params, tol)?;
            write_report(out, &report)?;
            say(quiet, format!("combined field verdict: {:?}", report.verdict));
            Ok(verdict_code(report.verdict))
        }
        "limit" => {
            let mut lp = LimitParams::new(sc.and_then(|s| s.max_t).unwrap_or(10.0));
            if let Some(w) = sc.and_then(|s| s.window) {
                lp.window = w;
            }
            if let Some(sp) = sc.and_then(|s| s.checkpoint_spacing) {
                lp.checkpoint_spacing = sp;
            }
            lp.tol = tol;
            match limit_cbvf(&system, &alpha, &g, &params, &lp) {
                Ok(outcome) => {
                    outcome.field.write_csv_with_sidecar(
                        &out.join("h_inf.csv"),
                        Some(outcome.converged_at),
                    )?;
                    write_atomic(
                        &out.join("limit_history.csv"),
                        limit_history_csv(&outcome.history).as_bytes(),
                    )?;
                    write_report(out, &outcome.verdict)?;
                    say(
                        quiet,
                        format!(
                            "converged at T = {}, verdict: {:?}",
                            outcome.converged_at, outcome.verdict.verdict
                        ),
                    );
                    Ok(verdict_code(outcome.verdict.verdict))
                }
                Err(CoreError::NonConvergence { history }) => {
                    write_atomic(
                        &out.join("limit_history.csv"),
                        limit_history_csv(&history).as_bytes(),
                    )?;
                    say(quiet, "no convergence before max_t");
                    Ok(EXIT_INCONCLUSIVE)
                }
                Err(e) => Err(e.into()),
            }
        }
        other => Err(CmdError::Config(format!(
            "unknown synth mode '{other}' (expected max or limit)"
        ))),
    }
}

fn load_with_seed(config_path: &Path, seed: Option<u64>) -> Result<RunConfig, CmdError> {
    let mut cfg = config::load(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn require_alpha(cfg: &RunConfig) -> Result<ClassK, CmdError> {
    cfg.build_alpha()?
        .ok_or_else(|| CmdError::Config("this command requires an alpha entry".into()))
}

fn boundary_expr(cfg: &RunConfig) -> Result<crate::expr::Expr, CmdError> {
    // same builtin table as the field construction
    let src = match cfg.g.as_str() {
        "tent" => "max(0, 1 - abs(x1))",
        "band" => "max(0, 1 - x1 * x1)",
        "disc" => "max(0, 1 - x1 * x1 - x2 * x2)",
        other => other,
    };
    crate::expr::parse(src, false).map_err(|e| CmdError::Config(format!("g: {e}")))
}
