//! Barrier synthesis: pointwise max combination and the long-horizon
//! limit of the value recursion.

use crate::classk::ClassK;
use crate::dynamics::System;
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::solver::{solve_cbvf, SolverParams};
use crate::verify::{check_time_invariance, default_invariance_tol, Report, DEFAULT_MARGIN_BAND};

/// Pointwise max of two fields on the same grid. The max of two viscosity
/// CBFs for the same alpha is again one, so this closes the certified set
/// under union.
pub fn pointwise_max(a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let values: Vec<f64> = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| x.max(y))
        .collect();
    ScalarField::new(a.grid, values, format!("max({},{})", a.label, b.label))
}

#[derive(Clone, Debug)]
pub struct LimitParams {
    /// Consecutive checkpoint pairs whose sup-change must all sit under tol.
    pub window: usize,
    /// Convergence threshold; defaults to the time-invariance tolerance.
    pub tol: Option<f64>,
    pub max_t: f64,
    pub checkpoint_spacing: f64,
}

impl LimitParams {
    pub fn new(max_t: f64) -> Self {
        LimitParams {
            window: 5,
            tol: None,
            max_t,
            checkpoint_spacing: 0.25,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Domain("window must be positive".into()));
        }
        if !(self.checkpoint_spacing > 0.0) || !(self.max_t > 0.0) {
            return Err(Error::Domain(
                "max_t and checkpoint_spacing must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LimitOutcome {
    /// The converged field h_inf.
    pub field: ScalarField,
    /// First horizon at which the trailing window sat under tol.
    pub converged_at: f64,
    /// (T, sup-change against the previous checkpoint) per checkpoint.
    pub history: Vec<(f64, f64)>,
    /// Viscosity verdict for h_inf under the same solver parameters.
    pub verdict: Report,
}

pub fn limit_history_csv(history: &[(f64, f64)]) -> String {
    let mut out = String::from("T,sup_change\n");
    for (t, change) in history {
        out.push_str(&format!("{t},{change}\n"));
    }
    out
}

/// March the CB-VF until consecutive checkpoints stop moving, then verify
/// the limit field for time-invariance.
///
/// Convergence means the last `window` sup-changes are all at most tol.
/// Failing to converge by max_t is an error carrying the full history.
pub fn limit_cbvf(
    system: &System,
    alpha: &ClassK,
    g: &ScalarField,
    solver_params: &SolverParams,
    params: &LimitParams,
) -> Result<LimitOutcome> {
    params.validate()?;
    let tol = params.tol.unwrap_or_else(|| default_invariance_tol(g));
    let n = (params.max_t / params.checkpoint_spacing).round() as usize;
    let checkpoints: Vec<f64> = (0..=n)
        .map(|k| k as f64 * params.checkpoint_spacing)
        .collect();
    let mut sp = solver_params.clone();
    sp.checkpoints = checkpoints.clone();
    let series = solve_cbvf(system, alpha, g, &sp)?;

    let mut history = Vec::with_capacity(n);
    let mut converged_at = None;
    for k in 1..series.fields.len() {
        let change = series.fields[k].sup_dist(&series.fields[k - 1])?;
        history.push((series.checkpoints[k], change));
        if converged_at.is_none()
            && history.len() >= params.window
            && history[history.len() - params.window..]
                .iter()
                .all(|&(_, c)| c <= tol)
        {
            converged_at = Some(k);
        }
    }
    let Some(k) = converged_at else {
        return Err(Error::NonConvergence { history });
    };
    let field = ScalarField::new(
        series.fields[k].grid,
        series.fields[k].values.clone(),
        "h_inf",
    )?;
    let verdict =
        crate::verify::verify_viscosity_cbf(system, alpha, &field, solver_params, Some(tol))?;
    Ok(LimitOutcome {
        field,
        converged_at: series.checkpoints[k],
        history,
        verdict,
    })
}

/// Cauchy-style surrogate for convergence of an externally produced field
/// sequence: sup-distances between consecutive fields must be
/// non-increasing with the last one at most tol, and the final field must
/// pass the time-invariance check.
pub fn sequence_limit_check(
    fields: &[ScalarField],
    system: &System,
    alpha: &ClassK,
    solver_params: &SolverParams,
    tol: f64,
) -> Result<Report> {
    if fields.len() < 2 {
        return Err(Error::Domain("need at least two fields".into()));
    }
    let mut diffs = Vec::with_capacity(fields.len() - 1);
    for pair in fields.windows(2) {
        diffs.push(pair[1].sup_dist(&pair[0])?);
    }
    let monotone = diffs.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let last = *diffs.last().unwrap();
    if !monotone || last > tol {
        let history: Vec<(f64, f64)> = diffs
            .iter()
            .enumerate()
            .map(|(i, &d)| (i as f64 + 1.0, d))
            .collect();
        return Err(Error::NonConvergence { history });
    }
    let series = solve_cbvf(system, alpha, &fields[fields.len() - 1].clamp_nonneg(), solver_params)?;
    let report = check_time_invariance(
        &series,
        &fields[fields.len() - 1].clamp_nonneg(),
        tol,
        DEFAULT_MARGIN_BAND,
    )?;
    Ok(report.with_note("sequence convergence judged by a Cauchy surrogate, not a proof"))
}
