//! Controllers used by Barrier Guarantee verification: greedy
//! gradient-based control and a sample-and-hold rollout that logs a
//! per-interval decay certificate.

use crate::classk::ClassK;
use crate::dynamics::{rk4_step, Control, ControlSet, ControlSignal, System, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{interpolate, upwind_gradients, ScalarField, MAX_DIM};

pub const DEFAULT_ROLLOUT_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMode {
    Central,
    /// One-sided differences picked against the flow direction per axis.
    UpwindAgainstFlow,
}

/// Feedback `k(x) = argmax_u grad h(x) . f(x, u)` over the admissible set,
/// with the gradient read from interpolated difference fields.
pub struct GreedyController {
    pub h_field: ScalarField,
    pub gradient_mode: GradientMode,
    pub control_set: ControlSet,
    central: Vec<ScalarField>,
    left: Vec<ScalarField>,
    right: Vec<ScalarField>,
}

impl GreedyController {
    pub fn new(h_field: ScalarField, gradient_mode: GradientMode, control_set: ControlSet) -> Self {
        let grads = upwind_gradients(&h_field);
        let dim = h_field.grid.dim;
        let component = |pick: &dyn Fn(usize, usize) -> f64| -> Vec<ScalarField> {
            (0..dim)
                .map(|d| ScalarField {
                    grid: h_field.grid,
                    values: (0..h_field.values.len()).map(|i| pick(i, d)).collect(),
                    label: format!("grad{d}"),
                })
                .collect()
        };
        let central = component(&|i, d| 0.5 * (grads.left[i][d] + grads.right[i][d]));
        let left = component(&|i, d| grads.left[i][d]);
        let right = component(&|i, d| grads.right[i][d]);
        GreedyController {
            h_field,
            gradient_mode,
            control_set,
            central,
            left,
            right,
        }
    }

    fn candidates(&self) -> Vec<Control> {
        match &self.control_set {
            ControlSet::Finite(values) => {
                let mut v = values.clone();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v
            }
            ControlSet::Box { .. } => {
                // corners cover the affine case; the probe lives in the
                // solver, here corners plus a dense grid keeps it simple
                let mut v = self.control_set.corners();
                for u in self.control_set.sample_grid() {
                    v.push(u);
                }
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v.dedup();
                v
            }
        }
    }

    /// Argmax of the directional derivative estimate; ties break to the
    /// lexicographically smallest control.
    pub fn control(&self, system: &System, x: &[f64]) -> Result<Control> {
        let dim = self.h_field.grid.dim;
        let mut central = [0.0f64; MAX_DIM];
        let mut left = [0.0f64; MAX_DIM];
        let mut right = [0.0f64; MAX_DIM];
        for d in 0..dim {
            central[d] = interpolate(&self.central[d], x)?;
            if self.gradient_mode == GradientMode::UpwindAgainstFlow {
                left[d] = interpolate(&self.left[d], x)?;
                right[d] = interpolate(&self.right[d], x)?;
            }
        }
        let mut best: Option<(f64, Control)> = None;
        for u in self.candidates() {
            let f = system.deriv(x, &u);
            let score: f64 = (0..dim)
                .map(|d| match self.gradient_mode {
                    GradientMode::Central => central[d] * f[d],
                    GradientMode::UpwindAgainstFlow => {
                        // information flows against the advection direction
                        let slope = if f[d] > 0.0 { right[d] } else { left[d] };
                        slope * f[d]
                    }
                })
                .sum();
            match &best {
                Some((s, _)) if score <= *s => {}
                _ => best = Some((score, u)),
            }
        }
        Ok(best.expect("control set is non-empty").1)
    }
}

/// Greedy feedback re-evaluated every `tau` time units and held in between.
pub struct SampleHoldController {
    pub base: GreedyController,
    pub tau: f64,
    pub theta0: f64,
}

impl SampleHoldController {
    pub fn new(base: GreedyController, tau: f64, theta0: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Domain("hold period tau must be positive".into()));
        }
        if !(0.0..1.0).contains(&theta0) {
            return Err(Error::Domain("theta must lie in [0, 1)".into()));
        }
        Ok(SampleHoldController { base, tau, theta0 })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ThetaLogEntry {
    pub interval: usize,
    pub t_start: f64,
    /// Smallest multiplier achieved over the hold period:
    /// `min_t h(x(t)) / beta(theta h(x_n), t - t_n)`.
    pub theta_hat: f64,
}

pub fn theta_log_csv(log: &[ThetaLogEntry]) -> String {
    let mut out = String::from("interval,t_start,theta_hat\n");
    for e in log {
        out.push_str(&format!("{},{},{}\n", e.interval, e.t_start, e.theta_hat));
    }
    out
}

/// Roll out the sample-and-hold policy and measure the per-interval decay
/// certificate. The certificate is measured, not chosen: the log exposes
/// how much margin the greedy policy actually achieves.
pub fn sample_hold_rollout(
    ctrl: &SampleHoldController,
    system: &System,
    alpha: &ClassK,
    x0: &[f64],
    horizon: f64,
) -> Result<(Trajectory, Vec<ThetaLogEntry>)> {
    let h0 = interpolate(&ctrl.base.h_field, x0)?;
    if !(h0 > 0.0) {
        return Err(Error::Domain(format!(
            "sample-and-hold rollout needs h(x0) > 0, got {h0}"
        )));
    }
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut switch_times = Vec::new();
    let mut controls = Vec::new();
    let mut log = Vec::new();
    if horizon == 0.0 {
        let signal = ControlSignal::constant(
            ctrl.base.control(system, x0)?,
            0.0,
        );
        return Ok((
            Trajectory {
                times,
                states,
                signal,
            },
            log,
        ));
    }

    let n_intervals = (horizon / ctrl.tau).ceil() as usize;
    let mut x = x0.to_vec();
    let mut t = 0.0;
    for interval in 0..n_intervals {
        let t_start = t;
        let span = ctrl.tau.min(horizon - t_start);
        let h_n = interpolate(&ctrl.base.h_field, &x)?;
        let anchor = (ctrl.theta0 * h_n).max(0.0);
        let u = ctrl.base.control(system, &x)?;
        switch_times.push(t_start);
        controls.push(u.clone());

        let steps = (span / DEFAULT_ROLLOUT_STEP).ceil().max(1.0) as usize;
        let h_step = span / steps as f64;
        let mut theta_hat = f64::INFINITY;
        for _ in 0..steps {
            x = rk4_step(system, &x, &u, h_step);
            t += h_step;
            if x.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e9 {
                return Err(Error::Divergence { t });
            }
            times.push(t);
            states.push(x.clone());
            let measured = interpolate(&ctrl.base.h_field, &x)?;
            let denom = alpha.beta(anchor, t - t_start)?;
            let ratio = if denom > 1e-12 {
                measured / denom
            } else if measured >= 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            theta_hat = theta_hat.min(ratio);
        }
        log.push(ThetaLogEntry {
            interval,
            t_start,
            theta_hat,
        });
    }
    let signal = ControlSignal::piecewise(switch_times, controls, horizon)?;
    Ok((
        Trajectory {
            times,
            states,
            signal,
        },
        log,
    ))
}
