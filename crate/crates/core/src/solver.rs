//! Explicit level-set marching for the anti-discounted obstacle problem
//! `max{d_T v - H_a(x, v, grad v), v - g} = 0` and the undiscounted avoid
//! variant, plus a brute-force trajectory oracle used as the independent
//! cross-check.

use crate::classk::ClassK;
use crate::dynamics::{rk4_step, Control, ControlSet, System};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, ValueSeries, MAX_DIM};
use crate::verify::{Report, Verdict, Witness};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const AFFINE_PROBE_TOL: f64 = 1e-9;
const MIN_DT: f64 = 1e-9;

fn default_cfl() -> f64 {
    0.5
}

fn default_max_steps() -> usize {
    2_000_000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dissipation {
    Global,
    Local,
}

impl Default for Dissipation {
    fn default() -> Self {
        Dissipation::Local
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub dissipation: Dissipation,
    #[serde(default)]
    pub control_resolution: Option<usize>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

impl SolverParams {
    pub fn new(checkpoints: Vec<f64>) -> Self {
        SolverParams {
            cfl: default_cfl(),
            checkpoints,
            dissipation: Dissipation::default(),
            control_resolution: None,
            max_steps: default_max_steps(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.checkpoints.is_empty() || self.checkpoints[0] != 0.0 {
            return Err(Error::Domain("checkpoint horizons must start at 0".into()));
        }
        if self.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("checkpoint horizons must be increasing".into()));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Domain("cfl must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Decide whether `f` is affine along every control axis at `x` by a
/// three-point collinearity probe.
fn probe_affine(system: &System, x: &[f64], lo: &[f64], hi: &[f64]) -> bool {
    let m = lo.len();
    let center: Control = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
    for axis in 0..m {
        if hi[axis] <= lo[axis] {
            continue;
        }
        let mut ulo = center.clone();
        let mut uhi = center.clone();
        ulo[axis] = lo[axis];
        uhi[axis] = hi[axis];
        let flo = system.deriv(x, &ulo);
        let fhi = system.deriv(x, &uhi);
        let fmid = system.deriv(x, &center);
        for d in 0..system.dim {
            let want = 0.5 * (flo[d] + fhi[d]);
            let scale = 1.0 + flo[d].abs().max(fhi[d].abs());
            if (fmid[d] - want).abs() > AFFINE_PROBE_TOL * scale {
                return false;
            }
        }
    }
    true
}

/// Control values over which `max_u lam . f(x, u)` is taken at `x`:
/// the finite set itself, box corners when `f` is control-affine there,
/// or a dense sample grid otherwise.
fn maximizer_controls(system: &System, x: &[f64], resolution: Option<usize>) -> Vec<Control> {
    match &system.control_set {
        ControlSet::Finite(values) => values.clone(),
        ControlSet::Box {
            lo,
            hi,
            sample_count,
        } => {
            if probe_affine(system, x, lo, hi) {
                system.control_set.corners()
            } else {
                let n = resolution.unwrap_or(*sample_count);
                match &system.control_set {
                    ControlSet::Box { lo, hi, .. } => ControlSet::Box {
                        lo: lo.clone(),
                        hi: hi.clone(),
                        sample_count: n,
                    }
                    .sample_grid(),
                    ControlSet::Finite(_) => unreachable!(),
                }
            }
        }
    }
}

/// `H(x, lam) = max_u lam . f(x, u)`.
pub fn ham_max(system: &System, x: &[f64], lam: &[f64]) -> f64 {
    let controls = maximizer_controls(system, x, None);
    controls
        .iter()
        .map(|u| {
            let f = system.deriv(x, u);
            lam.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `H_a(x, r, lam) = max_u lam . f(x, u) + alpha(r)`.
pub fn ham_alpha(system: &System, alpha: &ClassK, x: &[f64], r: f64, lam: &[f64]) -> Result<f64> {
    Ok(ham_max(system, x, lam) + alpha.alpha(r)?)
}

/// Per-node cache for the marching loop: `f(x, u)` for every maximizer
/// control, and per-axis speed bounds for the Lax-Friedrichs dissipation.
struct NodeCache {
    /// per node: f vectors at each maximizer control
    f_samples: Vec<Vec<[f64; MAX_DIM]>>,
    /// per node, per axis: max |f_d(x, u)| over the samples
    sigma: Vec<[f64; MAX_DIM]>,
    /// per axis: grid-global max of sigma
    sigma_global: [f64; MAX_DIM],
}

fn build_node_cache(system: &System, g: &ScalarField, resolution: Option<usize>) -> NodeCache {
    let grid = &g.grid;
    let n = grid.num_nodes();
    let per_node: Vec<(Vec<[f64; MAX_DIM]>, [f64; MAX_DIM])> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let x = grid.node(idx);
            let controls = maximizer_controls(system, &x, resolution);
            let mut fs = Vec::with_capacity(controls.len());
            let mut sig = [0.0f64; MAX_DIM];
            for u in &controls {
                let f = system.deriv(&x, u);
                let mut fv = [0.0f64; MAX_DIM];
                for d in 0..system.dim {
                    fv[d] = f[d];
                    sig[d] = sig[d].max(f[d].abs());
                }
                fs.push(fv);
            }
            (fs, sig)
        })
        .collect();
    let mut sigma_global = [0.0f64; MAX_DIM];
    for (_, sig) in &per_node {
        for d in 0..MAX_DIM {
            sigma_global[d] = sigma_global[d].max(sig[d]);
        }
    }
    NodeCache {
        f_samples: per_node.iter().map(|(fs, _)| fs.clone()).collect(),
        sigma: per_node.into_iter().map(|(_, sig)| sig).collect(),
        sigma_global,
    }
}

struct March<'a> {
    grid_dim: usize,
    counts: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    spacing: [f64; MAX_DIM],
    cache: &'a NodeCache,
    alpha: Option<&'a ClassK>,
    dissipation: Dissipation,
    obstacle: &'a [f64],
}

impl March<'_> {
    /// One explicit Euler stage of the clamped scheme.
    fn stage(&self, v: &[f64], dt: f64) -> Vec<f64> {
        let dim = self.grid_dim;
        v.par_iter()
            .enumerate()
            .map(|(idx, &vi)| {
                let mut mi = [0usize; MAX_DIM];
                let mut rem = idx;
                for d in 0..dim {
                    mi[d] = rem / self.strides[d];
                    rem %= self.strides[d];
                }
                let mut central = [0.0f64; MAX_DIM];
                let mut diss = 0.0;
                for d in 0..dim {
                    let stride = self.strides[d];
                    let dx = self.spacing[d];
                    let left = if mi[d] > 0 {
                        (vi - v[idx - stride]) / dx
                    } else {
                        (v[idx + stride] - vi) / dx
                    };
                    let right = if mi[d] + 1 < self.counts[d] {
                        (v[idx + stride] - vi) / dx
                    } else {
                        (vi - v[idx - stride]) / dx
                    };
                    central[d] = 0.5 * (left + right);
                    let sigma = match self.dissipation {
                        Dissipation::Local => self.cache.sigma[idx][d],
                        Dissipation::Global => self.cache.sigma_global[d],
                    };
                    // marching forward in T with d_T v = H flips the usual
                    // Lax-Friedrichs sign; +sigma/2 (right - left) is the
                    // dissipative orientation here
                    diss += 0.5 * sigma * (left - right);
                }
                let mut ham = f64::NEG_INFINITY;
                for f in &self.cache.f_samples[idx] {
                    let mut dot = 0.0;
                    for d in 0..dim {
                        dot += central[d] * f[d];
                    }
                    ham = ham.max(dot);
                }
                if let Some(alpha) = self.alpha {
                    ham += alpha
                        .alpha(vi.max(0.0))
                        .expect("value stays nonnegative under clamping");
                }
                let next = vi + dt * (ham - diss);
                // obstacle and nonnegativity clamps after every stage
                next.min(self.obstacle[idx]).max(0.0)
            })
            .collect()
    }

    /// TVD-RK2 (Heun) step built from two clamped Euler stages.
    fn step(&self, v: &[f64], dt: f64) -> Vec<f64> {
        let s1 = self.stage(v, dt);
        let s2 = self.stage(&s1, dt);
        v.iter()
            .zip(&s2)
            .zip(self.obstacle)
            .map(|((&a, &b), &g)| (0.5 * (a + b)).min(g).max(0.0))
            .collect()
    }
}

/// Wall-clock-free accounting for a completed march.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct SolveTrace {
    pub steps: usize,
    pub dt: f64,
}

fn march(
    system: &System,
    alpha: Option<&ClassK>,
    g: &ScalarField,
    params: &SolverParams,
    monotone_in_horizon: bool,
) -> Result<(ValueSeries, SolveTrace)> {
    params.validate()?;
    if g.min_value() < 0.0 {
        return Err(Error::Domain(
            "initial condition g must be nonnegative; apply clamp_nonneg first".into(),
        ));
    }
    if system.dim != g.grid.dim {
        return Err(Error::GridMismatch);
    }

    let cache = build_node_cache(system, g, params.control_resolution);

    // anti-discount slope bound on [0, max g] enters the CFL budget
    let l_alpha = match alpha {
        Some(a) => a.comparison_bound(g.max_value().max(1e-12))?,
        None => 0.0,
    };
    let mut speed = l_alpha;
    for d in 0..g.grid.dim {
        speed += cache.sigma_global[d] / g.grid.spacing()[d];
    }
    let dt = params.cfl / speed.max(1e-30);
    if dt < MIN_DT {
        return Err(Error::Stiffness { dt });
    }

    let strides = g.grid.strides();
    let mut counts = [1usize; MAX_DIM];
    counts[..g.grid.dim].copy_from_slice(g.grid.counts());
    let mut spacing = [1.0f64; MAX_DIM];
    spacing[..g.grid.dim].copy_from_slice(g.grid.spacing());
    let marcher = March {
        grid_dim: g.grid.dim,
        counts,
        strides,
        spacing,
        cache: &cache,
        alpha,
        dissipation: params.dissipation,
        obstacle: &g.values,
    };

    let mut series = ValueSeries {
        checkpoints: vec![0.0],
        fields: vec![g.clone()],
    };
    let mut v = g.values.clone();
    let mut t = 0.0;
    let mut steps = 0usize;
    for &ck in params.checkpoints.iter().skip(1) {
        while t < ck - 1e-12 {
            let h = dt.min(ck - t);
            let mut next = marcher.step(&v, h);
            if monotone_in_horizon {
                // the avoid value is a min over a growing window
                for (n, old) in next.iter_mut().zip(&v) {
                    *n = n.min(*old);
                }
            }
            v = next;
            t += h;
            steps += 1;
            if steps > params.max_steps {
                return Err(Error::Truncated {
                    reached: t,
                    partial: series,
                });
            }
        }
        series.checkpoints.push(ck);
        series.fields.push(ScalarField {
            grid: g.grid,
            values: v.clone(),
            label: g.label.clone(),
        });
    }
    Ok((series, SolveTrace { steps, dt }))
}

/// Solve the CB-VF variational inequality by forward time marching from
/// `v(., 0) = g` with a local Lax-Friedrichs numerical Hamiltonian.
///
/// The returned snapshots satisfy `0 <= v(x, T) <= g(x)` at every node.
pub fn solve_cbvf(
    system: &System,
    alpha: &ClassK,
    g: &ScalarField,
    params: &SolverParams,
) -> Result<ValueSeries> {
    Ok(march(system, Some(alpha), g, params, false)?.0)
}

/// `solve_cbvf` plus step accounting for run manifests.
pub fn solve_cbvf_traced(
    system: &System,
    alpha: &ClassK,
    g: &ScalarField,
    params: &SolverParams,
) -> Result<(ValueSeries, SolveTrace)> {
    march(system, Some(alpha), g, params, false)
}

/// The undiscounted avoid value function: same marching with the
/// anti-discount term zero, additionally non-increasing in the horizon.
pub fn solve_avoid(system: &System, g: &ScalarField, params: &SolverParams) -> Result<ValueSeries> {
    Ok(march(system, None, g, params, true)?.0)
}

/// `solve_avoid` plus step accounting for run manifests.
pub fn solve_avoid_traced(
    system: &System,
    g: &ScalarField,
    params: &SolverParams,
) -> Result<(ValueSeries, SolveTrace)> {
    march(system, None, g, params, true)
}

#[derive(Clone, Debug)]
pub struct OracleParams {
    pub num_intervals: usize,
    pub control_values: Vec<Control>,
    /// payoff sampling density per unit horizon
    pub time_samples: usize,
    pub bisection_tol: f64,
}

impl OracleParams {
    /// Control candidates per the enumeration convention: the finite set
    /// itself, or box corners plus the center.
    pub fn for_system(system: &System, num_intervals: usize) -> Self {
        let mut control_values = system.control_set.corners();
        if let Some(center) = system.control_set.center() {
            if !control_values.contains(&center) {
                control_values.push(center);
            }
        }
        control_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        OracleParams {
            num_intervals,
            control_values,
            time_samples: 200,
            bisection_tol: 1e-6,
        }
    }

    /// Endpoint-only (bang-bang) candidates for box sets.
    pub fn bang_bang(system: &System, num_intervals: usize) -> Self {
        let mut p = Self::for_system(system, num_intervals);
        p.control_values = system.control_set.corners();
        p
    }
}

/// Brute-force realization of the implicit CB-VF definition: enumerate all
/// piecewise-constant signals, integrate, take the anti-discounted
/// min-over-time payoff, and invert `beta(., T)` by bisection.
pub fn cbvf_oracle(
    system: &System,
    alpha: &ClassK,
    g_fn: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    big_t: f64,
    params: &OracleParams,
) -> Result<f64> {
    let gx = g_fn(x);
    if gx < 0.0 {
        return Err(Error::Domain("oracle needs a nonnegative g".into()));
    }
    if big_t == 0.0 || gx == 0.0 {
        return Ok(if gx == 0.0 { 0.0 } else { gx });
    }
    let k = params.num_intervals.max(1);
    let m = params.control_values.len();
    let count = (m as f64).powi(k as i32);
    if count > 1e7 {
        return Err(Error::Capacity { size: count });
    }
    let count = count as usize;

    let seg = big_t / k as f64;
    let samples_total = ((params.time_samples as f64 * big_t).ceil() as usize).max(2);
    let steps_per_seg = (samples_total + k - 1) / k;
    let h = seg / steps_per_seg as f64;

    let payoff_of = |seq: usize| -> f64 {
        let mut state = x.to_vec();
        let mut best = alpha.beta(gx, big_t).expect("valid beta arguments");
        let mut code = seq;
        let mut t = 0.0;
        for _ in 0..k {
            let u = &params.control_values[code % m];
            code /= m;
            for _ in 0..steps_per_seg {
                state = rk4_step(system, &state, u, h);
                t += h;
                let gv = g_fn(&state).max(0.0);
                let b = alpha
                    .beta(gv, (big_t - t).max(0.0))
                    .expect("valid beta arguments");
                if b < best {
                    best = b;
                }
            }
        }
        best
    };

    let payoff = (0..count)
        .into_par_iter()
        .map(payoff_of)
        .reduce(|| f64::NEG_INFINITY, f64::max);

    // invert beta(., T), which is strictly increasing in its first argument
    let top = alpha.beta(gx, big_t)?;
    if payoff >= top - 1e-15 {
        return Ok(gx);
    }
    let mut lo = 0.0;
    let mut hi = gx;
    while hi - lo > params.bisection_tol {
        let mid = 0.5 * (lo + hi);
        if alpha.beta(mid, big_t)? < payoff {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Check the transformed obstacle condition `beta(v(x,T), T) <=
/// beta(g(x), T)` at all nodes and checkpoints; a necessary condition of
/// the equivalent transformed problem.
pub fn transform_check(
    series: &ValueSeries,
    g: &ScalarField,
    alpha: &ClassK,
    tol: f64,
) -> Result<Report> {
    let mut max_violation = f64::NEG_INFINITY;
    let mut witnesses = Vec::new();
    for (ck, field) in series.checkpoints.iter().zip(&series.fields) {
        if field.grid != g.grid {
            return Err(Error::GridMismatch);
        }
        for (idx, (&v, &gv)) in field.values.iter().zip(&g.values).enumerate() {
            let w = alpha.beta(v.max(0.0), *ck)?;
            let bound = alpha.beta(gv.max(0.0), *ck)?;
            let violation = w - bound;
            if violation > max_violation {
                max_violation = violation;
                if violation > tol {
                    witnesses.push(Witness {
                        state: g.grid.node(idx),
                        t_or_t: *ck,
                        measured: w,
                        required: bound,
                    });
                }
            }
        }
    }
    let verdict = if max_violation <= tol {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(Report::new(verdict, max_violation, witnesses)
        .with_tolerance("transform_tol", tol))
}
