//! Control systems `x' = f(x, u)`, admissible control sets, piecewise
//! constant control signals, and RK4 trajectory integration.

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

pub type State = Vec<f64>;
pub type Control = Vec<f64>;

pub const DEFAULT_FLOW_STEP: f64 = 1e-3;
const DIVERGENCE_NORM: f64 = 1e9;
const MEMBERSHIP_TOL: f64 = 1e-12;

/// Admissible control values. Either an explicit finite list or a compact
/// box; `sample_count` is the per-dimension fallback resolution used when a
/// box Hamiltonian cannot be maximized exactly.
#[derive(Clone, Debug)]
pub enum ControlSet {
    Finite(Vec<Control>),
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
        sample_count: usize,
    },
}

impl ControlSet {
    pub fn finite(values: Vec<Control>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("finite control set must be non-empty".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::Domain("control values have mixed dimensions".into()));
        }
        Ok(ControlSet::Finite(values))
    }

    pub fn bounded(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Domain("box control bounds have mixed dimensions".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::Domain("box control set needs lo <= hi".into()));
        }
        Ok(ControlSet::Box {
            lo,
            hi,
            sample_count: 9,
        })
    }

    pub fn control_dim(&self) -> usize {
        match self {
            ControlSet::Finite(v) => v[0].len(),
            ControlSet::Box { lo, .. } => lo.len(),
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        if u.len() != self.control_dim() {
            return false;
        }
        match self {
            ControlSet::Finite(values) => values.iter().any(|v| {
                v.iter()
                    .zip(u)
                    .all(|(a, b)| (a - b).abs() <= MEMBERSHIP_TOL)
            }),
            ControlSet::Box { lo, hi, .. } => u
                .iter()
                .enumerate()
                .all(|(i, &ui)| ui >= lo[i] - MEMBERSHIP_TOL && ui <= hi[i] + MEMBERSHIP_TOL),
        }
    }

    /// Box corners in lexicographic order (finite sets return themselves).
    pub fn corners(&self) -> Vec<Control> {
        match self {
            ControlSet::Finite(values) => values.clone(),
            ControlSet::Box { lo, hi, .. } => {
                let m = lo.len();
                let mut out = Vec::with_capacity(1 << m);
                for mask in 0..(1usize << m) {
                    let u: Control = (0..m)
                        .map(|i| if mask & (1 << (m - 1 - i)) == 0 { lo[i] } else { hi[i] })
                        .collect();
                    out.push(u);
                }
                out.sort_by(|a, b| a.partial_cmp(b).unwrap());
                out.dedup();
                out
            }
        }
    }

    pub fn center(&self) -> Option<Control> {
        match self {
            ControlSet::Finite(_) => None,
            ControlSet::Box { lo, hi, .. } => {
                Some(lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect())
            }
        }
    }

    /// Dense sample grid: the finite list itself, or `sample_count` points
    /// per box axis.
    pub fn sample_grid(&self) -> Vec<Control> {
        match self {
            ControlSet::Finite(values) => values.clone(),
            ControlSet::Box {
                lo,
                hi,
                sample_count,
            } => {
                let n = (*sample_count).max(2);
                let m = lo.len();
                let mut out = vec![Vec::with_capacity(m)];
                for i in 0..m {
                    let mut next = Vec::with_capacity(out.len() * n);
                    for base in &out {
                        for k in 0..n {
                            let mut u = base.clone();
                            u.push(lo[i] + (hi[i] - lo[i]) * k as f64 / (n - 1) as f64);
                            next.push(u);
                        }
                    }
                    out = next;
                }
                out
            }
        }
    }
}

type DynamicsFn = Arc<dyn Fn(&[f64], &[f64]) -> State + Send + Sync>;

#[derive(Clone)]
pub struct System {
    pub name: String,
    pub dim: usize,
    pub control_set: ControlSet,
    pub lipschitz_hint: Option<f64>,
    f: DynamicsFn,
}

impl fmt::Debug for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("System")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("control_set", &self.control_set)
            .finish()
    }
}

impl System {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        control_set: ControlSet,
        f: impl Fn(&[f64], &[f64]) -> State + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::Domain(format!(
                "state dimension {dim} outside the supported range 1..=3"
            )));
        }
        Ok(System {
            name: name.into(),
            dim,
            control_set,
            lipschitz_hint: None,
            f: Arc::new(f),
        })
    }

    pub fn with_control_set(mut self, control_set: ControlSet) -> Self {
        self.control_set = control_set;
        self
    }

    /// `f(x, u)` without the admissibility check. Solver inner loops use
    /// this with controls drawn from the set itself.
    pub fn deriv(&self, x: &[f64], u: &[f64]) -> State {
        (self.f)(x, u)
    }

    /// `f(x, u)` with membership of `u` in the control set enforced.
    pub fn eval_f(&self, x: &[f64], u: &[f64]) -> Result<State> {
        if !self.control_set.contains(u) {
            return Err(Error::Domain(format!(
                "control {u:?} is not admissible for system `{}`",
                self.name
            )));
        }
        Ok(self.deriv(x, u))
    }
}

/// Piecewise-constant control signal. Switch times start at 0 and are
/// strictly increasing; value `i` applies on `[times[i], times[i+1])`.
#[derive(Clone, Debug)]
pub struct ControlSignal {
    switch_times: Vec<f64>,
    values: Vec<Control>,
    pub horizon: f64,
}

impl ControlSignal {
    pub fn constant(u: Control, horizon: f64) -> Self {
        ControlSignal {
            switch_times: vec![0.0],
            values: vec![u],
            horizon,
        }
    }

    pub fn piecewise(switch_times: Vec<f64>, values: Vec<Control>, horizon: f64) -> Result<Self> {
        if switch_times.is_empty() || switch_times[0] != 0.0 {
            return Err(Error::Domain("switch times must start at 0".into()));
        }
        if switch_times.len() != values.len() {
            return Err(Error::Domain(
                "switch times and control values must pair up".into(),
            ));
        }
        if switch_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("switch times must be strictly increasing".into()));
        }
        Ok(ControlSignal {
            switch_times,
            values,
            horizon,
        })
    }

    pub fn value_at(&self, t: f64) -> &Control {
        let i = self.switch_times.partition_point(|&s| s <= t);
        &self.values[i.saturating_sub(1).min(self.values.len() - 1)]
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, &Control)> {
        self.switch_times.iter().copied().zip(self.values.iter())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub signal: ControlSignal,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory is never empty")
    }

    /// CSV with header `t,x1,...,xn,u1,...,um`.
    pub fn to_csv(&self) -> String {
        let n = self.states[0].len();
        let m = self.signal.values[0].len();
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        for i in 1..=m {
            out.push_str(&format!(",u{i}"));
        }
        out.push('\n');
        for (t, x) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t}"));
            for xi in x {
                out.push_str(&format!(",{xi}"));
            }
            for ui in self.signal.value_at(*t) {
                out.push_str(&format!(",{ui}"));
            }
            out.push('\n');
        }
        out
    }
}

/// RK4 flow with the control held constant within each integrator step
/// (switch times are snapped to the step grid).
pub fn flow(
    system: &System,
    x0: &[f64],
    signal: &ControlSignal,
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    if t_end < 0.0 || !(step > 0.0) {
        return Err(Error::Domain("flow needs t_end >= 0 and step > 0".into()));
    }
    if t_end > signal.horizon + 1e-12 {
        return Err(Error::Domain(format!(
            "t_end {t_end} exceeds signal horizon {}",
            signal.horizon
        )));
    }
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    if t_end == 0.0 {
        return Ok(Trajectory {
            times,
            states,
            signal: signal.clone(),
        });
    }
    let n = (t_end / step).ceil().max(1.0) as usize;
    let h = t_end / n as f64;
    let mut x = x0.to_vec();
    for k in 0..n {
        let t = k as f64 * h;
        let u = signal.value_at(t);
        x = rk4_step(system, &x, u, h);
        if x.iter().map(|v| v * v).sum::<f64>().sqrt() > DIVERGENCE_NORM {
            return Err(Error::Divergence { t: t + h });
        }
        times.push((k + 1) as f64 * h);
        states.push(x.clone());
    }
    Ok(Trajectory {
        times,
        states,
        signal: signal.clone(),
    })
}

pub fn rk4_step(system: &System, x: &[f64], u: &[f64], h: f64) -> State {
    let k1 = system.deriv(x, u);
    let x2: State = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
    let k2 = system.deriv(&x2, u);
    let x3: State = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
    let k3 = system.deriv(&x3, u);
    let x4: State = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
    let k4 = system.deriv(&x4, u);
    (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// The bundled systems.
///
/// * `scalar_example`: `x' = x + (x + x^3)/(1 + |x|) u`, `U = [-1, 1]`.
/// * `counterexample_2d`: piecewise radial dynamics with `U = {-1, +1}`;
///   inside the unit ball `x1' = 0, x2' = u`.
/// * `single_integrator`: `x' = u`, `U = [-1, 1]`.
/// * `double_integrator`: `x1' = x2, x2' = u`, `U = [-1, 1]`.
pub fn builtin_system(name: &str) -> Result<System> {
    match name {
        "scalar_example" => System::new(
            name,
            1,
            ControlSet::bounded(vec![-1.0], vec![1.0])?,
            |x, u| {
                let xv = x[0];
                vec![xv + (xv + xv.powi(3)) / (1.0 + xv.abs()) * u[0]]
            },
        ),
        "counterexample_2d" => System::new(
            name,
            2,
            ControlSet::finite(vec![vec![-1.0], vec![1.0]])?,
            |x, u| {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                if r <= 1.0 {
                    vec![0.0, u[0]]
                } else {
                    let radial = (1.0 - r) / r;
                    vec![x[0] * radial, x[1] * radial + u[0]]
                }
            },
        ),
        "single_integrator" => System::new(
            name,
            1,
            ControlSet::bounded(vec![-1.0], vec![1.0])?,
            |_x, u| vec![u[0]],
        ),
        "double_integrator" => System::new(
            name,
            2,
            ControlSet::bounded(vec![-1.0], vec![1.0])?,
            |x, u| vec![x[1], u[0]],
        ),
        other => Err(Error::UnknownSystem(other.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_f_examples() {
        let scalar = builtin_system("scalar_example").unwrap();
        let d = scalar.eval_f(&[0.0], &[1.0]).unwrap();
        assert_eq!(d[0], 0.0);
        let d = scalar.eval_f(&[1.0], &[-1.0]).unwrap();
        assert!(d[0].abs() < 1e-12);

        let ce = builtin_system("counterexample_2d").unwrap();
        let d = ce.eval_f(&[0.5, 0.0], &[1.0]).unwrap();
        assert_eq!(d, vec![0.0, 1.0]);

        // inadmissible control is rejected
        assert!(ce.eval_f(&[0.5, 0.0], &[0.5]).is_err());
    }

    #[test]
    fn unknown_system_is_an_error() {
        assert!(matches!(
            builtin_system("unknown"),
            Err(Error::UnknownSystem(_))
        ));
    }

    #[test]
    fn zero_length_flow() {
        let sys = builtin_system("single_integrator").unwrap();
        let sig = ControlSignal::constant(vec![1.0], 1.0);
        let traj = flow(&sys, &[0.3], &sig, 0.0, 1e-3).unwrap();
        assert_eq!(traj.states, vec![vec![0.3]]);
    }

    #[test]
    fn linear_flow_is_exact() {
        let sys = builtin_system("single_integrator").unwrap();
        let sig = ControlSignal::constant(vec![1.0], 2.0);
        let traj = flow(&sys, &[0.0], &sig, 2.0, 1e-3).unwrap();
        assert!((traj.final_state()[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn counterexample_contracts_to_unit_circle() {
        // test-only widened control set containing 0 so the radial part
        // acts alone
        let sys = builtin_system("counterexample_2d")
            .unwrap()
            .with_control_set(ControlSet::finite(vec![vec![-1.0], vec![0.0], vec![1.0]]).unwrap());
        let sig = ControlSignal::constant(vec![0.0], 10.0);
        let traj = flow(&sys, &[2.0, 0.0], &sig, 10.0, 1e-3).unwrap();
        let x = traj.final_state();
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        assert!((r - 1.0).abs() < 1e-3);
    }

    #[test]
    fn counterexample_dynamics_continuous_across_circle() {
        let sys = builtin_system("counterexample_2d").unwrap();
        for k in 0..16 {
            let phi = k as f64 * std::f64::consts::PI / 8.0;
            let inside = [phi.cos() * (1.0 - 1e-9), phi.sin() * (1.0 - 1e-9)];
            let outside = [phi.cos() * (1.0 + 1e-9), phi.sin() * (1.0 + 1e-9)];
            for u in [[-1.0], [1.0]] {
                let a = sys.deriv(&inside, &u);
                let b = sys.deriv(&outside, &u);
                assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn integrator_is_fourth_order() {
        // x' = u with a state carrying the forcing: use a 2d system
        // x1' = sin(x2), x2' = 1 against the closed form 1 - cos(t)
        let sys = System::new(
            "forced",
            2,
            ControlSet::bounded(vec![0.0], vec![0.0]).unwrap(),
            |x, _u| vec![x[1].sin(), 1.0],
        )
        .unwrap();
        let sig = ControlSignal::constant(vec![0.0], 1.0);
        let exact = 1.0 - 1.0f64.cos();
        let err = |step: f64| {
            let traj = flow(&sys, &[0.0, 0.0], &sig, 1.0, step).unwrap();
            (traj.final_state()[0] - exact).abs()
        };
        let coarse = err(0.1);
        let fine = err(0.05);
        assert!(coarse / fine >= 8.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn trajectories_depend_continuously_on_x0() {
        let sys = builtin_system("scalar_example").unwrap();
        let sig = ControlSignal::constant(vec![0.5], 1.0);
        let lambda = 3.0; // fitted growth rate bound for this system on [-1, 1]
        let a = flow(&sys, &[0.2], &sig, 1.0, 1e-3).unwrap();
        let b = flow(&sys, &[0.21], &sig, 1.0, 1e-3).unwrap();
        for ((t, xa), xb) in a.times.iter().zip(&a.states).zip(&b.states) {
            assert!((xa[0] - xb[0]).abs() <= (lambda * t).exp() * 0.01 + 1e-12);
        }
    }

    #[test]
    fn signal_lookup_and_csv() {
        let sig = ControlSignal::piecewise(
            vec![0.0, 1.0],
            vec![vec![1.0], vec![-1.0]],
            2.0,
        )
        .unwrap();
        assert_eq!(sig.value_at(0.5), &vec![1.0]);
        assert_eq!(sig.value_at(1.5), &vec![-1.0]);
        let sys = builtin_system("single_integrator").unwrap();
        let traj = flow(&sys, &[0.0], &sig, 2.0, 0.5).unwrap();
        let csv = traj.to_csv();
        assert!(csv.starts_with("t,x1,u1\n"));
        assert!((traj.final_state()[0]).abs() < 1e-9);
    }

    #[test]
    fn box_corners_and_grid() {
        let cs = ControlSet::bounded(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(cs.corners().len(), 4);
        assert_eq!(cs.sample_grid().len(), 81);
        assert!(cs.contains(&[0.3, 1.0]));
        assert!(!cs.contains(&[1.5, 1.0]));
    }
}
