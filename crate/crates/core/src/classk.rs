//! Class K functions and the decay/growth flows they generate.
//!
//! A locally Lipschitz class K function `alpha` induces two flows:
//! the decay flow `beta(r, t)`, the solution of `y' = -alpha(y), y(0) = r`,
//! and the growth flow `kappa(r, t)`, the solution of `y' = alpha(y)` on its
//! maximal interval of existence. `beta` is the anti-discount applied to
//! safety payoffs; `kappa` is its inverse in the first argument.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_ODE_STEP: f64 = 1e-3;
pub const DEFAULT_BLOWUP_CEILING: f64 = 1e12;

/// Serializable shape of a class K function.
///
/// Wire format: `{"kind":"linear","gamma":1.0}`,
/// `{"kind":"power","c":1.0,"p":2.0}`, or
/// `{"kind":"table","points":[[r,a],...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClassKSpec {
    Linear { gamma: f64 },
    Power { c: f64, p: f64 },
    Table { points: Vec<[f64; 2]> },
}

impl ClassKSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ClassKSpec::Linear { gamma } => {
                if !(*gamma > 0.0) {
                    return Err(Error::Domain("linear class K needs gamma > 0".into()));
                }
            }
            ClassKSpec::Power { c, p } => {
                if !(*c > 0.0) || !(*p >= 1.0) {
                    return Err(Error::Domain("power class K needs c > 0 and p >= 1".into()));
                }
            }
            ClassKSpec::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::Domain("table class K needs at least 2 points".into()));
                }
                if points[0] != [0.0, 0.0] {
                    return Err(Error::Domain("table class K must start at (0, 0)".into()));
                }
                for w in points.windows(2) {
                    if !(w[1][0] > w[0][0]) || !(w[1][1] > w[0][1]) {
                        return Err(Error::Domain(
                            "table breakpoints must be strictly increasing in both coordinates"
                                .into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A validated class K function together with its integrator settings.
#[derive(Clone, Debug)]
pub struct ClassK {
    spec: ClassKSpec,
    pub lipschitz_hint: Option<f64>,
    pub ode_step: f64,
    pub blowup_ceiling: f64,
}

/// Result of evaluating the growth flow: either a value or a finite escape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KappaResult {
    Value(f64),
    Blowup { escape_time: f64 },
}

impl KappaResult {
    pub fn value(self) -> Option<f64> {
        match self {
            KappaResult::Value(v) => Some(v),
            KappaResult::Blowup { .. } => None,
        }
    }
}

impl ClassK {
    pub fn from_spec(spec: ClassKSpec) -> Result<Self> {
        spec.validate()?;
        Ok(ClassK {
            spec,
            lipschitz_hint: None,
            ode_step: DEFAULT_ODE_STEP,
            blowup_ceiling: DEFAULT_BLOWUP_CEILING,
        })
    }

    pub fn linear(gamma: f64) -> Result<Self> {
        Self::from_spec(ClassKSpec::Linear { gamma })
    }

    pub fn power(c: f64, p: f64) -> Result<Self> {
        Self::from_spec(ClassKSpec::Power { c, p })
    }

    pub fn table(points: Vec<[f64; 2]>) -> Result<Self> {
        Self::from_spec(ClassKSpec::Table { points })
    }

    pub fn with_lipschitz_hint(mut self, hint: f64) -> Self {
        self.lipschitz_hint = Some(hint);
        self
    }

    pub fn with_ode_step(mut self, step: f64) -> Self {
        self.ode_step = step;
        self
    }

    pub fn spec(&self) -> &ClassKSpec {
        &self.spec
    }

    /// alpha(r). Strictly increasing with alpha(0) = 0.
    pub fn alpha(&self, r: f64) -> Result<f64> {
        if r < 0.0 {
            return Err(Error::Domain(format!("alpha is undefined for r = {r} < 0")));
        }
        Ok(self.alpha_unchecked(r))
    }

    fn alpha_unchecked(&self, r: f64) -> f64 {
        match &self.spec {
            ClassKSpec::Linear { gamma } => gamma * r,
            ClassKSpec::Power { c, p } => c * r.powf(*p),
            ClassKSpec::Table { points } => {
                // linear interpolation between breakpoints, linear
                // extrapolation beyond the last one with its slope
                let last = points.len() - 1;
                if r >= points[last][0] {
                    let [r1, a1] = points[last];
                    let [r0, a0] = points[last - 1];
                    return a1 + (r - r1) * (a1 - a0) / (r1 - r0);
                }
                let seg = points.partition_point(|p| p[0] <= r).max(1);
                let [r0, a0] = points[seg - 1];
                let [r1, a1] = points[seg];
                a0 + (r - r0) * (a1 - a0) / (r1 - r0)
            }
        }
    }

    /// Decay flow `beta(r, t)`: solution of `y' = -alpha(y), y(0) = r`.
    ///
    /// Closed forms are used for linear and quadratic-power kinds; other
    /// kinds integrate with fixed-step RK4. Values are clamped at 0 from
    /// below so integration error never produces a negative safety level.
    pub fn beta(&self, r: f64, t: f64) -> Result<f64> {
        if r < 0.0 || t < 0.0 {
            return Err(Error::Domain(format!(
                "beta needs r >= 0 and t >= 0, got r = {r}, t = {t}"
            )));
        }
        Ok(match &self.spec {
            ClassKSpec::Linear { gamma } => r * (-gamma * t).exp(),
            ClassKSpec::Power { c, p } if *p == 2.0 => r / (1.0 + c * r * t),
            _ => self.integrate_decay(r, t),
        })
    }

    fn integrate_decay(&self, r: f64, t: f64) -> f64 {
        if t == 0.0 || r == 0.0 {
            return r;
        }
        let n = (t / self.ode_step).ceil().max(1.0) as usize;
        let h = t / n as f64;
        let f = |y: f64| -self.alpha_unchecked(y.max(0.0));
        let mut y = r;
        for _ in 0..n {
            let k1 = f(y);
            let k2 = f(y + 0.5 * h * k1);
            let k3 = f(y + 0.5 * h * k2);
            let k4 = f(y + h * k3);
            y = (y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).max(0.0);
        }
        y
    }

    /// Growth flow `kappa(r, t)`: solution of `y' = alpha(y), y(0) = r`,
    /// defined only on `[0, b(r))`. Past the escape time a blowup signal is
    /// returned instead of a value.
    pub fn kappa(&self, r: f64, t: f64) -> Result<KappaResult> {
        if r < 0.0 || t < 0.0 {
            return Err(Error::Domain(format!(
                "kappa needs r >= 0 and t >= 0, got r = {r}, t = {t}"
            )));
        }
        Ok(match &self.spec {
            ClassKSpec::Linear { gamma } => KappaResult::Value(r * (gamma * t).exp()),
            ClassKSpec::Power { c, p } if *p == 2.0 => {
                if r == 0.0 {
                    KappaResult::Value(0.0)
                } else {
                    let escape = 1.0 / (c * r);
                    if t >= escape {
                        KappaResult::Blowup {
                            escape_time: escape,
                        }
                    } else {
                        KappaResult::Value(r / (1.0 - c * r * t))
                    }
                }
            }
            _ => self.integrate_growth(r, t),
        })
    }

    fn integrate_growth(&self, r: f64, t: f64) -> KappaResult {
        if t == 0.0 {
            return KappaResult::Value(r);
        }
        let n = (t / self.ode_step).ceil().max(1.0) as usize;
        let h = t / n as f64;
        let f = |y: f64| self.alpha_unchecked(y.max(0.0));
        let mut y = r;
        for i in 0..n {
            let k1 = f(y);
            let k2 = f(y + 0.5 * h * k1);
            let k3 = f(y + 0.5 * h * k2);
            let k4 = f(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !y.is_finite() || y > self.blowup_ceiling {
                return KappaResult::Blowup {
                    escape_time: (i + 1) as f64 * h,
                };
            }
        }
        KappaResult::Value(y)
    }

    /// A slope bound `L` with `alpha(r) <= L r` on `[0, R]`, so that
    /// `beta(r, t) >= r exp(-L t)` there by the comparison principle.
    ///
    /// Returns a valid bound, not necessarily the tightest one.
    pub fn comparison_bound(&self, big_r: f64) -> Result<f64> {
        if !(big_r > 0.0) {
            return Err(Error::Domain("comparison bound needs R > 0".into()));
        }
        if let Some(hint) = self.lipschitz_hint {
            return Ok(hint);
        }
        let l = match &self.spec {
            ClassKSpec::Linear { gamma } => *gamma,
            ClassKSpec::Power { c, p } => c * big_r.powf(p - 1.0),
            ClassKSpec::Table { points } => {
                // secant maximization of alpha(r)/r: the ratio is piecewise
                // monotone, so breakpoints plus a dense sweep suffice
                let mut best: f64 = 0.0;
                for p in points.iter().skip(1) {
                    if p[0] <= big_r {
                        best = best.max(p[1] / p[0]);
                    }
                }
                let n = 2048;
                for i in 1..=n {
                    let r = big_r * i as f64 / n as f64;
                    best = best.max(self.alpha_unchecked(r) / r);
                }
                best
            }
        };
        if !l.is_finite() {
            return Err(Error::Overflow(format!(
                "alpha(r)/r is unbounded on [0, {big_r}] in f64 range"
            )));
        }
        Ok(l)
    }
}
