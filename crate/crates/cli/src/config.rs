//! Strict JSON run configuration. Unknown keys are rejected and parse
//! failures carry line/column diagnostics straight from the JSON reader.

use crate::expr::{self, Expr};
use cbvf_core::{discretize, ClassKSpec, ControlSet, Grid, ScalarField, SolverParams, System};
use serde::Deserialize;
use std::fmt;
use std::fs;
use std::path::Path;

#[derive(Debug)]
pub enum ConfigError {
    Parse(String),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid(m) => write!(f, "config error: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(m: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(m.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    /// Omitted alpha selects the undiscounted avoid value.
    #[serde(default)]
    pub alpha: Option<ClassKSpec>,
    pub grid: GridConfig,
    /// Builtin name (tent, band, disc) or an expression over x1..x3.
    pub g: String,
    #[serde(default)]
    pub solver: Option<SolverParams>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum SystemConfig {
    Name(String),
    Inline(InlineSystem),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSystem {
    #[serde(default = "default_inline_name")]
    pub name: String,
    /// One expression per state coordinate, over x1..x3 and u1..u3.
    pub dynamics: Vec<String>,
    pub control: ControlConfig,
}

fn default_inline_name() -> String {
    "inline".into()
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControlConfig {
    Finite {
        values: Vec<Vec<f64>>,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
        #[serde(default)]
        sample_count: Option<usize>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub initial_states: Option<Vec<Vec<f64>>>,
    /// Number of seeded random initial states when no explicit list given.
    #[serde(default)]
    pub count: Option<usize>,
    /// Sample-and-hold period; present selects the sample-hold controller.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Classical-check sample count.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Alpha surrogate list for the avoid-invariance mode.
    #[serde(default)]
    pub alphas: Option<Vec<ClassKSpec>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default)]
    pub max_t: Option<f64>,
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub checkpoint_spacing: Option<f64>,
    /// Second boundary function for max mode.
    #[serde(default)]
    pub g2: Option<String>,
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn build_system(&self) -> Result<System, ConfigError> {
        match &self.system {
            SystemConfig::Name(name) => cbvf_core::builtin_system(name)
                .map_err(|e| invalid(format!("system: {e}"))),
            SystemConfig::Inline(inline) => inline.build(),
        }
    }

    pub fn build_grid(&self) -> Result<Grid, ConfigError> {
        Grid::new(&self.grid.lo, &self.grid.hi, &self.grid.counts)
            .map_err(|e| invalid(format!("grid: {e}")))
    }

    pub fn build_g(&self, grid: Grid) -> Result<ScalarField, ConfigError> {
        let expr = parse_boundary(&self.g)?;
        if expr.state_arity() > grid.dim {
            return Err(invalid(format!(
                "g references x{} but the grid is {}-dimensional",
                expr.state_arity(),
                grid.dim
            )));
        }
        let mut field = discretize(grid, |x| expr.eval(x, &[]))
            .map_err(|e| invalid(format!("g: {e}")))?;
        field.label = "g".into();
        Ok(field)
    }

    pub fn build_alpha(&self) -> Result<Option<cbvf_core::ClassK>, ConfigError> {
        match &self.alpha {
            None => Ok(None),
            Some(spec) => cbvf_core::ClassK::from_spec(spec.clone())
                .map(Some)
                .map_err(|e| invalid(format!("alpha: {e}"))),
        }
    }

    pub fn solver_params(&self) -> SolverParams {
        match &self.solver {
            Some(p) => p.clone(),
            None => SolverParams::new(vec![0.0, 0.5, 1.0, 1.5, 2.0]),
        }
    }
}

impl InlineSystem {
    fn build(&self) -> Result<System, ConfigError> {
        let dim = self.dynamics.len();
        if dim == 0 || dim > 3 {
            return Err(invalid("inline dynamics need 1 to 3 coordinates"));
        }
        let mut exprs: Vec<Expr> = Vec::with_capacity(dim);
        for (i, src) in self.dynamics.iter().enumerate() {
            let e = expr::parse(src, true)
                .map_err(|e| invalid(format!("dynamics[{i}]: {e}")))?;
            if e.state_arity() > dim {
                return Err(invalid(format!(
                    "dynamics[{i}] references x{} beyond dimension {dim}",
                    e.state_arity()
                )));
            }
            exprs.push(e);
        }
        let control_set = match &self.control {
            ControlConfig::Finite { values } => ControlSet::finite(values.clone())
                .map_err(|e| invalid(format!("control: {e}")))?,
            ControlConfig::Box {
                lo,
                hi,
                sample_count,
            } => {
                let mut set = ControlSet::bounded(lo.clone(), hi.clone())
                    .map_err(|e| invalid(format!("control: {e}")))?;
                if let (ControlSet::Box { sample_count: sc, .. }, Some(n)) =
                    (&mut set, sample_count)
                {
                    if *n < 2 {
                        return Err(invalid("control sample_count must be at least 2"));
                    }
                    *sc = *n;
                }
                set
            }
        };
        let m = control_set.control_dim();
        for (i, e) in exprs.iter().enumerate() {
            if e.input_arity() > m {
                return Err(invalid(format!(
                    "dynamics[{i}] references u{} but the control set has {m} inputs",
                    e.input_arity()
                )));
            }
        }
        System::new(self.name.clone(), dim, control_set, move |x, u| {
            exprs.iter().map(|e| e.eval(x, u)).collect()
        })
        .map_err(|e| invalid(format!("system: {e}")))
    }
}

fn parse_boundary(src: &str) -> Result<Expr, ConfigError> {
    let text = match src {
        "tent" => "max(0, 1 - abs(x1))",
        "band" => "max(0, 1 - x1 * x1)",
        "disc" => "max(0, 1 - x1 * x1 - x2 * x2)",
        other => other,
    };
    expr::parse(text, false).map_err(|e| invalid(format!("g: {e}")))
}
