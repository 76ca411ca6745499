//! Rectangular grids, scalar fields, upwind difference stencils, and
//! multilinear interpolation.

use crate::error::{Error, Result};
use serde::Serialize;
use std::path::Path;

pub const MAX_DIM: usize = 3;

/// Uniform rectangular grid with 1 to 3 dimensions. Row-major node order,
/// last dimension fastest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub dim: usize,
    lo: [f64; MAX_DIM],
    hi: [f64; MAX_DIM],
    counts: [usize; MAX_DIM],
    spacing: [f64; MAX_DIM],
}

impl Grid {
    pub fn new(lo: &[f64], hi: &[f64], counts: &[usize]) -> Result<Self> {
        let dim = lo.len();
        if dim == 0 || dim > MAX_DIM || hi.len() != dim || counts.len() != dim {
            return Err(Error::Domain(
                "grid needs matching lo/hi/counts with 1 to 3 dimensions".into(),
            ));
        }
        let mut g = Grid {
            dim,
            lo: [0.0; MAX_DIM],
            hi: [0.0; MAX_DIM],
            counts: [1; MAX_DIM],
            spacing: [1.0; MAX_DIM],
        };
        for d in 0..dim {
            if !(lo[d] < hi[d]) {
                return Err(Error::Domain(format!("grid needs lo < hi in dimension {d}")));
            }
            if counts[d] < 3 {
                return Err(Error::Domain(format!(
                    "grid needs at least 3 nodes in dimension {d}"
                )));
            }
            g.lo[d] = lo[d];
            g.hi[d] = hi[d];
            g.counts[d] = counts[d];
            g.spacing[d] = (hi[d] - lo[d]) / (counts[d] - 1) as f64;
        }
        Ok(g)
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo[..self.dim]
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi[..self.dim]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing[..self.dim]
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }

    pub fn num_nodes(&self) -> usize {
        self.counts[..self.dim].iter().product()
    }

    pub fn strides(&self) -> [usize; MAX_DIM] {
        let mut s = [1; MAX_DIM];
        for d in (0..self.dim.saturating_sub(1)).rev() {
            s[d] = s[d + 1] * self.counts[d + 1];
        }
        s
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let strides = self.strides();
        let mut mi = [0; MAX_DIM];
        let mut rem = idx;
        for d in 0..self.dim {
            mi[d] = rem / strides[d];
            rem %= strides[d];
        }
        mi
    }

    pub fn flat_index(&self, mi: &[usize]) -> usize {
        let strides = self.strides();
        (0..self.dim).map(|d| mi[d] * strides[d]).sum()
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mi = self.multi_index(idx);
        (0..self.dim)
            .map(|d| self.lo[d] + mi[d] as f64 * self.spacing[d])
            .collect()
    }
}

/// Scalar data on a grid, one value per node.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub label: String,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::GridMismatch);
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        Ok(ScalarField {
            grid,
            values,
            label: label.into(),
        })
    }

    pub fn constant(grid: Grid, value: f64, label: impl Into<String>) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.num_nodes()],
            label: label.into(),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Sup-norm distance to another field on the same grid.
    pub fn sup_dist(&self, other: &ScalarField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Pointwise `max{0, .}`.
    pub fn clamp_nonneg(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
            label: self.label.clone(),
        }
    }

    /// Largest one-sided difference quotient; a discrete Lipschitz estimate.
    pub fn lipschitz_estimate(&self) -> f64 {
        let grads = upwind_gradients(self);
        let mut best: f64 = 0.0;
        for d in 0..self.grid.dim {
            for i in 0..self.values.len() {
                best = best.max(grads.left[i][d].abs()).max(grads.right[i][d].abs());
            }
        }
        best
    }

    /// CSV with one row per node: `x1,...,xn,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for d in 1..=self.grid.dim {
            out.push_str(&format!("x{d},"));
        }
        out.push_str("value\n");
        for (idx, v) in self.values.iter().enumerate() {
            for c in self.grid.node(idx) {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!("{v}\n"));
        }
        out
    }

    /// Writes the CSV plus a JSON sidecar describing the grid.
    pub fn write_csv_with_sidecar(&self, csv_path: &Path, horizon: Option<f64>) -> Result<()> {
        crate::grid::write_atomic(csv_path, self.to_csv().as_bytes())?;
        let sidecar = Sidecar {
            lo: self.grid.lo().to_vec(),
            hi: self.grid.hi().to_vec(),
            counts: self.grid.counts().to_vec(),
            label: self.label.clone(),
            horizon,
        };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::Config(e.to_string()))?;
        let side_path = csv_path.with_extension("json");
        crate::grid::write_atomic(&side_path, json.as_bytes())?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Sidecar {
    lo: Vec<f64>,
    hi: Vec<f64>,
    counts: Vec<usize>,
    label: String,
    horizon: Option<f64>,
}

/// Write via temp file + rename so partial output is never observed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// CB-VF snapshots over increasing checkpoint horizons. `fields[0]` is the
/// initial condition exactly.
#[derive(Clone, Debug)]
pub struct ValueSeries {
    pub checkpoints: Vec<f64>,
    pub fields: Vec<ScalarField>,
}

impl ValueSeries {
    pub fn field_at(&self, horizon: f64) -> Option<&ScalarField> {
        self.checkpoints
            .iter()
            .position(|&t| (t - horizon).abs() < 1e-12)
            .map(|i| &self.fields[i])
    }
}

/// Per-node one-sided difference vectors.
pub struct Gradients {
    pub left: Vec<[f64; MAX_DIM]>,
    pub right: Vec<[f64; MAX_DIM]>,
}

/// First-order one-sided differences. At boundary nodes the missing side is
/// filled by linear extrapolation of the interior slope, which makes both
/// sides equal the interior one-sided difference there.
pub fn upwind_gradients(field: &ScalarField) -> Gradients {
    let grid = &field.grid;
    let n = field.values.len();
    let strides = grid.strides();
    let mut left = vec![[0.0; MAX_DIM]; n];
    let mut right = vec![[0.0; MAX_DIM]; n];
    for idx in 0..n {
        let mi = grid.multi_index(idx);
        for d in 0..grid.dim {
            let dx = grid.spacing[d];
            let stride = strides[d];
            let l = if mi[d] > 0 {
                (field.values[idx] - field.values[idx - stride]) / dx
            } else {
                (field.values[idx + stride] - field.values[idx]) / dx
            };
            let r = if mi[d] + 1 < grid.counts[d] {
                (field.values[idx + stride] - field.values[idx]) / dx
            } else {
                (field.values[idx] - field.values[idx - stride]) / dx
            };
            left[idx][d] = l;
            right[idx][d] = r;
        }
    }
    Gradients { left, right }
}

/// Multilinear interpolation. Points up to half a cell outside the bounds
/// are clamped; beyond that an out-of-bounds error is returned.
pub fn interpolate(field: &ScalarField, x: &[f64]) -> Result<f64> {
    let grid = &field.grid;
    if x.len() != grid.dim {
        return Err(Error::OutOfBounds { state: x.to_vec() });
    }
    let mut cell = [0usize; MAX_DIM];
    let mut frac = [0.0f64; MAX_DIM];
    for d in 0..grid.dim {
        let tol = 0.5 * grid.spacing[d];
        if x[d] < grid.lo[d] - tol || x[d] > grid.hi[d] + tol {
            return Err(Error::OutOfBounds { state: x.to_vec() });
        }
        let clamped = x[d].clamp(grid.lo[d], grid.hi[d]);
        let s = (clamped - grid.lo[d]) / grid.spacing[d];
        let c = (s.floor() as usize).min(grid.counts[d] - 2);
        cell[d] = c;
        frac[d] = s - c as f64;
    }
    let strides = grid.strides();
    let mut acc = 0.0;
    for corner in 0..(1usize << grid.dim) {
        let mut w = 1.0;
        let mut idx = 0;
        for d in 0..grid.dim {
            let hi = corner & (1 << d) != 0;
            w *= if hi { frac[d] } else { 1.0 - frac[d] };
            idx += (cell[d] + hi as usize) * strides[d];
        }
        acc += w * field.values[idx];
    }
    Ok(acc)
}

/// Evaluate `fn` at every node.
pub fn discretize(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<ScalarField> {
    let mut values = Vec::with_capacity(grid.num_nodes());
    for idx in 0..grid.num_nodes() {
        let v = f(&grid.node(idx));
        if !v.is_finite() {
            return Err(Error::NonFinite { node: idx });
        }
        values.push(v);
    }
    ScalarField::new(grid, values, "")
}
