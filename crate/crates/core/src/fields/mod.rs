//! Structured grids, quadrature, and trigonometric spectral calculus.
//!
//! Fields live in physical space; transforms are internal to the operators.
//! Storage is row-major with the first axis slowest.

mod container;
mod grid;
mod spectral;

use std::sync::Arc;

pub use container::{
    read_field, read_grid_sidecar, write_field, write_grid_sidecar, CEAF_MAGIC, CEAF_VERSION,
};
pub use grid::{gauss_legendre, Axis, AxisKind, AxisSpec, GridSpec, MIN_NODES};
pub use spectral::{
    antiderivative, partial_derivative, random_band_limited, shift_periodic, spectrum,
    tail_energy_fraction, tail_energy_fraction_on, TrigSeries,
};

use crate::error::{CeaError, Result};

/// A real function sampled on every node of a grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<GridSpec>,
    values: Vec<f64>,
}

pub(crate) fn check_same_grid(a: &Arc<GridSpec>, b: &Arc<GridSpec>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(CeaError::GridMismatch(format!(
            "{:?} vs {:?}",
            a.specs(),
            b.specs()
        )))
    }
}

impl ScalarField {
    pub fn new(grid: Arc<GridSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(CeaError::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(CeaError::InvalidArgument(format!(
                "non-finite value at node {bad}"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values known to match the grid.
    pub(crate) fn from_parts(grid: Arc<GridSpec>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    /// Samples `f(coords)` at every node.
    pub fn from_fn(grid: &Arc<GridSpec>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dims()];
        let values = (0..grid.len())
            .map(|i| {
                grid.coords_of(i, &mut x);
                f(&x)
            })
            .collect();
        Self::from_parts(grid.clone(), values)
    }

    pub fn constant(grid: &Arc<GridSpec>, c: f64) -> Self {
        Self::from_parts(grid.clone(), vec![c; grid.len()])
    }

    pub fn zeros(grid: &Arc<GridSpec>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(
            self.grid.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(Self::from_parts(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        self.zip_with(other, |x, y| x + a * y)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// L2 norm against the grid measure.
    pub fn norm(&self) -> f64 {
        integrate_squared(self).max(0.0).sqrt()
    }

    /// Mean against the grid measure.
    pub fn mean(&self) -> f64 {
        integrate(self) / self.grid.total_measure()
    }
}

/// Quadrature sum `sum_i w_i f_i`.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid
        .node_weights()
        .iter()
        .zip(&f.values)
        .map(|(w, v)| w * v)
        .sum()
}

fn integrate_squared(f: &ScalarField) -> f64 {
    f.grid
        .node_weights()
        .iter()
        .zip(&f.values)
        .map(|(w, v)| w * v * v)
        .sum()
}

/// `integrate(f * g)`.
pub fn l2_inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    check_same_grid(&f.grid, &g.grid)?;
    Ok(f.grid
        .node_weights()
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

/// Vector field in coordinate components, one scalar array per axis.
#[derive(Clone, Debug)]
pub struct VectorField {
    grid: Arc<GridSpec>,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Arc<GridSpec>, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dims() {
            return Err(CeaError::GridMismatch(format!(
                "{} components on a {}-dimensional grid",
                components.len(),
                grid.dims()
            )));
        }
        if components.iter().any(|c| c.len() != grid.len()) {
            return Err(CeaError::GridMismatch(
                "component length differs from node count".into(),
            ));
        }
        Ok(Self { grid, components })
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn dims(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component(&self, a: usize) -> Result<ScalarField> {
        let c = self.components.get(a).ok_or(CeaError::AxisOutOfRange {
            axis: a,
            dims: self.components.len(),
        })?;
        Ok(ScalarField::from_parts(self.grid.clone(), c.clone()))
    }

    /// Components at node `i`.
    pub fn at(&self, i: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c[i];
        }
    }

    /// Directional derivative `u(f) = sum_a u^a d_a f`.
    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        check_same_grid(&self.grid, f.grid())?;
        let mut out = vec![0.0; self.grid.len()];
        for (a, comp) in self.components.iter().enumerate() {
            if comp.iter().all(|&c| c == 0.0) {
                continue;
            }
            let d = partial_derivative(f, a)?;
            for ((o, c), v) in out.iter_mut().zip(comp).zip(d.values()) {
                *o += c * v;
            }
        }
        Ok(ScalarField::from_parts(self.grid.clone(), out))
    }
}
