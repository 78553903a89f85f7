use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{CeaError, Result};

/// Smallest admissible node count on any axis.
pub const MIN_NODES: usize = 8;

/// How the nodes along one axis are laid out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxisKind {
    /// Equispaced nodes `j * period / nodes`, trapezoid weights.
    Periodic { period: f64 },
    /// Polar angle `eta` of the Hopf coordinates on `(0, pi/2)`.
    ///
    /// Nodes are the Gauss-Legendre nodes in `s = cos 2 eta`, so the rule
    /// integrates against `sin 2 eta d eta`. Differentiation needs the parity
    /// of the Fourier modes along the two partner angles.
    HopfPolar { partners: [usize; 2] },
}

/// Serializable description of one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub name: String,
    pub nodes: usize,
    #[serde(flatten)]
    pub kind: AxisKind,
    /// Constant measure density folded into this axis' weights.
    #[serde(default = "one")]
    pub density: f64,
}

fn one() -> f64 {
    1.0
}

impl AxisSpec {
    pub fn periodic(name: &str, nodes: usize, period: f64) -> Self {
        Self {
            name: name.to_string(),
            nodes,
            kind: AxisKind::Periodic { period },
            density: 1.0,
        }
    }

    pub fn hopf_polar(name: &str, nodes: usize, partners: [usize; 2]) -> Self {
        Self {
            name: name.to_string(),
            nodes,
            kind: AxisKind::HopfPolar { partners },
            density: 1.0,
        }
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.density = density;
        self
    }
}

pub(crate) struct Transforms {
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
}

/// One axis with its nodes, weights and cached operators.
pub struct Axis {
    spec: AxisSpec,
    coords: Vec<f64>,
    weights: Vec<f64>,
    pub(crate) transforms: Option<Transforms>,
    /// Differentiation matrices for the four parity classes (even/odd along each partner).
    pub(crate) polar_diff: Option<[DMatrix<f64>; 4]>,
}

impl Axis {
    pub fn spec(&self) -> &AxisSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn nodes(&self) -> usize {
        self.spec.nodes
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn period(&self) -> Option<f64> {
        match self.spec.kind {
            AxisKind::Periodic { period } => Some(period),
            _ => None,
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.period().is_some()
    }

    /// Angular wavenumber of FFT slot `j`; `None` for the Nyquist slot of an even grid.
    pub fn wavenumber(&self, j: usize) -> Option<f64> {
        let n = self.nodes();
        let period = self.period()?;
        if n.is_multiple_of(2) && j == n / 2 {
            return None;
        }
        let signed = if j <= n / 2 {
            j as f64
        } else {
            j as f64 - n as f64
        };
        Some(2.0 * PI * signed / period)
    }

    /// Integer mode index of FFT slot `j` (Nyquist reported as `n/2`).
    pub fn mode_index(&self, j: usize) -> i64 {
        let n = self.nodes();
        if j <= n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }
}

/// A structured tensor-product grid with per-node quadrature weights.
pub struct GridSpec {
    axes: Vec<Axis>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
    node_weights: Vec<f64>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("axes", &self.specs())
            .finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.axes.len() == other.axes.len()
            && self
                .axes
                .iter()
                .zip(&other.axes)
                .all(|(a, b)| a.spec == b.spec)
    }
}

impl GridSpec {
    pub fn new(specs: Vec<AxisSpec>) -> Result<Arc<Self>> {
        if specs.is_empty() {
            return Err(CeaError::InvalidArgument(
                "grid needs at least one axis".into(),
            ));
        }
        let mut planner = FftPlanner::<f64>::new();
        let mut axes = Vec::with_capacity(specs.len());
        for spec in &specs {
            if spec.nodes < MIN_NODES {
                return Err(CeaError::InvalidArgument(format!(
                    "axis `{}` has {} nodes; at least {MIN_NODES} required",
                    spec.name, spec.nodes
                )));
            }
            if !(spec.density.is_finite() && spec.density > 0.0) {
                return Err(CeaError::InvalidArgument(format!(
                    "axis `{}` has non-positive density",
                    spec.name
                )));
            }
            let axis = match spec.kind {
                AxisKind::Periodic { period } => {
                    if !(period.is_finite() && period > 0.0) {
                        return Err(CeaError::InvalidArgument(format!(
                            "axis `{}` has invalid period {period}",
                            spec.name
                        )));
                    }
                    let n = spec.nodes;
                    let h = period / n as f64;
                    Axis {
                        spec: spec.clone(),
                        coords: (0..n).map(|j| j as f64 * h).collect(),
                        weights: vec![h * spec.density; n],
                        transforms: Some(Transforms {
                            forward: planner.plan_fft_forward(n),
                            inverse: planner.plan_fft_inverse(n),
                        }),
                        polar_diff: None,
                    }
                }
                AxisKind::HopfPolar { partners } => {
                    for &p in &partners {
                        let ok = specs.get(p).is_some_and(|ps| {
                            matches!(ps.kind, AxisKind::Periodic { .. }) && ps.nodes % 2 == 0
                        });
                        if !ok {
                            return Err(CeaError::InvalidArgument(format!(
                                "polar axis `{}` needs periodic partner axes with even node counts",
                                spec.name
                            )));
                        }
                    }
                    let (s, w) = gauss_legendre(spec.nodes);
                    // s descending gives eta ascending
                    let coords: Vec<f64> = s.iter().rev().map(|&si| 0.5 * si.acos()).collect();
                    let weights: Vec<f64> =
                        w.iter().rev().map(|&wi| 0.5 * wi * spec.density).collect();
                    let polar_diff = polar_diff_matrices(&coords)?;
                    Axis {
                        spec: spec.clone(),
                        coords,
                        weights,
                        transforms: None,
                        polar_diff: Some(polar_diff),
                    }
                }
            };
            axes.push(axis);
        }
        let shape: Vec<usize> = axes.iter().map(|a| a.nodes()).collect();
        let mut strides = vec![1; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        let len = shape.iter().product();
        let mut node_weights = vec![1.0; len];
        for (flat, w) in node_weights.iter_mut().enumerate() {
            for (a, axis) in axes.iter().enumerate() {
                *w *= axis.weights[(flat / strides[a]) % shape[a]];
            }
        }
        Ok(Arc::new(Self {
            axes,
            shape,
            strides,
            len,
            node_weights,
        }))
    }

    /// Periodic box `[0, period)^d` with the given node counts.
    pub fn periodic_box(names: &[&str], nodes: &[usize], period: f64) -> Result<Arc<Self>> {
        if names.len() != nodes.len() {
            return Err(CeaError::InvalidArgument(
                "names and nodes differ in length".into(),
            ));
        }
        GridSpec::new(
            names
                .iter()
                .zip(nodes)
                .map(|(name, &n)| AxisSpec::periodic(name, n, period))
                .collect(),
        )
    }

    pub fn specs(&self) -> Vec<AxisSpec> {
        self.axes.iter().map(|a| a.spec.clone()).collect()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> Result<&Axis> {
        self.axes.get(a).ok_or(CeaError::AxisOutOfRange {
            axis: a,
            dims: self.axes.len(),
        })
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    /// Total measure: the product of per-axis weight sums.
    pub fn total_measure(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| a.weights.iter().sum::<f64>())
            .product()
    }

    /// Index of node `flat` along axis `a`.
    #[inline]
    pub fn index_along(&self, flat: usize, a: usize) -> usize {
        (flat / self.strides[a]) % self.shape[a]
    }

    /// Coordinates of node `flat`, written into `out`.
    pub fn coords_of(&self, flat: usize, out: &mut [f64]) {
        for (a, axis) in self.axes.iter().enumerate() {
            out[a] = axis.coords[self.index_along(flat, a)];
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Calls `f(base)` for every line along axis `a`; the line visits `base + j * stride`.
    pub(crate) fn for_each_line(&self, a: usize, mut f: impl FnMut(usize)) {
        let n = self.shape[a];
        let stride = self.strides[a];
        let outer = self.len / (n * stride);
        for o in 0..outer {
            for i in 0..stride {
                f(o * n * stride + i);
            }
        }
    }
}

/// Gauss-Legendre nodes (descending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Parity class index: bit 0 = odd along the first partner, bit 1 = odd along the second.
///
/// A smooth function on the 3-sphere whose Fourier mode along `(xi1, xi2)` is
/// `(k1, k2)` has an eta-profile spanned by
/// `cos 2j eta` (even, even), `sin (2j+1) eta` (odd, even),
/// `cos (2j+1) eta` (even, odd), `sin 2(j+1) eta` (odd, odd).
fn polar_basis(class: usize, j: usize, eta: f64) -> (f64, f64) {
    let (m, is_sin) = match class {
        0 => (2 * j, false),
        1 => (2 * j + 1, true),
        2 => (2 * j + 1, false),
        _ => (2 * j + 2, true),
    };
    let m = m as f64;
    if is_sin {
        ((m * eta).sin(), m * (m * eta).cos())
    } else {
        ((m * eta).cos(), -m * (m * eta).sin())
    }
}

fn polar_diff_matrices(eta: &[f64]) -> Result<[DMatrix<f64>; 4]> {
    let n = eta.len();
    let build = |class: usize| -> Result<DMatrix<f64>> {
        let values = DMatrix::from_fn(n, n, |i, j| polar_basis(class, j, eta[i]).0);
        let derivs = DMatrix::from_fn(n, n, |i, j| polar_basis(class, j, eta[i]).1);
        let inv = values
            .try_inverse()
            .ok_or_else(|| CeaError::InvalidArgument("singular polar collocation matrix".into()))?;
        Ok(derivs * inv)
    };
    Ok([build(0)?, build(1)?, build(2)?, build(3)?])
}
