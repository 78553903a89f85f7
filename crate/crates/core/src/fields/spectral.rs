use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use super::grid::{Axis, AxisKind, GridSpec};
use super::ScalarField;
use crate::error::{CeaError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Runs `op` on the normalized spectrum of every line along periodic axis `a`
/// and returns the real part of the inverse transform.
fn map_spectrum_along(
    f: &ScalarField,
    a: usize,
    mut op: impl FnMut(&Axis, &mut [Complex64]) -> Result<()>,
) -> Result<Vec<f64>> {
    let grid = f.grid();
    let axis = grid.axis(a)?;
    let tr = axis.transforms.as_ref().ok_or_else(|| {
        CeaError::InvalidArgument(format!("axis `{}` is not periodic", axis.name()))
    })?;
    let n = axis.nodes();
    let stride = grid.strides()[a];
    let vals = f.values();
    let mut out = vec![0.0; grid.len()];
    let mut buf = vec![ZERO; n];
    let scratch_len = tr
        .forward
        .get_inplace_scratch_len()
        .max(tr.inverse.get_inplace_scratch_len());
    let mut scratch = vec![ZERO; scratch_len];
    let inv_n = 1.0 / n as f64;
    let mut status = Ok(());
    grid.for_each_line(a, |base| {
        if status.is_err() {
            return;
        }
        for (j, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(vals[base + j * stride], 0.0);
        }
        tr.forward.process_with_scratch(&mut buf, &mut scratch);
        for b in buf.iter_mut() {
            *b *= inv_n;
        }
        if let Err(e) = op(axis, &mut buf) {
            status = Err(e);
            return;
        }
        tr.inverse.process_with_scratch(&mut buf, &mut scratch);
        for (j, b) in buf.iter().enumerate() {
            out[base + j * stride] = b.re;
        }
    });
    status.map(|_| out)
}

/// Partial derivative along axis `a`.
///
/// Periodic axes are differentiated spectrally (Nyquist mode dropped). The Hopf
/// polar axis splits the field into the four parity classes of its partner
/// angles and applies the matching collocation matrix to each.
pub fn partial_derivative(f: &ScalarField, a: usize) -> Result<ScalarField> {
    let grid = f.grid();
    let axis = grid.axis(a)?;
    let values = match axis.spec().kind {
        AxisKind::Periodic { .. } => map_spectrum_along(f, a, |axis, buf| {
            for (j, c) in buf.iter_mut().enumerate() {
                *c = match axis.wavenumber(j) {
                    Some(k) => Complex64::new(-k * c.im, k * c.re),
                    None => ZERO,
                };
            }
            Ok(())
        })?,
        AxisKind::HopfPolar { partners } => polar_derivative(f, a, partners),
    };
    Ok(ScalarField::from_parts(grid.clone(), values))
}

fn polar_derivative(f: &ScalarField, a: usize, partners: [usize; 2]) -> Vec<f64> {
    let grid = f.grid();
    let axis = &grid.axes()[a];
    let mats = axis
        .polar_diff
        .as_ref()
        .expect("polar axis carries its matrices");
    let shape = grid.shape();
    let strides = grid.strides();
    let vals = f.values();
    let len = grid.len();

    // index of the node shifted by half a period along partner p
    let half_shift = |i: usize, p: usize| -> usize {
        let n = shape[p];
        let k = grid.index_along(i, p);
        let k2 = (k + n / 2) % n;
        i + k2 * strides[p] - k * strides[p]
    };
    let shifted1: Vec<usize> = (0..len).map(|i| half_shift(i, partners[0])).collect();
    let shifted2: Vec<usize> = (0..len).map(|i| half_shift(i, partners[1])).collect();

    let n = axis.nodes();
    let stride = strides[a];
    let mut out = vec![0.0; len];
    let mut part = vec![0.0; len];
    let mut line = vec![0.0; n];
    for (class, mat) in mats.iter().enumerate() {
        let s1 = if class & 1 == 1 { -1.0 } else { 1.0 };
        let s2 = if class & 2 == 2 { -1.0 } else { 1.0 };
        for i in 0..len {
            let i1 = shifted1[i];
            let i2 = shifted2[i];
            let i12 = shifted2[i1];
            part[i] = 0.25 * (vals[i] + s1 * vals[i1] + s2 * vals[i2] + s1 * s2 * vals[i12]);
        }
        grid.for_each_line(a, |base| {
            for (j, l) in line.iter_mut().enumerate() {
                *l = part[base + j * stride];
            }
            for r in 0..n {
                let mut acc = 0.0;
                for (c, l) in line.iter().enumerate() {
                    acc += mat[(r, c)] * l;
                }
                out[base + r * stride] += acc;
            }
        });
    }
    out
}

/// `f(x - delta)` along periodic axis `a`, exact for band-limited fields.
pub fn shift_periodic(f: &ScalarField, a: usize, delta: f64) -> Result<ScalarField> {
    let values = map_spectrum_along(f, a, |axis, buf| {
        let n = axis.nodes();
        let period = axis.period().unwrap_or(1.0);
        for (j, c) in buf.iter_mut().enumerate() {
            match axis.wavenumber(j) {
                Some(k) => *c *= Complex64::from_polar(1.0, -k * delta),
                None => *c *= (PI * n as f64 / period * delta).cos(),
            }
        }
        Ok(())
    })?;
    Ok(ScalarField::from_parts(f.grid().clone(), values))
}

/// Mean-zero antiderivative along periodic axis `a`.
///
/// Every line along the axis must have zero mean, otherwise the antiderivative
/// is not periodic.
pub fn antiderivative(f: &ScalarField, a: usize) -> Result<ScalarField> {
    let tol = 1e-10 * f.max_abs().max(1.0);
    let values = map_spectrum_along(f, a, |axis, buf| {
        if buf[0].norm() > tol {
            return Err(CeaError::InvalidArgument(format!(
                "line mean {:.3e} along `{}` is not zero; antiderivative is not periodic",
                buf[0].re,
                axis.name()
            )));
        }
        for (j, c) in buf.iter_mut().enumerate() {
            *c = match axis.wavenumber(j) {
                Some(k) if j != 0 => Complex64::new(c.im / k, -c.re / k),
                _ => ZERO,
            };
        }
        Ok(())
    })?;
    Ok(ScalarField::from_parts(f.grid().clone(), values))
}

/// Normalized Fourier coefficients along every periodic axis, same layout as the field.
/// Polar axes stay in physical space.
pub fn spectrum(f: &ScalarField) -> Vec<Complex64> {
    let grid = f.grid();
    let mut data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for (a, axis) in grid.axes().iter().enumerate() {
        let Some(tr) = axis.transforms.as_ref() else {
            continue;
        };
        let n = axis.nodes();
        let stride = grid.strides()[a];
        let mut buf = vec![ZERO; n];
        let mut scratch = vec![ZERO; tr.forward.get_inplace_scratch_len()];
        let inv_n = 1.0 / n as f64;
        grid.for_each_line(a, |base| {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = data[base + j * stride];
            }
            tr.forward.process_with_scratch(&mut buf, &mut scratch);
            for (j, b) in buf.iter().enumerate() {
                data[base + j * stride] = b * inv_n;
            }
        });
    }
    data
}

/// Fraction of spectral energy carried by modes with `|k| > cutoff * (N/2)` on any periodic axis.
pub fn tail_energy_fraction(f: &ScalarField, cutoff: f64) -> f64 {
    let all: Vec<usize> = (0..f.grid().dims()).collect();
    tail_energy_fraction_on(f, cutoff, &all)
}

/// As [`tail_energy_fraction`], counting only modes that exceed the cutoff on one of `axes`.
pub fn tail_energy_fraction_on(f: &ScalarField, cutoff: f64, axes: &[usize]) -> f64 {
    let grid = f.grid();
    let spec = spectrum(f);
    let mut total = 0.0;
    let mut tail = 0.0;
    for (i, c) in spec.iter().enumerate() {
        let mut weight = 1.0;
        let mut in_tail = false;
        for (a, axis) in grid.axes().iter().enumerate() {
            let j = grid.index_along(i, a);
            if axis.is_periodic() {
                let k = axis.mode_index(j).unsigned_abs() as f64;
                if axes.contains(&a) && k > cutoff * (axis.nodes() / 2) as f64 {
                    in_tail = true;
                }
            } else {
                weight *= axis.weights()[j];
            }
        }
        let e = weight * c.norm_sqr();
        total += e;
        if in_tail {
            tail += e;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}

/// Seeded random real field with spectrum supported on `|k| <= max_freq`.
///
/// On periodic grids every mode in the box `|k_a| <= max_freq` gets a cosine and a
/// sine coefficient drawn from a standard normal. On the Hopf 3-sphere the field
/// is a random polynomial of degree `<= max_freq` in the ambient coordinates,
/// which keeps it smooth through the coordinate poles.
pub fn random_band_limited(
    seed: u64,
    max_freq: usize,
    grid: &Arc<GridSpec>,
) -> Result<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for axis in grid.axes() {
        let limit = match axis.spec().kind {
            AxisKind::Periodic { .. } => axis.nodes() / 2,
            AxisKind::HopfPolar { .. } => 2 * axis.nodes() - 1,
        };
        if max_freq >= limit {
            return Err(CeaError::InvalidArgument(format!(
                "max_freq {max_freq} reaches the Nyquist limit {limit} of axis `{}`",
                axis.name()
            )));
        }
    }
    if let Some((a, partners)) =
        grid.axes()
            .iter()
            .enumerate()
            .find_map(|(a, ax)| match ax.spec().kind {
                AxisKind::HopfPolar { partners } => Some((a, partners)),
                _ => None,
            })
    {
        return Ok(random_sphere_polynomial(
            &mut rng, max_freq, grid, a, partners,
        ));
    }
    Ok(random_periodic(&mut rng, max_freq, grid))
}

fn random_periodic(rng: &mut ChaCha8Rng, max_freq: usize, grid: &Arc<GridSpec>) -> ScalarField {
    let d = grid.dims();
    let k = max_freq as i64;
    let mut coeffs = vec![ZERO; grid.len()];
    let slot = |kvec: &[i64]| -> usize {
        kvec.iter()
            .enumerate()
            .map(|(a, &ka)| {
                let n = grid.shape()[a] as i64;
                (ka.rem_euclid(n) as usize) * grid.strides()[a]
            })
            .sum()
    };
    let mut kvec = vec![-k; d];
    loop {
        // canonical half: first nonzero component positive
        let first = kvec.iter().find(|&&x| x != 0).copied();
        match first {
            None => {
                let a: f64 = StandardNormal.sample(rng);
                coeffs[slot(&kvec)] = Complex64::new(a, 0.0);
            }
            Some(v) if v > 0 => {
                let a: f64 = StandardNormal.sample(rng);
                let b: f64 = StandardNormal.sample(rng);
                coeffs[slot(&kvec)] = Complex64::new(0.5 * a, -0.5 * b);
                let neg: Vec<i64> = kvec.iter().map(|x| -x).collect();
                coeffs[slot(&neg)] = Complex64::new(0.5 * a, 0.5 * b);
            }
            _ => {}
        }
        // odometer over the box
        let mut a = d;
        loop {
            if a == 0 {
                return synthesize(grid, coeffs);
            }
            a -= 1;
            if kvec[a] < k {
                kvec[a] += 1;
                break;
            }
            kvec[a] = -k;
        }
    }
}

/// Inverse transform of a full coefficient array (unnormalized sum) along every axis.
fn synthesize(grid: &Arc<GridSpec>, mut data: Vec<Complex64>) -> ScalarField {
    for (a, axis) in grid.axes().iter().enumerate() {
        let tr = axis.transforms.as_ref().expect("periodic grid");
        let n = axis.nodes();
        let stride = grid.strides()[a];
        let mut buf = vec![ZERO; n];
        let mut scratch = vec![ZERO; tr.inverse.get_inplace_scratch_len()];
        grid.for_each_line(a, |base| {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = data[base + j * stride];
            }
            tr.inverse.process_with_scratch(&mut buf, &mut scratch);
            for (j, b) in buf.iter().enumerate() {
                data[base + j * stride] = *b;
            }
        });
    }
    ScalarField::from_parts(grid.clone(), data.into_iter().map(|c| c.re).collect())
}

fn random_sphere_polynomial(
    rng: &mut ChaCha8Rng,
    degree: usize,
    grid: &Arc<GridSpec>,
    polar: usize,
    partners: [usize; 2],
) -> ScalarField {
    let mut terms: Vec<([usize; 4], f64)> = Vec::new();
    for p in 0..=degree {
        for q in 0..=degree - p {
            for r in 0..=degree - p - q {
                for s in 0..=degree - p - q - r {
                    let c: f64 = StandardNormal.sample(rng);
                    terms.push(([p, q, r, s], c));
                }
            }
        }
    }
    ScalarField::from_fn(grid, |x| {
        let (eta, xi1, xi2) = (x[polar], x[partners[0]], x[partners[1]]);
        let amb = [
            eta.sin() * xi1.cos(),
            eta.sin() * xi1.sin(),
            eta.cos() * xi2.cos(),
            eta.cos() * xi2.sin(),
        ];
        terms
            .iter()
            .map(|(e, c)| c * (0..4).map(|i| amb[i].powi(e[i] as i32)).product::<f64>())
            .sum()
    })
}

/// Trigonometric interpolant of one periodic line, for off-grid evaluation.
#[derive(Clone, Debug)]
pub struct TrigSeries {
    /// coefficients for modes `0..=n/2`
    coeffs: Vec<Complex64>,
    n: usize,
    kappa: f64,
}

impl TrigSeries {
    /// Interpolant of `samples` taken at the nodes of periodic axis `axis`.
    pub fn from_samples(axis: &Axis, samples: &[f64]) -> Result<Self> {
        let tr = axis.transforms.as_ref().ok_or_else(|| {
            CeaError::InvalidArgument(format!("axis `{}` is not periodic", axis.name()))
        })?;
        let n = axis.nodes();
        if samples.len() != n {
            return Err(CeaError::GridMismatch(format!(
                "{} samples for an axis of {n} nodes",
                samples.len()
            )));
        }
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        tr.forward.process(&mut buf);
        let inv_n = 1.0 / n as f64;
        let coeffs = buf[..=n / 2].iter().map(|c| c * inv_n).collect();
        Ok(Self {
            coeffs,
            n,
            kappa: 2.0 * PI / axis.period().unwrap_or(2.0 * PI),
        })
    }

    /// Value and first derivative at `x`.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let z = Complex64::from_polar(1.0, self.kappa * x);
        let mut p = z;
        let mut val = self.coeffs[0].re;
        let mut der = 0.0;
        let top = if self.n.is_multiple_of(2) {
            self.n / 2
        } else {
            self.n / 2 + 1
        };
        for j in 1..top {
            let t = self.coeffs[j] * p;
            val += 2.0 * t.re;
            der -= 2.0 * self.kappa * j as f64 * t.im;
            p *= z;
        }
        if self.n.is_multiple_of(2) {
            let j = self.n / 2;
            let ph = self.kappa * j as f64 * x;
            val += self.coeffs[j].re * ph.cos();
            der -= self.coeffs[j].re * self.kappa * j as f64 * ph.sin();
        }
        (val, der)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }
}
