//! Euler–Arnold flow `f_t + (n+3) f E(f) = 0` on stream functions.
//!
//! Time integration is explicit (RK4 or midpoint) in physical space with spectral
//! derivatives. Along the Reeb direction the equation is a Burgers equation, so on
//! the circle and the Darboux box the solution is also available from characteristics,
//! `f(t, x, z + (n+3) t f0(x, z)) = f0(x, z)`, which is used as an oracle.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contact::{reeb_derivative, ContactModel, ModelKind};
use crate::error::{CeaError, Result};
use crate::fields::{
    integrate, partial_derivative, tail_energy_fraction, tail_energy_fraction_on, write_field,
    write_grid_sidecar, Axis, ScalarField, TrigSeries,
};

/// Growth of `max |E f|` over its initial value that halts integration.
pub const GRADIENT_GROWTH_LIMIT: f64 = 50.0;
/// Gradient growth up to which `1 / max |E f|` samples enter the blowup-time fit.
pub const FIT_GROWTH_LIMIT: f64 = 20.0;
/// Fraction of energy above 2/3 of Nyquist, along axes `E` moves, that halts integration.
pub const TAIL_ENERGY_LIMIT: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Rk4,
    Midpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicOptions {
    #[serde(default)]
    pub scheme: Scheme,
    /// Store every k-th step (the final step is always stored).
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "yes")]
    pub detect_blowup: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            record_every: 1,
            detect_blowup: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blowup {
    /// Time of the first state that tripped a detector.
    pub detected_at: f64,
    /// Zero of the line fitted to `1 / max |E f|` over the later half of the resolved regime.
    pub estimated_time: f64,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct GeodesicTrajectory {
    pub model: String,
    pub times: Vec<f64>,
    pub states: Vec<ScalarField>,
    /// `[int f, int f^2, int f^3]` at each stored time
    pub invariants: Vec<[f64; 3]>,
    pub blowup: Option<Blowup>,
    pub dt: f64,
    pub scheme: Scheme,
    pub record_every: usize,
}

impl GeodesicTrajectory {
    pub fn final_state(&self) -> &ScalarField {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory has at least the initial time")
    }

    pub fn blew_up(&self) -> bool {
        self.blowup.is_some()
    }

    /// Largest relative drift of each invariant against its initial value.
    /// The scale is `max(|I(0)|, int |f0|^k)`.
    pub fn invariant_drift(&self) -> [f64; 3] {
        let f0 = &self.states[0];
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let scale = integrate(&f0.map(|v| v.abs().powi(k as i32 + 1)))
                .max(self.invariants[0][k].abs())
                .max(f64::MIN_POSITIVE);
            *o = self
                .invariants
                .iter()
                .map(|inv| (inv[k] - self.invariants[0][k]).abs() / scale)
                .fold(0.0, f64::max);
        }
        out
    }

    /// Writes one container per stored frame plus `manifest.json` and `grid.json`.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_grid_sidecar(dir.join("grid.json"), self.states[0].grid())?;
        let mut frames = Vec::with_capacity(self.states.len());
        for (k, s) in self.states.iter().enumerate() {
            let name = format!("frame_{k:04}.ceaf");
            write_field(dir.join(&name), s)?;
            frames.push(name);
        }
        let manifest = serde_json::json!({
            "model": self.model,
            "times": self.times,
            "frames": frames,
            "invariants": self.invariants,
            "blowup": self.blowup,
            "dt": self.dt,
            "scheme": self.scheme,
        });
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }
}

/// `-(n+3) f E(f)`.
pub fn euler_arnold_rhs(model: &ContactModel, f: &ScalarField) -> Result<ScalarField> {
    let ef = reeb_derivative(model, f)?;
    let c = -((model.n() + 3) as f64);
    f.zip_with(&ef, |a, b| c * a * b)
}

/// `-1 / ((n+3) min E(f0))`, or infinity when `E(f0) >= 0` everywhere.
pub fn blowup_time(model: &ContactModel, f0: &ScalarField) -> Result<f64> {
    let ef = reeb_derivative(model, f0)?;
    let m = ef.min();
    let scale = 1e-13 * f0.max_abs().max(1.0);
    if m >= -scale {
        return Ok(f64::INFINITY);
    }
    Ok(-1.0 / ((model.n() + 3) as f64 * m))
}

fn invariants(f: &ScalarField) -> [f64; 3] {
    [
        integrate(f),
        integrate(&f.map(|v| v * v)),
        integrate(&f.map(|v| v * v * v)),
    ]
}

fn step(model: &ContactModel, f: &ScalarField, dt: f64, scheme: Scheme) -> Result<ScalarField> {
    match scheme {
        Scheme::Rk4 => {
            let k1 = euler_arnold_rhs(model, f)?;
            let k2 = euler_arnold_rhs(model, &f.axpy(0.5 * dt, &k1)?)?;
            let k3 = euler_arnold_rhs(model, &f.axpy(0.5 * dt, &k2)?)?;
            let k4 = euler_arnold_rhs(model, &f.axpy(dt, &k3)?)?;
            let values = f
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v + dt / 6.0
                        * (k1.values()[i]
                            + 2.0 * k2.values()[i]
                            + 2.0 * k3.values()[i]
                            + k4.values()[i])
                })
                .collect();
            Ok(ScalarField::from_parts(f.grid().clone(), values))
        }
        Scheme::Midpoint => {
            let k1 = euler_arnold_rhs(model, f)?;
            let k2 = euler_arnold_rhs(model, &f.axpy(0.5 * dt, &k1)?)?;
            f.axpy(dt, &k2)
        }
    }
}

fn check_band_limit(f0: &ScalarField) -> Result<()> {
    let tail = tail_energy_fraction(f0, 0.5);
    if tail > 1e-8 {
        return Err(CeaError::Resolution(format!(
            "initial datum carries {tail:.3e} of its energy above half-Nyquist"
        )));
    }
    Ok(())
}

/// Uniform step count and the step actually used (`<= dt`, landing on `t_end`).
fn steps_for(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CeaError::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(CeaError::InvalidArgument(format!(
            "t_end must be nonnegative, got {t_end}"
        )));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    Ok(if steps == 0 {
        (0, dt)
    } else {
        (steps, t_end / steps as f64)
    })
}

pub fn integrate_geodesic(
    model: &ContactModel,
    f0: &ScalarField,
    t_end: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<GeodesicTrajectory> {
    let opts = GeodesicOptions {
        scheme,
        ..GeodesicOptions::default()
    };
    integrate_geodesic_with(model, f0, t_end, dt, &opts)
}

pub fn integrate_geodesic_with(
    model: &ContactModel,
    f0: &ScalarField,
    t_end: f64,
    dt: f64,
    opts: &GeodesicOptions,
) -> Result<GeodesicTrajectory> {
    model.check_grid(f0)?;
    check_band_limit(f0)?;
    if opts.record_every == 0 {
        return Err(CeaError::InvalidArgument(
            "record_every must be at least 1".into(),
        ));
    }
    let (steps, h) = steps_for(t_end, dt)?;
    let grad0 = reeb_derivative(model, f0)?.max_abs();
    let grad_floor = 1e-12 * f0.max_abs().max(1e-300);

    let mut traj = GeodesicTrajectory {
        model: model.name().to_string(),
        times: vec![0.0],
        states: vec![f0.clone()],
        invariants: vec![invariants(f0)],
        blowup: None,
        dt: h,
        scheme: opts.scheme,
        record_every: opts.record_every,
    };
    let active: Vec<usize> = model
        .reeb()
        .components()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.iter().any(|&v| v != 0.0))
        .map(|(a, _)| a)
        .collect();
    let mut f = f0.clone();
    // (t, 1 / max|E f|) while the gradient is still well resolved
    let mut recip = vec![(0.0, 1.0 / grad0.max(f64::MIN_POSITIVE))];
    let mut last = recip[0];
    for s in 1..=steps {
        let t = s as f64 * h;
        f = step(model, &f, h, opts.scheme)?;
        if !f.is_finite() {
            return Err(CeaError::Resolution(format!("non-finite state at t = {t}")));
        }
        let mut reason = None;
        if opts.detect_blowup && grad0 > grad_floor {
            let g = reeb_derivative(model, &f)?.max_abs();
            last = (t, 1.0 / g);
            if g <= FIT_GROWTH_LIMIT * grad0 {
                recip.push(last);
            }
            if g > GRADIENT_GROWTH_LIMIT * grad0 {
                reason = Some(format!("max |E f| grew {:.1}x", g / grad0));
            } else {
                let tail = tail_energy_fraction_on(&f, 2.0 / 3.0, &active);
                if tail > TAIL_ENERGY_LIMIT {
                    reason = Some(format!(
                        "spectral tail holds {:.2}% of the energy",
                        100.0 * tail
                    ));
                }
            }
        }
        if s % opts.record_every == 0 || s == steps || reason.is_some() {
            traj.times.push(t);
            traj.invariants.push(invariants(&f));
            traj.states.push(f.clone());
        }
        if let Some(reason) = reason {
            if recip.len() < 2 {
                recip.push(last);
            }
            let estimated_time = extrapolate_zero(&recip[recip.len() / 2..]).unwrap_or(t);
            traj.blowup = Some(Blowup {
                detected_at: t,
                estimated_time,
                reason,
            });
            break;
        }
    }
    Ok(traj)
}

/// Zero of the least-squares line through `(t, r)` samples, if it decreases.
fn extrapolate_zero(samples: &[(f64, f64)]) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let n = samples.len() as f64;
    let mt = samples.iter().map(|p| p.0).sum::<f64>() / n;
    let mr = samples.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = samples.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let str: f64 = samples.iter().map(|p| (p.0 - mt) * (p.1 - mr)).sum();
    let slope = str / stt;
    (slope < 0.0).then(|| mt - mr / slope)
}

/// Trigonometric cardinal weights on periodic `axis` at `x`; a unit vector when `x` is a node.
fn cardinal_weights(axis: &Axis, x: f64) -> Vec<f64> {
    let n = axis.nodes();
    let period = axis.period().unwrap_or(2.0 * std::f64::consts::PI);
    let h = period / n as f64;
    let r = (x / h).rem_euclid(n as f64);
    let nearest = r.round();
    if (r - nearest).abs() < 1e-12 {
        let mut w = vec![0.0; n];
        w[nearest as usize % n] = 1.0;
        return w;
    }
    let kappa = 2.0 * std::f64::consts::PI / period;
    axis.coords()
        .iter()
        .map(|&xj| {
            let d = kappa * (x - xj);
            let mut s = 1.0;
            for k in 1..n / 2 {
                s += 2.0 * (k as f64 * d).cos();
            }
            if n.is_multiple_of(2) {
                s += ((n / 2) as f64 * d).cos();
            } else {
                s += 2.0 * ((n / 2) as f64 * d).cos();
            }
            s / n as f64
        })
        .collect()
}

/// Samples of `f` along the Reeb axis through `point`, interpolating the other axes.
fn reeb_line(f: &ScalarField, reeb_axis: usize, point: &[f64]) -> Vec<f64> {
    let grid = f.grid();
    let others: Vec<(usize, Vec<f64>)> = (0..grid.dims())
        .filter(|&a| a != reeb_axis)
        .map(|a| (a, cardinal_weights(&grid.axes()[a], point[a])))
        .collect();
    let nz = grid.shape()[reeb_axis];
    let mut line = vec![0.0; nz];
    let mut idx = vec![0usize; grid.dims()];
    // walk the tensor product of nonzero weights
    let supports: Vec<Vec<(usize, f64)>> = others
        .iter()
        .map(|(_, w)| {
            w.iter()
                .copied()
                .enumerate()
                .filter(|(_, v)| *v != 0.0)
                .collect()
        })
        .collect();
    let mut counter = vec![0usize; others.len()];
    loop {
        let mut weight = 1.0;
        for (k, (a, _)) in others.iter().enumerate() {
            let (j, w) = supports[k][counter[k]];
            idx[*a] = j;
            weight *= w;
        }
        for (j, l) in line.iter_mut().enumerate() {
            idx[reeb_axis] = j;
            *l += weight * f.values()[grid.flat_index(&idx)];
        }
        let mut k = 0;
        loop {
            if k == counter.len() {
                return line;
            }
            counter[k] += 1;
            if counter[k] < supports[k].len() {
                break;
            }
            counter[k] = 0;
            k += 1;
        }
    }
}

/// Reeb coordinate `z` with `z_query = z + c t f0(z)` on one line.
fn solve_characteristic(series: &TrigSeries, z_query: f64, ct: f64, fmax: f64) -> Result<f64> {
    let residual = |z: f64| z + ct * series.eval(z) - z_query;
    let mut z = z_query - ct * series.eval(z_query);
    let mut r = residual(z);
    for _ in 0..60 {
        if r.abs() <= 1e-14 * (1.0 + z_query.abs()) {
            return Ok(z);
        }
        let (v, d) = series.eval_with_derivative(z);
        let slope = 1.0 + ct * d;
        if slope <= 0.0 {
            break;
        }
        let full = -(z + ct * v - z_query) / slope;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = z + lambda * full;
            let rt = residual(trial);
            if rt.abs() < r.abs() {
                z = trial;
                r = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r.abs() <= 1e-10 {
        return Ok(z);
    }
    // bisection on the bracket [z' - c t M, z' + c t M]
    let (mut lo, mut hi) = (z_query - ct * fmax - 1e-12, z_query + ct * fmax + 1e-12);
    if residual(lo) > 0.0 || residual(hi) < 0.0 {
        return Err(CeaError::BlowupDomain(format!(
            "no characteristic reaches z = {z_query}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + z_query.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Values of the characteristics solution at `points` (full coordinate tuples).
///
/// Each query `(x, z')` is traced back along the Reeb fiber to the foot `z` with
/// `z' = z + (n+3) t f0(x, z)`, and `f0(x, z)` is returned.
pub fn implicit_solution_evaluate(
    model: &ContactModel,
    f0: &ScalarField,
    t: f64,
    points: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if !matches!(model.kind(), ModelKind::DarbouxBox | ModelKind::Circle) {
        return Err(CeaError::Capability {
            op: "implicit_solution_evaluate",
            model: model.name().to_string(),
        });
    }
    model.check_grid(f0)?;
    let (za, _) = model
        .reeb_axis()
        .expect("circle and darboux_box have a Reeb axis");
    let t_star = blowup_time(model, f0)?;
    if t < 0.0 || t >= t_star {
        return Err(CeaError::BlowupDomain(format!(
            "t = {t} is outside [0, {t_star}) where characteristics do not cross"
        )));
    }
    let grid = f0.grid();
    let ct = (model.n() + 3) as f64 * t;
    let axis = &grid.axes()[za];
    let mut out = Vec::with_capacity(points.len());
    let mut cache: Option<(Vec<f64>, TrigSeries, f64)> = None;
    for p in points {
        if p.len() != grid.dims() {
            return Err(CeaError::InvalidArgument(format!(
                "query point has {} coordinates, model has {}",
                p.len(),
                grid.dims()
            )));
        }
        let key: Vec<f64> = (0..grid.dims())
            .filter(|&a| a != za)
            .map(|a| p[a])
            .collect();
        let fresh = !matches!(&cache, Some((k, _, _)) if *k == key);
        if fresh {
            let line = reeb_line(f0, za, p);
            let fmax = line.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            cache = Some((key, TrigSeries::from_samples(axis, &line)?, fmax));
        }
        let (_, series, fmax) = cache.as_ref().expect("filled above");
        let z = solve_characteristic(series, p[za], ct, *fmax)?;
        out.push(series.eval(z));
    }
    Ok(out)
}

/// All grid nodes as query points.
pub fn grid_points(f: &ScalarField) -> Vec<Vec<f64>> {
    let grid = f.grid();
    let mut x = vec![0.0; grid.dims()];
    (0..grid.len())
        .map(|i| {
            grid.coords_of(i, &mut x);
            x.clone()
        })
        .collect()
}

/// Characteristics solution sampled on the grid.
pub fn implicit_solution_field(
    model: &ContactModel,
    f0: &ScalarField,
    t: f64,
) -> Result<ScalarField> {
    let values = implicit_solution_evaluate(model, f0, t, &grid_points(f0))?;
    ScalarField::new(f0.grid().clone(), values)
}

/// Particle positions `eta(t, alpha)` on the circle.
#[derive(Clone, Debug)]
pub struct FlowMap {
    pub times: Vec<f64>,
    /// `positions[k][j] = eta(times[k], alpha_j)`
    pub positions: Vec<Vec<f64>>,
}

impl FlowMap {
    /// `max |f(t, eta) eta_alpha^2 - f0|` over stored times: momentum transport.
    pub fn transport_defect(&self, traj: &GeodesicTrajectory) -> Result<f64> {
        let f0 = &traj.states[0];
        let grid = f0.grid();
        let axis = &grid.axes()[0];
        let alpha = axis.coords();
        let mut worst: f64 = 0.0;
        for (k, eta) in self.positions.iter().enumerate() {
            let Some(state) = state_at(traj, self.times[k]) else {
                continue;
            };
            let disp = ScalarField::new(
                grid.clone(),
                eta.iter().zip(alpha).map(|(e, a)| e - a).collect(),
            )?;
            let d = partial_derivative(&disp, 0)?;
            let series = TrigSeries::from_samples(axis, state.values())?;
            for j in 0..eta.len() {
                let jac = 1.0 + d.values()[j];
                worst = worst.max((series.eval(eta[j]) * jac * jac - f0.values()[j]).abs());
            }
        }
        Ok(worst)
    }
}

fn state_at(traj: &GeodesicTrajectory, t: f64) -> Option<&ScalarField> {
    traj.times
        .iter()
        .position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
        .map(|k| &traj.states[k])
}

fn check_monotone(eta: &[f64], t: f64) -> Result<()> {
    let n = eta.len();
    for j in 0..n {
        let next = if j + 1 < n {
            eta[j + 1]
        } else {
            eta[0] + 2.0 * std::f64::consts::PI
        };
        if next.is_nan() || next <= eta[j] {
            return Err(CeaError::BlowupDomain(format!(
                "flow map lost monotonicity at t = {t}, node {j}"
            )));
        }
    }
    Ok(())
}

/// Integrates `d eta / dt = f(t, eta)` alongside the Euler–Arnold equation with the
/// trajectory's step and scheme, recording at the trajectory's stored times.
pub fn flow_map_reconstruct(model: &ContactModel, traj: &GeodesicTrajectory) -> Result<FlowMap> {
    if model.kind() != ModelKind::Circle {
        return Err(CeaError::Capability {
            op: "flow_map_reconstruct",
            model: model.name().to_string(),
        });
    }
    let f0 = &traj.states[0];
    model.check_grid(f0)?;
    let grid = f0.grid().clone();
    let axis = &grid.axes()[0];
    let eval_at = |f: &ScalarField, eta: &[f64]| -> Result<Vec<f64>> {
        let s = TrigSeries::from_samples(axis, f.values())?;
        Ok(eta.iter().map(|&x| s.eval(x)).collect())
    };
    let axpy = |x: &[f64], a: f64, y: &[f64]| -> Vec<f64> {
        x.iter().zip(y).map(|(p, q)| p + a * q).collect()
    };

    let h = traj.dt;
    let t_last = match &traj.blowup {
        Some(_) if traj.times.len() > 1 => traj.times[traj.times.len() - 2],
        Some(_) => 0.0,
        None => traj.final_time(),
    };
    let steps = (t_last / h).round() as usize;
    let mut eta: Vec<f64> = axis.coords().to_vec();
    let mut f = f0.clone();
    let mut map = FlowMap {
        times: vec![0.0],
        positions: vec![eta.clone()],
    };
    let mut next_record = 1;
    for s in 1..=steps {
        match traj.scheme {
            Scheme::Rk4 => {
                let k1f = euler_arnold_rhs(model, &f)?;
                let k1e = eval_at(&f, &eta)?;
                let f2 = f.axpy(0.5 * h, &k1f)?;
                let e2 = axpy(&eta, 0.5 * h, &k1e);
                let k2f = euler_arnold_rhs(model, &f2)?;
                let k2e = eval_at(&f2, &e2)?;
                let f3 = f.axpy(0.5 * h, &k2f)?;
                let e3 = axpy(&eta, 0.5 * h, &k2e);
                let k3f = euler_arnold_rhs(model, &f3)?;
                let k3e = eval_at(&f3, &e3)?;
                let f4 = f.axpy(h, &k3f)?;
                let e4 = axpy(&eta, h, &k3e);
                let k4e = eval_at(&f4, &e4)?;
                let k4f = euler_arnold_rhs(model, &f4)?;
                for j in 0..eta.len() {
                    eta[j] += h / 6.0 * (k1e[j] + 2.0 * k2e[j] + 2.0 * k3e[j] + k4e[j]);
                }
                let mut v = f.values().to_vec();
                for (j, x) in v.iter_mut().enumerate() {
                    *x += h / 6.0
                        * (k1f.values()[j]
                            + 2.0 * k2f.values()[j]
                            + 2.0 * k3f.values()[j]
                            + k4f.values()[j]);
                }
                f = ScalarField::from_parts(grid.clone(), v);
            }
            Scheme::Midpoint => {
                let k1f = euler_arnold_rhs(model, &f)?;
                let k1e = eval_at(&f, &eta)?;
                let f2 = f.axpy(0.5 * h, &k1f)?;
                let e2 = axpy(&eta, 0.5 * h, &k1e);
                let k2f = euler_arnold_rhs(model, &f2)?;
                let k2e = eval_at(&f2, &e2)?;
                eta = axpy(&eta, h, &k2e);
                f = f.axpy(h, &k2f)?;
            }
        }
        let t = s as f64 * h;
        check_monotone(&eta, t)?;
        while next_record < traj.times.len() && traj.times[next_record] < t - 1e-12 * (1.0 + t) {
            next_record += 1;
        }
        if next_record < traj.times.len()
            && (traj.times[next_record] - t).abs() <= 1e-12 * (1.0 + t)
        {
            map.times.push(t);
            map.positions.push(eta.clone());
            next_record += 1;
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random_band_limited;
    use std::f64::consts::PI;

    fn circle(n: usize) -> ContactModel {
        ContactModel::circle(n).unwrap()
    }

    fn sin(m: &ContactModel, a: f64) -> ScalarField {
        ScalarField::from_fn(m.grid(), |x| a * x[0].sin())
    }

    #[test]
    fn rhs_examples() {
        let m = circle(64);
        let r = euler_arnold_rhs(&m, &sin(&m, 1.0)).unwrap();
        let exact = ScalarField::from_fn(m.grid(), |x| -3.0 * x[0].sin() * x[0].cos());
        assert!(r.sub(&exact).unwrap().max_abs() < 1e-13);
        assert_eq!(
            euler_arnold_rhs(&m, &ScalarField::constant(m.grid(), 2.0))
                .unwrap()
                .max_abs(),
            0.0
        );

        let b = ContactModel::darboux_box(1, &[8, 8, 32]).unwrap();
        let f = ScalarField::from_fn(b.grid(), |x| x[2].sin());
        let r = euler_arnold_rhs(&b, &f).unwrap();
        let exact = ScalarField::from_fn(b.grid(), |x| -4.0 * x[2].sin() * x[2].cos());
        assert!(r.sub(&exact).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn blowup_time_examples() {
        let m = circle(64);
        assert!((blowup_time(&m, &sin(&m, 1.0)).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(blowup_time(&m, &ScalarField::constant(m.grid(), 3.0))
            .unwrap()
            .is_infinite());
        let b = ContactModel::darboux_box(1, &[8, 8, 32]).unwrap();
        let f = ScalarField::from_fn(b.grid(), |x| 2.0 * x[2].sin());
        assert!((blowup_time(&b, &f).unwrap() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn constant_is_steady() {
        let m = circle(32);
        let c = ScalarField::constant(m.grid(), 0.7);
        let tr = integrate_geodesic(&m, &c, 1.0, 0.1, Scheme::Rk4).unwrap();
        assert_eq!(tr.final_state().values(), c.values());
        assert!(!tr.blew_up());
    }

    #[test]
    fn invalid_arguments() {
        let m = circle(32);
        let f = sin(&m, 1.0);
        assert!(integrate_geodesic(&m, &f, 1.0, 0.0, Scheme::Rk4).is_err());
        assert!(integrate_geodesic(&m, &f, 1.0, -1.0, Scheme::Rk4).is_err());
        let rough = ScalarField::from_fn(m.grid(), |x| (12.0 * x[0]).sin());
        assert!(matches!(
            integrate_geodesic(&m, &rough, 0.1, 0.01, Scheme::Rk4),
            Err(CeaError::Resolution(_))
        ));
    }

    #[test]
    fn implicit_solution_trivial_cases() {
        let m = circle(64);
        let f = sin(&m, 1.0);
        let pts = grid_points(&f);
        let v = implicit_solution_evaluate(&m, &f, 0.0, &pts).unwrap();
        for (a, b) in v.iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        let c = ScalarField::constant(m.grid(), 1.5);
        let v = implicit_solution_evaluate(&m, &c, 10.0, &pts).unwrap();
        assert!(v.iter().all(|x| (x - 1.5).abs() < 1e-13));
        assert!(matches!(
            implicit_solution_evaluate(&m, &f, 0.4, &pts),
            Err(CeaError::BlowupDomain(_))
        ));
        let t = ContactModel::torus_k([8, 8, 8]).unwrap();
        let g = ScalarField::constant(t.grid(), 1.0);
        assert!(matches!(
            implicit_solution_evaluate(&t, &g, 0.1, &grid_points(&g)),
            Err(CeaError::Capability { .. })
        ));
    }

    #[test]
    fn implicit_residual_and_off_grid_points() {
        let b = ContactModel::darboux_box(1, &[16, 8, 64]).unwrap();
        let f0 = random_band_limited(5, 2, b.grid()).unwrap();
        let t = 0.5 * blowup_time(&b, &f0).unwrap();
        let pts = vec![
            vec![0.3, 1.1, 2.0],
            vec![5.0, 0.0, 6.0],
            vec![PI, PI / 2.0, 0.0],
        ];
        let vals = implicit_solution_evaluate(&b, &f0, t, &pts).unwrap();
        // f0 is constant along characteristics, so f0(x, z) = value and z' = z + 4 t value
        let axis = &b.grid().axes()[2];
        for (p, v) in pts.iter().zip(&vals) {
            let line = reeb_line(&f0, 2, p);
            let s = TrigSeries::from_samples(axis, &line).unwrap();
            let z = p[2] - 4.0 * t * v;
            assert!((s.eval(z) - v).abs() < 1e-10);
        }
    }

    #[test]
    fn solver_matches_characteristics_on_circle() {
        let m = circle(256);
        let f0 = sin(&m, 1.0);
        let tr = integrate_geodesic(&m, &f0, 0.2, 1e-3, Scheme::Rk4).unwrap();
        let exact = implicit_solution_field(&m, &f0, 0.2).unwrap();
        assert!(tr.final_state().sub(&exact).unwrap().max_abs() < 1e-6);
    }

    #[test]
    fn rk4_convergence_order() {
        let m = circle(256);
        let f0 = sin(&m, 1.0);
        let exact = implicit_solution_field(&m, &f0, 0.2).unwrap();
        let err = |dt: f64| {
            let tr = integrate_geodesic(&m, &f0, 0.2, dt, Scheme::Rk4).unwrap();
            tr.final_state().sub(&exact).unwrap().norm()
        };
        let (e1, e2) = (err(0.02), err(0.01));
        assert!(e1 / e2 >= 12.0, "{e1} {e2}");
    }

    #[test]
    fn midpoint_is_second_order() {
        let m = circle(128);
        let f0 = sin(&m, 1.0);
        let exact = implicit_solution_field(&m, &f0, 0.2).unwrap();
        let err = |dt: f64| {
            let tr = integrate_geodesic(&m, &f0, 0.2, dt, Scheme::Midpoint).unwrap();
            tr.final_state().sub(&exact).unwrap().norm()
        };
        let ratio = err(2e-3) / err(1e-3);
        assert!((3.0..5.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn sin_blows_up_near_one_third() {
        let m = circle(1024);
        let tr = integrate_geodesic(&m, &sin(&m, 1.0), 1.0, 1e-3, Scheme::Rk4).unwrap();
        let b = tr.blowup.expect("blowup detected");
        assert!((b.estimated_time - 1.0 / 3.0).abs() < 0.02 / 3.0, "{b:?}");
        assert!(b.detected_at < 0.35);
    }

    #[test]
    fn time_reversal() {
        let m = circle(256);
        let f0 = random_band_limited(3, 3, m.grid()).unwrap();
        let t = 0.4 * blowup_time(&m, &f0).unwrap();
        let fwd = integrate_geodesic(&m, &f0, t, 1e-3, Scheme::Rk4).unwrap();
        let back = integrate_geodesic_with(
            &m,
            &fwd.final_state().scale(-1.0),
            t,
            1e-3,
            &GeodesicOptions {
                detect_blowup: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(back.final_state().scale(-1.0).sub(&f0).unwrap().max_abs() < 1e-6);
    }

    #[test]
    fn flow_map_examples() {
        let m = circle(64);
        let c = ScalarField::constant(m.grid(), 0.5);
        let tr = integrate_geodesic(&m, &c, 0.4, 0.1, Scheme::Rk4).unwrap();
        let fm = flow_map_reconstruct(&m, &tr).unwrap();
        assert_eq!(fm.times.len(), tr.times.len());
        for (t, eta) in fm.times.iter().zip(&fm.positions) {
            for (e, a) in eta.iter().zip(m.grid().axes()[0].coords()) {
                assert!((e - a - 0.5 * t).abs() < 1e-12);
            }
        }
        assert_eq!(fm.positions[0], m.grid().axes()[0].coords());

        let m = circle(256);
        let f0 = sin(&m, 1.0);
        let tr = integrate_geodesic(&m, &f0, 0.2, 1e-3, Scheme::Rk4).unwrap();
        let fm = flow_map_reconstruct(&m, &tr).unwrap();
        assert!(fm.transport_defect(&tr).unwrap() < 1e-6);
    }

    #[test]
    fn flow_map_is_circle_only() {
        let b = ContactModel::darboux_box(1, &[8, 8, 16]).unwrap();
        let f = ScalarField::constant(b.grid(), 1.0);
        let tr = integrate_geodesic(&b, &f, 0.1, 0.05, Scheme::Rk4).unwrap();
        assert!(matches!(
            flow_map_reconstruct(&b, &tr),
            Err(CeaError::Capability { .. })
        ));
    }

    #[test]
    fn export_writes_frames_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = circle(32);
        let tr = integrate_geodesic(&m, &sin(&m, 0.1), 0.2, 0.1, Scheme::Rk4).unwrap();
        tr.export(dir.path()).unwrap();
        assert!(dir.path().join("frame_0002.ceaf").exists());
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest["times"].as_array().unwrap().len(), 3);
    }
}
