//! Jacobi fields along Reeb geodesics `f = c`, kernel directions of the
//! exponential map, and finite-difference probes of its derivative.
//!
//! Along `f = c` the Jacobi stream function obeys `g_tt + c(n+2) E(g_t) = 0`,
//! so `w = g_t` is transported at speed `a = c(n+2)` and
//! `g(t) = (W0(z) - W0(z - a t)) / a` with `W0' = w0`.

use rayon::prelude::*;
use serde::Serialize;

use crate::contact::{reeb_derivative, ContactModel, ModelKind};
use crate::error::{CeaError, Result};
use crate::fields::{antiderivative, shift_periodic, ScalarField};
use crate::geodesics::{
    blowup_time, flow_map_reconstruct, integrate_geodesic_with, GeodesicOptions,
};
use crate::report::ExperimentReport;

fn reeb_axis_of(model: &ContactModel, op: &'static str) -> Result<(usize, f64)> {
    match model.kind() {
        ModelKind::Circle | ModelKind::DarbouxBox => Ok(model
            .reeb_axis()
            .expect("circle and darboux_box have a Reeb axis")),
        _ => Err(CeaError::Capability {
            op,
            model: model.name().to_string(),
        }),
    }
}

#[derive(Clone, Debug)]
pub struct JacobiSolution {
    pub model: String,
    pub c: f64,
    pub w0: ScalarField,
    pub times: Vec<f64>,
    pub g_states: Vec<ScalarField>,
    speed: f64,
    axis: usize,
    big_w: ScalarField,
}

impl JacobiSolution {
    /// Transport speed `c(n+2)`.
    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Closed-form `g(t)` at any real `t`.
    pub fn at(&self, t: f64) -> Result<ScalarField> {
        if t == 0.0 {
            return Ok(ScalarField::zeros(self.w0.grid()));
        }
        let shifted = shift_periodic(&self.big_w, self.axis, self.speed * t)?;
        self.big_w.zip_with(&shifted, |a, b| (a - b) / self.speed)
    }

    /// `max |g_tt + a E(g_t)| / (a max|w0|)` at `t`, with sixth-order central
    /// differences in time and spectral derivatives in space.
    pub fn residual(&self, t: f64) -> Result<f64> {
        let h = 0.01 / self.speed;
        let g: Vec<ScalarField> = (-3..=3)
            .map(|k| self.at(t + k as f64 * h))
            .collect::<Result<_>>()?;
        let d1 = [
            -1.0 / 60.0,
            3.0 / 20.0,
            -0.75,
            0.0,
            0.75,
            -3.0 / 20.0,
            1.0 / 60.0,
        ];
        let d2 = [
            1.0 / 90.0,
            -3.0 / 20.0,
            1.5,
            -49.0 / 18.0,
            1.5,
            -3.0 / 20.0,
            1.0 / 90.0,
        ];
        let combine = |w: &[f64; 7], scale: f64| {
            let mut v = vec![0.0; self.w0.values().len()];
            for (k, gk) in g.iter().enumerate() {
                for (o, x) in v.iter_mut().zip(gk.values()) {
                    *o += w[k] * x / scale;
                }
            }
            ScalarField::from_parts(self.w0.grid().clone(), v)
        };
        let gt = combine(&d1, h);
        let gtt = combine(&d2, h * h);
        let egt = crate::fields::partial_derivative(&gt, self.axis)?;
        let r = gtt.axpy(self.speed, &egt)?;
        let scale = self.speed * self.w0.max_abs();
        Ok(if scale > 0.0 {
            r.max_abs() / scale
        } else {
            r.max_abs()
        })
    }

    /// `max |(g(h) - g(-h)) / 2h - w0|` for a small `h`.
    pub fn initial_velocity_defect(&self) -> Result<f64> {
        let h = 1e-4 / self.speed.max(1.0);
        let d = self.at(h)?.sub(&self.at(-h)?)?.scale(0.5 / h);
        Ok(d.sub(&self.w0)?.max_abs())
    }
}

/// Closed-form Jacobi field with `g(0) = 0`, `g_t(0) = w0`, stored at 11 equally spaced times.
pub fn jacobi_solve(
    model: &ContactModel,
    c: f64,
    w0: &ScalarField,
    t_end: f64,
) -> Result<JacobiSolution> {
    let (axis, _) = reeb_axis_of(model, "jacobi_solve")?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(CeaError::InvalidArgument(format!(
            "Reeb speed c must be positive, got {c}"
        )));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(CeaError::InvalidArgument(format!(
            "t_end must be nonnegative, got {t_end}"
        )));
    }
    model.check_grid(w0)?;
    let big_w = antiderivative(w0, axis)?;
    let mut sol = JacobiSolution {
        model: model.name().to_string(),
        c,
        w0: w0.clone(),
        times: (0..=10).map(|k| t_end * k as f64 / 10.0).collect(),
        g_states: Vec::new(),
        speed: c * (model.n() + 2) as f64,
        axis,
        big_w,
    };
    sol.g_states = sol
        .times
        .iter()
        .map(|&t| sol.at(t))
        .collect::<Result<_>>()?;
    Ok(sol)
}

/// `(c_m, sin(2 pi m z / L))`, with `c_m = L / (m (n+2))` so that `g(1) = 0`.
pub fn kernel_direction(model: &ContactModel, m: usize) -> Result<(f64, ScalarField)> {
    let (axis, period) = reeb_axis_of(model, "kernel_direction")?;
    let nyquist = model.grid().shape()[axis] / 2;
    if m == 0 || m >= nyquist {
        return Err(CeaError::InvalidArgument(format!(
            "m must lie in 1..{nyquist} on this grid, got {m}"
        )));
    }
    let k = 2.0 * std::f64::consts::PI * m as f64 / period;
    let w0 = ScalarField::from_fn(model.grid(), |x| (k * x[axis]).sin());
    Ok((period / (m as f64 * (model.n() + 2) as f64), w0))
}

/// Where the probe distance is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeLevel {
    /// L2 distance of time-1 flow maps (circle)
    Flow,
    /// L2 distance of time-1 stream functions (darboux_box)
    Stream,
}

#[derive(Clone, Debug, Serialize)]
pub struct DerivativeProbe {
    pub c: f64,
    #[serde(skip)]
    pub direction: ScalarField,
    pub direction_norm: f64,
    pub epsilons: Vec<f64>,
    pub ratios: Vec<f64>,
    pub level: ProbeLevel,
}

impl DerivativeProbe {
    /// Least-squares slope of `log r` against `log eps`; `None` with fewer than two points.
    pub fn loglog_slope(&self) -> Option<f64> {
        if self.epsilons.len() < 2 {
            return None;
        }
        let xs: Vec<f64> = self.epsilons.iter().map(|e| e.ln()).collect();
        let ys: Vec<f64> = self
            .ratios
            .iter()
            .map(|r| r.max(f64::MIN_POSITIVE).ln())
            .collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        Some(sxy / sxx)
    }

    /// `(max r - min r) / max r` over the ladder.
    pub fn spread(&self) -> f64 {
        let hi = self
            .ratios
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let lo = self.ratios.iter().copied().fold(f64::INFINITY, f64::min);
        if hi > 0.0 {
            (hi - lo) / hi
        } else {
            0.0
        }
    }

    /// Ratio at the smallest epsilon.
    pub fn limit(&self) -> f64 {
        *self.ratios.last().unwrap_or(&f64::NAN)
    }
}

/// Time step of the nonlinear solves behind a probe.
pub const PROBE_DT: f64 = 1e-3;

fn exp_image(model: &ContactModel, f0: &ScalarField, dt: f64) -> Result<Vec<f64>> {
    let steps = (1.0 / dt).round().max(1.0) as usize;
    let opts = GeodesicOptions {
        record_every: steps,
        detect_blowup: false,
        ..GeodesicOptions::default()
    };
    let traj = integrate_geodesic_with(model, f0, 1.0, dt, &opts)?;
    match model.kind() {
        ModelKind::Circle => Ok(flow_map_reconstruct(model, &traj)?
            .positions
            .pop()
            .expect("flow map stores its final time")),
        _ => Ok(traj.final_state().values().to_vec()),
    }
}

/// Finite-difference ratios `|exp(c + eps w) - exp(c)| / eps`.
pub fn dexp_probe(
    model: &ContactModel,
    c: f64,
    direction: &ScalarField,
    epsilons: &[f64],
) -> Result<DerivativeProbe> {
    dexp_probe_with(model, c, direction, epsilons, PROBE_DT)
}

pub fn dexp_probe_with(
    model: &ContactModel,
    c: f64,
    direction: &ScalarField,
    epsilons: &[f64],
    dt: f64,
) -> Result<DerivativeProbe> {
    reeb_axis_of(model, "dexp_probe")?;
    model.check_grid(direction)?;
    if epsilons.is_empty()
        || epsilons.iter().any(|e| e.is_nan() || *e <= 0.0)
        || epsilons.windows(2).any(|p| p[1] >= p[0])
    {
        return Err(CeaError::InvalidArgument(
            "epsilons must be positive and strictly decreasing".into(),
        ));
    }
    let min_e = reeb_derivative(model, direction)?.min();
    if min_e < 0.0 {
        let bound = 1.0 / ((model.n() + 3) as f64 * -min_e);
        if epsilons[0] >= bound {
            return Err(CeaError::BlowupDomain(format!(
                "eps = {} blows up before t = 1; admissible eps < {bound:.6e}",
                epsilons[0]
            )));
        }
    }
    let base = ScalarField::constant(model.grid(), c);
    let reference = exp_image(model, &base, dt)?;
    let weights = model.grid().node_weights();
    let ratios = epsilons
        .par_iter()
        .map(|&eps| {
            let f0 = base.axpy(eps, direction)?;
            debug_assert!(blowup_time(model, &f0)? > 1.0);
            let img = exp_image(model, &f0, dt)?;
            let d2: f64 = img
                .iter()
                .zip(&reference)
                .zip(weights)
                .map(|((a, b), w)| w * (a - b) * (a - b))
                .sum();
            Ok(d2.sqrt() / eps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DerivativeProbe {
        c,
        direction: direction.clone(),
        direction_norm: direction.norm(),
        epsilons: epsilons.to_vec(),
        ratios,
        level: if model.kind() == ModelKind::Circle {
            ProbeLevel::Flow
        } else {
            ProbeLevel::Stream
        },
    })
}

/// Slope that marks a vanishing derivative on the log-log ladder.
pub const KERNEL_SLOPE_MIN: f64 = 0.85;
/// Allowed spread of generic ratios across the ladder.
pub const GENERIC_SPREAD_MAX: f64 = 0.05;

/// A direction outside every kernel: constant plus the first Reeb harmonic.
pub fn generic_direction(model: &ContactModel) -> Result<ScalarField> {
    let (axis, period) = reeb_axis_of(model, "generic_direction")?;
    let k = 2.0 * std::f64::consts::PI / period;
    Ok(ScalarField::from_fn(model.grid(), |x| {
        1.0 + (k * x[axis]).cos()
    }))
}

pub fn c1_failure_report(
    model: &ContactModel,
    m_list: &[usize],
    epsilons: &[f64],
) -> Result<ExperimentReport> {
    c1_failure_report_with(model, m_list, epsilons, None, PROBE_DT)
}

/// Probes kernel and generic directions at each `c_m`. Kernel directions are scaled by
/// `1/m` so the whole ladder stays below the blowup time. With `threshold`, also flags
/// that the `c_m` decrease strictly to below it.
pub fn c1_failure_report_with(
    model: &ContactModel,
    m_list: &[usize],
    epsilons: &[f64],
    threshold: Option<f64>,
    dt: f64,
) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("exp-derivative");
    r.columns(&["m", "c_m", "direction", "epsilon", "ratio"]);
    if m_list.is_empty() {
        return Ok(r);
    }
    let generic = generic_direction(model)?;
    let rows = m_list
        .par_iter()
        .map(|&m| {
            let (c, w0) = kernel_direction(model, m)?;
            let kernel = dexp_probe_with(model, c, &w0.scale(1.0 / m as f64), epsilons, dt)?;
            let gen = dexp_probe_with(model, c, &generic, epsilons, dt)?;
            Ok((m, c, kernel, gen))
        })
        .collect::<Result<Vec<_>>>()?;

    let flow_level = model.kind() == ModelKind::Circle;
    if !flow_level {
        r.note("stream-function level distance; kernel directions are not expected to show a vanishing derivative here");
    }
    let mut slopes_ok = true;
    let mut have_slopes = true;
    let mut generic_ok = true;
    for (m, c, kernel, gen) in &rows {
        for (probe, label) in [(kernel, "kernel"), (gen, "generic")] {
            for (e, ratio) in probe.epsilons.iter().zip(&probe.ratios) {
                r.push_row(vec![
                    m.to_string(),
                    c.to_string(),
                    label.into(),
                    e.to_string(),
                    ratio.to_string(),
                ]);
            }
        }
        r.metric(&format!("c_m.{m}"), *c);
        match kernel.loglog_slope() {
            Some(s) => {
                r.metric(&format!("kernel_slope.{m}"), s);
                slopes_ok &= s >= KERNEL_SLOPE_MIN;
            }
            None => {
                have_slopes = false;
                r.note(format!("m = {m}: kernel slope insufficient data"));
            }
        }
        r.metric(&format!("generic_limit.{m}"), gen.limit());
        r.metric(&format!("generic_spread.{m}"), gen.spread());
        generic_ok &= gen.spread() <= GENERIC_SPREAD_MAX;
    }
    if flow_level && have_slopes {
        r.flag("kernel_slopes", slopes_ok);
    }
    if epsilons.len() >= 2 {
        r.flag("generic_stabilizes", generic_ok);
    }
    let cs: Vec<f64> = rows.iter().map(|(_, c, _, _)| *c).collect();
    let decreasing = cs.windows(2).all(|p| p[1] < p[0]);
    r.flag("c_m_decreasing", decreasing);
    if let Some(th) = threshold {
        let min = cs.iter().copied().fold(f64::INFINITY, f64::min);
        r.metric("c_m_min", min);
        r.flag("c_m_below_threshold", decreasing && min < th);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(n: usize) -> ContactModel {
        ContactModel::circle(n).unwrap()
    }

    #[test]
    fn zero_velocity_gives_zero_field() {
        let m = circle(32);
        let s = jacobi_solve(&m, 1.3, &ScalarField::zeros(m.grid()), 1.0).unwrap();
        assert!(s.g_states.iter().all(|g| g.max_abs() == 0.0));
    }

    #[test]
    fn sin_closed_form() {
        let m = circle(64);
        let c = 0.7;
        let w0 = ScalarField::from_fn(m.grid(), |x| x[0].sin());
        let s = jacobi_solve(&m, c, &w0, 2.0).unwrap();
        for (t, g) in s.times.iter().zip(&s.g_states) {
            let exact = ScalarField::from_fn(m.grid(), |x| {
                (-x[0].cos() + (x[0] - 2.0 * c * t).cos()) / (2.0 * c)
            });
            assert!(g.sub(&exact).unwrap().max_abs() < 1e-12);
            assert!(s.residual(*t).unwrap() < 1e-8);
        }
        assert!(s.initial_velocity_defect().unwrap() < 1e-6);
        assert_eq!(s.g_states[0].max_abs(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = circle(32);
        let w0 = ScalarField::from_fn(m.grid(), |x| x[0].sin());
        assert!(jacobi_solve(&m, 0.0, &w0, 1.0).is_err());
        assert!(jacobi_solve(&m, 1.0, &ScalarField::constant(m.grid(), 1.0), 1.0).is_err());
        let t = ContactModel::torus_k([8, 8, 8]).unwrap();
        assert!(matches!(
            jacobi_solve(&t, 1.0, &ScalarField::zeros(t.grid()), 1.0),
            Err(CeaError::Capability { .. })
        ));
        assert!(kernel_direction(&m, 16).is_err());
        assert!(kernel_direction(&m, 0).is_err());
    }

    #[test]
    fn kernel_directions_annihilate_at_one() {
        let m = circle(64);
        let (c1, w) = kernel_direction(&m, 1).unwrap();
        assert!((c1 - PI).abs() < 1e-15);
        assert!(
            w.sub(&ScalarField::from_fn(m.grid(), |x| x[0].sin()))
                .unwrap()
                .max_abs()
                < 1e-15
        );
        let reference = jacobi_solve(&m, c1, &w, 1.0)
            .unwrap()
            .at(0.5)
            .unwrap()
            .norm();
        for k in [1, 2, 4, 8] {
            let (c, w) = kernel_direction(&m, k).unwrap();
            let s = jacobi_solve(&m, c, &w, 1.0).unwrap();
            assert!(s.at(1.0).unwrap().norm() <= 1e-10 * w.norm());
            assert!(s.at(0.5).unwrap().norm() >= 0.1 * reference);
        }
        let b = ContactModel::darboux_box(1, &[8, 8, 32]).unwrap();
        let (c3, w) = kernel_direction(&b, 3).unwrap();
        assert!((c3 - 2.0 * PI / 9.0).abs() < 1e-15);
        let s = jacobi_solve(&b, c3, &w, 1.0).unwrap();
        assert!(s.at(1.0).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn every_mean_zero_direction_is_kernel_at_c1() {
        let m = circle(64);
        let w = ScalarField::from_fn(m.grid(), |x| (2.0 * x[0]).cos() + 0.3 * (5.0 * x[0]).sin());
        let s = jacobi_solve(&m, PI, &w, 1.0).unwrap();
        assert!(s.at(1.0).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn probe_validates_ladder() {
        let m = circle(64);
        let w = ScalarField::from_fn(m.grid(), |x| x[0].sin());
        assert!(dexp_probe(&m, 1.0, &w, &[1e-2, 2e-2]).is_err());
        assert!(dexp_probe(&m, 1.0, &w, &[]).is_err());
        assert!(matches!(
            dexp_probe(&m, 1.0, &w, &[0.5]),
            Err(CeaError::BlowupDomain(_))
        ));
    }

    #[test]
    fn kernel_probe_slope_and_generic_plateau() {
        let m = circle(128);
        let eps = [1e-2, 5e-3, 2.5e-3];
        let (c, w) = kernel_direction(&m, 1).unwrap();
        let k = dexp_probe(&m, c, &w, &eps).unwrap();
        let slope = k.loglog_slope().unwrap();
        assert!((slope - 1.0).abs() < 0.15, "{k:?}");
        let g = dexp_probe(&m, c, &generic_direction(&m).unwrap(), &eps).unwrap();
        assert!(g.spread() < 0.05, "{g:?}");
    }

    #[test]
    fn derivative_at_zero_is_identity() {
        let m = circle(128);
        let w = ScalarField::from_fn(m.grid(), |x| 0.5 + x[0].cos() - 0.2 * (3.0 * x[0]).sin());
        let p = dexp_probe(&m, 0.0, &w, &[1e-2, 1e-3]).unwrap();
        assert!((p.limit() - w.norm()).abs() < 0.02 * w.norm(), "{p:?}");
    }

    #[test]
    fn report_shapes() {
        let m = circle(64);
        let empty = c1_failure_report(&m, &[], &[1e-2]).unwrap();
        assert!(empty.table.rows.is_empty());
        let single = c1_failure_report(&m, &[1], &[1e-2]).unwrap();
        assert!(single.notes.iter().any(|n| n.contains("insufficient data")));
        assert!(!single.flags.contains_key("kernel_slopes"));
    }
}
