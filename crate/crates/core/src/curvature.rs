//! Curvature of the L2 metric on stream functions, by Arnold's formula and by
//! the closed-form square `1/4 int [{f,g} - (n+3)(f Eg - g Ef)]^2`.

use rayon::prelude::*;
use serde::Serialize;

use crate::contact::{apply_components, ContactModel};
use crate::error::{CeaError, Result};
use crate::fields::{l2_inner, random_band_limited, tail_energy_fraction, ScalarField};
use crate::report::{split_seed, ExperimentReport};

/// Inputs must carry no energy above half the Nyquist limit.
const RESOLUTION_TOL: f64 = 1e-8;
/// Relative threshold on `|X ^ Y|^2` for sectional normalization.
pub const DEGENERATE_PLANE: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureSample {
    pub model: String,
    pub seed_f: u64,
    pub seed_g: u64,
    pub c_arnold: f64,
    pub c_closed: f64,
    pub norm_f_sq: f64,
    pub norm_g_sq: f64,
    /// `<f,f><g,g> - <f,g>^2`
    pub wedge_norm_sq: f64,
    /// `c_closed / wedge_norm_sq`, NaN for degenerate planes
    pub k: f64,
}

/// Pointwise ingredients shared by both routes.
struct Terms {
    n: usize,
    f: ScalarField,
    g: ScalarField,
    uf_g: Vec<f64>,
    ug_f: Vec<f64>,
    uf_f: Vec<f64>,
    ug_g: Vec<f64>,
    ef: Vec<f64>,
    eg: Vec<f64>,
}

fn check_resolved(f: &ScalarField) -> Result<()> {
    let tail = tail_energy_fraction(f, 0.5);
    if tail > RESOLUTION_TOL {
        return Err(CeaError::Resolution(format!(
            "input carries {tail:.3e} of its energy above half-Nyquist"
        )));
    }
    Ok(())
}

fn terms(model: &ContactModel, f: &ScalarField, g: &ScalarField) -> Result<Terms> {
    model.require_full("curvature")?;
    check_resolved(f)?;
    check_resolved(g)?;
    let jf = model.jet(f)?;
    let jg = model.jet(g)?;
    let uf = model.contact_vector_of(&jf)?;
    let ug = model.contact_vector_of(&jg)?;
    Ok(Terms {
        n: model.n(),
        uf_g: apply_components(&uf, &jg),
        ug_f: apply_components(&ug, &jf),
        uf_f: apply_components(&uf, &jf),
        ug_g: apply_components(&ug, &jg),
        ef: model.reeb_of(&jf),
        eg: model.reeb_of(&jg),
        f: f.clone(),
        g: g.clone(),
    })
}

impl Terms {
    fn field(&self, v: Vec<f64>) -> ScalarField {
        ScalarField::from_parts(self.f.grid().clone(), v)
    }

    fn arnold(&self) -> Result<f64> {
        let c = (self.n + 2) as f64;
        let (f, g) = (self.f.values(), self.g.values());
        let len = f.len();
        let mut bracket = vec![0.0; len];
        let mut b_xy = vec![0.0; len];
        let mut b_yx = vec![0.0; len];
        let mut b_xx = vec![0.0; len];
        let mut b_yy = vec![0.0; len];
        for i in 0..len {
            bracket[i] = self.uf_g[i] - g[i] * self.ef[i];
            // B(X, Y) = ad*_Y X
            b_xy[i] = self.ug_f[i] + c * f[i] * self.eg[i];
            b_yx[i] = self.uf_g[i] + c * g[i] * self.ef[i];
            b_xx[i] = self.uf_f[i] + c * f[i] * self.ef[i];
            b_yy[i] = self.ug_g[i] + c * g[i] * self.eg[i];
        }
        // ad_X Y = -S{f, g}
        let a = self.field(bracket.iter().map(|v| -0.5 * v).collect());
        let d = self.field(b_xy.iter().zip(&b_yx).map(|(p, q)| 0.5 * (p + q)).collect());
        let b = self.field(b_xy.iter().zip(&b_yx).map(|(p, q)| 0.5 * (p - q)).collect());
        let bx = self.field(b_xx.iter().map(|v| 0.5 * v).collect());
        let by = self.field(b_yy.iter().map(|v| 0.5 * v).collect());
        Ok(l2_inner(&d, &d)? + 2.0 * l2_inner(&a, &b)?
            - 3.0 * l2_inner(&a, &a)?
            - 4.0 * l2_inner(&bx, &by)?)
    }

    fn closed(&self) -> f64 {
        let c = (self.n + 3) as f64;
        let (f, g) = (self.f.values(), self.g.values());
        let w = self.f.grid().node_weights();
        let mut s = 0.0;
        for i in 0..f.len() {
            let bracket = self.uf_g[i] - g[i] * self.ef[i];
            let r = bracket - c * (f[i] * self.eg[i] - g[i] * self.ef[i]);
            s += w[i] * r * r;
        }
        0.25 * s
    }
}

/// Arnold's formula `<d,d> + 2<a,b> - 3<a,a> - 4<B_X,B_Y>` at stream-function level.
pub fn curvature_arnold(model: &ContactModel, f: &ScalarField, g: &ScalarField) -> Result<f64> {
    terms(model, f, g)?.arnold()
}

pub fn curvature_closed_form(
    model: &ContactModel,
    f: &ScalarField,
    g: &ScalarField,
) -> Result<f64> {
    Ok(terms(model, f, g)?.closed())
}

fn wedge_norm_sq(f: &ScalarField, g: &ScalarField) -> Result<(f64, f64, f64)> {
    let ff = l2_inner(f, f)?;
    let gg = l2_inner(g, g)?;
    let fg = l2_inner(f, g)?;
    Ok((ff, gg, ff * gg - fg * fg))
}

/// Sectional curvature `K = C / |X ^ Y|^2`.
pub fn sectional(model: &ContactModel, f: &ScalarField, g: &ScalarField) -> Result<f64> {
    let (ff, gg, wedge) = wedge_norm_sq(f, g)?;
    let threshold = DEGENERATE_PLANE * ff * gg;
    if wedge.is_nan() || wedge <= threshold {
        return Err(CeaError::DegeneratePlane { wedge, threshold });
    }
    Ok(curvature_closed_form(model, f, g)? / wedge)
}

pub fn curvature_sample(
    model: &ContactModel,
    seed_f: u64,
    seed_g: u64,
    max_freq: usize,
) -> Result<CurvatureSample> {
    let f = random_band_limited(seed_f, max_freq, model.grid())?;
    let g = random_band_limited(seed_g, max_freq, model.grid())?;
    let t = terms(model, &f, &g)?;
    let (ff, gg, wedge) = wedge_norm_sq(&f, &g)?;
    let c_closed = t.closed();
    Ok(CurvatureSample {
        model: model.name().to_string(),
        seed_f,
        seed_g,
        c_arnold: t.arnold()?,
        c_closed,
        norm_f_sq: ff,
        norm_g_sq: gg,
        wedge_norm_sq: wedge,
        k: if wedge > DEGENERATE_PLANE * ff * gg {
            c_closed / wedge
        } else {
            f64::NAN
        },
    })
}

/// `count` seeded band-limited pairs; flags nonnegativity and agreement of the two routes.
pub fn curvature_sweep(
    model: &ContactModel,
    count: usize,
    max_freq: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let samples = (0..count)
        .into_par_iter()
        .map(|k| {
            let k = k as u64;
            curvature_sample(
                model,
                split_seed(seed, 2 * k),
                split_seed(seed, 2 * k + 1),
                max_freq,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sweep_report(model, &samples))
}

pub fn sweep_report(model: &ContactModel, samples: &[CurvatureSample]) -> ExperimentReport {
    let mut r = ExperimentReport::new("curvature-sweep");
    r.note(format!("model {}", model.name()));
    r.columns(&[
        "seed_f",
        "seed_g",
        "c_arnold",
        "c_closed",
        "wedge_norm_sq",
        "k",
    ]);
    let mut closed: Vec<f64> = Vec::with_capacity(samples.len());
    let mut worst_rel: f64 = 0.0;
    let mut negative_closed = 0usize;
    let mut negative_arnold = 0usize;
    let mut below_sweep_scale = 0usize;
    let mut min_k = f64::INFINITY;
    for s in samples {
        let scale = s.norm_f_sq * s.norm_g_sq;
        worst_rel = worst_rel.max((s.c_arnold - s.c_closed).abs() / (s.c_closed.abs() + scale));
        negative_closed += usize::from(s.c_closed < -1e-12 * scale);
        negative_arnold += usize::from(s.c_arnold < -1e-8 * scale);
        below_sweep_scale += usize::from(s.c_closed < -1e-10 * scale);
        if s.k.is_finite() {
            min_k = min_k.min(s.k);
        }
        closed.push(s.c_closed);
        r.push_row(vec![
            s.seed_f.to_string(),
            s.seed_g.to_string(),
            s.c_arnold.to_string(),
            s.c_closed.to_string(),
            s.wedge_norm_sq.to_string(),
            s.k.to_string(),
        ]);
    }
    closed.sort_by(f64::total_cmp);
    r.metric("count", samples.len() as f64);
    if !closed.is_empty() {
        r.metric("c_closed_min", closed[0]);
        r.metric("c_closed_median", closed[closed.len() / 2]);
        r.metric("c_closed_max", closed[closed.len() - 1]);
        r.metric("route_discrepancy_max", worst_rel);
        if min_k.is_finite() {
            r.metric("k_min", min_k);
        }
    }
    r.metric("negative_samples", below_sweep_scale as f64);
    r.metric("negative_closed", negative_closed as f64);
    r.metric("negative_arnold", negative_arnold as f64);
    r.flag(
        "nonnegative",
        negative_closed == 0 && negative_arnold == 0 && below_sweep_scale == 0,
    );
    r.flag("route_equivalence", worst_rel <= 1e-8);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle() -> ContactModel {
        ContactModel::circle(64).unwrap()
    }

    fn trig(m: &ContactModel) -> (ScalarField, ScalarField) {
        (
            ScalarField::from_fn(m.grid(), |x| x[0].sin()),
            ScalarField::from_fn(m.grid(), |x| x[0].cos()),
        )
    }

    #[test]
    fn sin_cos_on_circle() {
        let m = circle();
        let (s, c) = trig(&m);
        assert!((curvature_arnold(&m, &s, &c).unwrap() - 2.0 * PI).abs() < 1e-10);
        assert!((curvature_closed_form(&m, &s, &c).unwrap() - 2.0 * PI).abs() < 1e-10);
        assert!((sectional(&m, &s, &c).unwrap() - 2.0 / PI).abs() < 1e-10);
    }

    #[test]
    fn self_plane_vanishes() {
        let m = circle();
        let f = random_band_limited(4, 5, m.grid()).unwrap();
        assert!(curvature_arnold(&m, &f, &f).unwrap().abs() < 1e-10);
        assert!(curvature_closed_form(&m, &f, &f).unwrap().abs() < 1e-12);
        assert!(curvature_closed_form(&m, &f, &f.scale(3.0)).unwrap().abs() < 1e-10);
        assert!(matches!(
            sectional(&m, &f, &f.scale(3.0)),
            Err(CeaError::DegeneratePlane { .. })
        ));
    }

    #[test]
    fn reeb_plane() {
        let m = circle();
        let one = ScalarField::constant(m.grid(), 1.0);
        let (s, _) = trig(&m);
        assert!((curvature_arnold(&m, &one, &s).unwrap() - PI).abs() < 1e-10);
        assert!((curvature_closed_form(&m, &one, &s).unwrap() - PI).abs() < 1e-10);
        assert!((sectional(&m, &one, &s).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-10);

        // torus: (n+2)^2/4 int E(g)^2
        let t = ContactModel::torus_k([16, 16, 16]).unwrap();
        let one = ScalarField::constant(t.grid(), 1.0);
        let g = random_band_limited(8, 3, t.grid()).unwrap();
        let eg = crate::contact::reeb_derivative(&t, &g).unwrap();
        let expected = 2.25 * l2_inner(&eg, &eg).unwrap();
        let got = curvature_arnold(&t, &one, &g).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn plane_invariance_and_symmetry() {
        let t = ContactModel::torus_k([16, 16, 16]).unwrap();
        let f = random_band_limited(1, 3, t.grid()).unwrap();
        let g = random_band_limited(2, 3, t.grid()).unwrap();
        let k1 = sectional(&t, &f, &g).unwrap();
        let k2 = sectional(&t, &f, &f.add(&g).unwrap()).unwrap();
        assert!((k1 - k2).abs() < 1e-8 * k1.abs());
        let a = curvature_arnold(&t, &f, &g).unwrap();
        let b = curvature_arnold(&t, &g, &f).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs());
        let c = curvature_closed_form(&t, &f, &g).unwrap();
        assert!((a - c).abs() < 1e-8 * c.abs());
    }

    #[test]
    fn sphere_routes_agree() {
        let s = ContactModel::sphere3_hopf([12, 16, 16]).unwrap();
        for k in 0..3 {
            let f = random_band_limited(10 + k, 3, s.grid()).unwrap();
            let g = random_band_limited(20 + k, 3, s.grid()).unwrap();
            let a = curvature_arnold(&s, &f, &g).unwrap();
            let c = curvature_closed_form(&s, &f, &g).unwrap();
            let scale = f.norm().powi(2) * g.norm().powi(2);
            assert!((a - c).abs() < 1e-8 * (c.abs() + scale));
            assert!(c >= 0.0);
        }
    }

    #[test]
    fn unresolved_input_rejected() {
        let m = circle();
        let f = ScalarField::from_fn(m.grid(), |x| (20.0 * x[0]).sin());
        let (s, _) = trig(&m);
        assert!(matches!(
            curvature_arnold(&m, &f, &s),
            Err(CeaError::Resolution(_))
        ));
    }

    #[test]
    fn darboux_has_no_curvature() {
        let b = ContactModel::darboux_box(1, &[8, 8, 16]).unwrap();
        let f = ScalarField::constant(b.grid(), 1.0);
        assert!(matches!(
            curvature_closed_form(&b, &f, &f),
            Err(CeaError::Capability { .. })
        ));
    }

    #[test]
    fn sweep_on_circle() {
        let m = circle();
        let r = curvature_sweep(&m, 20, 6, 1).unwrap();
        assert!(r.all_pass(), "{}", r.summary());
        assert_eq!(r.table.rows.len(), 20);
        let again = curvature_sweep(&m, 20, 6, 1).unwrap();
        assert_eq!(r, again);
        let empty = curvature_sweep(&m, 0, 6, 1).unwrap();
        assert!(empty.table.rows.is_empty() && empty.all_pass());
    }
}
