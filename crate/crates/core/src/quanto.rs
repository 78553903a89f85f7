//! Quantomorphisms (`E f = 0`) inside the contact algebra, and the Boothby–Wang
//! projection of the Hopf sphere onto its quotient `(eta, psi = xi1 - xi2)` with
//! area form `omega = sin 2 eta d eta ^ d psi`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::contact::{contact_bracket, contact_vector, reeb_derivative, ContactModel, ModelKind};
use crate::error::{CeaError, Result};
use crate::fields::{l2_inner, partial_derivative, AxisSpec, GridSpec, ScalarField};
use crate::report::ExperimentReport;

/// `E f` relative size below which `f` counts as a quantomorphism.
pub const SUBALGEBRA_TOL: f64 = 1e-10;

/// `|E f| / |f|`.
pub fn quantomorphism_defect(model: &ContactModel, f: &ScalarField) -> Result<f64> {
    let norm = f.norm();
    if norm == 0.0 {
        return Err(CeaError::InvalidArgument(
            "quantomorphism defect of the zero field".into(),
        ));
    }
    Ok(reeb_derivative(model, f)?.norm() / norm)
}

/// L2-orthogonal projection onto Reeb-invariant functions.
pub fn reeb_invariant_projection(model: &ContactModel, g: &ScalarField) -> Result<ScalarField> {
    model.check_grid(g)?;
    let grid = model.grid();
    let v = g.values();
    let values = match model.kind() {
        ModelKind::Circle => vec![g.mean(); grid.len()],
        ModelKind::TorusK => {
            let nz = grid.shape()[2];
            let mut sums = vec![0.0; nz];
            for (i, x) in v.iter().enumerate() {
                sums[i % nz] += x;
            }
            let per = (grid.len() / nz) as f64;
            (0..grid.len()).map(|i| sums[i % nz] / per).collect()
        }
        ModelKind::Sphere3Hopf => {
            let n = grid.shape()[1];
            let mut out = vec![0.0; grid.len()];
            for (i, o) in out.iter_mut().enumerate() {
                let (base, i1, i2) = (i - i % (n * n), (i / n) % n, i % n);
                let mut s = 0.0;
                for j in 0..n {
                    s += v[base + ((i1 + j) % n) * n + (i2 + j) % n];
                }
                *o = s / n as f64;
            }
            out
        }
        ModelKind::DarbouxBox => {
            return Err(CeaError::Capability {
                op: "reeb_invariant_projection",
                model: model.name().to_string(),
            })
        }
    };
    ScalarField::new(grid.clone(), values)
}

/// `|<ad*_f f, g - P g>| / (|f|^2 |g - P g|)` for a quantomorphism `f`.
pub fn totally_geodesic_defect(
    model: &ContactModel,
    f: &ScalarField,
    g: &ScalarField,
) -> Result<f64> {
    model.require_full("totally_geodesic_defect")?;
    let d = quantomorphism_defect(model, f)?;
    if d > SUBALGEBRA_TOL {
        return Err(CeaError::NotInSubalgebra(d));
    }
    let perp = g.sub(&reeb_invariant_projection(model, g)?)?;
    let pn = perp.norm();
    if pn == 0.0 {
        return Ok(0.0);
    }
    let ad = crate::contact::coadjoint(model, f, f)?;
    Ok(l2_inner(&ad, &perp)?.abs() / (f.norm().powi(2) * pn))
}

/// Function on the quotient `(eta, psi)` with the omega quadrature.
#[derive(Clone, Debug)]
pub struct QuotientField {
    pub field: ScalarField,
    /// omega-mean removed during projection
    pub removed_mean: f64,
}

impl QuotientField {
    pub fn grid(&self) -> &Arc<GridSpec> {
        self.field.grid()
    }

    /// `int h^2 omega`
    pub fn norm_sq(&self) -> f64 {
        self.field.norm().powi(2)
    }

    /// `X_H = (-H_psi / sin 2 eta, H_eta / sin 2 eta)`, so that `omega(., X_H) = dH`.
    pub fn hamiltonian_field(&self) -> Result<[Vec<f64>; 2]> {
        let h_eta = partial_derivative(&self.field, 0)?;
        let h_psi = partial_derivative(&self.field, 1)?;
        let grid = self.grid();
        let eta = grid.axes()[0].coords();
        let npsi = grid.shape()[1];
        let mut xe = vec![0.0; grid.len()];
        let mut xp = vec![0.0; grid.len()];
        for i in 0..grid.len() {
            let s = (2.0 * eta[i / npsi]).sin();
            xe[i] = -h_psi.values()[i] / s;
            xp[i] = h_eta.values()[i] / s;
        }
        Ok([xe, xp])
    }
}

fn require_hopf(model: &ContactModel, op: &'static str) -> Result<()> {
    if model.kind() != ModelKind::Sphere3Hopf {
        return Err(CeaError::Capability {
            op,
            model: model.name().to_string(),
        });
    }
    Ok(())
}

/// `(eta, psi)` grid sharing the sphere's eta nodes and the xi nodes for psi.
pub fn quotient_grid(model: &ContactModel) -> Result<Arc<GridSpec>> {
    require_hopf(model, "quotient_grid")?;
    let shape = model.grid().shape();
    GridSpec::new(vec![
        AxisSpec::hopf_polar("eta", shape[0], [1, 1]),
        AxisSpec::periodic("psi", shape[1], 2.0 * PI),
    ])
}

fn check_invariant(model: &ContactModel, f: &ScalarField) -> Result<()> {
    if f.norm() == 0.0 {
        return Ok(());
    }
    let d = quantomorphism_defect(model, f)?;
    if d > SUBALGEBRA_TOL {
        return Err(CeaError::NotInSubalgebra(d));
    }
    Ok(())
}

/// `h(eta, psi) = f(eta, psi, 0)` minus its omega-mean.
pub fn boothby_wang_project(model: &ContactModel, f: &ScalarField) -> Result<QuotientField> {
    require_hopf(model, "boothby_wang_project")?;
    model.check_grid(f)?;
    check_invariant(model, f)?;
    let q = quotient_grid(model)?;
    let (ne, n) = (q.shape()[0], q.shape()[1]);
    let mut values = Vec::with_capacity(ne * n);
    for ie in 0..ne {
        for j in 0..n {
            values.push(f.values()[(ie * n + j) * n]);
        }
    }
    let h = ScalarField::new(q, values)?;
    let mean = h.mean();
    Ok(QuotientField {
        field: h.map(|v| v - mean),
        removed_mean: mean,
    })
}

/// Quotient metric `2 (v^eta)^2 + sin^2(2 eta) (v^psi)^2 / 2` (pushforward of the
/// associated metric on the contact plane).
fn quotient_norm_sq(eta: f64, v: [f64; 2]) -> f64 {
    2.0 * v[0] * v[0] + 0.5 * (2.0 * eta).sin().powi(2) * v[1] * v[1]
}

/// `max |d pi(S f) - X_H| / max |X_H|` in the quotient metric over every sphere node.
/// Zero when `X_H` vanishes identically and `d pi(S f)` does too.
pub fn hamiltonian_field_defect(model: &ContactModel, f: &ScalarField) -> Result<(f64, f64)> {
    let q = boothby_wang_project(model, f)?;
    let [xe, xp] = q.hamiltonian_field()?;
    let u = contact_vector(model, f)?;
    let grid = model.grid();
    let (ne, n) = (grid.shape()[0], grid.shape()[1]);
    let eta = grid.axes()[0].coords();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for ie in 0..ne {
        for i1 in 0..n {
            let qi = ie * n + i1;
            scale = scale.max(quotient_norm_sq(eta[ie], [xe[qi], xp[qi]]).sqrt());
        }
    }
    for i in 0..grid.len() {
        let (ie, i1, i2) = (i / (n * n), (i / n) % n, i % n);
        let qi = ie * n + (i1 + n - i2) % n;
        let push = [
            u.components()[0][i],
            u.components()[1][i] - u.components()[2][i],
        ];
        let x = [xe[qi], xp[qi]];
        let diff = [push[0] - x[0], push[1] - x[1]];
        worst = worst.max(quotient_norm_sq(eta[ie], diff).sqrt());
        let w = grid.node_weights()[i];
        num += w * (2.0 * push[0] * x[0] + 0.5 * (2.0 * eta[ie]).sin().powi(2) * push[1] * x[1]);
        den += w * quotient_norm_sq(eta[ie], x);
    }
    let fitted_scale = if den > 0.0 { num / den } else { f64::NAN };
    Ok((
        if scale > 0.0 { worst / scale } else { worst },
        fitted_scale,
    ))
}

/// `max |project({f1, f2}) - {H1, H2}_omega| / max |{H1, H2}_omega|` with
/// `{H1, H2}_omega = X_{H1}(H2)`.
pub fn bracket_compatibility_defect(
    model: &ContactModel,
    f1: &ScalarField,
    f2: &ScalarField,
) -> Result<f64> {
    let q1 = boothby_wang_project(model, f1)?;
    let q2 = boothby_wang_project(model, f2)?;
    let b = contact_bracket(model, f1, f2)?;
    let qb = boothby_wang_project(model, &b)?;
    let [xe, xp] = q1.hamiltonian_field()?;
    let h2e = partial_derivative(&q2.field, 0)?;
    let h2p = partial_derivative(&q2.field, 1)?;
    let pb: Vec<f64> = (0..xe.len())
        .map(|i| xe[i] * h2e.values()[i] + xp[i] * h2p.values()[i])
        .collect();
    let pb = ScalarField::new(q1.grid().clone(), pb)?;
    let mean = pb.mean();
    let pb = pb.map(|v| v - mean);
    let scale = pb.max_abs().max(qb.field.max_abs());
    let d = qb.field.sub(&pb)?.max_abs();
    Ok(if scale > 0.0 { d / scale } else { d })
}

#[derive(Clone, Debug, Serialize)]
pub struct SubmersionEntry {
    pub index: usize,
    pub hamiltonian_defect: f64,
    pub fitted_scale: f64,
    pub norm_m_sq: f64,
    pub norm_n_sq: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubmersionReport {
    pub entries: Vec<SubmersionEntry>,
    /// mean of the norm ratios
    pub fitted_constant: f64,
    /// `(max - min) / mean` of the norm ratios
    pub ratio_spread: f64,
    /// Reeb fiber period on the unit sphere
    pub expected_constant: f64,
}

impl SubmersionReport {
    pub fn max_defect(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.hamiltonian_defect)
            .fold(0.0, f64::max)
    }

    pub fn to_experiment(&self) -> ExperimentReport {
        let mut r = ExperimentReport::new("submersion-check");
        r.columns(&[
            "index",
            "hamiltonian_defect",
            "fitted_scale",
            "norm_m_sq",
            "norm_n_sq",
            "ratio",
        ]);
        for e in &self.entries {
            r.push_row(vec![
                e.index.to_string(),
                e.hamiltonian_defect.to_string(),
                e.fitted_scale.to_string(),
                e.norm_m_sq.to_string(),
                e.norm_n_sq.to_string(),
                e.ratio.to_string(),
            ]);
        }
        r.metric("fields", self.entries.len() as f64);
        if self.entries.is_empty() {
            return r;
        }
        r.metric("hamiltonian_defect_max", self.max_defect());
        r.metric("fitted_constant", self.fitted_constant);
        r.metric("ratio_spread", self.ratio_spread);
        r.metric("expected_constant", self.expected_constant);
        r.flag("hamiltonian_fields", self.max_defect() <= 1e-8);
        r.flag("ratio_constant", self.ratio_spread <= 1e-6);
        r.flag(
            "fiber_constant",
            ((self.fitted_constant - self.expected_constant) / self.expected_constant).abs()
                <= 1e-6,
        );
        r
    }
}

/// Norm ratios `<f,f>_M / <h,h>_N` and Hamiltonian-field defects for Hopf-invariant,
/// mean-zero test fields.
pub fn submersion_isometry_check(
    model: &ContactModel,
    test_fields: &[ScalarField],
) -> Result<SubmersionReport> {
    require_hopf(model, "submersion_isometry_check")?;
    let mut entries = Vec::with_capacity(test_fields.len());
    for (index, f) in test_fields.iter().enumerate() {
        model.check_grid(f)?;
        if f.mean().abs() > 1e-10 * f.max_abs().max(1e-300) || f.max_abs() == 0.0 {
            return Err(CeaError::InvalidArgument(format!(
                "test field {index} is not a nonzero mean-zero Hamiltonian"
            )));
        }
        let q = boothby_wang_project(model, f)?;
        let (hamiltonian_defect, fitted_scale) = hamiltonian_field_defect(model, f)?;
        let norm_m_sq = f.norm().powi(2);
        let norm_n_sq = q.norm_sq();
        entries.push(SubmersionEntry {
            index,
            hamiltonian_defect,
            fitted_scale,
            norm_m_sq,
            norm_n_sq,
            ratio: norm_m_sq / norm_n_sq,
        });
    }
    let (fitted_constant, ratio_spread) = if entries.is_empty() {
        (f64::NAN, 0.0)
    } else {
        let mean = entries.iter().map(|e| e.ratio).sum::<f64>() / entries.len() as f64;
        let hi = entries
            .iter()
            .map(|e| e.ratio)
            .fold(f64::NEG_INFINITY, f64::max);
        let lo = entries
            .iter()
            .map(|e| e.ratio)
            .fold(f64::INFINITY, f64::min);
        (mean, (hi - lo) / mean)
    };
    Ok(SubmersionReport {
        entries,
        fitted_constant,
        ratio_spread,
        expected_constant: 2.0 * PI,
    })
}

/// Seeded Hopf-invariant, mean-zero field: projection of a random field.
pub fn random_invariant(model: &ContactModel, seed: u64, max_freq: usize) -> Result<ScalarField> {
    let g = crate::fields::random_band_limited(seed, max_freq, model.grid())?;
    let p = reeb_invariant_projection(model, &g)?;
    let mean = p.mean();
    Ok(p.map(|v| v - mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random_band_limited;

    fn sphere() -> ContactModel {
        ContactModel::sphere3_hopf([12, 16, 16]).unwrap()
    }

    fn torus() -> ContactModel {
        ContactModel::torus_k([16, 16, 16]).unwrap()
    }

    #[test]
    fn quantomorphism_examples() {
        let c = ContactModel::circle(32).unwrap();
        assert_eq!(
            quantomorphism_defect(&c, &ScalarField::constant(c.grid(), 2.0)).unwrap(),
            0.0
        );
        let t = torus();
        let f = ScalarField::from_fn(t.grid(), |x| x[2].sin() + (2.0 * x[2]).cos());
        assert!(quantomorphism_defect(&t, &f).unwrap() < 1e-14);
        let s = sphere();
        let f = ScalarField::from_fn(s.grid(), |x| {
            (2.0 * x[0]).cos() + x[0].sin().powi(2) * (x[1] - x[2]).sin()
        });
        assert!(quantomorphism_defect(&s, &f).unwrap() < 1e-12);
        assert!(quantomorphism_defect(&s, &ScalarField::zeros(s.grid())).is_err());
    }

    #[test]
    fn projection_properties() {
        for m in [ContactModel::circle(32).unwrap(), torus(), sphere()] {
            let g = random_band_limited(1, 3, m.grid()).unwrap();
            let p = reeb_invariant_projection(&m, &g).unwrap();
            let pp = reeb_invariant_projection(&m, &p).unwrap();
            assert!(pp.sub(&p).unwrap().max_abs() < 1e-13);
            assert!(reeb_derivative(&m, &p).unwrap().max_abs() < 1e-10);
            let h = random_band_limited(2, 3, m.grid()).unwrap();
            let ph = reeb_invariant_projection(&m, &h).unwrap();
            let a = l2_inner(&p, &h).unwrap();
            let b = l2_inner(&g, &ph).unwrap();
            assert!((a - b).abs() < 1e-10 * (a.abs() + 1.0));
            let eg = reeb_derivative(&m, &g).unwrap();
            assert!(reeb_invariant_projection(&m, &eg).unwrap().max_abs() < 1e-10 * eg.max_abs());
        }
        let t = torus();
        let s = ScalarField::from_fn(t.grid(), |x| x[0].sin());
        assert!(reeb_invariant_projection(&t, &s).unwrap().max_abs() < 1e-15);
        let b = ContactModel::darboux_box(1, &[8, 8, 8]).unwrap();
        assert!(reeb_invariant_projection(&b, &ScalarField::zeros(b.grid())).is_err());
    }

    #[test]
    fn totally_geodesic_examples() {
        let c = ContactModel::circle(32).unwrap();
        let g = random_band_limited(4, 3, c.grid()).unwrap();
        assert_eq!(
            totally_geodesic_defect(&c, &ScalarField::constant(c.grid(), 1.3), &g).unwrap(),
            0.0
        );
        for m in [torus(), sphere()] {
            let f = random_invariant(&m, 5, 3).unwrap();
            let g = random_band_limited(6, 3, m.grid()).unwrap();
            assert!(totally_geodesic_defect(&m, &f, &g).unwrap() < 1e-8);
            assert!(matches!(
                totally_geodesic_defect(&m, &g, &f),
                Err(CeaError::NotInSubalgebra(_))
            ));
        }
    }

    #[test]
    fn subalgebra_is_closed() {
        for m in [torus(), sphere()] {
            let f1 = random_invariant(&m, 7, 3).unwrap();
            let f2 = random_invariant(&m, 8, 3).unwrap();
            let b = contact_bracket(&m, &f1, &f2).unwrap();
            let e = reeb_derivative(&m, &b).unwrap();
            assert!(e.max_abs() < 1e-8 * b.max_abs().max(1.0), "{}", m.name());
        }
    }

    #[test]
    fn projection_examples() {
        let s = sphere();
        let q = boothby_wang_project(&s, &ScalarField::constant(s.grid(), 3.0)).unwrap();
        assert!(q.field.max_abs() < 1e-13);
        let f = ScalarField::from_fn(s.grid(), |x| (2.0 * x[0]).cos());
        let (defect, scale) = hamiltonian_field_defect(&s, &f).unwrap();
        assert!(
            defect < 1e-8 && (scale - 1.0).abs() < 1e-8,
            "{defect} {scale}"
        );
        let u = contact_vector(&s, &f).unwrap();
        assert!(u.component(0).unwrap().max_abs() < 1e-12);
        let f1 = random_invariant(&s, 1, 3).unwrap();
        let f2 = random_invariant(&s, 2, 3).unwrap();
        let lhs = boothby_wang_project(&s, &f1.add(&f2).unwrap()).unwrap();
        let a = boothby_wang_project(&s, &f1).unwrap();
        let b = boothby_wang_project(&s, &f2).unwrap();
        assert!(
            lhs.field
                .sub(&a.field.add(&b.field).unwrap())
                .unwrap()
                .max_abs()
                < 1e-13
        );
        let g = random_band_limited(3, 3, s.grid()).unwrap();
        assert!(matches!(
            boothby_wang_project(&s, &g),
            Err(CeaError::NotInSubalgebra(_))
        ));
        assert!(boothby_wang_project(&torus(), &ScalarField::zeros(torus().grid())).is_err());
    }

    #[test]
    fn bracket_compatibility() {
        let s = sphere();
        let f1 = random_invariant(&s, 11, 3).unwrap();
        let f2 = random_invariant(&s, 12, 3).unwrap();
        assert!(bracket_compatibility_defect(&s, &f1, &f2).unwrap() < 1e-6);
    }

    #[test]
    fn submersion_constant_is_two_pi() {
        let s = sphere();
        let mut fields = vec![ScalarField::from_fn(s.grid(), |x| (2.0 * x[0]).cos())];
        for k in 0..4 {
            fields.push(random_invariant(&s, 20 + k, 3).unwrap());
        }
        let rep = submersion_isometry_check(&s, &fields).unwrap();
        assert!(rep.ratio_spread < 1e-10);
        assert!((rep.fitted_constant - 2.0 * PI).abs() < 1e-10);
        assert!(rep.max_defect() < 1e-8);
        assert!(rep.to_experiment().all_pass());
        assert!(submersion_isometry_check(&s, &[ScalarField::constant(s.grid(), 1.0)]).is_err());
        assert!(submersion_isometry_check(&s, &[])
            .unwrap()
            .entries
            .is_empty());
    }
}
