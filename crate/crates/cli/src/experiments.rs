//! The experiment catalog and the drivers behind each entry.

use std::path::Path;

use cea_core::contact::{
    coadjoint, contact_bracket, contact_form_defect, divergence_defect, structure_defects,
    ContactModel, ModelKind,
};
use cea_core::curvature::curvature_sweep;
use cea_core::fields::{l2_inner, random_band_limited, ScalarField};
use cea_core::geodesics::{
    blowup_time, flow_map_reconstruct, implicit_solution_field, integrate_geodesic_with,
    GeodesicOptions,
};
use cea_core::jacobi::{c1_failure_report_with, jacobi_solve, kernel_direction};
use cea_core::quanto::{
    bracket_compatibility_defect, random_invariant, submersion_isometry_check,
    totally_geodesic_defect,
};
use cea_core::report::{split_seed, ExperimentReport};
use cea_core::{CeaError, Result};

use crate::config::ExperimentConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    BracketCheck,
    CurvatureSweep,
    GeodesicSolve,
    CharacteristicsCompare,
    JacobiDemo,
    ExpDerivative,
    QuantoCheck,
    SubmersionCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::BracketCheck,
        Experiment::CurvatureSweep,
        Experiment::GeodesicSolve,
        Experiment::CharacteristicsCompare,
        Experiment::JacobiDemo,
        Experiment::ExpDerivative,
        Experiment::QuantoCheck,
        Experiment::SubmersionCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::BracketCheck => "bracket-check",
            Experiment::CurvatureSweep => "curvature-sweep",
            Experiment::GeodesicSolve => "geodesic-solve",
            Experiment::CharacteristicsCompare => "characteristics-compare",
            Experiment::JacobiDemo => "jacobi-demo",
            Experiment::ExpDerivative => "exp-derivative",
            Experiment::QuantoCheck => "quanto-check",
            Experiment::SubmersionCheck => "submersion-check",
        }
    }

    fn restriction(self) -> Option<&'static str> {
        match self {
            Experiment::BracketCheck | Experiment::CurvatureSweep | Experiment::QuantoCheck => {
                Some("full-structure models")
            }
            Experiment::CharacteristicsCompare => Some("circle, darboux_box"),
            Experiment::SubmersionCheck => Some("sphere3_hopf only"),
            _ => None,
        }
    }

    fn description(self) -> &'static str {
        match self {
            Experiment::BracketCheck => {
                "contact bracket identities and structure defects on seeded fields"
            }
            Experiment::CurvatureSweep => "sectional curvature of seeded pairs by both routes",
            Experiment::GeodesicSolve => "integrate the geodesic equation and export frames",
            Experiment::CharacteristicsCompare => {
                "solver against the implicit solution along characteristics"
            }
            Experiment::JacobiDemo => "Jacobi fields along Reeb geodesics that vanish at t = 1",
            Experiment::ExpDerivative => "finite-difference derivative of exp at conjugate points",
            Experiment::QuantoCheck => "quantomorphism subgroup is totally geodesic",
            Experiment::SubmersionCheck => "Boothby-Wang projection is a Riemannian submersion",
        }
    }

    fn params(self) -> &'static str {
        match self {
            Experiment::BracketCheck => "model, seed, count, max_freq",
            Experiment::CurvatureSweep => "model, seed, count, max_freq",
            Experiment::GeodesicSolve => {
                "model, seed, max_freq, t_end | t_fraction, dt, scheme, record_every"
            }
            Experiment::CharacteristicsCompare => {
                "model, seed, count, max_freq, t_fraction, dt, scheme"
            }
            Experiment::JacobiDemo => "model, m_list",
            Experiment::ExpDerivative => "model, m_list, epsilons, threshold, dt",
            Experiment::QuantoCheck => "model, seed, count, max_freq",
            Experiment::SubmersionCheck => "model, seed, count, max_freq",
        }
    }
}

/// The catalog printed by `cea list`.
pub fn catalog() -> String {
    let mut s = String::new();
    for e in Experiment::ALL {
        let title = match e.restriction() {
            Some(r) => format!("{} ({r})", e.name()),
            None => e.name().to_string(),
        };
        s += &format!(
            "{title}\n    {}\n    params: {}\n",
            e.description(),
            e.params()
        );
    }
    s
}

/// Runs one experiment. Frames, when produced, go below `out`.
pub fn run(exp: Experiment, cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    let model = ContactModel::from_config(&cfg.model)?;
    match exp {
        Experiment::BracketCheck => bracket_check(&model, cfg),
        Experiment::CurvatureSweep => {
            let mut r = curvature_sweep(&model, cfg.count, cfg.max_freq, cfg.seed)?;
            r.experiment = exp.name().into();
            Ok(r)
        }
        Experiment::GeodesicSolve => geodesic_solve(&model, cfg, out),
        Experiment::CharacteristicsCompare => characteristics_compare(&model, cfg),
        Experiment::JacobiDemo => jacobi_demo(&model, cfg),
        Experiment::ExpDerivative => {
            c1_failure_report_with(&model, &cfg.m_list, &cfg.epsilons, cfg.threshold, cfg.dt)
        }
        Experiment::QuantoCheck => quanto_check(&model, cfg),
        Experiment::SubmersionCheck => submersion_check(&model, cfg),
    }
}

fn unit_field(model: &ContactModel, seed: u64, max_freq: usize) -> Result<ScalarField> {
    let f = random_band_limited(seed, max_freq, model.grid())?;
    Ok(f.scale(1.0 / f.max_abs()))
}

fn rel(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn bracket_check(model: &ContactModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("bracket-check");
    let d = structure_defects(model, cfg.seed)?;
    r.metric("structure_defect_max", d.max());
    r.flag("structure", d.max() <= 1e-10);
    r.columns(&[
        "sample",
        "antisymmetry",
        "jacobi_identity",
        "coadjoint_duality",
        "divergence",
        "contact_form",
    ]);

    let mut worst = [0.0f64; 5];
    for k in 0..cfg.count as u64 {
        let [f, g, h] = [0, 1, 2].map(|j| {
            random_band_limited(split_seed(cfg.seed, 3 * k + j), cfg.max_freq, model.grid())
        });
        let (f, g, h) = (f?, g?, h?);
        let fg = contact_bracket(model, &f, &g)?;
        let gf = contact_bracket(model, &g, &f)?;
        let anti = rel(fg.add(&gf)?.norm(), fg.norm());

        let terms = [
            contact_bracket(model, &f, &contact_bracket(model, &g, &h)?)?,
            contact_bracket(model, &g, &contact_bracket(model, &h, &f)?)?,
            contact_bracket(model, &h, &fg)?,
        ];
        let scale = terms.iter().map(ScalarField::norm).fold(0.0, f64::max);
        let jac = rel(terms[0].add(&terms[1])?.add(&terms[2])?.norm(), scale);

        // <coadjoint(f, g), h> against <g, {f, h}>
        let lhs = l2_inner(&coadjoint(model, &f, &g)?, &h)?;
        let rhs = l2_inner(&g, &contact_bracket(model, &f, &h)?)?;
        let dual = rel((lhs + rhs).abs(), lhs.abs().max(rhs.abs()));

        let div = divergence_defect(model, &f)?;
        let weak = contact_form_defect(model, &f, split_seed(cfg.seed, 3 * k))?;
        let row = [anti, jac, dual, div, weak];
        for (w, v) in worst.iter_mut().zip(row) {
            *w = w.max(v);
        }
        let mut cells = vec![k.to_string()];
        cells.extend(row.iter().map(|v| format!("{v:.6e}")));
        r.push_row(cells);
    }
    for (name, v) in [
        "antisymmetry",
        "jacobi_identity",
        "coadjoint_duality",
        "divergence",
        "contact_form",
    ]
    .iter()
    .zip(worst)
    {
        r.metric(&format!("{name}_max"), v);
        r.flag(name, v <= 1e-8);
    }
    Ok(r)
}

fn end_time(model: &ContactModel, f0: &ScalarField, cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.t_end {
        Some(t) => Ok(t),
        None => Ok(cfg.t_fraction * blowup_time(model, f0)?),
    }
}

fn geodesic_solve(
    model: &ContactModel,
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("geodesic-solve");
    let f0 = unit_field(model, split_seed(cfg.seed, 0), cfg.max_freq)?;
    let t_star = blowup_time(model, &f0)?;
    let t_end = end_time(model, &f0, cfg)?;
    let opts = GeodesicOptions {
        scheme: cfg.scheme,
        record_every: cfg.record_every,
        detect_blowup: true,
    };
    let tr = integrate_geodesic_with(model, &f0, t_end, cfg.dt, &opts)?;
    tr.export(out.join("frames"))?;

    r.columns(&["time", "int_f", "int_f2", "int_f3"]);
    for (t, inv) in tr.times.iter().zip(&tr.invariants) {
        r.push_row(vec![
            format!("{t:.9e}"),
            format!("{:.15e}", inv[0]),
            format!("{:.15e}", inv[1]),
            format!("{:.15e}", inv[2]),
        ]);
    }
    let drift = tr.invariant_drift();
    for (k, d) in drift.iter().enumerate() {
        r.metric(&format!("drift_int_f{}", k + 1), *d);
    }
    r.metric("blowup_time_predicted", t_star);
    r.metric("t_end", t_end);
    r.metric("final_time", tr.final_time());
    r.metric("frames", tr.times.len() as f64);
    match &tr.blowup {
        Some(b) => {
            r.metric("blowup_detected_at", b.detected_at);
            r.metric("blowup_estimated", b.estimated_time);
            r.note(format!("blowup: {}", b.reason));
        }
        None => r.flag("invariants_conserved", drift.iter().all(|d| *d <= 1e-8)),
    }
    Ok(r)
}

fn characteristics_compare(
    model: &ContactModel,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    if !matches!(model.kind(), ModelKind::Circle | ModelKind::DarbouxBox) {
        return Err(CeaError::Capability {
            op: "implicit_solution_evaluate",
            model: model.name().to_string(),
        });
    }
    let mut r = ExperimentReport::new("characteristics-compare");
    r.columns(&["sample", "t", "l2_gap", "transport_defect"]);
    let opts = GeodesicOptions {
        scheme: cfg.scheme,
        record_every: cfg.record_every,
        detect_blowup: true,
    };
    let flow_map = model.kind() == ModelKind::Circle;
    let mut worst_gap: f64 = 0.0;
    let mut worst_transport: f64 = 0.0;
    for k in 0..cfg.count as u64 {
        let f0 = unit_field(model, split_seed(cfg.seed, k), cfg.max_freq)?;
        let t = end_time(model, &f0, cfg)?;
        let tr = integrate_geodesic_with(model, &f0, t, cfg.dt * t.min(1.0), &opts)?;
        let exact = implicit_solution_field(model, &f0, t)?;
        let gap = tr.final_state().sub(&exact)?.norm();
        worst_gap = worst_gap.max(gap);
        let transport = if flow_map {
            let v = flow_map_reconstruct(model, &tr)?.transport_defect(&tr)?;
            worst_transport = worst_transport.max(v);
            format!("{v:.6e}")
        } else {
            String::new()
        };
        r.push_row(vec![
            k.to_string(),
            format!("{t:.9e}"),
            format!("{gap:.6e}"),
            transport,
        ]);
    }
    r.metric("l2_gap_max", worst_gap);
    r.flag("characteristics_agree", worst_gap <= 1e-6);
    if flow_map {
        r.metric("transport_defect_max", worst_transport);
        r.flag("transport", worst_transport <= 1e-6);
    }
    Ok(r)
}

fn jacobi_demo(model: &ContactModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("jacobi-demo");
    r.columns(&[
        "m",
        "c_m",
        "norm_g_half",
        "norm_g_end",
        "residual_half",
        "initial_velocity_defect",
    ]);
    let mut end_ok = true;
    let mut ode_ok = true;
    for &m in &cfg.m_list {
        let (c, w) = kernel_direction(model, m)?;
        let s = jacobi_solve(model, c, &w, 1.0)?;
        let half = s.at(0.5)?.norm();
        let end = s.at(1.0)?.norm();
        let res = s.residual(0.5)?;
        let vel = s.initial_velocity_defect()?;
        end_ok &= end <= 1e-10 * half.max(1.0);
        ode_ok &= res <= 1e-6 && vel <= 1e-6;
        r.metric(&format!("c_m.{m}"), c);
        r.push_row(vec![
            m.to_string(),
            format!("{c:.12e}"),
            format!("{half:.6e}"),
            format!("{end:.6e}"),
            format!("{res:.6e}"),
            format!("{vel:.6e}"),
        ]);
    }
    if !cfg.m_list.is_empty() {
        r.flag("vanishes_at_one", end_ok);
        r.flag("solves_jacobi_equation", ode_ok);
    }
    Ok(r)
}

fn quanto_check(model: &ContactModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("quanto-check");
    let hopf = model.kind() == ModelKind::Sphere3Hopf;
    r.columns(&[
        "sample",
        "totally_geodesic_defect",
        "bracket_compatibility_defect",
    ]);
    let mut worst_tg: f64 = 0.0;
    let mut worst_bc: f64 = 0.0;
    for k in 0..cfg.count as u64 {
        let f = random_invariant(model, split_seed(cfg.seed, 2 * k), cfg.max_freq)?;
        let f = if f.norm() < 1e-12 {
            ScalarField::constant(model.grid(), 1.0 + k as f64 / cfg.count as f64)
        } else {
            f
        };
        let g = random_band_limited(split_seed(cfg.seed, 2 * k + 1), cfg.max_freq, model.grid())?;
        let tg = totally_geodesic_defect(model, &f, &g)?;
        worst_tg = worst_tg.max(tg);
        let bc = if hopf {
            let h = random_invariant(model, split_seed(cfg.seed, 2 * k + 1), cfg.max_freq)?;
            let v = bracket_compatibility_defect(model, &f, &h)?;
            worst_bc = worst_bc.max(v);
            format!("{v:.6e}")
        } else {
            String::new()
        };
        r.push_row(vec![k.to_string(), format!("{tg:.6e}"), bc]);
    }
    r.metric("totally_geodesic_defect_max", worst_tg);
    r.flag("totally_geodesic", worst_tg <= 1e-8);
    if hopf {
        r.metric("bracket_compatibility_defect_max", worst_bc);
        r.flag("bracket_compatible", worst_bc <= 1e-8);
    }
    Ok(r)
}

fn submersion_check(model: &ContactModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut fields = Vec::with_capacity(cfg.count);
    if model.kind() == ModelKind::Sphere3Hopf && cfg.count > 0 {
        fields.push(ScalarField::from_fn(model.grid(), |x| (2.0 * x[0]).cos()));
        for k in 1..cfg.count as u64 {
            fields.push(random_invariant(
                model,
                split_seed(cfg.seed, k),
                cfg.max_freq,
            )?);
        }
    }
    Ok(submersion_isometry_check(model, &fields)?.to_experiment())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_eight_entries() {
        let c = catalog();
        let titles = c.lines().filter(|l| !l.starts_with(' ')).count();
        assert_eq!(titles, 8);
        assert!(c.contains("submersion-check (sphere3_hopf only)"));
    }
}
