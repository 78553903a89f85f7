//! Model contact manifolds and the Lie-algebra operators on stream functions.
//!
//! A contact vector field is represented by its stream function `f = theta(u)`;
//! the field itself is `S f = f E - phi(grad f)` for the associated metric.
//! All operators work on the model grid and integrate against `theta ^ (d theta)^n`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CeaError, Result};
use crate::fields::{
    check_same_grid, integrate, l2_inner, partial_derivative, random_band_limited, AxisSpec,
    GridSpec, ScalarField, VectorField,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "circle")]
    Circle,
    #[serde(rename = "torus_k")]
    TorusK,
    #[serde(rename = "sphere3_hopf")]
    Sphere3Hopf,
    #[serde(rename = "darboux_box")]
    DarbouxBox,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Circle => "circle",
            ModelKind::TorusK => "torus_k",
            ModelKind::Sphere3Hopf => "sphere3_hopf",
            ModelKind::DarbouxBox => "darboux_box",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// JSON model description: `{"model": name, "nodes": [..], "n": int}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model: ModelKind,
    pub nodes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    /// `phi`, the metric and `S` are available.
    pub has_full_structure: bool,
    /// Reeb orbits are circles of one common period.
    pub is_regular: bool,
}

/// Per-node square matrices, row-major.
#[derive(Clone, Debug)]
pub struct TensorField {
    dim: usize,
    data: Vec<f64>,
}

impl TensorField {
    fn from_fn(grid: &GridSpec, dim: usize, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut data = vec![0.0; grid.len() * dim * dim];
        let mut x = vec![0.0; grid.dims()];
        for i in 0..grid.len() {
            grid.coords_of(i, &mut x);
            f(&x, &mut data[i * dim * dim..(i + 1) * dim * dim]);
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Matrix at node `i`.
    pub fn at(&self, i: usize) -> &[f64] {
        let d2 = self.dim * self.dim;
        &self.data[i * d2..(i + 1) * d2]
    }

    /// `out = M_i v`
    pub fn matvec(&self, i: usize, v: &[f64], out: &mut [f64]) {
        let m = self.at(i);
        for (r, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = (0..self.dim).map(|c| m[r * self.dim + c] * v[c]).sum();
        }
    }

    /// `u^T M_i v`
    pub fn bilinear(&self, i: usize, u: &[f64], v: &[f64]) -> f64 {
        let m = self.at(i);
        let d = self.dim;
        let mut s = 0.0;
        for r in 0..d {
            for c in 0..d {
                s += u[r] * m[r * d + c] * v[c];
            }
        }
        s
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Structure {
    /// covector components of theta
    theta: Vec<Vec<f64>>,
    /// d theta as an antisymmetric matrix
    dtheta: TensorField,
    metric: TensorField,
    metric_inv: TensorField,
    phi: TensorField,
}

/// A model contact manifold on a structured grid.
#[derive(Clone, Debug)]
pub struct ContactModel {
    kind: ModelKind,
    n: usize,
    grid: Arc<GridSpec>,
    reeb: VectorField,
    structure: Option<Structure>,
    capabilities: Capabilities,
    /// Axis along which `E` is the coordinate field, with its period.
    reeb_axis: Option<(usize, f64)>,
}

fn broadcast(nodes: &[usize], dims: usize, model: ModelKind) -> Result<Vec<usize>> {
    match nodes.len() {
        1 => Ok(vec![nodes[0]; dims]),
        l if l == dims => Ok(nodes.to_vec()),
        l => Err(CeaError::InvalidArgument(format!(
            "{model} expects {dims} node counts (or one to broadcast), got {l}"
        ))),
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl ContactModel {
    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        if cfg.n.is_some() && cfg.model != ModelKind::DarbouxBox {
            return Err(CeaError::InvalidArgument(format!(
                "`n` is only configurable on darboux_box, not {}",
                cfg.model
            )));
        }
        match cfg.model {
            ModelKind::Circle => Self::circle(broadcast(&cfg.nodes, 1, cfg.model)?[0]),
            ModelKind::TorusK => {
                let v = broadcast(&cfg.nodes, 3, cfg.model)?;
                Self::torus_k([v[0], v[1], v[2]])
            }
            ModelKind::Sphere3Hopf => {
                let v = broadcast(&cfg.nodes, 3, cfg.model)?;
                Self::sphere3_hopf([v[0], v[1], v[2]])
            }
            ModelKind::DarbouxBox => {
                let n = cfg.n.unwrap_or(1);
                let v = broadcast(&cfg.nodes, 2 * n + 1, cfg.model)?;
                Self::darboux_box(n, &v)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_config(&serde_json::from_str(text)?)
    }

    /// Circle with `theta = d alpha`; `phi = 0`.
    pub fn circle(nodes: usize) -> Result<Self> {
        let grid = GridSpec::new(vec![AxisSpec::periodic("alpha", nodes, 2.0 * PI)])?;
        let len = grid.len();
        let reeb = VectorField::new(grid.clone(), vec![vec![1.0; len]])?;
        let structure = Structure {
            theta: vec![vec![1.0; len]],
            dtheta: TensorField::from_fn(&grid, 1, |_, m| m[0] = 0.0),
            metric: TensorField::from_fn(&grid, 1, |_, m| m[0] = 1.0),
            metric_inv: TensorField::from_fn(&grid, 1, |_, m| m[0] = 1.0),
            phi: TensorField::from_fn(&grid, 1, |_, m| m[0] = 0.0),
        };
        Ok(Self {
            kind: ModelKind::Circle,
            n: 0,
            grid,
            reeb,
            structure: Some(structure),
            capabilities: Capabilities {
                has_full_structure: true,
                is_regular: true,
            },
            reeb_axis: Some((0, 2.0 * PI)),
        })
    }

    /// `T^3` with `theta = cos z dx + sin z dy` and the flat metric.
    pub fn torus_k(nodes: [usize; 3]) -> Result<Self> {
        let grid = GridSpec::periodic_box(&["x", "y", "z"], &nodes, 2.0 * PI)?;
        let zs: Vec<f64> = (0..grid.len())
            .map(|i| grid.axes()[2].coords()[grid.index_along(i, 2)])
            .collect();
        let cos: Vec<f64> = zs.iter().map(|z| z.cos()).collect();
        let sin: Vec<f64> = zs.iter().map(|z| z.sin()).collect();
        let reeb = VectorField::new(
            grid.clone(),
            vec![cos.clone(), sin.clone(), vec![0.0; grid.len()]],
        )?;
        let identity = |_: &[f64], m: &mut [f64]| {
            m.fill(0.0);
            m[0] = 1.0;
            m[4] = 1.0;
            m[8] = 1.0;
        };
        let structure = Structure {
            theta: vec![cos, sin, vec![0.0; grid.len()]],
            dtheta: TensorField::from_fn(&grid, 3, |x, m| {
                let (s, c) = x[2].sin_cos();
                m.copy_from_slice(&[0.0, 0.0, s, 0.0, 0.0, -c, -s, c, 0.0]);
            }),
            metric: TensorField::from_fn(&grid, 3, identity),
            metric_inv: TensorField::from_fn(&grid, 3, identity),
            // phi(d_z) = sin z d_x - cos z d_y, phi(-sin z d_x + cos z d_y) = d_z
            phi: TensorField::from_fn(&grid, 3, |x, m| {
                let (s, c) = x[2].sin_cos();
                m.copy_from_slice(&[0.0, 0.0, s, 0.0, 0.0, -c, -s, c, 0.0]);
            }),
        };
        Ok(Self {
            kind: ModelKind::TorusK,
            n: 1,
            grid,
            reeb,
            structure: Some(structure),
            capabilities: Capabilities {
                has_full_structure: true,
                is_regular: false,
            },
            reeb_axis: None,
        })
    }

    /// Unit 3-sphere in Hopf coordinates `(eta, xi1, xi2)`,
    /// `theta = sin^2 eta d xi1 + cos^2 eta d xi2`.
    ///
    /// The metric is the associated one, `g = 2 g_round - theta (x) theta`;
    /// `phi` is solved from `d theta(u, v) = g(u, phi v)` at every node.
    pub fn sphere3_hopf(nodes: [usize; 3]) -> Result<Self> {
        if nodes[1] != nodes[2] || !nodes[1].is_multiple_of(2) {
            return Err(CeaError::InvalidArgument(
                "sphere3_hopf needs equal, even node counts on xi1 and xi2".into(),
            ));
        }
        let grid = GridSpec::new(vec![
            AxisSpec::hopf_polar("eta", nodes[0], [1, 2]),
            AxisSpec::periodic("xi1", nodes[1], 2.0 * PI),
            AxisSpec::periodic("xi2", nodes[2], 2.0 * PI),
        ])?;
        let len = grid.len();
        let eta: Vec<f64> = (0..len)
            .map(|i| grid.axes()[0].coords()[grid.index_along(i, 0)])
            .collect();
        let reeb = VectorField::new(
            grid.clone(),
            vec![vec![0.0; len], vec![1.0; len], vec![1.0; len]],
        )?;
        let metric_at = |e: f64| -> Matrix3<f64> {
            let (s2, c2) = (e.sin().powi(2), e.cos().powi(2));
            Matrix3::new(
                2.0,
                0.0,
                0.0, //
                0.0,
                2.0 * s2 - s2 * s2,
                -s2 * c2, //
                0.0,
                -s2 * c2,
                2.0 * c2 - c2 * c2,
            )
        };
        let dtheta_at = |e: f64| -> Matrix3<f64> {
            let w = (2.0 * e).sin();
            Matrix3::new(0.0, w, -w, -w, 0.0, 0.0, w, 0.0, 0.0)
        };
        let store = |m: Matrix3<f64>, out: &mut [f64]| {
            for r in 0..3 {
                for c in 0..3 {
                    out[r * 3 + c] = m[(r, c)];
                }
            }
        };
        // det g = 2 sin^2 eta cos^2 eta, positive on the interior quadrature nodes
        let metric_inv = TensorField::from_fn(&grid, 3, |x, m| {
            store(
                metric_at(x[0]).try_inverse().unwrap_or_else(Matrix3::zeros),
                m,
            )
        });
        let phi = TensorField::from_fn(&grid, 3, |x, m| {
            let inv = metric_at(x[0]).try_inverse().unwrap_or_else(Matrix3::zeros);
            store(inv * dtheta_at(x[0]), m)
        });
        let structure = Structure {
            theta: vec![
                vec![0.0; len],
                eta.iter().map(|e| e.sin().powi(2)).collect(),
                eta.iter().map(|e| e.cos().powi(2)).collect(),
            ],
            dtheta: TensorField::from_fn(&grid, 3, |x, m| store(dtheta_at(x[0]), m)),
            metric: TensorField::from_fn(&grid, 3, |x, m| store(metric_at(x[0]), m)),
            metric_inv,
            phi,
        };
        Ok(Self {
            kind: ModelKind::Sphere3Hopf,
            n: 1,
            grid,
            reeb,
            structure: Some(structure),
            capabilities: Capabilities {
                has_full_structure: true,
                is_regular: true,
            },
            reeb_axis: None,
        })
    }

    /// Periodic box `T^{2n+1}` with coordinates `(x_1..x_n, y_1..y_n, z)` carrying only `E = d_z`.
    pub fn darboux_box(n: usize, nodes: &[usize]) -> Result<Self> {
        let dims = 2 * n + 1;
        if nodes.len() != dims {
            return Err(CeaError::InvalidArgument(format!(
                "darboux_box with n = {n} needs {dims} node counts"
            )));
        }
        let mut specs = Vec::with_capacity(dims);
        for i in 0..n {
            specs.push(AxisSpec::periodic(
                &format!("x{}", i + 1),
                nodes[i],
                2.0 * PI,
            ));
        }
        for i in 0..n {
            specs.push(AxisSpec::periodic(
                &format!("y{}", i + 1),
                nodes[n + i],
                2.0 * PI,
            ));
        }
        // |theta ^ (d theta)^n| = n! dx dy dz
        specs.push(AxisSpec::periodic("z", nodes[2 * n], 2.0 * PI).with_density(factorial(n)));
        let grid = GridSpec::new(specs)?;
        let len = grid.len();
        let mut comps = vec![vec![0.0; len]; dims];
        comps[dims - 1] = vec![1.0; len];
        let reeb = VectorField::new(grid.clone(), comps)?;
        Ok(Self {
            kind: ModelKind::DarbouxBox,
            n,
            grid,
            reeb,
            structure: None,
            capabilities: Capabilities {
                has_full_structure: false,
                is_regular: false,
            },
            reeb_axis: Some((dims - 1, 2.0 * PI)),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// `dim M = 2n + 1`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn reeb(&self) -> &VectorField {
        &self.reeb
    }

    pub fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    /// Axis index and period when `E` is a coordinate field (circle, darboux_box).
    pub fn reeb_axis(&self) -> Option<(usize, f64)> {
        self.reeb_axis
    }

    pub fn metric(&self) -> Option<&TensorField> {
        self.structure.as_ref().map(|s| &s.metric)
    }

    pub fn phi(&self) -> Option<&TensorField> {
        self.structure.as_ref().map(|s| &s.phi)
    }

    pub fn dtheta(&self) -> Option<&TensorField> {
        self.structure.as_ref().map(|s| &s.dtheta)
    }

    pub fn theta(&self) -> Option<&[Vec<f64>]> {
        self.structure.as_ref().map(|s| s.theta.as_slice())
    }

    pub(crate) fn require_full(&self, op: &'static str) -> Result<&Structure> {
        self.structure.as_ref().ok_or_else(|| CeaError::Capability {
            op,
            model: self.name().to_string(),
        })
    }

    pub fn check_grid(&self, f: &ScalarField) -> Result<()> {
        check_same_grid(&self.grid, f.grid())
    }

    /// Wraps `field` as a stream function of this model.
    pub fn stream(&self, field: ScalarField) -> Result<StreamFunction<'_>> {
        StreamFunction::new(self, field)
    }

    pub(crate) fn jet<'a>(&self, f: &'a ScalarField) -> Result<Jet<'a>> {
        self.check_grid(f)?;
        let df = (0..self.grid.dims())
            .map(|a| partial_derivative(f, a).map(|d| d.into_values()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Jet { f, df })
    }

    pub(crate) fn reeb_of(&self, jet: &Jet<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (comp, d) in self.reeb.components().iter().zip(&jet.df) {
            for ((o, c), v) in out.iter_mut().zip(comp).zip(d) {
                *o += c * v;
            }
        }
        out
    }

    /// Components of `S f = f E - phi G^{-1} df`.
    pub(crate) fn contact_vector_of(&self, jet: &Jet<'_>) -> Result<Vec<Vec<f64>>> {
        let s = self.require_full("contact_vector")?;
        let d = self.grid.dims();
        let len = self.grid.len();
        let mut comps = vec![vec![0.0; len]; d];
        let mut df = vec![0.0; d];
        let mut grad = vec![0.0; d];
        let mut pg = vec![0.0; d];
        let mut e = vec![0.0; d];
        for i in 0..len {
            for a in 0..d {
                df[a] = jet.df[a][i];
            }
            s.metric_inv.matvec(i, &df, &mut grad);
            s.phi.matvec(i, &grad, &mut pg);
            self.reeb.at(i, &mut e);
            let fi = jet.f.values()[i];
            for a in 0..d {
                comps[a][i] = fi * e[a] - pg[a];
            }
        }
        Ok(comps)
    }
}

/// A scalar field together with its gradient covector.
pub(crate) struct Jet<'a> {
    pub f: &'a ScalarField,
    pub df: Vec<Vec<f64>>,
}

/// `u(g)` for a vector field in components.
pub(crate) fn apply_components(u: &[Vec<f64>], g: &Jet<'_>) -> Vec<f64> {
    let len = g.f.values().len();
    let mut out = vec![0.0; len];
    for (comp, d) in u.iter().zip(&g.df) {
        for ((o, c), v) in out.iter_mut().zip(comp).zip(d) {
            *o += c * v;
        }
    }
    out
}

/// A stream function tagged with the model it lives on.
#[derive(Clone, Debug)]
pub struct StreamFunction<'m> {
    model: &'m ContactModel,
    field: ScalarField,
}

impl<'m> StreamFunction<'m> {
    pub fn new(model: &'m ContactModel, field: ScalarField) -> Result<Self> {
        model.check_grid(&field)?;
        Ok(Self { model, field })
    }

    pub fn model(&self) -> &'m ContactModel {
        self.model
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn into_field(self) -> ScalarField {
        self.field
    }
}

/// `E(f)`.
pub fn reeb_derivative(model: &ContactModel, f: &ScalarField) -> Result<ScalarField> {
    model.check_grid(f)?;
    model.reeb.apply(f)
}

/// The contact vector field `S f`; `theta(S f) = f`.
pub fn contact_vector(model: &ContactModel, f: &ScalarField) -> Result<VectorField> {
    model.require_full("contact_vector")?;
    let jet = model.jet(f)?;
    VectorField::new(model.grid.clone(), model.contact_vector_of(&jet)?)
}

/// `{f, g} = S f(g) - g E(f)`.
pub fn contact_bracket(
    model: &ContactModel,
    f: &ScalarField,
    g: &ScalarField,
) -> Result<ScalarField> {
    model.require_full("contact_bracket")?;
    let jf = model.jet(f)?;
    let jg = model.jet(g)?;
    bracket_from_jets(model, &jf, &jg)
}

pub(crate) fn bracket_from_jets(
    model: &ContactModel,
    jf: &Jet<'_>,
    jg: &Jet<'_>,
) -> Result<ScalarField> {
    let u = model.contact_vector_of(jf)?;
    let ug = apply_components(&u, jg);
    let ef = model.reeb_of(jf);
    let values = ug
        .iter()
        .zip(jg.f.values())
        .zip(&ef)
        .map(|((a, g), e)| a - g * e)
        .collect();
    Ok(ScalarField::from_parts(model.grid.clone(), values))
}

/// Stream function of `ad*_{S f} S g`: `S f(g) + (n + 2) g E(f)`.
pub fn coadjoint(model: &ContactModel, f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    model.require_full("coadjoint")?;
    let jf = model.jet(f)?;
    let jg = model.jet(g)?;
    coadjoint_from_jets(model, &jf, &jg)
}

pub(crate) fn coadjoint_from_jets(
    model: &ContactModel,
    jf: &Jet<'_>,
    jg: &Jet<'_>,
) -> Result<ScalarField> {
    let u = model.contact_vector_of(jf)?;
    let ug = apply_components(&u, jg);
    let ef = model.reeb_of(jf);
    let c = (model.n + 2) as f64;
    let values = ug
        .iter()
        .zip(jg.f.values())
        .zip(&ef)
        .map(|((a, g), e)| a + c * g * e)
        .collect();
    Ok(ScalarField::from_parts(model.grid.clone(), values))
}

/// Number of fields in the fixed divergence test battery.
const BATTERY: usize = 6;

fn test_battery(model: &ContactModel) -> Result<Vec<ScalarField>> {
    let mut out = vec![ScalarField::constant(&model.grid, 1.0)];
    for k in 0..BATTERY {
        let h = random_band_limited(0xD1_u64 + k as u64, 2, &model.grid)?;
        let norm = h.norm();
        out.push(h.scale(1.0 / norm));
    }
    Ok(out)
}

/// Weak residual of `div S f = (n + 1) E(f)`:
/// `max_h |int S f(h) + (n + 1) int h E(f)| / (|f| |h|)` over a fixed battery.
pub fn divergence_defect(model: &ContactModel, f: &ScalarField) -> Result<f64> {
    model.require_full("divergence_defect")?;
    let jf = model.jet(f)?;
    let u = model.contact_vector_of(&jf)?;
    let ef = ScalarField::from_parts(model.grid.clone(), model.reeb_of(&jf));
    let fnorm = f.norm();
    if fnorm == 0.0 {
        return Ok(0.0);
    }
    let c = (model.n + 1) as f64;
    let mut worst: f64 = 0.0;
    for h in test_battery(model)? {
        let jh = model.jet(&h)?;
        let uh = ScalarField::from_parts(model.grid.clone(), apply_components(&u, &jh));
        let r = integrate(&uh) + c * l2_inner(&h, &ef)?;
        worst = worst.max(r.abs() / (fnorm * h.norm()));
    }
    Ok(worst)
}

/// Pointwise residual of `i_{S f} d theta + df = E(f) theta` on random vectors,
/// relative to `max |df| + max |E f|`.
pub fn contact_form_defect(model: &ContactModel, f: &ScalarField, seed: u64) -> Result<f64> {
    let s = model.require_full("contact_form_defect")?;
    let jf = model.jet(f)?;
    let u = model.contact_vector_of(&jf)?;
    let ef = model.reeb_of(&jf);
    let d = model.grid.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ui = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut worst: f64 = 0.0;
    let mut scale: f64 = ef.iter().fold(0.0, |m, x| m.max(x.abs()));
    for i in 0..model.grid.len() {
        for a in 0..d {
            ui[a] = u[a][i];
            v[a] = StandardNormal.sample(&mut rng);
            scale = scale.max(jf.df[a][i].abs());
        }
        let lhs = s.dtheta.bilinear(i, &ui, &v) + (0..d).map(|a| jf.df[a][i] * v[a]).sum::<f64>();
        let rhs = ef[i] * (0..d).map(|a| s.theta[a][i] * v[a]).sum::<f64>();
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max((lhs - rhs).abs() / vn.max(1e-300));
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// Maximum pointwise defects of the associated-structure identities.
#[derive(Clone, Debug, Default, Serialize)]
pub struct StructureDefects {
    /// `|theta(E) - 1|` with `theta(u) := g(u, E)`
    pub theta_of_reeb: f64,
    /// `|g(., E) - theta|` against the closed-form contact form
    pub theta_is_metric_dual: f64,
    /// `|phi^2 u + u - theta(u) E|`
    pub phi_squared: f64,
    /// `|d theta(u, v) - g(u, phi v)|`
    pub dtheta_metric: f64,
    /// closed-form `d theta` against the spectral exterior derivative of `theta`
    pub dtheta_closed_form: f64,
    /// `|phi E|`
    pub phi_reeb: f64,
    /// `|theta(phi u)|`
    pub theta_phi: f64,
    /// `g(E, .)`-weighted Reeb condition `|i_E d theta|`
    pub reeb_kernel: f64,
}

impl StructureDefects {
    pub fn max(&self) -> f64 {
        [
            self.theta_of_reeb,
            self.theta_is_metric_dual,
            self.phi_squared,
            self.dtheta_metric,
            self.dtheta_closed_form,
            self.phi_reeb,
            self.theta_phi,
            self.reeb_kernel,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Checks the associated-structure identities at every node with seeded random vectors.
pub fn structure_defects(model: &ContactModel, seed: u64) -> Result<StructureDefects> {
    let s = model.require_full("structure_defects")?;
    let grid = &model.grid;
    let d = grid.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = StructureDefects::default();

    // spectral d theta: (d theta)_{ab} = d_a theta_b - d_b theta_a
    let dtheta_spec: Vec<Vec<Vec<f64>>> = {
        let partials: Vec<Vec<Vec<f64>>> = (0..d)
            .map(|b| {
                let th = ScalarField::from_parts(grid.clone(), s.theta[b].clone());
                (0..d)
                    .map(|a| partial_derivative(&th, a).map(|x| x.into_values()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| {
                        (0..grid.len())
                            .map(|i| partials[b][a][i] - partials[a][b][i])
                            .collect()
                    })
                    .collect()
            })
            .collect()
    };

    let mut e = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    let mut tmp2 = vec![0.0; d];
    for i in 0..grid.len() {
        model.reeb.at(i, &mut e);
        for a in 0..d {
            u[a] = StandardNormal.sample(&mut rng);
            v[a] = StandardNormal.sample(&mut rng);
        }
        let theta_of = |w: &[f64]| -> f64 { s.metric.bilinear(i, w, &e) };
        out.theta_of_reeb = out.theta_of_reeb.max((theta_of(&e) - 1.0).abs());
        s.metric.matvec(i, &e, &mut tmp);
        for a in 0..d {
            out.theta_is_metric_dual = out.theta_is_metric_dual.max((tmp[a] - s.theta[a][i]).abs());
        }
        // phi^2 u = -u + theta(u) E
        s.phi.matvec(i, &u, &mut tmp);
        s.phi.matvec(i, &tmp, &mut tmp2);
        let tu = theta_of(&u);
        for a in 0..d {
            out.phi_squared = out.phi_squared.max((tmp2[a] + u[a] - tu * e[a]).abs());
        }
        // theta(phi u) = 0
        out.theta_phi = out.theta_phi.max(theta_of(&tmp).abs());
        // d theta(u, v) = g(u, phi v)
        s.phi.matvec(i, &v, &mut tmp);
        let lhs = s.dtheta.bilinear(i, &u, &v);
        out.dtheta_metric = out
            .dtheta_metric
            .max((lhs - s.metric.bilinear(i, &u, &tmp)).abs());
        // phi E = 0
        s.phi.matvec(i, &e, &mut tmp);
        out.phi_reeb = out
            .phi_reeb
            .max(tmp.iter().fold(0.0, |m: f64, x| m.max(x.abs())));
        // i_E d theta = 0
        out.reeb_kernel = out.reeb_kernel.max(s.dtheta.bilinear(i, &e, &u).abs());
        let m = s.dtheta.at(i);
        for a in 0..d {
            for b in 0..d {
                out.dtheta_closed_form = out
                    .dtheta_closed_form
                    .max((m[a * d + b] - dtheta_spec[a][b][i]).abs());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle() -> ContactModel {
        ContactModel::circle(64).unwrap()
    }

    fn torus() -> ContactModel {
        ContactModel::torus_k([16, 16, 16]).unwrap()
    }

    fn sphere() -> ContactModel {
        ContactModel::sphere3_hopf([12, 16, 16]).unwrap()
    }

    fn field(m: &ContactModel, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        ScalarField::from_fn(m.grid(), f)
    }

    #[test]
    fn model_parameters() {
        assert_eq!(circle().n(), 0);
        assert_eq!(torus().n(), 1);
        assert_eq!(sphere().n(), 1);
        let b = ContactModel::darboux_box(2, &[8, 8, 8, 8, 16]).unwrap();
        assert_eq!(b.n(), 2);
        assert!(!b.capabilities().has_full_structure);
        assert!(sphere().capabilities().is_regular);
        assert!(!torus().capabilities().is_regular);
    }

    #[test]
    fn config_round_trip_and_rejections() {
        let m = ContactModel::from_json(r#"{"model": "darboux_box", "nodes": [8, 8, 32], "n": 1}"#)
            .unwrap();
        assert_eq!(m.grid().shape(), &[8, 8, 32]);
        let c = ContactModel::from_json(r#"{"model": "torus_k", "nodes": [8]}"#).unwrap();
        assert_eq!(c.grid().shape(), &[8, 8, 8]);
        assert!(
            ContactModel::from_json(r#"{"model": "circle", "nodes": [16], "extra": 1}"#).is_err()
        );
        assert!(ContactModel::from_json(r#"{"model": "circle", "nodes": [16], "n": 2}"#).is_err());
        assert!(ContactModel::from_json(r#"{"model": "klein", "nodes": [16]}"#).is_err());
    }

    #[test]
    fn reeb_derivative_examples() {
        let c = circle();
        let e = reeb_derivative(&c, &field(&c, |x| x[0].sin())).unwrap();
        assert!(e.sub(&field(&c, |x| x[0].cos())).unwrap().max_abs() < 1e-12);

        let t = torus();
        let e = reeb_derivative(&t, &field(&t, |x| (2.0 * x[2]).sin() + x[2].cos())).unwrap();
        assert!(e.max_abs() < 1e-12);

        let b = ContactModel::darboux_box(1, &[8, 8, 32]).unwrap();
        let e = reeb_derivative(&b, &field(&b, |x| x[2].sin())).unwrap();
        assert!(e.sub(&field(&b, |x| x[2].cos())).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn contact_vector_examples() {
        let c = circle();
        let f = field(&c, |x| x[0].sin());
        let u = contact_vector(&c, &f).unwrap();
        assert!(u.component(0).unwrap().sub(&f).unwrap().max_abs() < 1e-14);

        for m in [circle(), torus(), sphere()] {
            let u = contact_vector(&m, &ScalarField::constant(m.grid(), 1.0)).unwrap();
            for (comp, e) in u.components().iter().zip(m.reeb().components()) {
                let err = comp
                    .iter()
                    .zip(e)
                    .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
                assert!(err < 1e-12, "{}: {err}", m.name());
            }
        }

        // torus, f = sin z: u = sin z E - phi(cos z d_z)
        let t = torus();
        let f = field(&t, |x| x[2].sin());
        let u = contact_vector(&t, &f).unwrap();
        let exact = [
            field(&t, |x| x[2].sin() * x[2].cos() - x[2].cos() * x[2].sin()),
            field(&t, |x| x[2].sin() * x[2].sin() + x[2].cos() * x[2].cos()),
        ];
        for (a, ex) in exact.iter().enumerate() {
            assert!(u.component(a).unwrap().sub(ex).unwrap().max_abs() < 1e-12);
        }
        assert!(u.component(2).unwrap().max_abs() < 1e-12);
        let theta = t.theta().unwrap();
        for i in 0..t.grid().len() {
            let th: f64 = (0..3).map(|a| theta[a][i] * u.components()[a][i]).sum();
            assert!((th - f.values()[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn darboux_box_lacks_structure() {
        let b = ContactModel::darboux_box(1, &[8, 8, 16]).unwrap();
        let f = ScalarField::constant(b.grid(), 1.0);
        for r in [
            contact_vector(&b, &f).map(|_| ()),
            contact_bracket(&b, &f, &f).map(|_| ()),
            coadjoint(&b, &f, &f).map(|_| ()),
            divergence_defect(&b, &f).map(|_| ()),
        ] {
            assert!(matches!(r, Err(CeaError::Capability { .. })));
        }
    }

    #[test]
    fn bracket_examples() {
        let c = circle();
        let s = field(&c, |x| x[0].sin());
        let co = field(&c, |x| x[0].cos());
        let b = contact_bracket(&c, &s, &co).unwrap();
        assert!(b.map(|v| v + 1.0).max_abs() < 1e-12);
        assert!(contact_bracket(&c, &s, &s).unwrap().max_abs() < 1e-12);
        for m in [circle(), torus(), sphere()] {
            let g = random_band_limited(3, 3, m.grid()).unwrap();
            let one = ScalarField::constant(m.grid(), 1.0);
            let lhs = contact_bracket(&m, &one, &g).unwrap();
            let rhs = reeb_derivative(&m, &g).unwrap();
            assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-10 * g.max_abs().max(1.0));
        }
    }

    #[test]
    fn coadjoint_examples() {
        let c = circle();
        let s = field(&c, |x| x[0].sin());
        let co = field(&c, |x| x[0].cos());
        let ad = coadjoint(&c, &s, &co).unwrap();
        let exact = field(&c, |x| -x[0].sin().powi(2) + 2.0 * x[0].cos().powi(2));
        assert!(ad.sub(&exact).unwrap().max_abs() < 1e-12);

        for m in [circle(), torus(), sphere()] {
            let f = random_band_limited(11, 3, m.grid()).unwrap();
            let ef = reeb_derivative(&m, &f).unwrap();
            let expected = f.mul(&ef).unwrap().scale((m.n() + 3) as f64);
            let got = coadjoint(&m, &f, &f).unwrap();
            assert!(got.sub(&expected).unwrap().max_abs() < 1e-9 * expected.max_abs().max(1.0));
            let cst = ScalarField::constant(m.grid(), 2.5);
            let g = random_band_limited(12, 3, m.grid()).unwrap();
            let lhs = coadjoint(&m, &cst, &g).unwrap();
            let rhs = reeb_derivative(&m, &g).unwrap().scale(2.5);
            assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-9 * rhs.max_abs().max(1.0));
            assert!(
                coadjoint(&m, &f, &ScalarField::zeros(m.grid()))
                    .unwrap()
                    .max_abs()
                    == 0.0
            );
        }
    }

    #[test]
    fn divergence_defect_examples() {
        let c = circle();
        assert!(divergence_defect(&c, &ScalarField::constant(c.grid(), 1.0)).unwrap() < 1e-12);
        assert!(divergence_defect(&c, &field(&c, |x| x[0].sin())).unwrap() < 1e-12);
        // two resolutions of the same band-limited field
        for nodes in [16, 24] {
            let t = ContactModel::torus_k([nodes; 3]).unwrap();
            let f = random_band_limited(3, 3, t.grid()).unwrap();
            assert!(divergence_defect(&t, &f).unwrap() < 1e-8);
        }
    }

    #[test]
    fn structure_identities_hold() {
        for m in [circle(), torus(), sphere()] {
            let d = structure_defects(&m, 5).unwrap();
            assert!(d.max() < 1e-10, "{}: {d:?}", m.name());
        }
    }

    #[test]
    fn round_metric_is_not_associated() {
        // phi solved from the round metric squares to -4 on the contact plane
        let eta: f64 = 0.4;
        let (s2, c2) = (eta.sin().powi(2), eta.cos().powi(2));
        let g = Matrix3::new(1.0, 0.0, 0.0, 0.0, s2, 0.0, 0.0, 0.0, c2);
        let w = (2.0 * eta).sin();
        let om = Matrix3::new(0.0, w, -w, -w, 0.0, 0.0, w, 0.0, 0.0);
        let phi = g.try_inverse().unwrap() * om;
        let p2 = phi * phi;
        let eta_dir = nalgebra::Vector3::new(1.0, 0.0, 0.0);
        assert!(((p2 * eta_dir)[0] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn weak_contactomorphism_condition() {
        for m in [circle(), torus(), sphere()] {
            let f = random_band_limited(21, 3, m.grid()).unwrap();
            assert!(
                contact_form_defect(&m, &f, 9).unwrap() < 1e-10,
                "{}",
                m.name()
            );
        }
    }
}
