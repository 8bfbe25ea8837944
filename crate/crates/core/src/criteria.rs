//! Residual evaluators for the biharmonicity criteria.
//!
//! Each criterion is a [`Criterion`] trait object in a name-keyed registry.
//! All evaluators read from a shared per-point [`Site`], which caches the
//! expensive jet computations so several criteria at one point cost little
//! more than one.
//!
//! | name        | equations                                                        |
//! |-------------|------------------------------------------------------------------|
//! | `split`     | tangential and normal parts of `Δ̄H − Σ R^N(H,e_i)e_i`           |
//! | `kahler`    | curvature term rewritten through `Ric^N`, `Ric` and Codazzi      |
//! | `spaceform` | curvature term replaced by `(m+3)εH`                             |
//! | `humbilical`| scalar equations in the adapted frame of an H-umbilical immersion|
//! | `reduced`   | the same with a single `k = ω^l_1(e_l)`                          |

use std::cell::OnceCell;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{self, complex_i};
use crate::geometry::{gauss_ricci, BitensionTerms, FrameGauge, GeometryError, Immersion, LocalGeometry, MINIMAL_TOL, STRUCTURE_TOL};
use crate::lagrangian::{frame_scalars, lagrangian_defect_at, FrameScalars, LagrangianError, FIT_GATE};

/// Below this scale residuals are reported absolutely.
pub const SCALE_FLOOR: f64 = 1e-12;
/// Minimum `|μ|` for the reduced system.
pub const REDUCED_MU_FLOOR: f64 = 1e-8;
/// Maximum spread of `ω^l_1(e_l)` for the reduced system.
pub const REDUCED_K_SPREAD: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriterionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("criterion not applicable: {0}")]
    Inapplicable(String),
    #[error("unknown criterion `{0}`")]
    Unknown(String),
}

impl From<LagrangianError> for CriterionError {
    fn from(e: LagrangianError) -> Self {
        match e {
            LagrangianError::Geometry(g) => CriterionError::Geometry(g),
            other => CriterionError::Inapplicable(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResidual {
    pub name: String,
    pub tangential_norm: f64,
    pub normal_norm: f64,
    pub per_equation: BTreeMap<String, f64>,
    /// `m|H|` at the point.
    pub scale: f64,
}

impl CriterionResidual {
    fn new(name: &str, tangential: &[f64], normal: &[f64], scale: f64) -> Self {
        let t = ambient::norm(tangential);
        let n = ambient::norm(normal);
        let per_equation = BTreeMap::from([("tangential".to_string(), t), ("normal".to_string(), n)]);
        CriterionResidual {
            name: name.to_string(),
            tangential_norm: t,
            normal_norm: n,
            per_equation,
            scale,
        }
    }

    pub fn is_relative(&self) -> bool {
        self.scale > SCALE_FLOOR
    }

    /// `value/scale`, or `value` when the scale is below [`SCALE_FLOOR`].
    pub fn relative(&self, value: f64) -> f64 {
        if self.is_relative() {
            value / self.scale
        } else {
            value
        }
    }

    pub fn relative_tangential(&self) -> f64 {
        self.relative(self.tangential_norm)
    }

    pub fn relative_normal(&self) -> f64 {
        self.relative(self.normal_norm)
    }

    /// The quantity compared against the criterion tolerance.
    pub fn verdict_value(&self) -> f64 {
        self.relative_tangential().max(self.relative_normal())
    }
}

/// Per-point evaluation context with lazily cached intermediate results.
pub struct Site<'a> {
    geo: LocalGeometry<'a>,
    gauge: FrameGauge,
    terms: OnceCell<Result<BitensionTerms, GeometryError>>,
    scalars: OnceCell<Result<FrameScalars, LagrangianError>>,
}

impl<'a> Site<'a> {
    pub fn new(imm: &'a Immersion, p: &[f64]) -> Result<Self, GeometryError> {
        Ok(Site::from_geometry(LocalGeometry::at(imm, p)?))
    }

    pub fn from_geometry(geo: LocalGeometry<'a>) -> Self {
        Site {
            geo,
            gauge: FrameGauge::default(),
            terms: OnceCell::new(),
            scalars: OnceCell::new(),
        }
    }

    /// Re-gauges the adapted frame used by the frame-based criteria.
    pub fn with_gauge(mut self, gauge: FrameGauge) -> Self {
        self.gauge = gauge;
        self.scalars = OnceCell::new();
        self
    }

    pub fn geometry(&self) -> &LocalGeometry<'a> {
        &self.geo
    }

    pub fn gauge(&self) -> &FrameGauge {
        &self.gauge
    }

    pub fn terms(&self) -> Result<&BitensionTerms, GeometryError> {
        self.terms
            .get_or_init(|| self.geo.bitension_terms())
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn scalars(&self) -> Result<&FrameScalars, LagrangianError> {
        self.scalars
            .get_or_init(|| frame_scalars(&self.geo, &self.gauge))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `m|H|`
    pub fn scale(&self) -> f64 {
        self.geo.m() as f64 * ambient::norm(&self.geo.mean_curvature_value())
    }

    /// `H` vanishes to second order, so every term of the frame-based
    /// equations carries a vanishing factor.
    pub fn identically_minimal(&self) -> bool {
        self.geo.mean_curvature().iter().all(|c| c.max_abs() < MINIMAL_TOL)
    }
}

pub trait Criterion: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn evaluate(&self, site: &Site<'_>) -> Result<CriterionResidual, CriterionError>;
}

struct Split;
struct Kahler;
struct SpaceForm;
struct HUmbilical;
struct Reduced;

static REGISTRY: [&dyn Criterion; 5] = [&Split, &Kahler, &SpaceForm, &HUmbilical, &Reduced];

pub fn registry() -> &'static [&'static dyn Criterion] {
    &REGISTRY
}

pub fn lookup(name: &str) -> Result<&'static dyn Criterion, CriterionError> {
    REGISTRY
        .iter()
        .copied()
        .find(|c| c.name() == name)
        .ok_or_else(|| CriterionError::Unknown(name.to_string()))
}

pub fn names() -> Vec<&'static str> {
    REGISTRY.iter().map(|c| c.name()).collect()
}

fn require_lagrangian(site: &Site<'_>) -> Result<(), CriterionError> {
    let defect = lagrangian_defect_at(site.geometry());
    if !(defect < STRUCTURE_TOL) {
        return Err(CriterionError::Inapplicable(format!("not Lagrangian (defect {defect:e})")));
    }
    Ok(())
}

fn combine(parts: &[&[f64]], signs: &[f64]) -> Vec<f64> {
    let n = parts[0].len();
    (0..n)
        .map(|k| parts.iter().zip(signs).map(|(p, s)| s * p[k]).sum())
        .collect()
}

impl Criterion for Split {
    fn name(&self) -> &'static str {
        "split"
    }

    fn summary(&self) -> &'static str {
        "tangential and normal parts of the bitension field for any isometric immersion"
    }

    fn evaluate(&self, site: &Site<'_>) -> Result<CriterionResidual, CriterionError> {
        let t = site.terms()?;
        let curv_t = t.tangential(&t.curvature_sum);
        let curv_n = t.normal(&t.curvature_sum);
        let tangential = combine(&[&t.trace_nabla_shape, &t.trace_shape_of_nabla_h, &curv_t], &[1.0, 1.0, -1.0]);
        let normal = combine(&[&t.normal_laplacian, &t.trace_b_shape, &curv_n], &[1.0, 1.0, -1.0]);
        Ok(CriterionResidual::new(self.name(), &tangential, &normal, site.scale()))
    }
}

impl Criterion for SpaceForm {
    fn name(&self) -> &'static str {
        "spaceform"
    }

    fn summary(&self) -> &'static str {
        "Lagrangian immersions into complex space forms, curvature term (m+3)εH"
    }

    fn evaluate(&self, site: &Site<'_>) -> Result<CriterionResidual, CriterionError> {
        if site.geometry().model().epsilon() != 0.0 {
            require_lagrangian(site)?;
        }
        let t = site.terms()?;
        let c = -(t.m as f64 + 3.0) * t.epsilon;
        let tangential = combine(&[&t.trace_nabla_shape, &t.trace_shape_of_nabla_h], &[1.0, 1.0]);
        let normal = combine(&[&t.normal_laplacian, &t.trace_b_shape, &t.mean_curvature], &[1.0, 1.0, c]);
        Ok(CriterionResidual::new(self.name(), &tangential, &normal, site.scale()))
    }
}

impl Criterion for Kahler {
    fn name(&self) -> &'static str {
        "kahler"
    }

    fn summary(&self) -> &'static str {
        "Lagrangian immersions into Kähler manifolds, via Ric, Ric^N and the Codazzi trace"
    }

    fn evaluate(&self, site: &Site<'_>) -> Result<CriterionResidual, CriterionError> {
        require_lagrangian(site)?;
        let t = site.terms()?;
        let model = site.geometry().model();
        let m = t.m;
        let n = t.mean_curvature.len();
        let fv = &t.frame;
        let b = &t.second_fundamental_form;
        let h = &t.mean_curvature;

        let tangential = combine(
            &[&t.trace_nabla_shape, &t.trace_shape_of_nabla_h, &t.codazzi_trace_term()],
            &[1.0, 1.0, -1.0],
        );

        let jh = complex_i(h);
        let jh_c: Vec<f64> = fv.iter().map(|e| ambient::dot(&jh, e)).collect();
        let je: Vec<Vec<f64>> = fv.iter().map(|e| complex_i(e)).collect();
        let ric = gauss_ricci(model, fv, b, h);
        // B(JH, e_i)
        let b_jh: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut v = vec![0.0; n];
                for (k, c) in jh_c.iter().enumerate() {
                    v.iter_mut().zip(&b[k][i]).for_each(|(x, y)| *x += c * y);
                }
                v
            })
            .collect();

        let mut normal = combine(&[&t.normal_laplacian, &t.trace_b_shape], &[1.0, 1.0]);
        for i in 0..m {
            let ric_n = model.ambient_ricci(&t.position, &jh, &fv[i]).map_err(GeometryError::from)?;
            let ric_m: f64 = (0..m).map(|k| jh_c[k] * ric[k][i]).sum();
            let c = ric_n - ric_m;
            normal.iter_mut().zip(&je[i]).for_each(|(x, y)| *x += c * y);
        }
        // −J Σ_i A_{B(JH,e_i)} e_i + m J A_H(JH)
        for j in 0..m {
            let trace_a: f64 = (0..m).map(|i| ambient::dot(&b_jh[i], &b[i][j])).sum();
            let shape_h = ambient::dot(&b_jh[j], h);
            let c = -trace_a + m as f64 * shape_h;
            normal.iter_mut().zip(&je[j]).for_each(|(x, y)| *x += c * y);
        }
        Ok(CriterionResidual::new(self.name(), &tangential, &normal, site.scale()))
    }
}

fn zero_residual(name: &str, keys: &[&str]) -> CriterionResidual {
    CriterionResidual {
        name: name.to_string(),
        tangential_norm: 0.0,
        normal_norm: 0.0,
        per_equation: keys.iter().map(|k| (k.to_string(), 0.0)).collect(),
        scale: 0.0,
    }
}

fn gated_scalars<'s>(site: &'s Site<'_>) -> Result<&'s FrameScalars, CriterionError> {
    let s = site.scalars()?;
    if !(s.fit_residual < FIT_GATE) {
        return Err(CriterionError::Inapplicable(format!("H-umbilical fit residual {:e}", s.fit_residual)));
    }
    Ok(s)
}

const HUMBILICAL_KEYS: [&str; 4] = ["tangential_e1", "tangential_frame", "normal_je1", "normal_frame"];
const REDUCED_KEYS: [&str; 4] = ["tangential_e1", "gradient_a", "normal_je1", "gradient_k"];

/// The four H-umbilical equations: the `e₁` and `e_j` components of the
/// tangential part and the `Je₁` and `Je_j` components of the normal part.
pub fn humbilical_equations(s: &FrameScalars) -> (f64, Vec<f64>, f64, Vec<f64>) {
    let m = s.m;
    let mf = m as f64;
    let w = &s.omega;
    let (a, l, u) = (s.a, s.lambda, s.mu);
    let da = &s.grad_a;
    let sum_k: f64 = (1..m).map(|i| w[i][0][i]).sum();

    let t1 = 2.0 * l * da[0] + a * s.grad_lambda[0] + l * a * sum_k;
    let tj: Vec<f64> = (1..m).map(|j| 2.0 * u * da[j] + a * l * w[0][0][j]).collect();

    let mut n1 = -s.hess_a.iter().sum::<f64>();
    for i in 0..m {
        for j in 0..m {
            n1 += a * w[i][0][j].powi(2) + da[j] * w[i][i][j];
        }
    }
    n1 += a * (l * l + (mf - 1.0) * u * u - s.epsilon * (mf + 3.0));

    let nj: Vec<f64> = (1..m)
        .map(|j| {
            let mut v = 0.0;
            for i in 0..m {
                v -= 2.0 * da[i] * w[i][0][j];
                v -= a * s.d_omega1[i][j];
                for q in 0..m {
                    v -= a * w[i][0][q] * w[i][q][j];
                    v += a * w[i][i][q] * w[q][0][j];
                }
            }
            v
        })
        .collect();
    (t1, tj, n1, nj)
}

/// The reduced system with a single `k`: `(tangential e₁, e_j a, normal Je₁, e_j k)`.
pub fn reduced_equations(s: &FrameScalars) -> (f64, Vec<f64>, f64, Vec<f64>) {
    let m = s.m;
    let mf = m as f64;
    let (a, l, u, k) = (s.a, s.lambda, s.mu, s.k);
    let e1a = s.grad_a[0];
    let t1 = 2.0 * l * e1a + a * s.grad_lambda[0] + a * l * (mf - 1.0) * k;
    let grad_a = s.grad_a[1..].to_vec();
    let n1 = -s.hess_a[0] + a * (mf - 1.0) * k * k - e1a * (mf - 1.0) * k
        + a * (l * l + (mf - 1.0) * u * u - s.epsilon * (mf + 3.0));
    let grad_k = s.grad_k[1..].to_vec();
    (t1, grad_a, n1, grad_k)
}

fn scalar_residual(name: &str, keys: &[&str; 4], eqs: (f64, Vec<f64>, f64, Vec<f64>), scale: f64) -> CriterionResidual {
    let (t1, tj, n1, nj) = eqs;
    let tj_norm = ambient::norm(&tj);
    let nj_norm = ambient::norm(&nj);
    CriterionResidual {
        name: name.to_string(),
        tangential_norm: t1.hypot(tj_norm),
        normal_norm: n1.hypot(nj_norm),
        per_equation: BTreeMap::from([
            (keys[0].to_string(), t1.abs()),
            (keys[1].to_string(), tj_norm),
            (keys[2].to_string(), n1.abs()),
            (keys[3].to_string(), nj_norm),
        ]),
        scale,
    }
}

impl Criterion for HUmbilical {
    fn name(&self) -> &'static str {
        "humbilical"
    }

    fn summary(&self) -> &'static str {
        "H-umbilical Lagrangian immersions, scalar equations in the adapted frame"
    }

    fn evaluate(&self, site: &Site<'_>) -> Result<CriterionResidual, CriterionError> {
        require_lagrangian(site)?;
        if site.identically_minimal() {
            return Ok(zero_residual(self.name(), &HUMBILICAL_KEYS));
        }
        let s = gated_scalars(site)?;
        Ok(scalar_residual(self.name(), &HUMBILICAL_KEYS, humbilical_equations(s), site.scale()))
    }
}

impl Criterion for Reduced {
    fn name(&self) -> &'static str {
        "reduced"
    }

    fn summary(&self) -> &'static str {
        "H-umbilical Lagrangian immersions with μ ≠ 0, single connection coefficient k"
    }

    fn evaluate(&self, site: &Site<'_>) -> Result<CriterionResidual, CriterionError> {
        require_lagrangian(site)?;
        if site.identically_minimal() {
            return Ok(zero_residual(self.name(), &REDUCED_KEYS));
        }
        let s = gated_scalars(site)?;
        if !(s.mu.abs() >= REDUCED_MU_FLOOR) {
            return Err(CriterionError::Inapplicable(format!("|mu| = {:e} below {REDUCED_MU_FLOOR:e}", s.mu.abs())));
        }
        if !(s.k_spread < REDUCED_K_SPREAD) {
            return Err(CriterionError::Inapplicable(format!("k spread {:e}", s.k_spread)));
        }
        Ok(scalar_residual(self.name(), &REDUCED_KEYS, reduced_equations(s), site.scale()))
    }
}

fn evaluate_named(name: &str, imm: &Immersion, p: &[f64]) -> Result<CriterionResidual, CriterionError> {
    let site = Site::new(imm, p)?;
    lookup(name)?.evaluate(&site)
}

pub fn split_residual(imm: &Immersion, p: &[f64]) -> Result<CriterionResidual, CriterionError> {
    evaluate_named("split", imm, p)
}

pub fn kahler_residual(imm: &Immersion, p: &[f64]) -> Result<CriterionResidual, CriterionError> {
    evaluate_named("kahler", imm, p)
}

pub fn spaceform_residual(imm: &Immersion, p: &[f64]) -> Result<CriterionResidual, CriterionError> {
    evaluate_named("spaceform", imm, p)
}

pub fn humbilical_residual(imm: &Immersion, p: &[f64]) -> Result<CriterionResidual, CriterionError> {
    evaluate_named("humbilical", imm, p)
}

pub fn reduced_residual(imm: &Immersion, p: &[f64]) -> Result<CriterionResidual, CriterionError> {
    evaluate_named("reduced", imm, p)
}

/// Residuals of the closed-form classification identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    /// `|μ² − λμ − ε|`
    pub quadratic: f64,
    /// `|λ² + (m−1)μ² − ε(m+3)|`
    pub trace: f64,
    /// `|λ − (μ² − 1)/μ|`, only for `ε = 1` and `μ ≠ 0`.
    pub lambda: Option<f64>,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.quadratic.max(self.trace).max(self.lambda.unwrap_or(0.0))
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::from([("quadratic".to_string(), self.quadratic), ("trace".to_string(), self.trace)]);
        if let Some(l) = self.lambda {
            out.insert("lambda".to_string(), l);
        }
        out
    }
}

pub fn classification_identities(m: usize, lambda: f64, mu: f64, epsilon: f64) -> IdentityResiduals {
    let mf = m as f64;
    IdentityResiduals {
        quadratic: (mu * mu - lambda * mu - epsilon).abs(),
        trace: (lambda * lambda + (mf - 1.0) * mu * mu - epsilon * (mf + 3.0)).abs(),
        lambda: (epsilon == 1.0 && mu != 0.0).then(|| (lambda - (mu * mu - 1.0) / mu).abs()),
    }
}
