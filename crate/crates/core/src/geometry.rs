//! Second-order submanifold calculus along an immersion.
//!
//! [`LocalGeometry`] evaluates an immersion on order-4 jets at one chart
//! point and derives, still at jet level, the induced metric, orthonormal
//! frames, the second fundamental form and the mean curvature vector. Every
//! covariant derivative is then a directional derivative of a jet field
//! followed by a projection:
//!
//! * ambient derivative `∇̄_X V = P_amb(D_X V)`, where `P_amb` is the
//!   identity for `ℂ^m` and the horizontal projection for the Hopf lift;
//! * tangential part `∇_X Y = P_T(D_X Y)`;
//! * normal part `∇⊥_X ξ = P_⊥(D_X ξ)` and `B(X,Y) = P_⊥(D_X Y)`.
//!
//! For Legendrian lifts the sphere correction `+⟨X,Y⟩f̃` lies along `f̃`
//! and is removed by the horizontal projection.
//!
//! Laplacians use the geometer's sign, `Δ = −Σ(∇_{e_i}∇_{e_i} − ∇_{∇_{e_i}e_i})`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{self, complex_i, complex_i_jets, AmbientError, AmbientModel};
use crate::jets::{vector as jv, Jet, JetError};

/// Tolerance on `|f̃| = 1` for lifted immersions.
pub const SPHERE_TOL: f64 = 1e-10;
/// Structural tolerance for horizontality, normality and the Lagrangian condition.
pub const STRUCTURE_TOL: f64 = 1e-8;
/// Below this `|H|` a point is treated as minimal.
pub const MINIMAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Ambient(#[from] AmbientError),
    #[error("chart point has {got} coordinates, immersion expects {expected}")]
    Arity { expected: usize, got: usize },
    #[error("immersion returned {got} embedding coordinates, target expects {expected}")]
    EmbeddingDimension { expected: usize, got: usize },
    #[error("degenerate differential (Gram determinant {0:e})")]
    DegenerateDifferential(f64),
    #[error("lifted immersion leaves the unit sphere (|f| - 1 = {0:e})")]
    NotOnSphere(f64),
    #[error("lift is not Legendrian: non-horizontal component {0:e}")]
    NotHorizontal(f64),
    #[error("immersion is not Lagrangian: J(H) has normal component {0:e}")]
    NonLagrangian(f64),
    #[error("mean curvature vanishes (|H| = {0:e}); adapted frame undefined")]
    MinimalPoint(f64),
    #[error("field is not normal (tangential component {0:e})")]
    NotNormal(f64),
    #[error("tension routes disagree by {0:e}")]
    TensionMismatch(f64),
    #[error("non-finite value in jet evaluation")]
    NonFinite,
}

pub type ImmersionMap = dyn Fn(&[Jet]) -> Result<Vec<Jet>, JetError> + Send + Sync;

/// One chart axis of a sampling box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub periodic: bool,
}

impl Axis {
    pub fn periodic(lo: f64, hi: f64) -> Self {
        Axis { lo, hi, periodic: true }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Axis {
            lo,
            hi,
            periodic: false,
        }
    }

    /// `n` sample positions; periodic axes omit the duplicate endpoint.
    pub fn samples(&self, n: usize) -> Vec<f64> {
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            return vec![0.5 * (self.lo + self.hi)];
        }
        let span = self.hi - self.lo;
        let denom = if self.periodic { n } else { n - 1 } as f64;
        (0..n).map(|k| self.lo + span * k as f64 / denom).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDomain {
    pub axes: Vec<Axis>,
}

impl SampleDomain {
    /// Tensor-product grid, last axis varying fastest.
    pub fn grid(&self, counts: &[usize]) -> Vec<Vec<f64>> {
        let per_axis: Vec<Vec<f64>> = self
            .axes
            .iter()
            .enumerate()
            .map(|(k, a)| a.samples(counts.get(k).copied().unwrap_or(0)))
            .collect();
        if per_axis.iter().any(Vec::is_empty) {
            return Vec::new();
        }
        let mut out = vec![Vec::new()];
        for values in &per_axis {
            let mut next = Vec::with_capacity(out.len() * values.len());
            for prefix in &out {
                for &v in values {
                    let mut p = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }
}

/// Evaluable description of a smooth map from an `m`-dimensional chart into
/// an ambient model's embedding space.
#[derive(Clone)]
pub struct Immersion {
    name: String,
    chart_dim: usize,
    target: AmbientModel,
    domain: SampleDomain,
    map: Arc<ImmersionMap>,
}

impl fmt::Debug for Immersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Immersion")
            .field("name", &self.name)
            .field("chart_dim", &self.chart_dim)
            .field("target", &self.target)
            .field("domain", &self.domain)
            .finish()
    }
}

impl Immersion {
    pub fn new<F>(name: impl Into<String>, chart_dim: usize, target: AmbientModel, domain: SampleDomain, map: F) -> Self
    where
        F: Fn(&[Jet]) -> Result<Vec<Jet>, JetError> + Send + Sync + 'static,
    {
        Immersion {
            name: name.into(),
            chart_dim,
            target,
            domain,
            map: Arc::new(map),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn chart_dim(&self) -> usize {
        self.chart_dim
    }

    pub fn target(&self) -> AmbientModel {
        self.target
    }

    pub fn domain(&self) -> &SampleDomain {
        &self.domain
    }

    pub fn with_domain(mut self, domain: SampleDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn eval_jets(&self, x: &[Jet]) -> Result<Vec<Jet>, GeometryError> {
        if x.len() != self.chart_dim {
            return Err(GeometryError::Arity {
                expected: self.chart_dim,
                got: x.len(),
            });
        }
        let out = (self.map)(x)?;
        let n = self.target.embedding_dimension();
        if out.len() != n {
            return Err(GeometryError::EmbeddingDimension {
                expected: n,
                got: out.len(),
            });
        }
        Ok(out)
    }

    /// Plain evaluation at a chart point.
    pub fn eval(&self, p: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let x: Vec<Jet> = p
            .iter()
            .map(|&v| Jet::constant(p.len().max(1), 0, v))
            .collect::<Result<_, _>>()?;
        Ok(jv::values(&self.eval_jets(&x)?))
    }

    /// One embedding coordinate as a scalar jet map.
    pub fn component(&self, k: usize) -> impl Fn(&[Jet]) -> Result<Jet, JetError> + Send + Sync + '_ {
        move |x: &[Jet]| {
            let v = (self.map)(x)?;
            v.into_iter()
                .nth(k)
                .ok_or_else(|| JetError::Domain(format!("no embedding coordinate {k}")))
        }
    }

    /// The same map in a chart translated by `shift`: `x ↦ φ(x + shift)`.
    pub fn shifted(&self, shift: &[f64]) -> Immersion {
        let inner = Arc::clone(&self.map);
        let shift = shift.to_vec();
        let domain = SampleDomain {
            axes: self
                .domain
                .axes
                .iter()
                .zip(&shift)
                .map(|(a, s)| Axis {
                    lo: a.lo - s,
                    hi: a.hi - s,
                    periodic: a.periodic,
                })
                .collect(),
        };
        Immersion {
            name: format!("{}+shift", self.name),
            chart_dim: self.chart_dim,
            target: self.target,
            domain,
            map: Arc::new(move |x: &[Jet]| {
                let moved: Vec<Jet> = x.iter().zip(&shift).map(|(xi, s)| xi + *s).collect();
                inner(&moved)
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameKind {
    /// Gram–Schmidt of the coordinate vectors in chart order.
    Coordinate,
    /// `e₁ = −J H/|H|`, rest by Gram–Schmidt.
    Adapted,
}

/// Orthonormal tangent frame field as jets: `e_a = Σ_k coeffs[a][k] ∂_kφ`.
#[derive(Debug, Clone)]
pub struct Frame {
    pub kind: FrameKind,
    pub vectors: Vec<Vec<Jet>>,
    pub coeffs: Vec<Vec<Jet>>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn order(&self) -> usize {
        self.vectors.iter().map(|v| jv::order(v)).min().unwrap_or(0)
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.vectors.iter().map(|v| jv::values(v)).collect()
    }
}

/// Re-gauging of an adapted frame.
///
/// The completion `e₂ … e_m` of an adapted frame is only determined up to a
/// rotation; `rotation` applies a constant orthogonal matrix to it and
/// `twist` an additional point-dependent rotation of the `(e₂, e₃)` plane by
/// the angle `twist · Σ_k (x_k − p_k)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameGauge {
    pub flip_e1: bool,
    pub rotation: Option<Vec<Vec<f64>>>,
    pub twist: f64,
}

impl FrameGauge {
    /// A seeded random gauge for chart dimension `m`.
    pub fn random(m: usize, seed: u64) -> FrameGauge {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = m.saturating_sub(1);
        let rotation = if n > 0 {
            Some(random_orthogonal(n, &mut rng))
        } else {
            None
        };
        FrameGauge {
            flip_e1: false,
            rotation,
            twist: if m >= 3 { rng.gen_range(-1.5..1.5) } else { 0.0 },
        }
    }
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for r in &rows {
            let c = ambient::dot(&v, r);
            v.iter_mut().zip(r).for_each(|(x, y)| *x -= c * y);
        }
        let norm = ambient::norm(&v);
        if norm > 1e-3 {
            rows.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum FrameHint {
    #[default]
    Coordinate,
    MeanCurvature(FrameGauge),
}

/// Perturbation `B(e_a,e_b) += magnitude·(1 + Σ_k (x_k − p_k))·J e₁` used to
/// check that the Codazzi residual detects an inconsistent `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BPerturbation {
    pub entry: (usize, usize),
    pub magnitude: f64,
}

/// Pointwise summary of the second-order geometry (plain values).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometrySample {
    pub point: Vec<f64>,
    pub model: AmbientModel,
    pub position: Vec<f64>,
    pub metric: Vec<Vec<f64>>,
    pub frame_kind: FrameKind,
    pub frame: Vec<Vec<f64>>,
    /// `connection_forms[i][j][l] = ω^l_j(e_i) = ⟨∇_{e_i}e_j, e_l⟩`
    pub connection_forms: Vec<Vec<Vec<f64>>>,
    pub second_fundamental_form: Vec<Vec<Vec<f64>>>,
    pub mean_curvature: Vec<f64>,
}

/// Violations of the structural identities a sample must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleDefects {
    pub frame_orthonormality: f64,
    pub omega_antisymmetry: f64,
    pub b_symmetry: f64,
    pub b_normality: f64,
    pub mean_trace: f64,
}

impl GeometrySample {
    pub fn m(&self) -> usize {
        self.frame.len()
    }

    /// `(A_ξ)_{ab} = ⟨B(e_a,e_b), ξ⟩` in the sample frame.
    pub fn shape_operator(&self, xi: &[f64]) -> Vec<Vec<f64>> {
        shape_operator(&self.second_fundamental_form, xi)
    }

    /// Ricci tensor of the induced metric in the sample frame, via the Gauss
    /// equation: `Ric(X,Y) = Σ⟨R^N(X,e_c)e_c,Y⟩ + m⟨H,B(X,Y)⟩ − Σ⟨B(X,e_c),B(Y,e_c)⟩`.
    pub fn intrinsic_ricci(&self) -> Vec<Vec<f64>> {
        gauss_ricci(self.model, &self.frame, &self.second_fundamental_form, &self.mean_curvature)
    }

    /// Sectional curvatures `K(e_a,e_b)` via the Gauss equation.
    pub fn sectional_curvatures(&self) -> Vec<Vec<f64>> {
        let m = self.m();
        let b = &self.second_fundamental_form;
        let mut k = vec![vec![0.0; m]; m];
        for a in 0..m {
            for c in 0..m {
                if a == c {
                    continue;
                }
                let r = self.model.curvature_operator(&self.frame[a], &self.frame[c], &self.frame[c]);
                k[a][c] = ambient::dot(&r, &self.frame[a]) + ambient::dot(&b[a][a], &b[c][c])
                    - ambient::dot(&b[a][c], &b[a][c]);
            }
        }
        k
    }

    pub fn defects(&self) -> SampleDefects {
        let m = self.m();
        let mut d = SampleDefects {
            frame_orthonormality: 0.0,
            omega_antisymmetry: 0.0,
            b_symmetry: 0.0,
            b_normality: 0.0,
            mean_trace: 0.0,
        };
        let mut trace = vec![0.0; self.mean_curvature.len()];
        for a in 0..m {
            for b in 0..m {
                let g = ambient::dot(&self.frame[a], &self.frame[b]) - if a == b { 1.0 } else { 0.0 };
                d.frame_orthonormality = d.frame_orthonormality.max(g.abs());
                let diff: f64 = self.second_fundamental_form[a][b]
                    .iter()
                    .zip(&self.second_fundamental_form[b][a])
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                d.b_symmetry = d.b_symmetry.max(diff);
                for e in &self.frame {
                    d.b_normality = d.b_normality.max(ambient::dot(&self.second_fundamental_form[a][b], e).abs());
                }
                for i in 0..m {
                    let s = self.connection_forms[i][a][b] + self.connection_forms[i][b][a];
                    d.omega_antisymmetry = d.omega_antisymmetry.max(s.abs());
                }
            }
            trace
                .iter_mut()
                .zip(&self.second_fundamental_form[a][a])
                .for_each(|(t, x)| *t += x / m as f64);
        }
        d.mean_trace = trace
            .iter()
            .zip(&self.mean_curvature)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        d
    }
}

/// Ricci tensor of the induced metric in an orthonormal frame from the
/// Gauss equation.
pub fn gauss_ricci(model: AmbientModel, frame: &[Vec<f64>], b: &[Vec<Vec<f64>>], h: &[f64]) -> Vec<Vec<f64>> {
    let m = frame.len();
    let mut ric = vec![vec![0.0; m]; m];
    for a in 0..m {
        for bb in 0..m {
            let mut s = m as f64 * ambient::dot(h, &b[a][bb]);
            for c in 0..m {
                let r = model.curvature_operator(&frame[a], &frame[c], &frame[c]);
                s += ambient::dot(&r, &frame[bb]);
                s -= ambient::dot(&b[a][c], &b[bb][c]);
            }
            ric[a][bb] = s;
        }
    }
    ric
}

/// `(A_ξ)_{ab} = ⟨B(e_a,e_b), ξ⟩` from an array of frame components of `B`.
pub fn shape_operator(b: &[Vec<Vec<f64>>], xi: &[f64]) -> Vec<Vec<f64>> {
    b.iter()
        .map(|row| row.iter().map(|bab| ambient::dot(bab, xi)).collect())
        .collect()
}

/// `H = (1/m) Σ_a B(e_a,e_a)` for `B` given in an orthonormal frame.
pub fn mean_curvature(b: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let m = b.len();
    let n = b.first().and_then(|r| r.first()).map_or(0, Vec::len);
    let mut h = vec![0.0; n];
    for (a, row) in b.iter().enumerate() {
        for (hk, x) in h.iter_mut().zip(&row[a]) {
            *hk += x / m as f64;
        }
    }
    h
}

/// Plain-value projections at the base point.
#[derive(Debug, Clone)]
struct BaseProjector {
    lift: bool,
    phi: Vec<f64>,
    iphi: Vec<f64>,
    frame: Vec<Vec<f64>>,
}

impl BaseProjector {
    fn ambient(&self, v: &[f64]) -> Vec<f64> {
        if !self.lift {
            return v.to_vec();
        }
        let a = ambient::dot(v, &self.phi);
        let b = ambient::dot(v, &self.iphi);
        (0..v.len()).map(|k| v[k] - a * self.phi[k] - b * self.iphi[k]).collect()
    }

    fn tangent(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for e in &self.frame {
            let c = ambient::dot(v, e);
            out.iter_mut().zip(e).for_each(|(o, x)| *o += c * x);
        }
        out
    }

    fn normal(&self, v: &[f64]) -> Vec<f64> {
        let a = self.ambient(v);
        let t = self.tangent(v);
        a.iter().zip(&t).map(|(x, y)| x - y).collect()
    }
}

/// Everything the bitension field and its rewritings need at one point,
/// in ambient coordinates and a coordinate frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BitensionTerms {
    pub m: usize,
    pub epsilon: f64,
    pub position: Vec<f64>,
    pub frame: Vec<Vec<f64>>,
    pub mean_curvature: Vec<f64>,
    pub second_fundamental_form: Vec<Vec<Vec<f64>>>,
    /// `[i][j][l] = ω^l_j(e_i)`
    pub connection_forms: Vec<Vec<Vec<f64>>>,
    /// `∇⊥_{e_a} H`
    pub normal_derivative_h: Vec<Vec<f64>>,
    /// `(∇⊥_{e_a} B)(e_b, e_c)`
    pub covariant_b: Vec<Vec<Vec<Vec<f64>>>>,
    /// `trace_g(∇A_H)`
    pub trace_nabla_shape: Vec<f64>,
    /// `trace_g A_{∇⊥_· H}(·)`
    pub trace_shape_of_nabla_h: Vec<f64>,
    /// `Δ⊥H`
    pub normal_laplacian: Vec<f64>,
    /// `trace_g B(A_H ·, ·)`
    pub trace_b_shape: Vec<f64>,
    /// `Σ_i R^N(H, e_i) e_i`
    pub curvature_sum: Vec<f64>,
    /// `Δ̄H` evaluated directly as a rough Laplacian.
    pub rough_laplacian: Vec<f64>,
}

impl BitensionTerms {
    fn projector(&self, lift: bool) -> BaseProjector {
        let iphi = complex_i(&self.position);
        BaseProjector {
            lift,
            phi: self.position.clone(),
            iphi,
            frame: self.frame.clone(),
        }
    }

    /// Tangential part of `v` (frame is orthonormal).
    pub fn tangential(&self, v: &[f64]) -> Vec<f64> {
        self.projector(false).tangent(v)
    }

    /// Normal part of a vector that is already tangent to the ambient model.
    pub fn normal(&self, v: &[f64]) -> Vec<f64> {
        let t = self.tangential(v);
        v.iter().zip(&t).map(|(x, y)| x - y).collect()
    }

    /// `Δ̄H` assembled from its tangential and normal parts.
    pub fn rough_laplacian_split(&self) -> Vec<f64> {
        (0..self.mean_curvature.len())
            .map(|k| {
                self.trace_nabla_shape[k]
                    + self.trace_shape_of_nabla_h[k]
                    + self.normal_laplacian[k]
                    + self.trace_b_shape[k]
            })
            .collect()
    }

    /// `τ₂ = m(Δ̄H − Σ R^N(H,e_i)e_i)`
    pub fn bitension(&self) -> Vec<f64> {
        let m = self.m as f64;
        self.rough_laplacian_split()
            .iter()
            .zip(&self.curvature_sum)
            .map(|(l, r)| m * (l - r))
            .collect()
    }

    /// `Σ_j ⟨ Σ_i (∇⊥_{e_j}B)(e_i,e_i) − Σ_i (∇⊥_{e_i}B)(e_j,e_i), H ⟩ e_j`
    pub fn codazzi_trace_term(&self) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; self.mean_curvature.len()];
        for j in 0..m {
            let mut c = 0.0;
            for i in 0..m {
                c += ambient::dot(&self.covariant_b[j][i][i], &self.mean_curvature);
                c -= ambient::dot(&self.covariant_b[i][j][i], &self.mean_curvature);
            }
            out.iter_mut().zip(&self.frame[j]).for_each(|(o, e)| *o += c * e);
        }
        out
    }
}

/// Intrinsic curvature in a frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntrinsicCurvature {
    pub ricci: Vec<Vec<f64>>,
    pub sectional: Vec<Vec<f64>>,
}

/// Jet-level geometry of an immersion around one chart point.
pub struct LocalGeometry<'a> {
    imm: &'a Immersion,
    point: Vec<f64>,
    m: usize,
    model: AmbientModel,
    offsets: Vec<Jet>,
    phi: Vec<Jet>,
    iphi: Vec<Jet>,
    dphi: Vec<Vec<Jet>>,
    /// `∂_i∂_jφ`, full square.
    ddphi: Vec<Vec<Vec<Jet>>>,
    metric: Vec<Vec<Jet>>,
    inv_metric: Vec<Vec<Jet>>,
    frame: Frame,
    /// `P_⊥(∂_i∂_jφ)`
    normal_hessian: Vec<Vec<Vec<Jet>>>,
    mean_curvature: Vec<Jet>,
    base: BaseProjector,
}

impl<'a> LocalGeometry<'a> {
    pub fn at(imm: &'a Immersion, point: &[f64]) -> Result<Self, GeometryError> {
        let m = imm.chart_dim();
        if point.len() != m {
            return Err(GeometryError::Arity {
                expected: m,
                got: point.len(),
            });
        }
        let model = imm.target();
        let x = Jet::seed(point)?;
        let offsets: Vec<Jet> = x.iter().zip(point).map(|(xi, p)| xi + (-p)).collect();
        let phi = imm.eval_jets(&x)?;
        if !phi.iter().all(Jet::is_finite) {
            return Err(GeometryError::NonFinite);
        }
        let lift = model.is_lift();
        if lift {
            let defect = ambient::norm(&jv::values(&phi)) - 1.0;
            if defect.abs() > SPHERE_TOL {
                return Err(GeometryError::NotOnSphere(defect));
            }
        }
        let iphi = complex_i_jets(&phi);

        let dphi: Vec<Vec<Jet>> = (0..m)
            .map(|k| phi.iter().map(|c| c.derivative(k)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<_, _>>()?;
        if lift {
            let iphi0 = jv::values(&iphi);
            for d in &dphi {
                let h = ambient::dot(&jv::values(d), &iphi0).abs();
                if h > STRUCTURE_TOL {
                    return Err(GeometryError::NotHorizontal(h));
                }
            }
        }
        let mut ddphi: Vec<Vec<Vec<Jet>>> = vec![Vec::new(); m];
        for i in 0..m {
            for j in 0..m {
                let entry = if j < i {
                    ddphi[j][i].clone()
                } else {
                    dphi[i].iter().map(|c| c.derivative(j)).collect::<Result<Vec<_>, _>>()?
                };
                ddphi[i].push(entry);
            }
        }
        let mut metric: Vec<Vec<Jet>> = vec![Vec::new(); m];
        for i in 0..m {
            for j in 0..m {
                let g = if j < i {
                    metric[j][i].clone()
                } else {
                    jv::dot(&dphi[i], &dphi[j])
                };
                metric[i].push(g);
            }
        }

        let frame = coordinate_frame(&dphi)?;
        let mut inv_metric: Vec<Vec<Jet>> = vec![Vec::new(); m];
        for k in 0..m {
            for j in 0..m {
                let mut s = &frame.coeffs[0][k] * &frame.coeffs[0][j];
                for a in 1..m {
                    s += &(&frame.coeffs[a][k] * &frame.coeffs[a][j]);
                }
                inv_metric[k].push(s);
            }
        }

        let base = BaseProjector {
            lift,
            phi: jv::values(&phi),
            iphi: jv::values(&iphi),
            frame: frame.values(),
        };

        let mut geo = LocalGeometry {
            imm,
            point: point.to_vec(),
            m,
            model,
            offsets,
            phi,
            iphi,
            dphi,
            ddphi,
            metric,
            inv_metric,
            frame,
            normal_hessian: Vec::new(),
            mean_curvature: Vec::new(),
            base,
        };

        let mut nh: Vec<Vec<Vec<Jet>>> = vec![Vec::new(); m];
        for i in 0..m {
            for j in 0..m {
                let entry = if j < i {
                    nh[j][i].clone()
                } else {
                    geo.normal_project(&geo.ddphi[i][j])
                };
                nh[i].push(entry);
            }
        }
        let mut h = jv::scale(&nh[0][0], &geo.inv_metric[0][0]);
        for i in 0..m {
            for j in 0..m {
                if i == 0 && j == 0 {
                    continue;
                }
                jv::axpy(&mut h, &geo.inv_metric[i][j], &nh[i][j]);
            }
        }
        geo.mean_curvature = jv::scale_f64(&h, 1.0 / m as f64);
        // B is only ever differentiated once
        geo.normal_hessian = nh.iter().map(|r| r.iter().map(|v| jv::truncate(v, 1)).collect()).collect();
        Ok(geo)
    }

    pub fn immersion(&self) -> &Immersion {
        self.imm
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn model(&self) -> AmbientModel {
        self.model
    }

    pub fn position(&self) -> Vec<f64> {
        jv::values(&self.phi)
    }

    /// Chart offsets `x_k − p_k` as jets.
    pub fn offsets(&self) -> &[Jet] {
        &self.offsets
    }

    /// `dφ(∂_k)` as jets of order 3.
    pub fn coordinate_vectors(&self) -> &[Vec<Jet>] {
        &self.dphi
    }

    pub fn metric_jets(&self) -> &[Vec<Jet>] {
        &self.metric
    }

    /// Induced metric `g_ij = ⟨∂_iφ, ∂_jφ⟩` at the point.
    pub fn induced_metric(&self) -> Vec<Vec<f64>> {
        self.metric.iter().map(|r| jv::values(r)).collect()
    }

    pub fn coordinate_frame(&self) -> &Frame {
        &self.frame
    }

    /// Mean curvature vector field `H = (1/m) g^{ij} P_⊥(∂_i∂_jφ)`, order 2.
    pub fn mean_curvature(&self) -> &[Jet] {
        &self.mean_curvature
    }

    pub fn mean_curvature_value(&self) -> Vec<f64> {
        jv::values(&self.mean_curvature)
    }

    /// `J` on a jet field.
    pub fn j(&self, v: &[Jet]) -> Vec<Jet> {
        complex_i_jets(v)
    }

    pub fn ambient_project(&self, v: &[Jet]) -> Vec<Jet> {
        if !self.model.is_lift() {
            return v.to_vec();
        }
        let a = jv::dot(v, &self.phi);
        let b = jv::dot(v, &self.iphi);
        let mut out = v.to_vec();
        jv::axmy(&mut out, &a, &self.phi);
        jv::axmy(&mut out, &b, &self.iphi);
        out
    }

    pub fn tangent_project(&self, v: &[Jet]) -> Vec<Jet> {
        let mut out: Vec<Jet> = v.iter().map(Jet::zero_like).collect();
        for e in &self.frame.vectors {
            let c = jv::dot(v, e);
            jv::axpy(&mut out, &c, e);
        }
        out
    }

    pub fn normal_project(&self, v: &[Jet]) -> Vec<Jet> {
        let mut out = self.ambient_project(v);
        for e in &self.frame.vectors {
            let c = jv::dot(v, e);
            jv::axmy(&mut out, &c, e);
        }
        out
    }

    /// `D_{e_a} w = Σ_k c_a^k ∂_k w` for a jet field `w` (one order lost).
    pub fn directional(&self, frame: &Frame, a: usize, w: &[Jet]) -> Result<Vec<Jet>, GeometryError> {
        let mut out: Option<Vec<Jet>> = None;
        for (k, c) in frame.coeffs[a].iter().enumerate() {
            let dw: Vec<Jet> = w.iter().map(|x| x.derivative(k)).collect::<Result<_, _>>()?;
            match out.as_mut() {
                None => out = Some(jv::scale(&dw, c)),
                Some(acc) => jv::axpy(acc, c, &dw),
            }
        }
        Ok(out.expect("frame has at least one coordinate"))
    }

    /// Value of [`LocalGeometry::directional`] at the point.
    pub fn directional_value(&self, frame: &Frame, a: usize, w: &[Jet]) -> Result<Vec<f64>, GeometryError> {
        let c: Vec<f64> = frame.coeffs[a].iter().map(Jet::value).collect();
        w.iter()
            .map(|x| {
                let mut s = 0.0;
                for (k, ck) in c.iter().enumerate() {
                    s += ck * x.derivative_value(k)?;
                }
                Ok(s)
            })
            .collect()
    }

    /// Value of [`LocalGeometry::directional_scalar`] at the point.
    pub fn directional_scalar_value(&self, frame: &Frame, a: usize, f: &Jet) -> Result<f64, GeometryError> {
        Ok(self.directional_value(frame, a, std::slice::from_ref(f))?[0])
    }

    /// Directional derivative of a scalar jet along `e_a`.
    pub fn directional_scalar(&self, frame: &Frame, a: usize, f: &Jet) -> Result<Jet, GeometryError> {
        let mut acc: Option<Jet> = None;
        for (k, c) in frame.coeffs[a].iter().enumerate() {
            let t = c * &f.derivative(k)?;
            acc = Some(match acc {
                None => t,
                Some(s) => s + t,
            });
        }
        Ok(acc.expect("frame has at least one coordinate"))
    }

    /// Frame for the requested hint.
    pub fn frame(&self, hint: &FrameHint) -> Result<Frame, GeometryError> {
        match hint {
            FrameHint::Coordinate => Ok(self.frame.clone()),
            FrameHint::MeanCurvature(gauge) => self.adapted_frame(gauge),
        }
    }

    /// Frame with `J e₁ = H/|H|`, completed by Gram–Schmidt of the coordinate
    /// vectors (dropping the one most aligned with `e₁`), then re-gauged.
    pub fn adapted_frame(&self, gauge: &FrameGauge) -> Result<Frame, GeometryError> {
        let m = self.m;
        let h = &self.mean_curvature;
        let h_norm2 = jv::dot(h, h);
        let h_abs = h_norm2.value().max(0.0).sqrt();
        if h_abs < MINIMAL_TOL {
            return Err(GeometryError::MinimalPoint(h_abs));
        }
        let inv = h_norm2.sqrt()?.recip()?;
        let jh = self.j(h);
        let mut e1 = jv::scale(&jh, &(-&inv));
        let e1_normal = self.base.normal(&jv::values(&e1));
        let defect = ambient::norm(&e1_normal);
        if defect > STRUCTURE_TOL {
            return Err(GeometryError::NonLagrangian(defect));
        }
        // e₁ is tangent; make it exactly so at jet level before use.
        e1 = self.tangent_project(&e1);
        let coeffs1 = self.coefficients_of(&e1);

        let e1v = jv::values(&e1);
        let drop = (0..m)
            .max_by(|&a, &b| {
                let sa = alignment(&jv::values(&self.dphi[a]), &e1v);
                let sb = alignment(&jv::values(&self.dphi[b]), &e1v);
                sa.partial_cmp(&sb).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0);

        let mut vectors = vec![e1];
        let mut coeffs = vec![coeffs1];
        for k in (0..m).filter(|&k| k != drop) {
            let mut v = self.dphi[k].clone();
            let mut c: Vec<Jet> = (0..m)
                .map(|i| v[0].constant_like(if i == k { 1.0 } else { 0.0 }))
                .collect();
            for (e, ce) in vectors.iter().zip(&coeffs) {
                let p = jv::dot(&v, e);
                jv::axmy(&mut v, &p, e);
                jv::axmy(&mut c, &p, ce);
            }
            let inv = jv::dot(&v, &v).sqrt()?.recip()?;
            vectors.push(jv::scale(&v, &inv));
            coeffs.push(jv::scale(&c, &inv));
        }
        let mut frame = Frame {
            kind: FrameKind::Adapted,
            vectors,
            coeffs,
        };
        self.apply_gauge(&mut frame, gauge);
        Ok(frame)
    }

    fn apply_gauge(&self, frame: &mut Frame, gauge: &FrameGauge) {
        let m = self.m;
        if gauge.flip_e1 {
            frame.vectors[0] = jv::scale_f64(&frame.vectors[0], -1.0);
            frame.coeffs[0] = jv::scale_f64(&frame.coeffs[0], -1.0);
        }
        if let Some(q) = &gauge.rotation {
            if m >= 2 && q.len() == m - 1 {
                let old_v = frame.vectors.clone();
                let old_c = frame.coeffs.clone();
                for i in 0..m - 1 {
                    let mut v = jv::scale_f64(&old_v[1], q[i][0]);
                    let mut c = jv::scale_f64(&old_c[1], q[i][0]);
                    for j in 1..m - 1 {
                        for (x, y) in v.iter_mut().zip(&old_v[j + 1]) {
                            *x += &y.scale(q[i][j]);
                        }
                        for (x, y) in c.iter_mut().zip(&old_c[j + 1]) {
                            *x += &y.scale(q[i][j]);
                        }
                    }
                    frame.vectors[i + 1] = v;
                    frame.coeffs[i + 1] = c;
                }
            }
        }
        if gauge.twist != 0.0 && m >= 3 {
            let mut angle = self.offsets[0].scale(gauge.twist);
            for t in &self.offsets[1..] {
                angle += &t.scale(gauge.twist);
            }
            let (c, s) = (angle.cos(), angle.sin());
            let rot = |x: &[Jet], y: &[Jet]| -> (Vec<Jet>, Vec<Jet>) {
                let nx = x.iter().zip(y).map(|(a, b)| &(&c * a) - &(&s * b)).collect();
                let ny = x.iter().zip(y).map(|(a, b)| &(&s * a) + &(&c * b)).collect();
                (nx, ny)
            };
            let (v2, v3) = rot(&frame.vectors[1], &frame.vectors[2]);
            let (c2, c3) = rot(&frame.coeffs[1], &frame.coeffs[2]);
            frame.vectors[1] = v2;
            frame.vectors[2] = v3;
            frame.coeffs[1] = c2;
            frame.coeffs[2] = c3;
        }
    }

    /// Chart components of a tangent jet field: `v = Σ_k c^k ∂_kφ`.
    fn coefficients_of(&self, v: &[Jet]) -> Vec<Jet> {
        let m = self.m;
        let proj: Vec<Jet> = (0..m).map(|j| jv::dot(v, &self.dphi[j])).collect();
        (0..m)
            .map(|k| {
                let mut s = &self.inv_metric[k][0] * &proj[0];
                for j in 1..m {
                    s += &(&self.inv_metric[k][j] * &proj[j]);
                }
                s
            })
            .collect()
    }

    /// `B(e_a,e_b)` as jets of order 1.
    pub fn second_fundamental_form(&self, frame: &Frame) -> Result<Vec<Vec<Vec<Jet>>>, GeometryError> {
        let m = self.m;
        if self.model.is_lift() {
            // B̃ must be horizontal for a Legendrian lift
            for i in 0..m {
                for j in i..m {
                    let d = ambient::dot(&jv::values(&self.ddphi[i][j]), &self.base.iphi).abs();
                    if d > STRUCTURE_TOL {
                        return Err(GeometryError::NotHorizontal(d));
                    }
                }
            }
        }
        let mut out: Vec<Vec<Vec<Jet>>> = vec![Vec::new(); m];
        for a in 0..m {
            for b in 0..m {
                if b < a {
                    let sym = out[b][a].clone();
                    out[a].push(sym);
                    continue;
                }
                let mut acc: Option<Vec<Jet>> = None;
                for k in 0..m {
                    let ca = frame.coeffs[a][k].truncate(1);
                    for i in 0..m {
                        let w = &ca * &frame.coeffs[b][i];
                        match acc.as_mut() {
                            None => acc = Some(jv::scale(&self.normal_hessian[k][i], &w)),
                            Some(s) => jv::axpy(s, &w, &self.normal_hessian[k][i]),
                        }
                    }
                }
                out[a].push(acc.expect("m >= 1"));
            }
        }
        Ok(out)
    }

    /// `ω[i][j][l] = ⟨D_{e_i}e_j, e_l⟩ = ω^l_j(e_i)` as jets of order 1.
    pub fn connection_forms(&self, frame: &Frame) -> Result<Vec<Vec<Vec<Jet>>>, GeometryError> {
        let m = self.m;
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = Vec::with_capacity(m);
            for j in 0..m {
                let d = self.directional(frame, i, &jv::truncate(&frame.vectors[j], 2))?;
                row.push((0..m).map(|l| jv::dot(&d, &frame.vectors[l])).collect::<Vec<_>>());
            }
            out.push(row);
        }
        Ok(out)
    }

    fn check_normal(&self, xi: &[Jet]) -> Result<(), GeometryError> {
        let v = jv::values(xi);
        let t = ambient::norm(&self.base.tangent(&v));
        let off = self.model.tangent_defect(&self.base.phi, &v);
        let defect = t.max(off);
        if defect > STRUCTURE_TOL * (1.0 + ambient::norm(&v)) {
            return Err(GeometryError::NotNormal(defect));
        }
        Ok(())
    }

    /// `∇⊥_{e_a} ξ` as a jet field (one order lost).
    pub fn normal_derivative(&self, frame: &Frame, a: usize, xi: &[Jet]) -> Result<Vec<Jet>, GeometryError> {
        self.check_normal(xi)?;
        Ok(self.normal_project(&self.directional(frame, a, xi)?))
    }

    /// `Δ⊥ξ = −Σ_a (∇⊥_{e_a}∇⊥_{e_a}ξ − ∇⊥_{∇_{e_a}e_a}ξ)` at the point.
    pub fn normal_laplacian(&self, frame: &Frame, xi: &[Jet]) -> Result<Vec<f64>, GeometryError> {
        self.check_normal(xi)?;
        let omega = self.connection_forms(frame)?;
        let first: Vec<Vec<Jet>> = (0..self.m)
            .map(|a| Ok(self.normal_project(&self.directional(frame, a, xi)?)))
            .collect::<Result<_, GeometryError>>()?;
        self.second_order_trace(frame, &omega, &first, |v| self.base.normal(v))
    }

    /// Shared shape of `Δ⊥` and `Δ̄`: `−Σ_a (P(D_a V_a) − Σ_l ω^l_a(e_a) V_l)`.
    fn second_order_trace<P>(&self, frame: &Frame, omega: &[Vec<Vec<Jet>>], first: &[Vec<Jet>], project: P) -> Result<Vec<f64>, GeometryError>
    where
        P: Fn(&[f64]) -> Vec<f64>,
    {
        let n = self.model.embedding_dimension();
        let mut out = vec![0.0; n];
        for a in 0..self.m {
            let second = project(&self.directional_value(frame, a, &first[a])?);
            for k in 0..n {
                out[k] -= second[k];
            }
            for l in 0..self.m {
                let w = omega[a][a][l].value();
                let fl = jv::values(&first[l]);
                for k in 0..n {
                    out[k] += w * fl[k];
                }
            }
        }
        Ok(out)
    }

    /// `Δ̄ξ` for a field along the immersion, computed directly.
    pub fn rough_laplacian(&self, frame: &Frame, xi: &[Jet]) -> Result<Vec<f64>, GeometryError> {
        let omega = self.connection_forms(frame)?;
        let first: Vec<Vec<Jet>> = (0..self.m)
            .map(|a| Ok(self.ambient_project(&self.directional(frame, a, xi)?)))
            .collect::<Result<_, GeometryError>>()?;
        self.second_order_trace(frame, &omega, &first, |v| self.base.ambient(v))
    }

    /// Shape operator of a normal jet field by the Weingarten formula,
    /// `A_ξ e_a = −P_T(D_{e_a}ξ)`, as a matrix in `frame`.
    pub fn shape_operator_weingarten(&self, frame: &Frame, xi: &[Jet]) -> Result<Vec<Vec<f64>>, GeometryError> {
        self.check_normal(xi)?;
        let fv = frame.values();
        (0..self.m)
            .map(|a| {
                let d = self.directional_value(frame, a, xi)?;
                Ok(fv.iter().map(|e| -ambient::dot(&d, e)).collect())
            })
            .collect()
    }

    /// Plain-value summary in the requested frame.
    pub fn sample(&self, hint: &FrameHint) -> Result<GeometrySample, GeometryError> {
        let frame = self.frame(hint)?;
        let b = self.second_fundamental_form(&frame)?;
        let omega = self.connection_forms(&frame)?;
        Ok(GeometrySample {
            point: self.point.clone(),
            model: self.model,
            position: self.position(),
            metric: self.induced_metric(),
            frame_kind: frame.kind,
            frame: frame.values(),
            connection_forms: omega
                .iter()
                .map(|r| r.iter().map(|c| jv::values(c)).collect())
                .collect(),
            second_fundamental_form: b.iter().map(|r| r.iter().map(|v| jv::values(v)).collect()).collect(),
            mean_curvature: self.mean_curvature_value(),
        })
    }

    /// Christoffel symbols `Γ^k_ij` of the induced metric as jets of order 2.
    pub fn christoffel(&self) -> Result<Vec<Vec<Vec<Jet>>>, GeometryError> {
        let m = self.m;
        // dg[l][i][j] = ∂_l g_ij
        let dg: Vec<Vec<Vec<Jet>>> = (0..m)
            .map(|l| {
                (0..m)
                    .map(|i| (0..m).map(|j| self.metric[i][j].derivative(l)).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let mut gamma = vec![vec![Vec::with_capacity(m); m]; m];
        for (k, gk) in gamma.iter_mut().enumerate() {
            for i in 0..m {
                for j in 0..m {
                    let mut s: Option<Jet> = None;
                    for l in 0..m {
                        let lower = &(&dg[i][j][l] + &dg[j][i][l]) - &dg[l][i][j];
                        let t = &self.inv_metric[k][l] * &lower;
                        s = Some(match s {
                            None => t,
                            Some(acc) => acc + t,
                        });
                    }
                    gk[i].push(s.expect("m >= 1").scale(0.5));
                }
            }
        }
        Ok(gamma)
    }

    /// Tension field by the Christoffel route,
    /// `τ = g^{ij}(P_amb(∂_i∂_jφ) − Γ^k_ij ∂_kφ)`.
    pub fn tension_christoffel(&self) -> Result<Vec<f64>, GeometryError> {
        let m = self.m;
        let gamma = self.christoffel()?;
        let n = self.model.embedding_dimension();
        let mut tau = vec![0.0; n];
        for i in 0..m {
            for j in 0..m {
                let gij = self.inv_metric[i][j].value();
                let mut v = self.base.ambient(&jv::values(&self.ddphi[i][j]));
                for (k, g) in gamma.iter().enumerate() {
                    let c = g[i][j].value();
                    let dk = jv::values(&self.dphi[k]);
                    v.iter_mut().zip(&dk).for_each(|(x, y)| *x -= c * y);
                }
                tau.iter_mut().zip(&v).for_each(|(t, x)| *t += gij * x);
            }
        }
        Ok(tau)
    }

    /// `τ(φ) = mH`, cross-checked against the Christoffel route.
    pub fn tension(&self) -> Result<Vec<f64>, GeometryError> {
        let h = self.mean_curvature_value();
        let tau: Vec<f64> = h.iter().map(|x| x * self.m as f64).collect();
        let other = self.tension_christoffel()?;
        let diff = tau
            .iter()
            .zip(&other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if diff > STRUCTURE_TOL * (1.0 + ambient::norm(&tau)) {
            return Err(GeometryError::TensionMismatch(diff));
        }
        Ok(tau)
    }

    /// All terms of the bitension field in the coordinate frame.
    pub fn bitension_terms(&self) -> Result<BitensionTerms, GeometryError> {
        self.bitension_terms_with(None)
    }

    fn perturbed_b(&self, frame: &Frame, perturbation: Option<BPerturbation>) -> Result<Vec<Vec<Vec<Jet>>>, GeometryError> {
        let mut b = self.second_fundamental_form(frame)?;
        if let Some(p) = perturbation {
            let (i, j) = p.entry;
            let mut profile = self.offsets[0].constant_like(1.0);
            for t in &self.offsets {
                profile += t;
            }
            let je1 = self.j(&frame.vectors[0]);
            let delta = jv::scale(&je1, &profile.scale(p.magnitude));
            b[i][j] = jv::add(&b[i][j], &delta);
            if i != j {
                b[j][i] = jv::add(&b[j][i], &delta);
            }
        }
        Ok(b)
    }

    /// `(∇⊥_{e_a}B)(e_b,e_c) = ∇⊥_{e_a}(B(e_b,e_c)) − B(∇_{e_a}e_b,e_c) − B(e_b,∇_{e_a}e_c)`
    fn covariant_b(&self, frame: &Frame, b: &[Vec<Vec<Jet>>], omega: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<Vec<Vec<f64>>>>, GeometryError> {
        let m = self.m;
        let n = self.model.embedding_dimension();
        let b0: Vec<Vec<Vec<f64>>> = b.iter().map(|r| r.iter().map(|v| jv::values(v)).collect()).collect();
        let mut out = vec![vec![vec![vec![0.0; n]; m]; m]; m];
        for a in 0..m {
            for bi in 0..m {
                for c in 0..m {
                    if c < bi {
                        out[a][bi][c] = out[a][c][bi].clone();
                        continue;
                    }
                    let d = self.directional_value(frame, a, &b[bi][c])?;
                    let mut v = self.base.normal(&d);
                    for l in 0..m {
                        let w1 = omega[a][bi][l];
                        let w2 = omega[a][c][l];
                        for k in 0..n {
                            v[k] -= w1 * b0[l][c][k] + w2 * b0[bi][l][k];
                        }
                    }
                    out[a][bi][c] = v;
                }
            }
        }
        Ok(out)
    }

    fn bitension_terms_with(&self, perturbation: Option<BPerturbation>) -> Result<BitensionTerms, GeometryError> {
        let m = self.m;
        let n = self.model.embedding_dimension();
        let frame = &self.frame;
        let fv = frame.values();
        let h = &self.mean_curvature;
        let h0 = jv::values(h);
        let b = self.perturbed_b(frame, perturbation)?;
        let b0: Vec<Vec<Vec<f64>>> = b.iter().map(|r| r.iter().map(|v| jv::values(v)).collect()).collect();
        let omega_j = self.connection_forms(frame)?;
        let omega: Vec<Vec<Vec<f64>>> = omega_j.iter().map(|r| r.iter().map(|c| jv::values(c)).collect()).collect();

        // ∇⊥_{e_a}H and ∇̄_{e_a}H
        let mut nperp = Vec::with_capacity(m);
        let mut nbar = Vec::with_capacity(m);
        for a in 0..m {
            let d = self.directional(frame, a, h)?;
            nperp.push(self.normal_project(&d));
            nbar.push(self.ambient_project(&d));
        }
        let normal_laplacian = self.second_order_trace(frame, &omega_j, &nperp, |v| self.base.normal(v))?;
        let rough_laplacian = self.second_order_trace(frame, &omega_j, &nbar, |v| self.base.ambient(v))?;

        // A_H e_a = Σ_b ⟨B_ab, H⟩ e_b as jets
        let shape_h: Vec<Vec<Jet>> = (0..m)
            .map(|a| {
                let mut v: Vec<Jet> = frame.vectors[0].iter().map(Jet::zero_like).collect();
                for bi in 0..m {
                    let c = jv::dot(&b[a][bi], h);
                    jv::axpy(&mut v, &c, &frame.vectors[bi]);
                }
                v
            })
            .collect();
        let base = &self.base;
        let mut trace_nabla_shape = vec![0.0; n];
        for a in 0..m {
            let d = self.directional_value(frame, a, &shape_h[a])?;
            let t = base.tangent(&d);
            for k in 0..n {
                trace_nabla_shape[k] += t[k];
            }
            for l in 0..m {
                let w = omega[a][a][l];
                let s = jv::values(&shape_h[l]);
                for k in 0..n {
                    trace_nabla_shape[k] -= w * s[k];
                }
            }
        }

        let nperp0: Vec<Vec<f64>> = nperp.iter().map(|v| jv::values(v)).collect();
        let mut trace_shape_of_nabla_h = vec![0.0; n];
        let mut trace_b_shape = vec![0.0; n];
        for a in 0..m {
            for bi in 0..m {
                let c = ambient::dot(&b0[a][bi], &nperp0[a]);
                let ch = ambient::dot(&b0[a][bi], &h0);
                for k in 0..n {
                    trace_shape_of_nabla_h[k] += c * fv[bi][k];
                    trace_b_shape[k] += ch * b0[a][bi][k];
                }
            }
        }

        let mut curvature_sum = vec![0.0; n];
        for e in &fv {
            let r = self.model.curvature_operator(&h0, e, e);
            curvature_sum.iter_mut().zip(&r).for_each(|(s, x)| *s += x);
        }

        let covariant_b = self.covariant_b(frame, &b, &omega)?;

        Ok(BitensionTerms {
            m,
            epsilon: self.model.epsilon(),
            position: base.phi.clone(),
            frame: fv,
            mean_curvature: h0,
            second_fundamental_form: b0,
            connection_forms: omega,
            normal_derivative_h: nperp0,
            covariant_b,
            trace_nabla_shape,
            trace_shape_of_nabla_h,
            normal_laplacian,
            trace_b_shape,
            curvature_sum,
            rough_laplacian,
        })
    }

    /// Bitension field `τ₂ = m(Δ̄H − Σ R^N(H,e_i)e_i)` in ambient coordinates.
    pub fn bitension(&self) -> Result<Vec<f64>, GeometryError> {
        Ok(self.bitension_terms()?.bitension())
    }

    /// Max over frame triples of the Codazzi defect
    /// `|(R^N(e_a,e_b)e_c)^⊥ − ((∇⊥_{e_a}B)(e_b,e_c) − (∇⊥_{e_b}B)(e_a,e_c))|`.
    pub fn codazzi_residual(&self) -> Result<f64, GeometryError> {
        self.codazzi_residual_with(None)
    }

    pub fn codazzi_residual_with(&self, perturbation: Option<BPerturbation>) -> Result<f64, GeometryError> {
        let m = self.m;
        let fv = self.frame.values();
        let b = self.perturbed_b(&self.frame, perturbation)?;
        let omega: Vec<Vec<Vec<f64>>> = self
            .connection_forms(&self.frame)?
            .iter()
            .map(|r| r.iter().map(|c| jv::values(c)).collect())
            .collect();
        let nb = self.covariant_b(&self.frame, &b, &omega)?;
        let mut worst: f64 = 0.0;
        for a in 0..m {
            for bi in 0..m {
                for c in 0..m {
                    let r = self.base.normal(&self.model.curvature_operator(&fv[a], &fv[bi], &fv[c]));
                    let d: f64 = (0..r.len())
                        .map(|k| {
                            let x = r[k] - (nb[a][bi][c][k] - nb[bi][a][c][k]);
                            x * x
                        })
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(d);
                }
            }
        }
        Ok(worst)
    }

    /// Intrinsic curvature from metric jets alone (Christoffel route), in the
    /// coordinate frame.
    pub fn intrinsic_curvature_from_metric(&self) -> Result<IntrinsicCurvature, GeometryError> {
        let m = self.m;
        let gamma = self.christoffel()?;
        let g: Vec<Vec<f64>> = self.induced_metric();
        // riem[l][i][j][k] = R^l_{ijk}, R(∂_i,∂_j)∂_k = R^l_{ijk} ∂_l
        let mut riem = vec![vec![vec![vec![0.0; m]; m]; m]; m];
        for l in 0..m {
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let mut r = gamma[l][j][k].derivative(i)?.value() - gamma[l][i][k].derivative(j)?.value();
                        for p in 0..m {
                            r += gamma[l][i][p].value() * gamma[p][j][k].value()
                                - gamma[l][j][p].value() * gamma[p][i][k].value();
                        }
                        riem[l][i][j][k] = r;
                    }
                }
            }
        }
        let c: Vec<Vec<f64>> = self.frame.coeffs.iter().map(|r| jv::values(r)).collect();
        // ⟨R(e_a,e_b)e_c, e_d⟩
        let four = |a: usize, b: usize, cc: usize, d: usize| -> f64 {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let w = c[a][i] * c[b][j] * c[cc][k];
                        if w == 0.0 {
                            continue;
                        }
                        for l in 0..m {
                            for q in 0..m {
                                s += w * riem[l][i][j][k] * g[l][q] * c[d][q];
                            }
                        }
                    }
                }
            }
            s
        };
        let mut ricci = vec![vec![0.0; m]; m];
        let mut sectional = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in 0..m {
                ricci[a][b] = (0..m).map(|cc| four(a, cc, cc, b)).sum();
                if a != b {
                    sectional[a][b] = four(a, b, b, a);
                }
            }
        }
        Ok(IntrinsicCurvature { ricci, sectional })
    }

    /// Intrinsic curvature via the Gauss equation, in the coordinate frame.
    pub fn intrinsic_curvature_from_gauss(&self) -> Result<IntrinsicCurvature, GeometryError> {
        let sample = self.sample(&FrameHint::Coordinate)?;
        Ok(IntrinsicCurvature {
            ricci: sample.intrinsic_ricci(),
            sectional: sample.sectional_curvatures(),
        })
    }
}

fn alignment(v: &[f64], e: &[f64]) -> f64 {
    ambient::dot(v, e).abs() / ambient::norm(v).max(1e-300)
}

/// Gram–Schmidt of the coordinate vectors, tracking chart coefficients.
fn coordinate_frame(dphi: &[Vec<Jet>]) -> Result<Frame, GeometryError> {
    let m = dphi.len();
    let mut vectors: Vec<Vec<Jet>> = Vec::with_capacity(m);
    let mut coeffs: Vec<Vec<Jet>> = Vec::with_capacity(m);
    let mut gram_det = 1.0;
    for k in 0..m {
        let mut v = dphi[k].clone();
        let mut c: Vec<Jet> = (0..m)
            .map(|i| v[0].constant_like(if i == k { 1.0 } else { 0.0 }))
            .collect();
        for (e, ce) in vectors.iter().zip(&coeffs) {
            let p = jv::dot(&v, e);
            jv::axmy(&mut v, &p, e);
            jv::axmy(&mut c, &p, ce);
        }
        let n2 = jv::dot(&v, &v);
        gram_det *= n2.value();
        if !(n2.value() > 1e-24) || !(gram_det > 1e-12) {
            return Err(GeometryError::DegenerateDifferential(gram_det));
        }
        let inv = n2.sqrt()?.recip()?;
        vectors.push(jv::scale(&v, &inv));
        coeffs.push(jv::scale(&c, &inv));
    }
    Ok(Frame {
        kind: FrameKind::Coordinate,
        vectors,
        coeffs,
    })
}

/// Induced metric of `imm` at `p`.
pub fn induced_metric(imm: &Immersion, p: &[f64]) -> Result<Vec<Vec<f64>>, GeometryError> {
    Ok(LocalGeometry::at(imm, p)?.induced_metric())
}

/// Plain-value orthonormal frame at `p`.
pub fn adapted_frame(imm: &Immersion, p: &[f64], hint: &FrameHint) -> Result<Vec<Vec<f64>>, GeometryError> {
    Ok(LocalGeometry::at(imm, p)?.frame(hint)?.values())
}

pub fn tension(imm: &Immersion, p: &[f64]) -> Result<Vec<f64>, GeometryError> {
    LocalGeometry::at(imm, p)?.tension()
}

pub fn bitension(imm: &Immersion, p: &[f64]) -> Result<Vec<f64>, GeometryError> {
    LocalGeometry::at(imm, p)?.bitension()
}

pub fn codazzi_residual(imm: &Immersion, p: &[f64]) -> Result<f64, GeometryError> {
    LocalGeometry::at(imm, p)?.codazzi_residual()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::ComplexJet;

    fn plane(m: usize) -> Immersion {
        Immersion::new(
            "plane",
            m,
            AmbientModel::Flat { m },
            SampleDomain {
                axes: vec![Axis::closed(-1.0, 1.0); m],
            },
            move |x: &[Jet]| {
                let mut out = Vec::with_capacity(2 * m);
                for xi in x {
                    out.push(xi.clone());
                    out.push(xi.zero_like());
                }
                Ok(out)
            },
        )
    }

    fn circle() -> Immersion {
        Immersion::new(
            "circle",
            1,
            AmbientModel::Flat { m: 1 },
            SampleDomain {
                axes: vec![Axis::periodic(0.0, std::f64::consts::TAU)],
            },
            |x: &[Jet]| {
                let z = ComplexJet::expi(&x[0]);
                Ok(vec![z.re, z.im])
            },
        )
    }

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn grid_shapes() {
        let d = SampleDomain {
            axes: vec![Axis::periodic(0.0, 1.0), Axis::closed(0.0, 1.0)],
        };
        let g = d.grid(&[4, 3]);
        assert_eq!(g.len(), 12);
        assert_eq!(g[0], vec![0.0, 0.0]);
        assert_eq!(g[2], vec![0.0, 1.0]);
        assert_eq!(g[11], vec![0.75, 1.0]);
        assert!(d.grid(&[0, 3]).is_empty());
    }

    #[test]
    fn plane_is_totally_geodesic() {
        let imm = plane(2);
        let geo = LocalGeometry::at(&imm, &[0.2, -0.3]).unwrap();
        let g = geo.induced_metric();
        assert_eq!(g, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let b = geo.second_fundamental_form(geo.coordinate_frame()).unwrap();
        for row in &b {
            for v in row {
                assert!(jv::values(v).iter().all(|x| x.abs() < 1e-15));
            }
        }
        assert!(max_abs(&geo.tension().unwrap()) < 1e-15);
        assert!(max_abs(&geo.bitension().unwrap()) < 1e-15);
        assert!(geo.codazzi_residual().unwrap() < 1e-12);
        assert!(matches!(
            geo.adapted_frame(&FrameGauge::default()),
            Err(GeometryError::MinimalPoint(_))
        ));
    }

    #[test]
    fn circle_curvature_and_laplacians() {
        let imm = circle();
        let t = 0.7f64;
        let geo = LocalGeometry::at(&imm, &[t]).unwrap();
        let h = geo.mean_curvature_value();
        // inward unit normal
        assert!((h[0] + t.cos()).abs() < 1e-14 && (h[1] + t.sin()).abs() < 1e-14);
        let tau = geo.tension().unwrap();
        assert!((ambient::norm(&tau) - 1.0).abs() < 1e-13);

        let frame = geo.coordinate_frame().clone();
        let rough = geo.rough_laplacian(&frame, geo.mean_curvature()).unwrap();
        for (a, b) in rough.iter().zip(&h) {
            assert!((a - b).abs() < 1e-12, "rough Laplacian of H should equal H");
        }
        let perp = geo.normal_laplacian(&frame, geo.mean_curvature()).unwrap();
        assert!(max_abs(&perp) < 1e-12, "unit normal of a plane curve is parallel");

        let tau2 = geo.bitension().unwrap();
        // τ₂ = −γ
        assert!((tau2[0] + t.cos()).abs() < 1e-12 && (tau2[1] + t.sin()).abs() < 1e-12);
        let terms = geo.bitension_terms().unwrap();
        for (a, b) in terms.rough_laplacian.iter().zip(terms.rough_laplacian_split()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_circle_second_fundamental_form() {
        let imm = circle();
        let geo = LocalGeometry::at(&imm, &[1.3]).unwrap();
        let b = geo.second_fundamental_form(geo.coordinate_frame()).unwrap();
        let v = jv::values(&b[0][0]);
        assert!((ambient::norm(&v) - 1.0).abs() < 1e-14);
        // inward: opposite to the position vector
        assert!(ambient::dot(&v, &geo.position()) < 0.0);
    }

    #[test]
    fn normal_derivative_is_linear_and_checks_normality() {
        let imm = circle();
        let geo = LocalGeometry::at(&imm, &[0.4]).unwrap();
        let frame = geo.coordinate_frame().clone();
        let h = geo.mean_curvature().to_vec();
        let d1 = jv::values(&geo.normal_derivative(&frame, 0, &h).unwrap());
        let d2 = jv::values(&geo.normal_derivative(&frame, 0, &jv::scale_f64(&h, 2.0)).unwrap());
        for (a, b) in d1.iter().zip(&d2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        let tangent = frame.vectors[0].clone();
        assert!(matches!(
            geo.normal_derivative(&frame, 0, &tangent),
            Err(GeometryError::NotNormal(_))
        ));
    }

    #[test]
    fn degenerate_map_rejected() {
        let imm = Immersion::new(
            "fold",
            2,
            AmbientModel::Flat { m: 2 },
            SampleDomain {
                axes: vec![Axis::closed(-1.0, 1.0); 2],
            },
            |x: &[Jet]| Ok(vec![x[0].clone(), x[0].zero_like(), x[0].clone(), x[0].zero_like()]),
        );
        assert!(matches!(
            LocalGeometry::at(&imm, &[0.0, 0.0]),
            Err(GeometryError::DegenerateDifferential(_))
        ));
    }

    #[test]
    fn wrong_arity_rejected() {
        let imm = plane(2);
        assert!(matches!(
            LocalGeometry::at(&imm, &[0.0]),
            Err(GeometryError::Arity { .. })
        ));
    }

    #[test]
    fn shifted_chart_agrees() {
        let imm = circle();
        let moved = imm.shifted(&[0.5]);
        let a = imm.eval(&[1.0]).unwrap();
        let b = moved.eval(&[0.5]).unwrap();
        assert_eq!(a, b);
    }
}
