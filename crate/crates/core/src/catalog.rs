//! Named immersion constructors and user-supplied immersion files.
//!
//! Built-ins are [`ImmersionFactory`] trait objects looked up by key. Any
//! key that is not a built-in is read as the path of a TOML immersion file:
//!
//! ```toml
//! name = "helix"
//! target = "flat"          # or "projective"
//! m = 1
//! components = ["cos(x0)", "sin(x0)"]
//!
//! [params]
//! r = 1.0
//!
//! [[axes]]
//! lo = 0.0
//! hi = 6.283185307179586
//! periodic = true
//! ```
//!
//! A flat target of chart dimension `m` takes `2m` real components
//! `(Re z₁, Im z₁, …)`; a projective target takes the `2m+2` components of a
//! horizontal lift into `S^{2m+1}`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::AmbientModel;
use crate::expr::{Expr, ExprError};
use crate::family::{self, FamilyError};
use crate::geometry::{Axis, Immersion, SampleDomain};
use crate::jets::Jet;

/// Default RK4 step for curves integrated on demand.
pub const DEFAULT_ODE_STEP: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("`{0}` is neither a built-in immersion nor a readable file")]
    Unknown(String),
    #[error("{key} needs m >= {min}, got {m}")]
    Dimension { key: String, m: usize, min: usize },
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("immersion file {path}: {message}")]
    File { path: String, message: String },
    #[error("immersion file {path}: {source}")]
    Expr {
        path: String,
        #[source]
        source: ExprError,
    },
}

/// Which `μ` a family member uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuSelector {
    /// Index into `[+big, −big, +small, −small]`.
    Root(usize),
    Value(f64),
}

impl Default for MuSelector {
    fn default() -> Self {
        MuSelector::Root(0)
    }
}

impl MuSelector {
    pub fn resolve(&self, m: usize) -> Result<f64, FamilyError> {
        match *self {
            MuSelector::Root(i) => family::mu_roots(m)?.get(i),
            MuSelector::Value(mu) => Ok(mu),
        }
    }
}

/// Legendre curve behind `warped-from-ode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    /// Constant `λ = (μ²−1)/μ` from the closed-form initial data.
    #[default]
    Biharmonic,
    /// The non-biharmonic control curve `λ = 2 + ½ sin x`.
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogParams {
    pub m: usize,
    pub mu: MuSelector,
    pub curve: CurveKind,
    pub ode_step: f64,
}

impl Default for CatalogParams {
    fn default() -> Self {
        CatalogParams {
            m: 2,
            mu: MuSelector::default(),
            curve: CurveKind::default(),
            ode_step: DEFAULT_ODE_STEP,
        }
    }
}

/// Closed-form `(λ, μ)` a catalog member was built from, when it has one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParameters {
    pub lambda: f64,
    pub mu: f64,
}

pub struct BuiltImmersion {
    pub immersion: Immersion,
    pub parameters: Option<FamilyParameters>,
}

pub trait ImmersionFactory: Send + Sync {
    fn key(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    /// Whether the member depends on the `μ` selector.
    fn uses_mu(&self) -> bool {
        false
    }
    fn build(&self, params: &CatalogParams) -> Result<BuiltImmersion, CatalogError>;
}

fn plain(immersion: Immersion) -> BuiltImmersion {
    BuiltImmersion {
        immersion,
        parameters: None,
    }
}

fn need_m(key: &str, m: usize, min: usize) -> Result<(), CatalogError> {
    if m < min {
        return Err(CatalogError::Dimension {
            key: key.to_string(),
            m,
            min,
        });
    }
    Ok(())
}

struct FlatPlane;
struct Circle;
struct Chen;
struct WarpedFromOde;
struct CliffordTorus;
struct HolomorphicControl;

static FACTORIES: [&dyn ImmersionFactory; 6] = [&FlatPlane, &Circle, &Chen, &WarpedFromOde, &CliffordTorus, &HolomorphicControl];

pub fn factories() -> &'static [&'static dyn ImmersionFactory] {
    &FACTORIES
}

pub fn lookup(key: &str) -> Option<&'static dyn ImmersionFactory> {
    FACTORIES.iter().copied().find(|f| f.key() == key)
}

pub fn keys() -> Vec<&'static str> {
    FACTORIES.iter().map(|f| f.key()).collect()
}

/// Builds a catalog member, or loads `key` as an immersion file.
pub fn build(key: &str, params: &CatalogParams) -> Result<BuiltImmersion, CatalogError> {
    if let Some(f) = lookup(key) {
        return f.build(params);
    }
    let path = Path::new(key);
    if path.is_file() {
        return load_immersion_file(path).map(plain);
    }
    Err(CatalogError::Unknown(key.to_string()))
}

impl ImmersionFactory for FlatPlane {
    fn key(&self) -> &'static str {
        "flat-plane"
    }

    fn summary(&self) -> &'static str {
        "totally geodesic Lagrangian R^m in C^m"
    }

    fn build(&self, params: &CatalogParams) -> Result<BuiltImmersion, CatalogError> {
        let m = params.m;
        need_m(self.key(), m, 1)?;
        Ok(plain(Immersion::new(
            format!("flat-plane(m={m})"),
            m,
            AmbientModel::Flat { m },
            SampleDomain {
                axes: vec![Axis::closed(-1.0, 1.0); m],
            },
            |x: &[Jet]| Ok(x.iter().flat_map(|xk| [xk.clone(), xk.zero_like()]).collect()),
        )))
    }
}

impl ImmersionFactory for Circle {
    fn key(&self) -> &'static str {
        "circle"
    }

    fn summary(&self) -> &'static str {
        "unit circle in C; biharmonic only if harmonic, so a negative control"
    }

    fn build(&self, _params: &CatalogParams) -> Result<BuiltImmersion, CatalogError> {
        Ok(plain(Immersion::new(
            "circle",
            1,
            AmbientModel::Flat { m: 1 },
            SampleDomain {
                axes: vec![Axis::periodic(0.0, TAU)],
            },
            |x: &[Jet]| Ok(vec![x[0].cos(), x[0].sin()]),
        )))
    }
}

impl ImmersionFactory for Chen {
    fn key(&self) -> &'static str {
        "chen"
    }

    fn summary(&self) -> &'static str {
        "closed-form biharmonic H-umbilical Lagrangian family in CP^m"
    }

    fn uses_mu(&self) -> bool {
        true
    }

    fn build(&self, params: &CatalogParams) -> Result<BuiltImmersion, CatalogError> {
        need_m(self.key(), params.m, 2)?;
        let mu = params.mu.resolve(params.m)?;
        Ok(BuiltImmersion {
            immersion: family::chen_immersion(params.m, mu)?,
            parameters: Some(FamilyParameters {
                lambda: family::lambda_from_mu(mu)?,
                mu,
            }),
        })
    }
}

impl ImmersionFactory for WarpedFromOde {
    fn key(&self) -> &'static str {
        "warped-from-ode"
    }

    fn summary(&self) -> &'static str {
        "warped product over an RK4-integrated Legendre curve"
    }

    fn uses_mu(&self) -> bool {
        true
    }

    fn build(&self, params: &CatalogParams) -> Result<BuiltImmersion, CatalogError> {
        need_m(self.key(), params.m, 2)?;
        let (curve, parameters) = match params.curve {
            CurveKind::Biharmonic => {
                let mu = params.mu.resolve(params.m)?;
                let curve = family::chen_ode_curve(mu, params.ode_step)?;
                let lambda = family::lambda_from_mu(mu)?;
                (curve, Some(FamilyParameters { lambda, mu }))
            }
            CurveKind::Generic => (family::generic_curve(params.ode_step)?, None),
        };
        Ok(BuiltImmersion {
            immersion: family::warped_product_immersion(&curve, params.m)?,
            parameters,
        })
    }
}

impl ImmersionFactory for CliffordTorus {
    fn key(&self) -> &'static str {
        "clifford-lagrangian-torus"
    }

    fn summary(&self) -> &'static str {
        "minimal Lagrangian torus (e^{iθ₀},…,e^{iθ_m})/√(m+1), Σθ = 0, in CP^m"
    }

    fn build(&self, params: &CatalogParams) -> Result<BuiltImmersion, CatalogError> {
        let m = params.m;
        need_m(self.key(), m, 1)?;
        let r = 1.0 / ((m + 1) as f64).sqrt();
        Ok(plain(Immersion::new(
            format!("clifford-lagrangian-torus(m={m})"),
            m,
            AmbientModel::ProjectiveViaLift { m },
            SampleDomain {
                axes: vec![Axis::periodic(0.0, TAU); m],
            },
            move |x: &[Jet]| {
                let mut last = x[0].zero_like();
                let mut out = Vec::with_capacity(2 * m + 2);
                for t in x {
                    last -= t;
                    out.push(t.cos().scale(r));
                    out.push(t.sin().scale(r));
                }
                out.push(last.cos().scale(r));
                out.push(last.sin().scale(r));
                Ok(out)
            },
        )))
    }
}

impl ImmersionFactory for HolomorphicControl {
    fn key(&self) -> &'static str {
        "holomorphic-control"
    }

    fn summary(&self) -> &'static str {
        "complex curve (z, z²/2) in C²; minimal and not Lagrangian"
    }

    fn build(&self, _params: &CatalogParams) -> Result<BuiltImmersion, CatalogError> {
        Ok(plain(Immersion::new(
            "holomorphic-control",
            2,
            AmbientModel::Flat { m: 2 },
            SampleDomain {
                axes: vec![Axis::closed(-1.0, 1.0); 2],
            },
            |x: &[Jet]| {
                let (u, v) = (&x[0], &x[1]);
                let re = (&(u * u) - &(v * v)).scale(0.5);
                Ok(vec![u.clone(), v.clone(), re, u * v])
            },
        )))
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum TargetKind {
    Flat,
    Projective,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImmersionFile {
    name: Option<String>,
    target: TargetKind,
    m: usize,
    components: Vec<String>,
    axes: Vec<Axis>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

/// Reads an immersion file; see the module docs for the format.
pub fn load_immersion_file(path: &Path) -> Result<Immersion, CatalogError> {
    let shown = path.display().to_string();
    let file_err = |message: String| CatalogError::File {
        path: shown.clone(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
    let spec: ImmersionFile = toml::from_str(&text).map_err(|e| file_err(e.to_string()))?;
    let m = spec.m;
    if m == 0 {
        return Err(file_err("m must be at least 1".into()));
    }
    let target = match spec.target {
        TargetKind::Flat => AmbientModel::Flat { m },
        TargetKind::Projective => AmbientModel::ProjectiveViaLift { m },
    };
    let expected = target.embedding_dimension();
    if spec.components.len() != expected {
        return Err(file_err(format!("{} components given, target needs {expected}", spec.components.len())));
    }
    if spec.axes.len() != m {
        return Err(file_err(format!("{} axes given, chart has {m}", spec.axes.len())));
    }
    if let Some(a) = spec.axes.iter().find(|a| !(a.lo < a.hi)) {
        return Err(file_err(format!("empty axis [{}, {}]", a.lo, a.hi)));
    }
    let exprs: Vec<Expr> = spec
        .components
        .iter()
        .map(|c| Expr::parse(c, m, &spec.params))
        .collect::<Result<_, _>>()
        .map_err(|source| CatalogError::Expr {
            path: shown.clone(),
            source,
        })?;
    Ok(Immersion::new(
        spec.name.unwrap_or(shown),
        m,
        target,
        SampleDomain { axes: spec.axes },
        move |x: &[Jet]| exprs.iter().map(|e| e.eval(x)).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::lagrangian_defect;

    #[test]
    fn keys_are_registered() {
        assert_eq!(
            keys(),
            vec!["flat-plane", "circle", "chen", "warped-from-ode", "clifford-lagrangian-torus", "holomorphic-control"]
        );
        assert!(matches!(build("no-such-thing", &CatalogParams::default()), Err(CatalogError::Unknown(_))));
    }

    #[test]
    fn every_member_builds_and_evaluates() {
        for f in factories() {
            let built = f.build(&CatalogParams::default()).unwrap();
            let imm = &built.immersion;
            let p: Vec<f64> = imm.domain().axes.iter().map(|a| 0.3 * a.lo + 0.7 * a.hi).collect();
            let v = imm.eval(&p).unwrap();
            assert_eq!(v.len(), imm.target().embedding_dimension(), "{}", f.key());
            assert_eq!(built.parameters.is_some(), f.uses_mu(), "{}", f.key());
        }
    }

    #[test]
    fn lagrangian_members() {
        let params = CatalogParams { m: 3, ..Default::default() };
        for key in ["flat-plane", "chen", "clifford-lagrangian-torus"] {
            let imm = build(key, &params).unwrap().immersion;
            let p: Vec<f64> = imm.domain().axes.iter().map(|a| 0.4 * a.lo + 0.6 * a.hi).collect();
            assert!(lagrangian_defect(&imm, &p).unwrap() < 1e-12, "{key}");
        }
        let imm = build("holomorphic-control", &params).unwrap().immersion;
        assert!(lagrangian_defect(&imm, &[0.2, 0.1]).unwrap() > 0.5);
    }

    #[test]
    fn mu_selector() {
        let r = family::mu_roots(3).unwrap();
        assert_eq!(MuSelector::Root(2).resolve(3).unwrap(), r.roots[2]);
        assert_eq!(MuSelector::Value(1.5).resolve(3).unwrap(), 1.5);
        assert!(MuSelector::Root(4).resolve(3).is_err());
        let err = build("chen", &CatalogParams { m: 1, ..Default::default() });
        assert!(matches!(err, Err(CatalogError::Dimension { .. })));
    }

    #[test]
    fn immersion_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("circle.toml");
        std::fs::write(
            &path,
            "name = \"scaled circle\"\ntarget = \"flat\"\nm = 1\ncomponents = [\"r*cos(x0)\", \"r*sin(x0)\"]\n\
             [params]\nr = 2.0\n[[axes]]\nlo = 0.0\nhi = 6.283185307179586\nperiodic = true\n",
        )
        .unwrap();
        let imm = build(path.to_str().unwrap(), &CatalogParams::default()).unwrap().immersion;
        assert_eq!(imm.name(), "scaled circle");
        let v = imm.eval(&[0.0]).unwrap();
        assert_eq!(v, vec![2.0, 0.0]);

        std::fs::write(&path, "target = \"flat\"\nm = 1\ncomponents = [\"x0\"]\n[[axes]]\nlo = 0.0\nhi = 1.0\nperiodic = false\n").unwrap();
        assert!(matches!(load_immersion_file(&path), Err(CatalogError::File { .. })));
        std::fs::write(&path, "target = \"flat\"\nm = 1\ncomponents = [\"x0\", \"y\"]\n[[axes]]\nlo = 0.0\nhi = 1.0\nperiodic = false\n").unwrap();
        assert!(matches!(load_immersion_file(&path), Err(CatalogError::Expr { .. })));
    }
}
