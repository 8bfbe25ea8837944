//! Complex space form models.
//!
//! Flat `ℂ^m` is represented directly in `ℝ^{2m}`. `ℂP^m(4)` is never given
//! chart coordinates: points are unit vectors of `ℂ^{m+1}` (the Hopf lift)
//! and tangent vectors are horizontal vectors there, orthogonal to both `p`
//! and `ip`. On horizontal vectors the complex structure is multiplication
//! by `i` and the metric is the Euclidean product of `ℝ^{2m+2}`.
//!
//! Real coordinates are interleaved: `(Re z₁, Im z₁, Re z₂, Im z₂, …)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jets::Jet;

/// Tolerance for tangency / unit-norm preconditions.
pub const TANGENCY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AmbientError {
    #[error("vector is not tangent to the model at the base point (defect {0:e})")]
    NotTangent(f64),
    #[error("base point is not a unit vector (|p| - 1 = {0:e})")]
    NotUnit(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AmbientModel {
    /// `ℂ^m`, holomorphic sectional curvature 0.
    Flat { m: usize },
    /// `ℂP^m(4)` through its Legendrian lift to `S^{2m+1} ⊂ ℂ^{m+1}`.
    ProjectiveViaLift { m: usize },
}

impl AmbientModel {
    /// Complex dimension of the space form.
    pub fn m(&self) -> usize {
        match *self {
            AmbientModel::Flat { m } | AmbientModel::ProjectiveViaLift { m } => m,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            AmbientModel::Flat { .. } => 0.0,
            AmbientModel::ProjectiveViaLift { .. } => 1.0,
        }
    }

    pub fn real_dimension(&self) -> usize {
        2 * self.m()
    }

    pub fn embedding_dimension(&self) -> usize {
        match self {
            AmbientModel::Flat { m } => 2 * m,
            AmbientModel::ProjectiveViaLift { m } => 2 * m + 2,
        }
    }

    pub fn is_lift(&self) -> bool {
        matches!(self, AmbientModel::ProjectiveViaLift { .. })
    }

    fn check_dim(&self, v: &[f64]) -> Result<(), AmbientError> {
        let n = self.embedding_dimension();
        if v.len() != n {
            return Err(AmbientError::Dimension {
                expected: n,
                got: v.len(),
            });
        }
        Ok(())
    }

    fn check_base(&self, p: &[f64]) -> Result<(), AmbientError> {
        self.check_dim(p)?;
        if self.is_lift() {
            let defect = norm(p) - 1.0;
            if defect.abs() > TANGENCY_TOL {
                return Err(AmbientError::NotUnit(defect));
            }
        }
        Ok(())
    }

    /// Size of the component of `u` outside the model's tangent space at `p`.
    pub fn tangent_defect(&self, p: &[f64], u: &[f64]) -> f64 {
        match self {
            AmbientModel::Flat { .. } => 0.0,
            AmbientModel::ProjectiveViaLift { .. } => dot(u, p).abs().max(dot(u, &complex_i(p)).abs()),
        }
    }

    /// Orthogonal projection onto the model's tangent space at `p`.
    pub fn project(&self, p: &[f64], u: &[f64]) -> Result<Vec<f64>, AmbientError> {
        match self {
            AmbientModel::Flat { .. } => {
                self.check_dim(u)?;
                Ok(u.to_vec())
            }
            AmbientModel::ProjectiveViaLift { .. } => horizontal_project(p, u),
        }
    }

    /// The complex structure `J` applied to a tangent vector.
    pub fn complex_structure_apply(&self, p: &[f64], u: &[f64]) -> Result<Vec<f64>, AmbientError> {
        self.check_base(p)?;
        self.check_dim(u)?;
        let defect = self.tangent_defect(p, u);
        if defect > TANGENCY_TOL {
            return Err(AmbientError::NotTangent(defect));
        }
        Ok(complex_i(u))
    }

    /// `R^N(U,V)W` of constant holomorphic sectional curvature `4ε`.
    pub fn curvature_operator(&self, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        curvature_operator(self.epsilon(), u, v, w)
    }

    /// Orthonormal basis of the real tangent space at `p` (`2m` vectors).
    pub fn tangent_basis(&self, p: &[f64]) -> Result<Vec<Vec<f64>>, AmbientError> {
        self.check_base(p)?;
        let n = self.embedding_dimension();
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(self.real_dimension());
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let mut v = self.project(p, &e)?;
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let r = norm(&v);
            if r > 1e-6 {
                basis.push(v.into_iter().map(|x| x / r).collect());
            }
            if basis.len() == self.real_dimension() {
                break;
            }
        }
        Ok(basis)
    }

    /// `Ric^N(U,V) = Σ_a ⟨R^N(U,f_a)f_a, V⟩` over an orthonormal tangent basis.
    pub fn ambient_ricci(&self, p: &[f64], u: &[f64], v: &[f64]) -> Result<f64, AmbientError> {
        let basis = self.tangent_basis(p)?;
        Ok(basis
            .iter()
            .map(|f| dot(&self.curvature_operator(u, f, f), v))
            .sum())
    }

    /// Einstein constant of the model: `Ric^N = 2(m+1)ε⟨·,·⟩`.
    pub fn einstein_constant(&self) -> f64 {
        2.0 * (self.m() as f64 + 1.0) * self.epsilon()
    }
}

/// `ε{⟨V,W⟩U − ⟨U,W⟩V + ⟨W,JV⟩JU − ⟨W,JU⟩JV + 2⟨U,JV⟩JW}`
pub fn curvature_operator(epsilon: f64, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
    if epsilon == 0.0 {
        return vec![0.0; u.len()];
    }
    let (ju, jv, jw) = (complex_i(u), complex_i(v), complex_i(w));
    let c_u = dot(v, w);
    let c_v = -dot(u, w);
    let c_ju = dot(w, &jv);
    let c_jv = -dot(w, &ju);
    let c_jw = 2.0 * dot(u, &jv);
    (0..u.len())
        .map(|k| epsilon * (c_u * u[k] + c_v * v[k] + c_ju * ju[k] + c_jv * jv[k] + c_jw * jw[k]))
        .collect()
}

/// `U − ⟨U,p⟩p − ⟨U,ip⟩ip` for a unit vector `p ∈ ℂ^{m+1}`.
pub fn horizontal_project(p: &[f64], u: &[f64]) -> Result<Vec<f64>, AmbientError> {
    if p.len() != u.len() || !p.len().is_multiple_of(2) {
        return Err(AmbientError::Dimension {
            expected: p.len(),
            got: u.len(),
        });
    }
    let defect = norm(p) - 1.0;
    if defect.abs() > TANGENCY_TOL {
        return Err(AmbientError::NotUnit(defect));
    }
    let ip = complex_i(p);
    let a = dot(u, p);
    let b = dot(u, &ip);
    Ok((0..u.len()).map(|k| u[k] - a * p[k] - b * ip[k]).collect())
}

/// Multiplication by `i` in interleaved real coordinates.
pub fn complex_i(u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for k in (0..u.len()).step_by(2) {
        out[k] = -u[k + 1];
        out[k + 1] = u[k];
    }
    out
}

/// Multiplication by `i` on a jet-valued vector.
pub fn complex_i_jets(u: &[Jet]) -> Vec<Jet> {
    let mut out = Vec::with_capacity(u.len());
    for k in (0..u.len()).step_by(2) {
        out.push(-&u[k + 1]);
        out.push(u[k].clone());
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_s5() -> Vec<f64> {
        let raw = [0.3, -0.2, 0.5, 0.1, -0.4, 0.6];
        let r = norm(&raw);
        raw.iter().map(|x| x / r).collect()
    }

    #[test]
    fn flat_j_of_one_is_i() {
        let model = AmbientModel::Flat { m: 1 };
        let ju = model.complex_structure_apply(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(ju, vec![0.0, 1.0]);
    }

    #[test]
    fn j_squared_is_minus_identity() {
        let u = [0.3, -1.2, 2.0, 0.7];
        let jju = complex_i(&complex_i(&u));
        for (a, b) in jju.iter().zip(u) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn horizontal_j_is_orthogonal() {
        let p = unit_s5();
        let model = AmbientModel::ProjectiveViaLift { m: 2 };
        let u = horizontal_project(&p, &[1.0, 2.0, -0.5, 0.3, 0.9, -1.1]).unwrap();
        let ju = model.complex_structure_apply(&p, &u).unwrap();
        assert!(dot(&ju, &u).abs() < 1e-12);
        assert!((norm(&ju) - norm(&u)).abs() < 1e-12);
    }

    #[test]
    fn non_horizontal_input_rejected() {
        let p = unit_s5();
        let model = AmbientModel::ProjectiveViaLift { m: 2 };
        assert!(matches!(
            model.complex_structure_apply(&p, &p),
            Err(AmbientError::NotTangent(_))
        ));
    }

    #[test]
    fn flat_curvature_vanishes() {
        let model = AmbientModel::Flat { m: 2 };
        let r = model.curvature_operator(&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0], &[0.0, 0.0, 1.0, 0.0]);
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn curvature_antisymmetric_in_first_pair() {
        let u = [0.3, -1.2, 2.0, 0.7];
        let w = [1.0, 0.5, -0.2, 0.1];
        let r = curvature_operator(1.0, &u, &u, &w);
        assert!(r.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn unit_sectional_block() {
        // U, V orthonormal with JU ⊥ V and W = V gives R(U,V)V = U
        let u = [1.0, 0.0, 0.0, 0.0];
        let v = [0.0, 0.0, 1.0, 0.0];
        let r = curvature_operator(1.0, &u, &v, &v);
        for (a, b) in r.iter().zip(u) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn ricci_trace_matches_einstein_constant() {
        let p = unit_s5();
        let model = AmbientModel::ProjectiveViaLift { m: 2 };
        let u = horizontal_project(&p, &[1.0, 2.0, -0.5, 0.3, 0.9, -1.1]).unwrap();
        let r = norm(&u);
        let u: Vec<f64> = u.iter().map(|x| x / r).collect();
        let ric = model.ambient_ricci(&p, &u, &u).unwrap();
        assert!((ric - 6.0).abs() < 1e-12, "{ric}");
        assert_eq!(model.einstein_constant(), 6.0);

        let flat = AmbientModel::Flat { m: 2 };
        assert_eq!(flat.ambient_ricci(&[0.0; 4], &[1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn ricci_of_orthogonal_pair_vanishes() {
        let p = unit_s5();
        let model = AmbientModel::ProjectiveViaLift { m: 2 };
        let basis = model.tangent_basis(&p).unwrap();
        assert_eq!(basis.len(), 4);
        let ric = model.ambient_ricci(&p, &basis[0], &basis[2]).unwrap();
        assert!(ric.abs() < 1e-12);
    }

    #[test]
    fn projection_kills_fiber_directions() {
        let p = unit_s5();
        assert!(norm(&horizontal_project(&p, &p).unwrap()) < 1e-15);
        assert!(norm(&horizontal_project(&p, &complex_i(&p)).unwrap()) < 1e-15);
        let u = horizontal_project(&p, &[1.0, 2.0, -0.5, 0.3, 0.9, -1.1]).unwrap();
        let uu = horizontal_project(&p, &u).unwrap();
        for (a, b) in u.iter().zip(&uu) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            horizontal_project(&[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]),
            Err(AmbientError::NotUnit(_))
        ));
    }
}
