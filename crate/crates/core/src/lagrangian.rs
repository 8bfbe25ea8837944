//! Lagrangian structure detectors: the Lagrangian condition, the
//! H-umbilical fit `B(e₁,e₁) = λJe₁`, `B(e_i,e_i) = μJe₁`, `B(e₁,e_i) = μJe_i`,
//! connection forms in the adapted frame, the PNMC defect and the
//! Codazzi consequences that every H-umbilical Lagrangian immersion obeys.
//!
//! Frame quantities follow `ω[i][j][l] = ω^l_j(e_i) = ⟨∇_{e_i}e_j, e_l⟩`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{self, complex_i};
use crate::geometry::{FrameGauge, FrameHint, GeometryError, Immersion, LocalGeometry, MINIMAL_TOL};
use crate::jets::{vector as jv, Jet};

/// Fit residual below which the derived H-umbilical identities are evaluated.
pub const FIT_GATE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LagrangianError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("minimal point with nonzero second fundamental form (|H| = {0:e}); not H-umbilical")]
    MinimalPoint(f64),
    #[error("not H-umbilical: fit residual {0:e}")]
    NotHUmbilical(f64),
}

/// `max |⟨J e_i, e_j⟩|` over an orthonormal tangent frame, and for lifts
/// also `max |⟨i f̃, e_i⟩|`. Needs only first derivatives.
pub fn lagrangian_defect(imm: &Immersion, p: &[f64]) -> Result<f64, GeometryError> {
    let x: Vec<Jet> = Jet::seed(p)?.into_iter().map(|j| j.truncate(1)).collect();
    let phi = imm.eval_jets(&x)?;
    let position = jv::values(&phi);
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let mut v: Vec<f64> = phi
            .iter()
            .map(|c| c.derivative(k).map(|d| d.value()))
            .collect::<Result<_, _>>()?;
        for e in &frame {
            let c = ambient::dot(&v, e);
            v.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
        }
        let n = ambient::norm(&v);
        if !(n > 1e-12) {
            return Err(GeometryError::DegenerateDifferential(n * n));
        }
        frame.push(v.into_iter().map(|a| a / n).collect());
    }
    Ok(frame_defect(&frame, imm.target().is_lift().then_some(position.as_slice())))
}

/// Same as [`lagrangian_defect`] from an already built local geometry.
pub fn lagrangian_defect_at(geo: &LocalGeometry<'_>) -> f64 {
    let frame = geo.coordinate_frame().values();
    let position = geo.position();
    frame_defect(&frame, geo.model().is_lift().then_some(position.as_slice()))
}

/// `position` is given for lifts, adding the Legendrian condition.
fn frame_defect(frame: &[Vec<f64>], position: Option<&[f64]>) -> f64 {
    let mut defect: f64 = 0.0;
    for ei in frame {
        let jei = complex_i(ei);
        for ej in frame {
            defect = defect.max(ambient::dot(&jei, ej).abs());
        }
    }
    if let Some(p) = position {
        let ip = complex_i(p);
        for e in frame {
            defect = defect.max(ambient::dot(&ip, e).abs());
        }
    }
    defect
}

/// Connection forms `ω[i][j][l] = ω^l_j(e_i)` at the point, in the adapted
/// frame when `H ≠ 0` and in the coordinate frame otherwise.
pub fn connection_forms(geo: &LocalGeometry<'_>, gauge: &FrameGauge) -> Result<Vec<Vec<Vec<f64>>>, GeometryError> {
    let hint = if ambient::norm(&geo.mean_curvature_value()) < MINIMAL_TOL {
        FrameHint::Coordinate
    } else {
        FrameHint::MeanCurvature(gauge.clone())
    };
    let frame = geo.frame(&hint)?;
    Ok(geo
        .connection_forms(&frame)?
        .iter()
        .map(|r| r.iter().map(|c| jv::values(c)).collect())
        .collect())
}

/// Scalar data of an H-umbilical frame at one point, including the
/// derivatives the biharmonic and Codazzi identities need.
///
/// Every field is plain data so the residual formulas can be exercised on
/// synthetic input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScalars {
    pub m: usize,
    pub epsilon: f64,
    /// `a = ⟨H, Je₁⟩`
    pub a: f64,
    pub lambda: f64,
    /// Mean of `⟨B(e_i,e_i), Je₁⟩` over `i ≥ 2`.
    pub mu: f64,
    /// `e_i(a)`
    pub grad_a: Vec<f64>,
    /// `e_i(e_i(a))`
    pub hess_a: Vec<f64>,
    pub grad_lambda: Vec<f64>,
    pub grad_mu: Vec<f64>,
    /// `[i][j][l] = ω^l_j(e_i)`
    pub omega: Vec<Vec<Vec<f64>>>,
    /// `[i][j] = e_i(ω^j_1(e_i))`
    pub d_omega1: Vec<Vec<f64>>,
    /// Mean of `ω^l_1(e_l)` over `l ≥ 2`.
    pub k: f64,
    pub k_spread: f64,
    /// `e_j(k)`
    pub grad_k: Vec<f64>,
    /// Max deviation of `B` from the H-umbilical pattern.
    pub fit_residual: f64,
}

/// Computes [`FrameScalars`] in the adapted frame `Je₁ = H/|H|` (so `a > 0`),
/// re-gauged by `gauge`.
pub fn frame_scalars(geo: &LocalGeometry<'_>, gauge: &FrameGauge) -> Result<FrameScalars, LagrangianError> {
    let m = geo.m();
    let frame = geo.adapted_frame(gauge).map_err(|e| match e {
        GeometryError::MinimalPoint(h) => LagrangianError::MinimalPoint(h),
        other => LagrangianError::Geometry(other),
    })?;
    let b = geo.second_fundamental_form(&frame)?;
    let je: Vec<Vec<Jet>> = frame.vectors.iter().map(|e| geo.j(e)).collect();
    let h = geo.mean_curvature();

    let a = jv::dot(h, &je[0]);
    let lambda = jv::dot(&b[0][0], &je[0]);
    let mu = if m >= 2 {
        let mut s = jv::dot(&b[1][1], &je[0]);
        for i in 2..m {
            s += &jv::dot(&b[i][i], &je[0]);
        }
        s.scale(1.0 / (m - 1) as f64)
    } else {
        a.zero_like()
    };

    let grad = |f: &Jet| -> Result<Vec<Jet>, GeometryError> { (0..m).map(|i| geo.directional_scalar(&frame, i, f)).collect() };
    let grad_a_j = grad(&a)?;
    let hess_a = (0..m)
        .map(|i| geo.directional_scalar_value(&frame, i, &grad_a_j[i]))
        .collect::<Result<Vec<_>, GeometryError>>()?;
    let values = |v: Vec<Jet>| v.iter().map(Jet::value).collect::<Vec<_>>();
    let grad_lambda = values(grad(&lambda)?);
    let grad_mu = values(grad(&mu)?);

    let omega_j = geo.connection_forms(&frame)?;
    let omega: Vec<Vec<Vec<f64>>> = omega_j.iter().map(|r| r.iter().map(|c| jv::values(c)).collect()).collect();
    let mut d_omega1 = vec![vec![0.0; m]; m];
    for (i, row) in d_omega1.iter_mut().enumerate() {
        for (j, d) in row.iter_mut().enumerate() {
            *d = geo.directional_scalar_value(&frame, i, &omega_j[i][0][j])?;
        }
    }
    let (k, k_spread, grad_k) = if m >= 2 {
        let mut kj = omega_j[1][0][1].clone();
        for l in 2..m {
            kj += &omega_j[l][0][l];
        }
        let kj = kj.scale(1.0 / (m - 1) as f64);
        let ks: Vec<f64> = (1..m).map(|l| omega[l][0][l]).collect();
        let spread = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ks.iter().cloned().fold(f64::INFINITY, f64::min);
        (kj.value(), spread, values(grad(&kj)?))
    } else {
        (0.0, 0.0, vec![0.0; m])
    };

    let b0: Vec<Vec<Vec<f64>>> = b.iter().map(|r| r.iter().map(|v| jv::values(v)).collect()).collect();
    let je0: Vec<Vec<f64>> = je.iter().map(|v| jv::values(v)).collect();
    let (lam0, mu0) = (lambda.value(), mu.value());
    let dev = |v: &[f64], c: f64, w: &[f64]| -> f64 {
        v.iter()
            .zip(w)
            .map(|(x, y)| (x - c * y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let zero = vec![0.0; b0[0][0].len()];
    let mut fit: f64 = dev(&b0[0][0], lam0, &je0[0]);
    for i in 1..m {
        fit = fit.max(dev(&b0[i][i], mu0, &je0[0]));
        fit = fit.max(dev(&b0[0][i], mu0, &je0[i]));
        for j in 1..m {
            if i != j {
                fit = fit.max(dev(&b0[i][j], 0.0, &zero));
            }
        }
    }

    Ok(FrameScalars {
        m,
        epsilon: geo.model().epsilon(),
        a: a.value(),
        lambda: lam0,
        mu: mu0,
        grad_a: values(grad_a_j),
        hess_a,
        grad_lambda,
        grad_mu,
        omega,
        d_omega1,
        k,
        k_spread,
        grad_k,
        fit_residual: fit,
    })
}

/// `(λ, μ, a)` of an H-umbilical point with the fit quality and `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HUmbilicalFit {
    pub lambda: f64,
    pub mu: f64,
    pub a: f64,
    pub fit_residual: f64,
    /// Common value of `ω^l_1(e_l)`, `l ≥ 2`; absent for curves and minimal points.
    pub k: Option<f64>,
    pub k_spread: f64,
}

impl HUmbilicalFit {
    pub fn from_scalars(s: &FrameScalars) -> HUmbilicalFit {
        HUmbilicalFit {
            lambda: s.lambda,
            mu: s.mu,
            a: (s.lambda + (s.m as f64 - 1.0) * s.mu) / s.m as f64,
            fit_residual: s.fit_residual,
            k: (s.m >= 2).then_some(s.k),
            k_spread: s.k_spread,
        }
    }
}

/// Largest entry of the second fundamental form in the coordinate frame.
fn max_b(geo: &LocalGeometry<'_>) -> Result<f64, GeometryError> {
    let b = geo.second_fundamental_form(geo.coordinate_frame())?;
    Ok(b.iter()
        .flatten()
        .map(|v| ambient::norm(&jv::values(v)))
        .fold(0.0, f64::max))
}

/// H-umbilical fit at the point. Totally geodesic points give `λ = μ = 0`;
/// minimal points with `B ≠ 0` are not H-umbilical in an adapted frame.
pub fn humbilical_fit(geo: &LocalGeometry<'_>, gauge: &FrameGauge) -> Result<HUmbilicalFit, LagrangianError> {
    let h = ambient::norm(&geo.mean_curvature_value());
    if h < MINIMAL_TOL {
        if max_b(geo)? < MINIMAL_TOL {
            return Ok(HUmbilicalFit {
                lambda: 0.0,
                mu: 0.0,
                a: 0.0,
                fit_residual: 0.0,
                k: None,
                k_spread: 0.0,
            });
        }
        return Err(LagrangianError::MinimalPoint(h));
    }
    Ok(HUmbilicalFit::from_scalars(&frame_scalars(geo, gauge)?))
}

/// `max_i |∇⊥_{e_i}(H/|H|)|` over the coordinate frame.
pub fn pnmc_defect(geo: &LocalGeometry<'_>) -> Result<f64, LagrangianError> {
    let h = geo.mean_curvature();
    let n2 = jv::dot(h, h);
    let norm = n2.value().max(0.0).sqrt();
    if norm < MINIMAL_TOL {
        return Err(LagrangianError::MinimalPoint(norm));
    }
    let inv = n2.sqrt().and_then(|s| s.recip()).map_err(GeometryError::from)?;
    let unit = jv::scale(h, &inv);
    let frame = geo.coordinate_frame();
    let mut worst: f64 = 0.0;
    for i in 0..geo.m() {
        let d = geo.normal_derivative(frame, i, &unit)?;
        worst = worst.max(ambient::norm(&jv::values(&d)));
    }
    Ok(worst)
}

/// Codazzi consequences for an H-umbilical frame; each entry is the max over
/// its index range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameIdentityResiduals {
    /// `e_jλ − (2μ−λ)ω^1_j(e₁)`, `j ≥ 2`
    pub lambda_gradient: f64,
    /// `e₁μ − (λ−2μ)ω^l_1(e_l)`, every `l ≥ 2`
    pub mu_derivative: f64,
    /// `(λ−2μ)ω^i_1(e_j)`, `i ≠ j ≥ 2`
    pub lambda_mu_off_diagonal: f64,
    /// `e_jμ`, `j ≥ 2`
    pub mu_gradient: f64,
    /// `μω^j_1(e₁)`, `j ≥ 2`
    pub mu_omega_first: f64,
    /// spread of `μω^l_1(e_l)` over `l ≥ 2`
    pub mu_omega_spread: f64,
    /// `μω^i_1(e_j)`, `i ≠ j ≥ 2`
    pub mu_off_diagonal: f64,
}

impl FrameIdentityResiduals {
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.lambda_gradient,
            self.mu_derivative,
            self.lambda_mu_off_diagonal,
            self.mu_gradient,
            self.mu_omega_first,
            self.mu_omega_spread,
            self.mu_off_diagonal,
        ]
    }

    pub fn max(&self) -> f64 {
        self.as_array().into_iter().fold(0.0, f64::max)
    }
}

pub fn frame_identity_residuals(s: &FrameScalars) -> Result<FrameIdentityResiduals, LagrangianError> {
    if !(s.fit_residual < FIT_GATE) {
        return Err(LagrangianError::NotHUmbilical(s.fit_residual));
    }
    let m = s.m;
    let w = &s.omega;
    let (l, u) = (s.lambda, s.mu);
    let mut r = FrameIdentityResiduals {
        lambda_gradient: 0.0,
        mu_derivative: 0.0,
        lambda_mu_off_diagonal: 0.0,
        mu_gradient: 0.0,
        mu_omega_first: 0.0,
        mu_omega_spread: 0.0,
        mu_off_diagonal: 0.0,
    };
    let mut diag = Vec::with_capacity(m);
    for j in 1..m {
        r.lambda_gradient = r.lambda_gradient.max((s.grad_lambda[j] - (2.0 * u - l) * w[0][j][0]).abs());
        r.mu_derivative = r.mu_derivative.max((s.grad_mu[0] - (l - 2.0 * u) * w[j][0][j]).abs());
        r.mu_gradient = r.mu_gradient.max(s.grad_mu[j].abs());
        r.mu_omega_first = r.mu_omega_first.max((u * w[0][0][j]).abs());
        diag.push(u * w[j][0][j]);
        for i in 1..m {
            if i != j {
                r.lambda_mu_off_diagonal = r.lambda_mu_off_diagonal.max(((l - 2.0 * u) * w[j][0][i]).abs());
                r.mu_off_diagonal = r.mu_off_diagonal.max((u * w[j][0][i]).abs());
            }
        }
    }
    if let (Some(hi), Some(lo)) = (
        diag.iter().cloned().reduce(f64::max),
        diag.iter().cloned().reduce(f64::min),
    ) {
        r.mu_omega_spread = hi - lo;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::AmbientModel;
    use crate::geometry::{Axis, SampleDomain};

    fn linear(m: usize) -> Immersion {
        Immersion::new(
            "plane",
            m,
            AmbientModel::Flat { m },
            SampleDomain {
                axes: vec![Axis::closed(-1.0, 1.0); m],
            },
            move |x: &[Jet]| Ok(x.iter().flat_map(|xi| [xi.clone(), xi.zero_like()]).collect()),
        )
    }

    fn diagonal_line() -> Immersion {
        // z ↦ (z, z), a complex line in ℂ²
        Immersion::new(
            "diagonal",
            2,
            AmbientModel::Flat { m: 2 },
            SampleDomain {
                axes: vec![Axis::closed(-1.0, 1.0); 2],
            },
            |x: &[Jet]| Ok(vec![x[0].clone(), x[1].clone(), x[0].clone(), x[1].clone()]),
        )
    }

    #[test]
    fn plane_is_lagrangian_and_geodesic() {
        let imm = linear(3);
        assert_eq!(lagrangian_defect(&imm, &[0.1, 0.2, 0.3]).unwrap(), 0.0);
        let geo = LocalGeometry::at(&imm, &[0.1, 0.2, 0.3]).unwrap();
        let fit = humbilical_fit(&geo, &FrameGauge::default()).unwrap();
        assert_eq!((fit.lambda, fit.mu, fit.fit_residual), (0.0, 0.0, 0.0));
        let w = connection_forms(&geo, &FrameGauge::default()).unwrap();
        assert!(w.iter().flatten().flatten().all(|x| *x == 0.0));
        assert!(matches!(pnmc_defect(&geo), Err(LagrangianError::MinimalPoint(_))));
    }

    #[test]
    fn complex_line_is_not_lagrangian() {
        let d = lagrangian_defect(&diagonal_line(), &[0.3, -0.2]).unwrap();
        assert!(d >= 1.0 - 1e-12);
    }

    fn synthetic(m: usize) -> FrameScalars {
        FrameScalars {
            m,
            epsilon: 0.0,
            a: 0.7,
            lambda: 1.3,
            mu: 0.4,
            grad_a: vec![0.0; m],
            hess_a: vec![0.0; m],
            grad_lambda: vec![0.0; m],
            grad_mu: vec![0.0; m],
            omega: vec![vec![vec![0.0; m]; m]; m],
            d_omega1: vec![vec![0.0; m]; m],
            k: 0.0,
            k_spread: 0.0,
            grad_k: vec![0.0; m],
            fit_residual: 0.0,
        }
    }

    #[test]
    fn constant_data_has_zero_frame_identity_residuals() {
        let r = frame_identity_residuals(&synthetic(3)).unwrap();
        assert!(r.max() < 1e-10);
    }

    #[test]
    fn perturbed_omega_is_detected() {
        let mut s = synthetic(3);
        s.omega[2][0][1] = 0.05;
        s.omega[2][1][0] = -0.05;
        let r = frame_identity_residuals(&s).unwrap();
        assert!(r.max() > 1e-3);
    }

    #[test]
    fn fit_gate() {
        let mut s = synthetic(2);
        s.fit_residual = 1e-3;
        assert!(matches!(frame_identity_residuals(&s), Err(LagrangianError::NotHUmbilical(_))));
    }
}
