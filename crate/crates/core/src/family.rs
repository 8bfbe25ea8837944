//! The classified biharmonic family, Legendre curves in `S³` and the
//! warped-product immersions built from them.
//!
//! A unit-speed Legendre curve `z = (z₁, z₂)` solving `z'' = iλz' − z`
//! determines the Legendrian lift `(x, y) ↦ (z₁(x), z₂(x)·y)` with `y` on the
//! unit sphere `S^{m−1}`. The biharmonic members have `λ` constant,
//! `λ = (μ² − 1)/μ`, with `μ` one of four closed-form roots, and the curve is
//! `z = (A e^{−ix/μ}, B e^{iμx})`.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::AmbientModel;
use crate::geometry::{Axis, Immersion, SampleDomain};
use crate::jets::{ComplexJet, Jet, JetError};

/// Conservation gate for the Legendre ODE integrator.
pub const DRIFT_TOL: f64 = 1e-6;
/// Tolerance on the initial data of the Legendre ODE.
pub const INITIAL_TOL: f64 = 1e-10;
/// Margin keeping sphere co-latitudes away from chart poles.
pub const POLE_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error("dimension m = {0} is below 2")]
    DimensionTooSmall(usize),
    #[error("mu must be nonzero")]
    ZeroMu,
    #[error("root index {0} out of range 0..4")]
    RootIndex(usize),
    #[error("invalid initial data: {0}")]
    InitialData(String),
    #[error("invalid interval or step: {0}")]
    Interval(String),
    #[error("invariant drift {defect:e} at x = {x} exceeds tolerance; reduce the step")]
    Drift { x: f64, defect: f64 },
    #[error("|z2| vanishes at x = {x}")]
    VanishingZ2 { x: f64 },
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("csv export failed: {0}")]
    Export(String),
}

/// The four roots `±√((m+5±s)/(2m))`, `s = √(m²+6m+25)`, ordered
/// `[+big, −big, +small, −small]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuRootSet {
    pub m: usize,
    pub roots: [f64; 4],
}

impl MuRootSet {
    pub fn get(&self, index: usize) -> Result<f64, FamilyError> {
        self.roots.get(index).copied().ok_or(FamilyError::RootIndex(index))
    }
}

pub fn mu_roots(m: usize) -> Result<MuRootSet, FamilyError> {
    if m < 2 {
        return Err(FamilyError::DimensionTooSmall(m));
    }
    let mf = m as f64;
    let s = (mf * mf + 6.0 * mf + 25.0).sqrt();
    let big = ((mf + 5.0 + s) / (2.0 * mf)).sqrt();
    // (m+5−s)/(2m) rewritten without cancellation
    let small = (2.0 / (mf + 5.0 + s)).sqrt();
    Ok(MuRootSet {
        m,
        roots: [big, -big, small, -small],
    })
}

/// `λ = (μ² − 1)/μ`
pub fn lambda_from_mu(mu: f64) -> Result<f64, FamilyError> {
    if mu == 0.0 || !mu.is_finite() {
        return Err(FamilyError::ZeroMu);
    }
    Ok(mu - 1.0 / mu)
}

/// `a = (λ + (m−1)μ)/m`
pub fn mean_curvature_coefficient(m: usize, lambda: f64, mu: f64) -> f64 {
    (lambda + (m as f64 - 1.0) * mu) / m as f64
}

/// Unit sphere `S^{n}` in hyperspherical angles `θ₁ … θ_n`.
pub fn sphere_point(angles: &[Jet]) -> Vec<Jet> {
    let mut out = Vec::with_capacity(angles.len() + 1);
    let mut prod = angles[0].constant_like(1.0);
    for theta in angles {
        out.push(&prod * &theta.cos());
        prod = &prod * &theta.sin();
    }
    out.push(prod);
    out
}

/// Chart axes for `S^{m−1}`: co-latitudes kept off the poles, last angle periodic.
pub fn sphere_axes(m: usize) -> Vec<Axis> {
    let mut axes: Vec<Axis> = (0..m.saturating_sub(2))
        .map(|_| Axis::closed(POLE_MARGIN, PI - POLE_MARGIN))
        .collect();
    axes.push(Axis::periodic(0.0, TAU));
    axes
}

/// Interleaved real coordinates of `(w₀, w₁·y₁, …, w₁·y_m)`.
fn warped_lift(w0: &ComplexJet, w1: &ComplexJet, y: &[Jet]) -> Vec<Jet> {
    let mut out = Vec::with_capacity(2 * y.len() + 2);
    out.push(w0.re.clone());
    out.push(w0.im.clone());
    for yk in y {
        out.push(&w1.re * yk);
        out.push(&w1.im * yk);
    }
    out
}

/// Legendrian lift of the explicit biharmonic family,
/// `(√(μ²/(μ²+1)) e^{−ix/μ}, √(1/(μ²+1)) e^{iμx} y)`, into `ℂP^m(4)`.
///
/// Any nonzero `μ` is accepted so the same constructor yields controls.
pub fn chen_immersion(m: usize, mu: f64) -> Result<Immersion, FamilyError> {
    if m < 2 {
        return Err(FamilyError::DimensionTooSmall(m));
    }
    if mu == 0.0 || !mu.is_finite() {
        return Err(FamilyError::ZeroMu);
    }
    let amp0 = (mu * mu / (mu * mu + 1.0)).sqrt();
    let amp1 = (1.0 / (mu * mu + 1.0)).sqrt();
    let mut axes = vec![Axis::periodic(0.0, TAU)];
    axes.extend(sphere_axes(m));
    Ok(Immersion::new(
        format!("chen(m={m}, mu={mu})"),
        m,
        AmbientModel::ProjectiveViaLift { m },
        SampleDomain { axes },
        move |x: &[Jet]| {
            let w0 = ComplexJet::expi(&x[0].scale(-1.0 / mu)).scale(amp0);
            let w1 = ComplexJet::expi(&x[0].scale(mu)).scale(amp1);
            Ok(warped_lift(&w0, &w1, &sphere_point(&x[1..])))
        },
    ))
}

/// `λ(x)` along a Legendre curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LambdaProfile {
    Constant {
        value: f64,
    },
    /// `offset + amplitude·sin(frequency·x + phase)`
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
}

impl LambdaProfile {
    /// `(λ, λ', λ'')` at `x`.
    pub fn eval(&self, x: f64) -> [f64; 3] {
        match *self {
            LambdaProfile::Constant { value } => [value, 0.0, 0.0],
            LambdaProfile::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => {
                let (s, c) = (frequency * x + phase).sin_cos();
                [
                    offset + amplitude * s,
                    amplitude * frequency * c,
                    -amplitude * frequency * frequency * s,
                ]
            }
        }
    }
}

type C2 = [Complex64; 2];

#[derive(Debug, Clone, PartialEq)]
enum CurveRepr {
    Chen { mu: f64 },
    GreatCircle,
    Sampled { x0: f64, step: f64, states: Vec<(C2, C2)> },
}

/// Unit-speed Legendre curve in `S³ ⊂ ℂ²`, closed form or RK4-sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreCurve {
    profile: LambdaProfile,
    interval: (f64, f64),
    repr: CurveRepr,
}

/// One row of the curve diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendreSample {
    pub x: f64,
    pub re_z1: f64,
    pub im_z1: f64,
    pub re_z2: f64,
    pub im_z2: f64,
    pub norm_defect: f64,
    pub speed_defect: f64,
    pub legendre_defect: f64,
    pub mu: f64,
}

fn hdot(u: &C2, v: &C2) -> Complex64 {
    u[0] * v[0].conj() + u[1] * v[1].conj()
}

fn cnorm(u: &C2) -> f64 {
    (u[0].norm_sqr() + u[1].norm_sqr()).sqrt()
}

/// `(||z| − 1|, ||z'| − 1|, |Re⟨iz, z'⟩|)`
fn invariant_defects(z: &C2, zp: &C2) -> [f64; 3] {
    let iz = [z[0] * Complex64::i(), z[1] * Complex64::i()];
    [
        (cnorm(z) - 1.0).abs(),
        (cnorm(zp) - 1.0).abs(),
        hdot(&iz, zp).re.abs(),
    ]
}

impl LegendreCurve {
    /// `z = (A e^{−ix/μ}, B e^{iμx})` on `[0, 2π]`.
    pub fn chen(mu: f64) -> Result<LegendreCurve, FamilyError> {
        let lambda = lambda_from_mu(mu)?;
        Ok(LegendreCurve {
            profile: LambdaProfile::Constant { value: lambda },
            interval: (0.0, TAU),
            repr: CurveRepr::Chen { mu },
        })
    }

    /// `z = (cos x, sin x)`, `λ ≡ 0`, on `[0, 2π]`.
    pub fn great_circle() -> LegendreCurve {
        LegendreCurve {
            profile: LambdaProfile::Constant { value: 0.0 },
            interval: (0.0, TAU),
            repr: CurveRepr::GreatCircle,
        }
    }

    pub fn profile(&self) -> LambdaProfile {
        self.profile
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn is_closed_form(&self) -> bool {
        !matches!(self.repr, CurveRepr::Sampled { .. })
    }

    fn contains(&self, x: f64) -> bool {
        let (a, b) = self.interval;
        let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
        x >= a - slack && x <= b + slack
    }

    /// `(z(x), z'(x))`
    pub fn state(&self, x: f64) -> Result<(C2, C2), FamilyError> {
        match &self.repr {
            CurveRepr::Chen { mu } => {
                let (a0, a1) = chen_amplitudes(*mu);
                let z1 = Complex64::from_polar(a0, -x / mu);
                let z2 = Complex64::from_polar(a1, mu * x);
                let i = Complex64::i();
                Ok(([z1, z2], [-i / mu * z1, i * mu * z2]))
            }
            CurveRepr::GreatCircle => {
                let (s, c) = x.sin_cos();
                Ok((
                    [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
                    [Complex64::new(-s, 0.0), Complex64::new(c, 0.0)],
                ))
            }
            CurveRepr::Sampled { x0, step, states } => {
                if !self.contains(x) {
                    return Err(FamilyError::Interval(format!("x = {x} outside the integrated interval")));
                }
                let k = (((x - x0) / step).round().max(0.0) as usize).min(states.len() - 1);
                let xk = x0 + *step * k as f64;
                let (z, zp) = states[k];
                Ok(rk4_step(&self.profile, xk, z, zp, x - xk))
            }
        }
    }

    /// Derivatives `z, z', z'', z''', z''''` at `x` from the state and the ODE.
    fn derivatives(&self, x: f64) -> Result<[C2; 5], FamilyError> {
        let (z0, z1) = self.state(x)?;
        let [l, l1, l2] = self.profile.eval(x);
        let i = Complex64::i();
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 5];
        for c in 0..2 {
            let d2 = i * l * z1[c] - z0[c];
            let d3 = i * l1 * z1[c] + i * l * d2 - z1[c];
            let d4 = i * l2 * z1[c] + 2.0 * i * l1 * d2 + i * l * d3 - d2;
            out[0][c] = z0[c];
            out[1][c] = z1[c];
            out[2][c] = d2;
            out[3][c] = d3;
            out[4][c] = d4;
        }
        Ok(out)
    }

    /// `(z₁(x), z₂(x))` as complex jets of the chart variable `x`.
    pub fn jets(&self, x: &Jet) -> Result<[ComplexJet; 2], FamilyError> {
        match &self.repr {
            CurveRepr::Chen { mu } => {
                let (a0, a1) = chen_amplitudes(*mu);
                Ok([
                    ComplexJet::expi(&x.scale(-1.0 / mu)).scale(a0),
                    ComplexJet::expi(&x.scale(*mu)).scale(a1),
                ])
            }
            CurveRepr::GreatCircle => Ok([ComplexJet::real(x.cos()), ComplexJet::real(x.sin())]),
            CurveRepr::Sampled { .. } => {
                let d = self.derivatives(x.value())?;
                let comp = |c: usize| {
                    let re: Vec<f64> = d.iter().map(|dk| dk[c].re).collect();
                    let im: Vec<f64> = d.iter().map(|dk| dk[c].im).collect();
                    ComplexJet::new(x.compose(&re), x.compose(&im))
                };
                Ok([comp(0), comp(1)])
            }
        }
    }

    /// Default diagnostic grid: integrator nodes, or 1001 uniform points.
    pub fn sample_grid(&self) -> Vec<f64> {
        match &self.repr {
            CurveRepr::Sampled { x0, step, states } => (0..states.len()).map(|k| x0 + step * k as f64).collect(),
            _ => {
                let (a, b) = self.interval;
                (0..=1000).map(|k| a + (b - a) * k as f64 / 1000.0).collect()
            }
        }
    }
}

fn chen_amplitudes(mu: f64) -> (f64, f64) {
    let d = mu * mu + 1.0;
    ((mu * mu / d).sqrt(), (1.0 / d).sqrt())
}

fn rk4_step(profile: &LambdaProfile, x: f64, z: C2, zp: C2, h: f64) -> (C2, C2) {
    if h == 0.0 {
        return (z, zp);
    }
    let i = Complex64::i();
    let f = |x: f64, z: &C2, zp: &C2| -> (C2, C2) {
        let l = profile.eval(x)[0];
        (*zp, [i * l * zp[0] - z[0], i * l * zp[1] - z[1]])
    };
    let add = |a: &C2, b: &C2, s: f64| -> C2 { [a[0] + b[0] * s, a[1] + b[1] * s] };
    let (k1z, k1p) = f(x, &z, &zp);
    let (k2z, k2p) = f(x + h / 2.0, &add(&z, &k1z, h / 2.0), &add(&zp, &k1p, h / 2.0));
    let (k3z, k3p) = f(x + h / 2.0, &add(&z, &k2z, h / 2.0), &add(&zp, &k2p, h / 2.0));
    let (k4z, k4p) = f(x + h, &add(&z, &k3z, h), &add(&zp, &k3p, h));
    let comb = |y: &C2, a: &C2, b: &C2, c: &C2, d: &C2| -> C2 {
        let mut out = *y;
        for k in 0..2 {
            out[k] += (a[k] + b[k] * 2.0 + c[k] * 2.0 + d[k]) * (h / 6.0);
        }
        out
    };
    (comb(&z, &k1z, &k2z, &k3z, &k4z), comb(&zp, &k1p, &k2p, &k3p, &k4p))
}

/// Integrates `z'' = iλz' − z` with classical fixed-step RK4 on `(z, z')`.
///
/// The step is shrunk to divide the interval evenly. Drift of `|z|`, `|z'|`
/// or the Legendre condition beyond [`DRIFT_TOL`] is an error.
pub fn solve_legendre(profile: LambdaProfile, z0: C2, z0p: C2, interval: (f64, f64), step: f64) -> Result<LegendreCurve, FamilyError> {
    let (a, b) = interval;
    if !(b > a) || !(step > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(FamilyError::Interval(format!("[{a}, {b}] with step {step}")));
    }
    let [dn, ds, dl] = invariant_defects(&z0, &z0p);
    let tangency = hdot(&z0, &z0p).re.abs();
    for (name, d) in [("|z0| = 1", dn), ("|z0'| = 1", ds), ("Legendre", dl), ("tangency", tangency)] {
        if d > INITIAL_TOL {
            return Err(FamilyError::InitialData(format!("{name} violated by {d:e}")));
        }
    }
    let n = ((b - a) / step).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let mut states = Vec::with_capacity(n + 1);
    let (mut z, mut zp) = (z0, z0p);
    states.push((z, zp));
    for k in 0..n {
        let x = a + h * k as f64;
        let (nz, nzp) = rk4_step(&profile, x, z, zp, h);
        z = nz;
        zp = nzp;
        let defect = invariant_defects(&z, &zp).into_iter().fold(0.0, f64::max);
        if !(defect <= DRIFT_TOL) {
            return Err(FamilyError::Drift { x: x + h, defect });
        }
        states.push((z, zp));
    }
    Ok(LegendreCurve {
        profile,
        interval,
        repr: CurveRepr::Sampled { x0: a, step: h, states },
    })
}

/// `μ(x) = Re(i z₂ z̄₂')/|z₂|²`
pub fn recovered_mu(z: &C2, zp: &C2) -> Option<f64> {
    let n2 = z[1].norm_sqr();
    if n2.sqrt() < 1e-10 {
        return None;
    }
    Some((Complex64::i() * z[1] * zp[1].conj()).re / n2)
}

/// Per-sample defects of `|z| = 1`, unit speed and the Legendre condition,
/// together with `μ(x)`.
pub fn legendre_diagnostics(curve: &LegendreCurve) -> Result<Vec<LegendreSample>, FamilyError> {
    curve
        .sample_grid()
        .into_iter()
        .map(|x| {
            let (z, zp) = curve.state(x)?;
            let [norm_defect, speed_defect, legendre_defect] = invariant_defects(&z, &zp);
            let mu = recovered_mu(&z, &zp).ok_or(FamilyError::VanishingZ2 { x })?;
            Ok(LegendreSample {
                x,
                re_z1: z[0].re,
                im_z1: z[0].im,
                re_z2: z[1].re,
                im_z2: z[1].im,
                norm_defect,
                speed_defect,
                legendre_defect,
                mu,
            })
        })
        .collect()
}

pub fn write_legendre_csv<W: Write>(samples: &[LegendreSample], out: W) -> Result<(), FamilyError> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(s).map_err(|e| FamilyError::Export(e.to_string()))?;
    }
    if samples.is_empty() {
        w.write_record(["x", "re_z1", "im_z1", "re_z2", "im_z2", "norm_defect", "speed_defect", "legendre_defect", "mu"])
            .map_err(|e| FamilyError::Export(e.to_string()))?;
    }
    w.flush().map_err(|e| FamilyError::Export(e.to_string()))
}

/// `(x, y) ↦ (z₁(x), z₂(x)·y)` into `ℂP^m(4)` with `y ∈ S^{m−1}` in
/// hyperspherical angles.
pub fn warped_product_immersion(curve: &LegendreCurve, m: usize) -> Result<Immersion, FamilyError> {
    if m < 2 {
        return Err(FamilyError::DimensionTooSmall(m));
    }
    for x in curve.sample_grid() {
        let (z, _) = curve.state(x)?;
        if z[1].norm() < 1e-10 {
            return Err(FamilyError::VanishingZ2 { x });
        }
    }
    let (a, b) = curve.interval();
    let x_axis = if curve.is_closed_form() {
        Axis::periodic(a, b)
    } else {
        Axis::closed(a, b)
    };
    let mut axes = vec![x_axis];
    axes.extend(sphere_axes(m));
    let curve = curve.clone();
    Ok(Immersion::new(
        format!("warped(m={m})"),
        m,
        AmbientModel::ProjectiveViaLift { m },
        SampleDomain { axes },
        move |x: &[Jet]| {
            let [z1, z2] = curve.jets(&x[0]).map_err(|e| JetError::Domain(e.to_string()))?;
            Ok(warped_lift(&z1, &z2, &sphere_point(&x[1..])))
        },
    ))
}

/// The Chen curve for `μ` re-integrated by RK4 from its closed-form state
/// at `x = 0` with constant `λ = (μ²−1)/μ`.
pub fn chen_ode_curve(mu: f64, step: f64) -> Result<LegendreCurve, FamilyError> {
    let closed = LegendreCurve::chen(mu)?;
    let (z0, z0p) = closed.state(0.0)?;
    solve_legendre(closed.profile(), z0, z0p, closed.interval(), step)
}

/// Initial data `z₀ = (cos α, sin α)`, `z₀' = (−sin α, cos α)e^{iβ}`; unit,
/// tangent and Legendrian for every `α, β`.
pub fn rotated_initial_data(alpha: f64, beta: f64) -> (C2, C2) {
    let (s, c) = alpha.sin_cos();
    let phase = Complex64::from_polar(1.0, beta);
    (
        [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
        [phase * -s, phase * c],
    )
}

/// The non-biharmonic Legendre curve used as a generic control:
/// `λ = 2 + ½ sin x` on `[0, 1]` from `α = π/3`, `β = 0.4`.
pub fn generic_curve(step: f64) -> Result<LegendreCurve, FamilyError> {
    let (z0, z0p) = rotated_initial_data(PI / 3.0, 0.4);
    solve_legendre(
        LambdaProfile::Sinusoid {
            offset: 2.0,
            amplitude: 0.5,
            frequency: 1.0,
            phase: 0.0,
        },
        z0,
        z0p,
        (0.0, 1.0),
        step,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::vector as jv;

    // 40-digit reference values (independent arbitrary-precision evaluation)
    const M2_BIG: f64 = 1.8305138784937447645;
    const M2_SMALL: f64 = 0.38628867526991757305;
    const M3_BIG: f64 = 1.5922260387545470709;
    const M3_SMALL: f64 = 0.36260572000269140215;
    const M2_BIG_LAMBDA: f64 = 1.28421919493589093;

    #[test]
    fn roots_match_reference() {
        let r = mu_roots(2).unwrap();
        assert!((r.roots[0] - M2_BIG).abs() < 1e-15);
        assert!((r.roots[1] + M2_BIG).abs() < 1e-15);
        assert!((r.roots[2] - M2_SMALL).abs() < 1e-15);
        assert!((r.roots[3] + M2_SMALL).abs() < 1e-15);
        let r = mu_roots(3).unwrap();
        assert!((r.roots[0] - M3_BIG).abs() < 1e-15);
        assert!((r.roots[2] - M3_SMALL).abs() < 1e-15);
        assert!(matches!(mu_roots(1), Err(FamilyError::DimensionTooSmall(1))));
    }

    #[test]
    fn radicands_positive_for_large_m() {
        for m in [2usize, 10, 1000, 1_000_000] {
            let r = mu_roots(m).unwrap();
            assert!(r.roots.iter().all(|x| x.is_finite() && *x != 0.0));
        }
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_from_mu(1.0).unwrap(), 0.0);
        assert_eq!(lambda_from_mu(-1.0).unwrap(), 0.0);
        let l = lambda_from_mu(M2_BIG).unwrap();
        assert!((l - M2_BIG_LAMBDA).abs() < 1e-15);
        assert!((l * l + M2_BIG * M2_BIG - 5.0).abs() < 1e-10);
        assert!(matches!(lambda_from_mu(0.0), Err(FamilyError::ZeroMu)));
    }

    #[test]
    fn chen_lift_on_sphere() {
        for m in 2..=4 {
            let mu = mu_roots(m).unwrap().roots[2];
            let imm = chen_immersion(m, mu).unwrap();
            let pts = imm.domain().grid(&vec![5; m]);
            for p in pts {
                let v = imm.eval(&p).unwrap();
                let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn chen_curve_satisfies_ode_and_recovers_mu() {
        let mu = M2_BIG;
        let lambda = lambda_from_mu(mu).unwrap();
        let curve = LegendreCurve::chen(mu).unwrap();
        let i = Complex64::i();
        let h = 1e-3;
        for k in 0..10 {
            let x = 0.6 * k as f64;
            let (z, zp) = curve.state(x).unwrap();
            // second derivative by differencing the closed-form velocity
            let (_, zp_hi) = curve.state(x + h).unwrap();
            let (_, zp_lo) = curve.state(x - h).unwrap();
            for c in 0..2 {
                let zpp = (zp_hi[c] - zp_lo[c]) / (2.0 * h);
                let rhs = i * lambda * zp[c] - z[c];
                assert!((zpp - rhs).norm() < 1e-6);
            }
            // z₂'' = −μ²z₂ exactly
            let z2pp = -mu * mu * z[1];
            assert!((z2pp - (i * lambda * zp[1] - z[1])).norm() < 1e-12);
            assert!((recovered_mu(&z, &zp).unwrap() - mu).abs() < 1e-12);
        }
    }

    #[test]
    fn great_circle_mu_is_zero() {
        let d = legendre_diagnostics(&LegendreCurve::great_circle());
        // |z₂| = |sin x| vanishes at 0
        assert!(matches!(d, Err(FamilyError::VanishingZ2 { .. })));
        let (z, zp) = LegendreCurve::great_circle().state(1.0).unwrap();
        assert_eq!(recovered_mu(&z, &zp).unwrap(), 0.0);
    }

    #[test]
    fn rk4_harmonic_oscillator() {
        let z0 = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let z0p = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let curve = solve_legendre(LambdaProfile::Constant { value: 0.0 }, z0, z0p, (0.0, TAU), 1e-3).unwrap();
        for x in curve.sample_grid().into_iter().step_by(97) {
            let (z, _) = curve.state(x).unwrap();
            assert!((z[0] - Complex64::new(x.cos(), 0.0)).norm() < 1e-9);
            assert!((z[1] - Complex64::new(x.sin(), 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn rk4_rejects_bad_input() {
        let z0 = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let bad = [Complex64::new(0.5, 0.0), Complex64::new(0.0, 0.0)];
        let p = LambdaProfile::Constant { value: 0.0 };
        assert!(matches!(solve_legendre(p, z0, bad, (0.0, 1.0), 1e-3), Err(FamilyError::InitialData(_))));
        let z0p = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        assert!(matches!(solve_legendre(p, z0, z0p, (1.0, 0.0), 1e-3), Err(FamilyError::Interval(_))));
        assert!(matches!(
            solve_legendre(p, z0, z0p, (0.0, 50.0), 2.0),
            Err(FamilyError::Drift { .. })
        ));
    }

    #[test]
    fn sampled_jets_match_ode_between_nodes() {
        let curve = generic_curve(1e-3).unwrap();
        let x = 0.43217;
        let xj = Jet::seed(&[x]).unwrap().remove(0);
        let [z1, z2] = curve.jets(&xj).unwrap();
        let (z, zp) = curve.state(x).unwrap();
        assert!((z1.re.value() - z[0].re).abs() < 1e-15);
        assert!((z2.im.value() - z[1].im).abs() < 1e-15);
        let d1 = z1.re.derivative(0).unwrap();
        assert!((d1.value() - zp[0].re).abs() < 1e-15);
        // z'' from jets equals the ODE right-hand side
        let l = curve.profile().eval(x)[0];
        let d2 = d1.derivative(0).unwrap().value();
        let rhs = (Complex64::i() * l * zp[0] - z[0]).re;
        assert!((d2 - rhs).abs() < 1e-12);
    }

    #[test]
    fn warped_from_closed_form_matches_chen() {
        let mu = mu_roots(3).unwrap().roots[1];
        let a = chen_immersion(3, mu).unwrap();
        let b = warped_product_immersion(&LegendreCurve::chen(mu).unwrap(), 3).unwrap();
        for p in a.domain().grid(&[4, 4, 4]) {
            let va = a.eval(&p).unwrap();
            let vb = b.eval(&p).unwrap();
            for (x, y) in va.iter().zip(&vb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_chart_is_unit() {
        let angles = Jet::seed(&[0.4, 1.1, 2.5]).unwrap();
        let y = sphere_point(&angles);
        assert_eq!(y.len(), 4);
        let n = jv::dot(&y, &y);
        assert!((n.value() - 1.0).abs() < 1e-15);
        assert!(n.derivative(1).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn csv_header_and_rows() {
        let curve = LegendreCurve::chen(M2_BIG).unwrap();
        let samples = legendre_diagnostics(&curve).unwrap();
        let mut buf = Vec::new();
        write_legendre_csv(&samples[..3], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "x,re_z1,im_z1,re_z2,im_z2,norm_defect,speed_defect,legendre_defect,mu"
        );
        assert_eq!(lines.count(), 3);
    }
}
