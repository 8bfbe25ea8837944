use bilag_core::ambient::{complex_i, curvature_operator, dot, horizontal_project, norm};
use bilag_core::catalog::{self, CatalogParams, CurveKind, MuSelector};
use bilag_core::criteria::{self, Site};
use bilag_core::geometry::{FrameGauge, FrameHint, Immersion, LocalGeometry};
use bilag_core::jets::{self, vector as jv, Jet};
use bilag_core::lagrangian::{self, humbilical_fit, pnmc_defect};
use bilag_core::runner::{self, CriteriaSelection, RunConfig};
use proptest::prelude::*;

fn build(key: &str, m: usize, root: usize) -> Immersion {
    catalog::build(
        key,
        &CatalogParams {
            m,
            mu: MuSelector::Root(root),
            ..Default::default()
        },
    )
    .unwrap()
    .immersion
}

/// A point strictly inside the sampling domain, from unit-interval fractions.
fn interior(imm: &Immersion, t: &[f64]) -> Vec<f64> {
    imm.domain()
        .axes
        .iter()
        .zip(t)
        .map(|(a, s)| a.lo + (a.hi - a.lo) * (0.1 + 0.8 * s))
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

fn vec_in(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

fn fractions(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n)
}

/// A smooth jet of two variables built from random coefficients.
fn random_jet(x: &[Jet], c: &[f64]) -> Jet {
    let lin = &(&x[0] * c[0]) + &(&x[1] * c[1]);
    let s = (&lin + c[2]).sin();
    let e = (&x[1] * c[3]).exp();
    &(&s * &e) + &(&(&x[0] * &x[1]) * c[4])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jet_product_commutes_and_associates(p in vec_in(2), a in vec_in(5), b in vec_in(5), c in vec_in(5)) {
        let x = Jet::seed(&p).unwrap();
        let (ja, jb, jc) = (random_jet(&x, &a), random_jet(&x, &b), random_jet(&x, &c));
        let scale = 1.0 + ja.max_abs() * jb.max_abs() * jc.max_abs();
        prop_assert!((&(&ja * &jb) - &(&jb * &ja)).max_abs() <= 1e-14 * scale);
        let left = &(&ja * &jb) * &jc;
        let right = &ja * &(&jb * &jc);
        prop_assert!((&left - &right).max_abs() <= 1e-14 * scale);
    }

    #[test]
    fn quartic_polynomials_are_differentiated_exactly(p in vec_in(2), coeffs in prop::collection::vec(-2.0..2.0f64, 15)) {
        let all = jets::multi_indices(2, 4).unwrap();
        let terms: Vec<(Vec<u8>, f64)> = all.iter().map(|a| a.exponents().to_vec()).zip(coeffs.iter().copied()).collect();
        let t2 = terms.clone();
        let f = move |x: &[Jet]| -> Result<Jet, jets::JetError> {
            let mut acc = x[0].zero_like();
            for (e, c) in &t2 {
                let mut mono = x[0].constant_like(*c);
                for (v, k) in e.iter().enumerate() {
                    for _ in 0..*k {
                        mono = &mono * &x[v];
                    }
                }
                acc += &mono;
            }
            Ok(acc)
        };
        for alpha in &all {
            let got = jets::derivative(&f, &p, alpha).unwrap();
            let want: f64 = terms
                .iter()
                .filter_map(|(e, c)| {
                    let mut v = *c;
                    for k in 0..2 {
                        let (n, d) = (e[k] as i32, alpha.exponents()[k] as i32);
                        if d > n {
                            return None;
                        }
                        v *= ((n - d + 1)..=n).product::<i32>() as f64 * p[k].powi(n - d);
                    }
                    Some(v)
                })
                .sum();
            prop_assert!(rel(got, want) < 1e-12, "{alpha:?}: {got} vs {want}");
        }
    }

    #[test]
    fn curvature_tensor_symmetries(eps in prop::sample::select(vec![-1.0, 0.0, 1.0]), u in vec_in(6), v in vec_in(6), w in vec_in(6), z in vec_in(6)) {
        let r = |a: &[f64], b: &[f64], c: &[f64]| curvature_operator(eps, a, b, c);
        let bianchi: Vec<f64> = (0..6).map(|k| r(&u, &v, &w)[k] + r(&v, &w, &u)[k] + r(&w, &u, &v)[k]).collect();
        prop_assert!(max_abs(&bianchi) < 1e-10);
        prop_assert!((dot(&r(&u, &v, &w), &z) + dot(&r(&u, &v, &z), &w)).abs() < 1e-10);
        prop_assert!((dot(&r(&u, &v, &w), &z) - dot(&r(&w, &z, &u), &v)).abs() < 1e-10);
        let (ju, jv_, jw) = (complex_i(&u), complex_i(&v), complex_i(&w));
        prop_assert!(diff(&r(&ju, &jv_, &w), &r(&u, &v, &w)) < 1e-10);
        prop_assert!(diff(&complex_i(&r(&u, &v, &w)), &r(&u, &v, &jw)) < 1e-10);
    }

    #[test]
    fn horizontal_projection_is_orthogonal(p in vec_in(6), u in vec_in(6), v in vec_in(6)) {
        prop_assume!(norm(&p) > 0.1);
        let p: Vec<f64> = p.iter().map(|x| x / norm(&p)).collect();
        let pu = horizontal_project(&p, &u).unwrap();
        prop_assert!(diff(&horizontal_project(&p, &pu).unwrap(), &pu) < 1e-12);
        let pv = horizontal_project(&p, &v).unwrap();
        prop_assert!((dot(&pu, &v) - dot(&u, &pv)).abs() < 1e-12);
    }

    #[test]
    fn tension_is_m_times_mean_curvature(root in 0usize..4, t in fractions(2)) {
        let imm = build("chen", 2, root);
        let p = interior(&imm, &t);
        let geo = LocalGeometry::at(&imm, &p).unwrap();
        let h: Vec<f64> = geo.mean_curvature_value().iter().map(|x| 2.0 * x).collect();
        prop_assert!(diff(&geo.tension().unwrap(), &h) < 1e-9);
        prop_assert!(diff(&geo.tension_christoffel().unwrap(), &h) < 1e-9);
    }

    #[test]
    fn sample_structure_holds(key in prop::sample::select(vec!["chen", "warped-from-ode", "clifford-lagrangian-torus", "holomorphic-control"]), t in fractions(2)) {
        let imm = build(key, 2, 0);
        let p = interior(&imm, &t);
        let d = LocalGeometry::at(&imm, &p).unwrap().sample(&FrameHint::Coordinate).unwrap().defects();
        for (name, v) in [("frame", d.frame_orthonormality), ("omega", d.omega_antisymmetry), ("B symmetry", d.b_symmetry), ("B normality", d.b_normality), ("trace", d.mean_trace)] {
            prop_assert!(v < 1e-9, "{name}: {v:e}");
        }
    }

    #[test]
    fn lagrangian_c_form_and_weingarten(root in 0usize..4, t in fractions(3)) {
        let imm = build("chen", 3, root);
        let p = interior(&imm, &t);
        let geo = LocalGeometry::at(&imm, &p).unwrap();
        let frame = geo.frame(&FrameHint::Coordinate).unwrap();
        let fv = frame.values();
        let b = geo.second_fundamental_form(&frame).unwrap();
        let bv: Vec<Vec<Vec<f64>>> = b.iter().map(|r| r.iter().map(|c| jv::values(c)).collect()).collect();
        let c = |i: usize, j: usize, k: usize| dot(&bv[i][j], &complex_i(&fv[k]));
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    prop_assert!((c(i, j, k) - c(i, k, j)).abs() < 1e-9);
                }
            }
        }
        let h = geo.mean_curvature().to_vec();
        let weingarten = geo.shape_operator_weingarten(&frame, &h).unwrap();
        let hv = jv::values(&h);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((weingarten[i][j] - dot(&bv[i][j], &hv)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn normal_connection_commutes_with_j(root in 0usize..4, t in fractions(2)) {
        let imm = build("chen", 2, root);
        let p = interior(&imm, &t);
        let geo = LocalGeometry::at(&imm, &p).unwrap();
        let frame = geo.frame(&FrameHint::Coordinate).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let jy = geo.j(&frame.vectors[b]);
                let lhs = jv::values(&geo.normal_derivative(&frame, a, &jy).unwrap());
                let nabla = geo.tangent_project(&geo.directional(&frame, a, &frame.vectors[b]).unwrap());
                let rhs = jv::values(&geo.j(&nabla));
                prop_assert!(diff(&lhs, &rhs) < 1e-8, "a={a} b={b}");
            }
        }
    }

    #[test]
    fn fit_is_gauge_and_flip_covariant(root in 0usize..4, seed in any::<u64>(), t in fractions(3)) {
        let imm = build("chen", 3, root);
        let p = interior(&imm, &t);
        let geo = LocalGeometry::at(&imm, &p).unwrap();
        let base = humbilical_fit(&geo, &FrameGauge::default()).unwrap();
        let h = norm(&geo.mean_curvature_value());
        prop_assert!((base.a.abs() - h).abs() < 1e-9);
        let gauged = humbilical_fit(&geo, &FrameGauge::random(3, seed)).unwrap();
        prop_assert!((gauged.lambda - base.lambda).abs() < 1e-9 && (gauged.mu - base.mu).abs() < 1e-9);
        let flipped = humbilical_fit(&geo, &FrameGauge { flip_e1: true, ..Default::default() }).unwrap();
        prop_assert!((flipped.lambda + base.lambda).abs() < 1e-9);
        prop_assert!((flipped.mu + base.mu).abs() < 1e-9);
        prop_assert!((flipped.a + base.a).abs() < 1e-9);
        prop_assert!((flipped.fit_residual - base.fit_residual).abs() < 1e-9);
        prop_assert!(pnmc_defect(&geo).unwrap() < 1e-8);
    }

    #[test]
    fn pnmc_forces_vanishing_connection_data(root in 0usize..4, t in fractions(3)) {
        let imm = build("chen", 3, root);
        let p = interior(&imm, &t);
        let geo = LocalGeometry::at(&imm, &p).unwrap();
        let s = lagrangian::frame_scalars(&geo, &FrameGauge::default()).unwrap();
        for i in 0..3 {
            for l in 1..3 {
                prop_assert!(s.omega[i][0][l].abs() < 1e-7);
            }
        }
        prop_assert!(s.k.abs() < 1e-7);
        prop_assert!((s.mu * s.mu - s.lambda * s.mu - 1.0).abs() < 1e-6);
    }

    #[test]
    fn criteria_agree_on_lagrangian_inputs(key in prop::sample::select(vec!["chen", "flat-plane"]), root in 0usize..4, t in fractions(2)) {
        let imm = build(key, 2, root);
        let p = interior(&imm, &t);
        let site = Site::new(&imm, &p).unwrap();
        let eval = |n: &str| criteria::lookup(n).unwrap().evaluate(&site).unwrap();
        let (split, kahler, space) = (eval("split"), eval("kahler"), eval("spaceform"));
        let s = 1.0 + site.scale();
        for (x, y) in [(&split, &kahler), (&split, &space), (&kahler, &space)] {
            prop_assert!((x.tangential_norm - y.tangential_norm).abs() / s < 1e-7);
            prop_assert!((x.normal_norm - y.normal_norm).abs() / s < 1e-7);
        }
        if key == "chen" {
            let hu = eval("humbilical");
            prop_assert!((hu.tangential_norm - space.tangential_norm).abs() / s < 1e-7);
            prop_assert!((hu.normal_norm - space.normal_norm).abs() / s < 1e-7);
        }
    }

    #[test]
    fn residuals_survive_periodic_shifts(shift in -3.0..3.0f64, t in fractions(2)) {
        let imm = build("warped-from-ode", 2, 0);
        let torus = build("clifford-lagrangian-torus", 2, 0);
        for (base, axis) in [(&imm, 1usize), (&torus, 0usize)] {
            prop_assume!(base.domain().axes[axis].periodic);
            let mut s = vec![0.0; 2];
            s[axis] = shift;
            let moved = base.shifted(&s);
            let p = interior(base, &t);
            let q: Vec<f64> = p.iter().zip(&s).map(|(x, d)| x - d).collect();
            let a = criteria::spaceform_residual(base, &p).unwrap();
            let b = criteria::spaceform_residual(&moved, &q).unwrap();
            prop_assert!((a.tangential_norm - b.tangential_norm).abs() < 1e-9);
            prop_assert!((a.normal_norm - b.normal_norm).abs() < 1e-9);
        }
    }
}

#[test]
fn harmonic_inputs_are_exactly_zero() {
    for key in ["flat-plane", "clifford-lagrangian-torus"] {
        let imm = build(key, 2, 0);
        for p in imm.domain().grid(&[5, 5]) {
            let site = Site::new(&imm, &p).unwrap();
            for c in criteria::registry() {
                match c.evaluate(&site) {
                    Ok(r) => assert!(r.tangential_norm < 1e-12 && r.normal_norm < 1e-12, "{key} {}: {r:?}", c.name()),
                    Err(criteria::CriterionError::Inapplicable(_)) => {}
                    Err(e) => panic!("{key} {}: {e}", c.name()),
                }
            }
        }
    }
}

#[test]
fn aggregates_do_not_depend_on_workers() {
    let base = RunConfig {
        immersion: "warped-from-ode".into(),
        m: 3,
        grid: vec![4],
        seed: Some(7),
        curve: CurveKind::Generic,
        criteria: CriteriaSelection::Auto,
        ..Default::default()
    };
    let one = runner::run_verify(&base).unwrap();
    let many = runner::run_verify(&RunConfig { workers: 4, ..base }).unwrap();
    assert_eq!(one.aggregates.len(), many.aggregates.len());
    for (k, a) in &one.aggregates {
        let b = &many.aggregates[k];
        assert_eq!(a.max.to_bits(), b.max.to_bits(), "{k}");
        assert_eq!(a.mean.to_bits(), b.mean.to_bits(), "{k}");
    }
    assert_eq!(one.records, many.records);
}

#[test]
fn json_report_round_trips() {
    let report = runner::run_verify(&RunConfig {
        immersion: "chen".into(),
        grid: vec![4],
        seed: Some(3),
        ..Default::default()
    })
    .unwrap();
    let mut buf = Vec::new();
    runner::write_report(&report, runner::ReportFormat::Json, &mut buf).unwrap();
    let back: runner::ResidualReport = serde_json::from_slice(&buf).unwrap();
    assert_eq!(back, report);
}

#[test]
fn derivative_matches_finite_differences_on_mixed_partials() {
    let f = |x: &[Jet]| -> Result<Jet, jets::JetError> { Ok(&(&x[0] * 1.3).sin() * &(&x[1] * -0.7).exp()) };
    for alpha in jets::multi_indices(2, 4).unwrap() {
        let p = [0.3, -0.4];
        let exact = jets::derivative(&f, &p, &alpha).unwrap();
        let fd = jets::fd_derivative(&f, &p, &alpha, 1e-2).unwrap();
        assert!((exact - fd).abs() / (1.0 + exact.abs()) < 1e-5, "{alpha:?}");
    }
}
