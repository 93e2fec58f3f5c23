use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use cesp_core::analysis::{classify_point, Verdict, DEFAULT_TOL};
use cesp_core::curvature::{extreme_curvature, minus_component, plus_component, CurvatureMethod};
use cesp_core::dynamics::{adagrad_transform, step, Method, OptimizerConfig, OptimizerState};
use cesp_core::linalg::{characteristic_polynomial, general_eigenvalues, polynomial_roots};
use cesp_core::problems::{quadratic_saddle, toy_problem, PointZ};

fn toy_point() -> impl Strategy<Value = PointZ> {
    (-6.0..6.0f64, -6.0..6.0f64).prop_map(|(x, y)| PointZ::new(vec![x], vec![y]))
}

fn spd(entries: &[f64], n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(n, n, &entries[..n * n]);
    let s = m.transpose() * &m + DMatrix::identity(n, n) * 0.2;
    (&s + s.transpose()) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn direction_vanishes_iff_curvatures_have_the_right_sign(z in toy_point(), rho in 0.5..50.0f64) {
        let toy = toy_problem().with_rho(rho, rho).unwrap();
        let c = extreme_curvature(&toy, &z, CurvatureMethod::Dense, &Default::default()).unwrap();
        prop_assert_eq!(c.is_zero(), c.lambda_x >= 0.0 && c.lambda_y <= 0.0);
    }

    #[test]
    fn direction_has_curvature_magnitude_and_ascent_alignment(z in toy_point(), rho in 0.5..50.0f64) {
        let toy = toy_problem().with_rho(rho, rho).unwrap();
        let c = extreme_curvature(&toy, &z, CurvatureMethod::Dense, &Default::default()).unwrap();
        let (gx, gy) = toy.gradient(&z).unwrap();
        let expect_minus = if c.lambda_x < 0.0 { -c.lambda_x / (2.0 * rho) } else { 0.0 };
        let expect_plus = if c.lambda_y > 0.0 { c.lambda_y / (2.0 * rho) } else { 0.0 };
        prop_assert!((c.v_minus.norm() - expect_minus).abs() < 1e-10);
        prop_assert!((c.v_plus.norm() - expect_plus).abs() < 1e-10);
        prop_assert!(-gx.dot(&c.v_minus) + gy.dot(&c.v_plus) >= 0.0);
    }

    #[test]
    fn eigenvector_sign_does_not_matter(
        lambda in -5.0..5.0f64,
        v in prop::collection::vec(-1.0..1.0f64, 3),
        g in prop::collection::vec(-3.0..3.0f64, 3),
    ) {
        let mut v = DVector::from_vec(v);
        prop_assume!(v.norm() > 1e-3);
        v.normalize_mut();
        let g = DVector::from_vec(g);
        prop_assume!(v.dot(&g).abs() > 1e-12);
        let flipped = -&v;
        prop_assert_eq!(minus_component(lambda, &v, &g, 2.0), minus_component(lambda, &flipped, &g, 2.0));
        prop_assert_eq!(plus_component(lambda, &v, &g, 2.0), plus_component(lambda, &flipped, &g, 2.0));
    }

    #[test]
    fn qr_eigenvalues_match_characteristic_roots(entries in prop::collection::vec(-3.0..3.0f64, 9)) {
        let m = DMatrix::from_row_slice(3, 3, &entries);
        let qr = general_eigenvalues(&m).unwrap();
        let roots = polynomial_roots(&characteristic_polynomial(&m).unwrap());
        let mut used = [false; 3];
        for e in &qr {
            let (best, dist) = roots
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .map(|(i, r)| (i, (r - e).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            used[best] = true;
            // Repeated roots lose half their digits in any root finder.
            prop_assume!(dist < 1e-4);
            prop_assert!(dist < 1e-8, "{} vs {:?}", e, roots);
        }
    }

    #[test]
    fn quadratic_saddles_are_locally_optimal(
        a in prop::collection::vec(-1.0..1.0f64, 4),
        b in prop::collection::vec(-1.0..1.0f64, 4),
        c in prop::collection::vec(-2.0..2.0f64, 4),
    ) {
        let q = quadratic_saddle(spd(&a, 2), spd(&b, 2), DMatrix::from_row_slice(2, 2, &c)).unwrap();
        let origin = PointZ::new(vec![0.0; 2], vec![0.0; 2]);
        prop_assert_eq!(classify_point(&q, &origin, DEFAULT_TOL).unwrap().verdict, Verdict::LocallyOptimalSaddle);
    }

    #[test]
    fn cesp_and_gda_agree_bitwise_on_quadratics(
        a in prop::collection::vec(-1.0..1.0f64, 4),
        c in prop::collection::vec(-2.0..2.0f64, 2),
        x0 in prop::collection::vec(-5.0..5.0f64, 3),
        seed in 0u64..1000,
    ) {
        let q = quadratic_saddle(spd(&a, 2), spd(&a[..1], 1), DMatrix::from_row_slice(2, 1, &c)).unwrap();
        let z0 = PointZ::new(x0[..2].to_vec(), x0[2..].to_vec());
        let run = |method| {
            let cfg = OptimizerConfig { method, eta: 0.01, noise_sigma: 0.1, seed, ..Default::default() };
            let mut state = OptimizerState::new(z0.clone(), seed);
            for _ in 0..50 {
                step(&q, &mut state, &cfg).unwrap();
            }
            state.z
        };
        prop_assert_eq!(run(Method::Gda), run(Method::Cesp));
    }

    #[test]
    fn adagrad_accumulators_grow_and_transform_stays_positive(
        grads in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..40),
    ) {
        let mut state = OptimizerState::new(PointZ::new(vec![0.0], vec![0.0]), 0);
        let mut prev = (0.0, 0.0);
        for (gx, gy) in grads {
            let (a, b) = adagrad_transform(&mut state, &DVector::from_element(1, gx), &DVector::from_element(1, gy), 1e-8);
            prop_assert!(a[0] > 0.0 && b[0] > 0.0);
            prop_assert!(state.accum_x[0] >= prev.0 && state.accum_y[0] >= prev.1);
            prev = (state.accum_x[0], state.accum_y[0]);
        }
    }
}
