//! Property tests for the algebraic building blocks.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use seekrate::linalg::{characteristic_polynomial, eigenvalues, kron_lift, null_direction};
use seekrate::plants::{parse_plant, plant_to_string, PlantModel};
use seekrate::ss::{build_vehicle, series, ReferenceGains, StateSpace};

fn small_matrix(n: usize, m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-3.0f64..3.0, n * m)
        .prop_map(move |v| DMatrix::from_row_slice(n, m, &v))
}

fn stable_siso(nx: usize) -> impl Strategy<Value = StateSpace> {
    (
        small_matrix(nx, nx),
        small_matrix(nx, 1),
        small_matrix(1, nx),
        -1.0f64..1.0,
    )
        .prop_map(move |(a_raw, b, c, d)| {
            // Shift the diagonal to push eigenvalues into the left half plane.
            let mut a = a_raw;
            let shift = a.amax() * (nx as f64) + 0.5;
            for i in 0..nx {
                a[(i, i)] -= shift;
            }
            StateSpace::new(a, b, c, DMatrix::from_element(1, 1, d)).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn series_is_associative_on_impulse_response(
        s1 in stable_siso(2),
        s2 in stable_siso(2),
        s3 in stable_siso(1),
    ) {
        let left = series(&series(&s1, &s2).unwrap(), &s3).unwrap();
        let right = series(&s1, &series(&s2, &s3).unwrap()).unwrap();
        let times: Vec<f64> = (0..9).map(|k| 0.25 * k as f64).collect();
        let li = left.impulse_response(&times);
        let ri = right.impulse_response(&times);
        for (a, b) in li.iter().zip(&ri) {
            prop_assert!((a - b).amax() < 1e-9, "impulse responses diverge: {} vs {}", a[(0,0)], b[(0,0)]);
        }
        // Feedthrough is exactly equal.
        prop_assert!((left.d.clone() - right.d.clone()).amax() < 1e-12);
    }

    #[test]
    fn kron_lift_distributes_over_products(
        m in small_matrix(3, 2),
        n in small_matrix(2, 3),
        d in 1usize..4,
    ) {
        let lhs = kron_lift(&(&m * &n), d).unwrap();
        let rhs = kron_lift(&m, d).unwrap() * kron_lift(&n, d).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-12);
    }

    #[test]
    fn eigenvalues_match_characteristic_roots(mat in small_matrix(3, 3)) {
        // Cross-check: eigenvalues of the companion matrix of the
        // characteristic polynomial agree with the matrix eigenvalues.
        let coeffs = characteristic_polynomial(&mat);
        let n = mat.nrows();
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for i in 0..n - 1 {
            companion[(i + 1, i)] = 1.0;
        }
        for i in 0..n {
            companion[(i, n - 1)] = -coeffs[i];
        }
        let mut eig_a = eigenvalues(&mat).unwrap();
        let mut eig_c = eigenvalues(&companion).unwrap();
        let key = |z: &nalgebra::Complex<f64>| (z.re, z.im);
        eig_a.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        eig_c.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for (a, c) in eig_a.iter().zip(&eig_c) {
            prop_assert!((a - c).norm() < 1e-6 * (1.0 + a.norm()),
                "eig {} vs companion {}", a, c);
        }
    }

    #[test]
    fn vehicle_always_keeps_integrator(
        tracker in stable_siso(2),
        k_p in 0.1f64..5.0,
        k_d in 0.1f64..5.0,
    ) {
        // Adapt the tracker to reference width 2 (position + velocity).
        let b2 = DMatrix::from_fn(2, 2, |i, j| tracker.b[(i, 0)] * if j == 0 { 1.0 } else { 0.3 });
        let cl = StateSpace::new(tracker.a.clone(), b2, tracker.c.clone(), DMatrix::zeros(1, 2)).unwrap();
        let g = build_vehicle(&cl, ReferenceGains::new(k_p, k_d).unwrap(), 1).unwrap();
        let eta = null_direction(&g.a);
        prop_assert!(eta.is_some(), "vehicle lost its integrator");
        let eta = eta.unwrap();
        prop_assert!((&g.a * &eta).norm() <= 1e-9 * g.a.amax().max(1.0));
        // Reference block's nonzero eigenvalue is -k_d.
        let eigs = eigenvalues(&g.a).unwrap();
        let has_damped = eigs.iter().any(|z| (z.re + k_d).abs() < 1e-6 && z.im.abs() < 1e-6);
        prop_assert!(has_damped, "damped reference eigenvalue missing");
    }

    #[test]
    fn plant_files_round_trip_bit_exactly(
        tracker in stable_siso(2),
        k_p in 0.1f64..5.0,
        k_d in 0.1f64..5.0,
    ) {
        let b2 = DMatrix::from_fn(2, 2, |i, j| tracker.b[(i, 0)] * if j == 0 { 1.0 } else { -0.7 });
        let cl = StateSpace::new(tracker.a.clone(), b2, tracker.c.clone(), DMatrix::zeros(1, 2)).unwrap();
        let g = build_vehicle(&cl, ReferenceGains::new(k_p, k_d).unwrap(), 1).unwrap();
        if let Ok(model) = PlantModel::lti("prop-test", g) {
            let text = plant_to_string(&model);
            let back = parse_plant(&text).unwrap();
            for (v1, v2) in model.vertices().iter().zip(back.vertices()) {
                prop_assert_eq!(&v1.a, &v2.a);
                prop_assert_eq!(&v1.b, &v2.b);
                prop_assert_eq!(&v1.c, &v2.c);
            }
        }
    }

    #[test]
    fn null_direction_detects_planted_kernels(mat in small_matrix(3, 3), dir in proptest::collection::vec(-1.0f64..1.0, 3)) {
        // Project the matrix so `dir` is exactly in the kernel, then ask for
        // it back.
        let v = DVector::from_row_slice(&dir);
        prop_assume!(v.norm() > 0.1);
        let v = &v / v.norm();
        let planted = &mat - (&mat * &v) * v.transpose();
        prop_assert!((&planted * &v).norm() < 1e-12 * planted.amax().max(1e-12));
        let found = null_direction(&planted);
        prop_assert!(found.is_some());
        let eta = found.unwrap();
        prop_assert!((&planted * &eta).norm() <= 1e-9 * planted.amax().max(1e-12));
    }
}
