//! Randomised invariants of the signal model and the estimators.

mod common;

use aodlab_core::ml::{dml_estimate, dml_residual, sml_estimate, GridConfig, SmlAngleProfile};
use aodlab_core::neural::{build_input_tensor, build_pilot_feature, PilotMode};
use aodlab_core::rng::{complex_gaussian, stream};
use aodlab_core::search::{argmin, cell_centred_grid};
use aodlab_core::signal::{make_beamformers, sample_covariance, ArrayGeometry, ObservationBatch, PilotSchedule};
use aodlab_core::{CMatrix, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn random_batch(l: usize, q: usize, seed: u64) -> ObservationBatch {
    let mut rng = stream(seed, &[99]);
    ObservationBatch::new(CMatrix::from_fn(l, q, |_, _| complex_gaussian(&mut rng, 1.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn steering_entries_have_unit_modulus(m in 1usize..33, d in 0.05f64..2.0, theta in 0.0f64..std::f64::consts::PI) {
        let g = ArrayGeometry::new(m, d, 28e9).unwrap();
        let a = g.steering_vector(theta);
        prop_assert_eq!(a[0], C64::new(1.0, 0.0));
        for z in a.iter() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn steering_derivative_matches_finite_differences(theta in 0.0f64..std::f64::consts::PI) {
        let g = ArrayGeometry::reference();
        let h = 1e-6;
        let fd = (g.steering_vector(theta + h) - g.steering_vector(theta - h)) / C64::new(2.0 * h, 0.0);
        let an = g.steering_derivative(theta);
        prop_assert!((fd - an).iter().all(|z| z.norm() < 1e-6));
    }

    #[test]
    fn beamformers_carry_full_power(l in 1usize..8, m in 1usize..12, p in 1e-4f64..10.0, seed in any::<u64>()) {
        let mut rng = stream(seed, &[]);
        let phases = aodlab_core::signal::random_phases(l, m, &mut rng);
        for b in make_beamformers(p, m, &phases).unwrap() {
            prop_assert!((b.norm_squared() - p).abs() < 1e-12 * p);
        }
        let zero = make_beamformers(p, m, &DMatrix::zeros(l, m)).unwrap();
        prop_assert!(zero.iter().all(|b| b.iter().all(|z| (z - C64::new((p / m as f64).sqrt(), 0.0)).norm() < 1e-15)));
    }

    #[test]
    fn sample_covariance_is_hermitian_psd_with_bounded_rank(l in 1usize..9, q in 1usize..9, seed in any::<u64>()) {
        let c = sample_covariance(&random_batch(l, q, seed));
        let m = c.matrix();
        let scale = m.norm();
        prop_assert!((m - m.adjoint()).norm() <= 1e-12 * scale);
        let eig = aodlab_core::linalg::hermitian_eigen(m);
        prop_assert!(eig.values.iter().all(|&v| v >= -1e-10 * c.trace()));
        let rank = eig.values.iter().filter(|&&v| v > 1e-9 * c.trace()).count();
        prop_assert!(rank <= l.min(q));
    }

    #[test]
    fn duplicating_blocks_keeps_the_sample_covariance(l in 1usize..7, seed in any::<u64>()) {
        let y = random_batch(l, 1, seed);
        let yy = ObservationBatch::new(CMatrix::from_fn(l, 2, |i, _| y.matrix()[(i, 0)]));
        let a = sample_covariance(&y);
        let b = sample_covariance(&yy);
        prop_assert!((a.matrix() - b.matrix()).norm() <= 1e-15 * a.matrix().norm());
    }

    #[test]
    fn feature_tensor_round_trip_is_exact(l in 1usize..6, q in 1usize..5, m in 1usize..9, dml in any::<bool>(), seed in any::<u64>()) {
        let s = PilotSchedule::random(0.1, m, l, q, &mut stream(seed, &[])).unwrap();
        let mode = if dml { PilotMode::Dml } else { PilotMode::Sml };
        let x = build_pilot_feature(&s, mode);
        let y = random_batch(l, q, seed);
        let t = build_input_tensor(&x, &y).unwrap();
        prop_assert_eq!(t.shape(), [2, m + 1, l * q]);
        let (x2, y2) = t.split(l).unwrap();
        prop_assert_eq!(&x2, x.matrix());
        prop_assert_eq!(y2, y);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn dml_is_equivariant_to_a_global_phase(seed in any::<u64>(), phi in -3.1f64..3.1) {
        let g = ArrayGeometry::reference();
        let sc = common::scenario(&g, 0.2 + (seed % 100) as f64 * 0.013, 30.0, 15.0);
        let (s, y) = common::trial(&g, &sc, 6, 4, seed, 0);
        let rot = C64::from_polar(1.0, phi);
        let yr = ObservationBatch::new(y.matrix().map(|z| z * rot));
        let grid = GridConfig::default();
        let a = dml_estimate(&g, &s, &y, &grid).unwrap();
        let b = dml_estimate(&g, &s, &yr, &grid).unwrap();
        prop_assert!((a.theta_hat - b.theta_hat).abs() < 1e-9);
        prop_assert!((a.xi_hat * rot - b.xi_hat).norm() < 1e-6 * a.xi_hat.norm());
    }

    #[test]
    fn sml_ignores_block_order(seed in any::<u64>()) {
        let g = ArrayGeometry::reference();
        let sc = common::scenario(&g, 0.9, 40.0, 10.0);
        let (s, y) = common::trial(&g, &sc, 4, 5, seed, 0);
        let perm = [3usize, 0, 4, 2, 1];
        let yp = ObservationBatch::new(CMatrix::from_fn(4, 5, |l, q| y.matrix()[(l, perm[q])]));
        let grid = GridConfig { num_points: 64, ..GridConfig::default() };
        let a = sml_estimate(&g, s.beamformers(), &y, &grid, 3).unwrap();
        let b = sml_estimate(&g, s.beamformers(), &yp, &grid, 3).unwrap();
        prop_assert!((a.theta_hat - b.theta_hat).abs() < 1e-9);
        prop_assert!((a.nll - b.nll).abs() < 1e-9 * a.nll.abs().max(1.0));
    }

    #[test]
    fn grid_winner_is_the_brute_force_minimum(seed in any::<u64>()) {
        let g = ArrayGeometry::reference();
        let sc = common::scenario(&g, 0.1 + (seed % 97) as f64 * 0.014, 45.0, 0.0);
        let (s, y) = common::trial(&g, &sc, 6, 4, seed, 1);
        let grid = GridConfig { num_points: 96, ..GridConfig::default() };
        let pts = cell_centred_grid(grid.theta_lo, grid.theta_hi, grid.num_points);

        let dml: Vec<f64> = pts
            .iter()
            .map(|&t| {
                let xi = aodlab_core::ml::dml_xi_closed_form(&g, &s, &y, t).unwrap();
                dml_residual(&g, &s, &y, t, xi).unwrap()
            })
            .collect();
        prop_assert_eq!(dml_estimate(&g, &s, &y, &grid).unwrap().coarse_theta, pts[argmin(&dml).unwrap()]);

        let chat = sample_covariance(&y);
        let sml: Vec<f64> =
            pts.iter().map(|&t| SmlAngleProfile::new(&g, s.beamformers(), &chat, t).unwrap().fit(3).nll).collect();
        prop_assert_eq!(sml_estimate(&g, s.beamformers(), &y, &grid, 3).unwrap().coarse_theta, pts[argmin(&sml).unwrap()]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn inner_coordinate_descent_never_increases(seed in any::<u64>(), theta in 0.05f64..1.5) {
        let g = ArrayGeometry::reference();
        let sc = common::scenario(&g, 0.7, 35.0, 5.0);
        let (s, y) = common::trial(&g, &sc, 6, 4, seed, 2);
        let fit = SmlAngleProfile::new(&g, s.beamformers(), &sample_covariance(&y), theta).unwrap().fit(6);
        prop_assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
