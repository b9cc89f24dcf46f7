//! Property tests of the structural invariants: unitarity and the group
//! law, transform round trips, truncation geometry, lift linearity,
//! Lyapunov lower bounds and realization determinism.

use proptest::prelude::*;
use std::sync::Arc;
use stobeam_core::*;

fn basis(n: usize) -> Arc<SpectralBasis> {
    SpectralBasis::hinged(1.0, n, 2 * n).unwrap()
}

fn state(basis: &Arc<SpectralBasis>, coeffs: &[f64]) -> SpectralState {
    let n = basis.n_modes();
    let a = coeffs[..n].to_vec();
    let b = coeffs[n..2 * n].to_vec();
    SpectralState::new(basis.clone(), a, b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_is_unitary_and_additive(
        coeffs in prop::collection::vec(-2.0f64..2.0, 8),
        s in -15.0f64..15.0,
        t in -15.0f64..15.0,
    ) {
        let basis = basis(4);
        let x = state(&basis, &coeffs);
        prop_assume!(x.h_norm() > 1e-6);
        let xt = x.group_apply(t);
        prop_assert!((xt.h_norm() / x.h_norm() - 1.0).abs() <= 1e-12);
        let two = x.group_apply(s).group_apply(t);
        let one = x.group_apply(s + t);
        prop_assert!(two.add_scaled(&one, -1.0).unwrap().h_norm() <= 1e-10 * x.h_norm());
    }

    #[test]
    fn grid_round_trip(coeffs in prop::collection::vec(-3.0f64..3.0, 6)) {
        let basis = basis(6);
        let grid = basis.to_grid(&coeffs).unwrap();
        let back = basis.from_grid(&grid).unwrap();
        for (c, r) in coeffs.iter().zip(&back) {
            prop_assert!((c - r).abs() <= 1e-12 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn lyapunov_functionals_dominate_half_norm(
        coeffs in prop::collection::vec(-2.0f64..2.0, 8),
        beta in 0.0f64..2.0,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let basis = basis(4);
        let x = state(&basis, &coeffs);
        let nl = NonlinearityM::affine(a, b, 1.0).unwrap();
        let p = POperator::new(basis, beta).unwrap();
        let half = 0.5 * x.h_norm_sq();
        prop_assert!(v_lyapunov(&x, &nl) >= half - 1e-12);
        prop_assert!(phi_lyapunov(&x, &p, &nl).unwrap() >= half - 1e-9 * (1.0 + half));
        // q_n lower bound: V(x) >= ‖x‖²/2, so inf over ‖x‖ >= n is >= n²/2.
    }

    #[test]
    fn truncation_is_retraction(
        coeffs in prop::collection::vec(-4.0f64..4.0, 8),
        radius in 0.5f64..3.0,
    ) {
        let basis = basis(4);
        let spec = ModelSpec::new(
            NonlinearityM::affine(0.0, 1.0, 1.0).unwrap(),
            DriftKind::LinearDamping { beta: 0.3 },
            JumpKind::Separable { shape: vec![0.0; 4], map: MarkMap::constant(0.0) },
            DeclaredConstants::default(),
        ).unwrap();
        let trunc = spec.truncate_drift(radius).unwrap();
        let x = state(&basis, &coeffs);
        let fx = trunc.drift_increment(0.0, &x).unwrap();
        let reference = if x.h_norm() <= radius {
            spec.drift_increment(0.0, &x).unwrap()
        } else {
            spec.drift_increment(0.0, &x.scale(radius / x.h_norm())).unwrap()
        };
        prop_assert!(fx.add_scaled(&reference, -1.0).unwrap().h_norm() <= 1e-10 * (1.0 + reference.h_norm()));
        // Rays outside the ball are constant: scaling x further changes nothing.
        if x.h_norm() > radius {
            let fy = trunc.drift_increment(0.0, &x.scale(3.0)).unwrap();
            prop_assert!(fx.add_scaled(&fy, -1.0).unwrap().h_norm() <= 1e-10 * (1.0 + fx.h_norm()));
        }
    }

    #[test]
    fn lift_is_linear_in_the_coefficient(
        coeffs in prop::collection::vec(-1.0f64..1.0, 8),
        c1 in -2.0f64..2.0,
        c2 in -2.0f64..2.0,
        alpha in -3.0f64..3.0,
    ) {
        let basis = basis(4);
        let x = state(&basis, &coeffs);
        let mk = |c_u: f64, c_ut: f64| PointwiseCoefficient {
            kind: PointwiseKind::LinearFields { c0: 0.0, c_u, c_ut, c_grad: 0.0 },
            constants: PointwiseConstants::default(),
        };
        let l1 = lift_pointwise(mk(c1, c2), basis.clone()).eval(0.0, &x, 0.0).unwrap();
        let l2 = lift_pointwise(mk(c2, -c1), basis.clone()).eval(0.0, &x, 0.0).unwrap();
        let lc = lift_pointwise(mk(alpha * c1 + c2, alpha * c2 - c1), basis)
            .eval(0.0, &x, 0.0)
            .unwrap();
        for k in 0..4 {
            let expect = alpha * l1[k] + l2[k];
            prop_assert!((lc[k] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn realizations_are_pure_functions_of_seed(
        seed in any::<u64>(),
        stream in any::<u64>(),
        lambda in 0.1f64..5.0,
        horizon in 0.1f64..4.0,
    ) {
        let nu = MarkMeasure::atoms(vec![(-1.0, lambda / 2.0), (1.0, lambda / 2.0)]).unwrap();
        let r1 = sample_realization(&nu, horizon, SeedRecord::new(seed, stream)).unwrap();
        let r2 = sample_realization(&nu, horizon, SeedRecord::new(seed, stream)).unwrap();
        prop_assert_eq!(&r1.times, &r2.times);
        prop_assert_eq!(&r1.marks, &r2.marks);
        for w in r1.times.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        for &t in &r1.times {
            prop_assert!(t > 0.0 && t <= horizon);
        }
        // JSON round trip is exact.
        let back = PoissonRealization::from_json(&r1.to_json().unwrap()).unwrap();
        prop_assert_eq!(&r1.times, &back.times);
        prop_assert_eq!(&r1.marks, &back.marks);
    }
}
