use proptest::prelude::*;

use rotlab::flows::{gd_flow_at, FlowKind, FlowParams};
use rotlab::invariance::{rotate_problem, trajectory_rotation_deviation};
use rotlab::numerics::{lambert_w0, sample_haar_orthogonal, Rng};
use rotlab::optimizers::{priming_isotropic, ridge_isotropic, Algorithm};
use rotlab::problem::{build_dataset, excess_risk, least_squares, ProblemConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn haar_samples_are_orthogonal(seed in any::<u64>(), d in 1usize..24) {
        let q = sample_haar_orthogonal(&mut Rng::new(seed), d).unwrap();
        prop_assert!(q.orthogonality_deviation() <= 1e-12);
    }

    #[test]
    fn rotating_back_restores_inputs(seed in any::<u64>(), d in 2usize..12, m in 1usize..4) {
        let ds = build_dataset(&ProblemConfig::new(d, m, 0.5, seed), &Rng::new(seed)).unwrap();
        let u = sample_haar_orthogonal(&mut Rng::new(seed ^ 0xabc), d).unwrap();
        let back = rotate_problem(&rotate_problem(&ds, &u).unwrap(), &u.transpose()).unwrap();
        prop_assert!(back.x.max_abs_diff(&ds.x) <= 1e-10);
        prop_assert_eq!(back.y, ds.y);
    }

    #[test]
    fn stacked_design_has_scaled_identity_gram(seed in any::<u64>(), d in 1usize..10, m in 1usize..5) {
        let ds = build_dataset(&ProblemConfig::new(d, m, 1.0, seed), &Rng::new(seed)).unwrap();
        let g = ds.x.gram();
        let md = (m * d) as f64;
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { md } else { 0.0 };
                prop_assert!((g[(i, j)] - want).abs() <= 1e-9 * md);
            }
        }
    }

    #[test]
    fn lambert_inverts_w_exp_w(x in -0.36787944f64..1e4) {
        let w = lambert_w0(x).unwrap();
        prop_assert!(w >= -1.0);
        prop_assert!((w * w.exp() - x).abs() <= 1e-10 * x.abs().max(1.0));
    }

    #[test]
    fn ridge_and_priming_shrink_toward_zero(seed in any::<u64>(), lambda in 0.0f64..100.0) {
        let ds = build_dataset(&ProblemConfig::new(6, 2, 1.0, seed), &Rng::new(seed)).unwrap();
        let ls = least_squares(&ds).unwrap();
        for w in [ridge_isotropic(&ls.w_ls, ls.n, lambda), priming_isotropic(&ls.w_ls, ls.n, lambda)] {
            for (a, b) in w.iter().zip(&ls.w_ls) {
                prop_assert!(a.abs() <= b.abs() + 1e-15);
                prop_assert!(a * b >= 0.0);
            }
        }
    }

    #[test]
    fn gd_flow_risk_matches_shrinkage_formula(seed in any::<u64>(), t in 0.0f64..5.0) {
        // From zero, w(t) = (1 − e^{−2t})·w_ls.
        let ds = build_dataset(&ProblemConfig::new(8, 2, 1.0, seed), &Rng::new(seed)).unwrap();
        let ls = least_squares(&ds).unwrap();
        let w = gd_flow_at(&ls.w_ls, &[0.0; 8], t).unwrap();
        let f = -(-2.0 * t).exp_m1();
        let direct: Vec<f64> = ls.w_ls.iter().map(|x| f * x).collect();
        prop_assert!((excess_risk(&w, &ds.target) - excess_risk(&direct, &ds.target)).abs() <= 1e-12);
    }

    #[test]
    fn egu_pm_flow_moves_monotonically_to_target(l in -2.0f64..2.0, w0 in -2.0f64..2.0, beta in 1e-3f64..1.0) {
        let p = FlowParams::new(FlowKind::EguPm { beta }, &[l], &[w0]).unwrap();
        let mut prev = (w0 - l).abs();
        for i in 1..=40 {
            let gap = (p.at(0.25 * i as f64).unwrap()[0] - l).abs();
            prop_assert!(gap <= prev + 1e-12);
            prev = gap;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gd_trajectory_rotates_with_inputs(seed in any::<u64>()) {
        let ds = build_dataset(
            &ProblemConfig::new(2, 1, 0.3, seed).with_column_scale(vec![2.0, 1.0]),
            &Rng::new(seed),
        )
        .unwrap();
        let u = sample_haar_orthogonal(&mut Rng::new(seed.wrapping_add(1)), 2).unwrap();
        let dev = trajectory_rotation_deviation(&Algorithm::Gd { eta: 0.05 }, &ds, &u, 300).unwrap();
        prop_assert!(dev <= 1e-8);
    }
}
