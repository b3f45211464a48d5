mod support;

use backproc_core::bands::MultiplierBootstrap;
use backproc_core::dist::WeightedSample;
use backproc_core::forward::ForwardMean;
use backproc_core::rate::Kernel;
use backproc_core::{apply_prevalent_shift, product_limit, BackwardEstimator};
use proptest::prelude::*;
use support::*;

fn kernel() -> impl Strategy<Value = Kernel> {
    prop_oneof![
        Just(Kernel::Epanechnikov),
        Just(Kernel::Uniform),
        Just(Kernel::Triangular)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalization_identity((cohort, window) in cohort_and_window(false)) {
        let Ok(est) = BackwardEstimator::new(&cohort, window) else { return Ok(()) };
        prop_assert!(normalization(&est).is_ok(), "{:?}", normalization(&est));
    }

    #[test]
    fn complete_data_reductions((cohort, window) in cohort_and_window(true)) {
        let r = complete_data(&cohort, window);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn additivity_over_windows((cohort, window) in cohort_and_window(false), split in 0.05..0.95f64) {
        let r = window_additivity(&cohort, window, split);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn product_limit_jumps((cohort, _) in cohort_and_window(false)) {
        let r = jump_identity(&cohort);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn rate_is_smoothed_mean((cohort, window) in cohort_and_window(false), k in kernel(), h in 0.05..1.5f64) {
        let Ok(est) = BackwardEstimator::new(&cohort, window) else { return Ok(()) };
        let r = convolution(&est, k, h);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn covariance_is_psd(
        (cohort, window) in cohort_and_window(false),
        fracs in prop::collection::vec(0.0..=1.0f64, 1..12),
    ) {
        let Ok(est) = BackwardEstimator::new(&cohort, window) else { return Ok(()) };
        let grid: Vec<f64> = fracs.iter().map(|f| f * window.tau0).collect();
        let r = gram_psd(&est, &grid);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn marks_scale_through((cohort, window) in cohort_and_window(false), c in 0.01..50.0f64) {
        let r = scale_equivariance(&cohort, window, c);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn mean_curve_is_monotone((cohort, window) in cohort_and_window(false)) {
        let Ok(est) = BackwardEstimator::new(&cohort, window) else { return Ok(()) };
        let curve = est.curve(None).unwrap();
        for pair in curve.mu.windows(2) {
            prop_assert!(pair[1] >= pair[0] - 1e-12 * pair[0].abs().max(1.0));
        }
    }

    #[test]
    fn survival_is_permutation_invariant((cohort, _) in cohort_and_window(false), rot in 0usize..40) {
        let mut subjects = cohort.subjects().to_vec();
        let k = rot % subjects.len();
        subjects.rotate_left(k);
        subjects.reverse();
        let shuffled = backproc_core::validate_cohort(subjects).unwrap();
        let (a, b) = (product_limit(&cohort), product_limit(&shuffled));
        prop_assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert_eq!(a.event_times(), b.event_times());
            for (x, y) in a.s_left().iter().zip(b.s_left()) {
                prop_assert!(close(*x, *y));
            }
        }
    }

    #[test]
    fn survival_is_monotone_and_bounded((cohort, _) in cohort_and_window(false)) {
        let Ok(curve) = product_limit(&cohort) else { return Ok(()) };
        let mut prev = 1.0;
        for &s in curve.s_left() {
            prop_assert!((0.0..=1.0).contains(&s) && s <= prev);
            prev = s;
        }
        prop_assert!(curve.s_final() <= prev);
    }

    #[test]
    fn percentile_is_observed_and_monotone((cohort, window) in cohort_and_window(false), u_frac in 0.0..=1.0f64) {
        let Ok(est) = BackwardEstimator::new(&cohort, window) else { return Ok(()) };
        let sample = WeightedSample::new(&est, u_frac * window.tau0).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for q in [0.05, 0.25, 0.5, 0.75, 0.95] {
            let p = sample.percentile(q).unwrap();
            prop_assert!(sample.points().iter().any(|pt| pt.value == p));
            prop_assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn forward_mean_is_monotone((cohort, _) in cohort_and_window(false)) {
        let Ok(fwd) = ForwardMean::new(&cohort) else { return Ok(()) };
        let mut prev = 0.0;
        for k in 0..60 {
            let v = fwd.at(k as f64 * 0.15);
            prop_assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn fast_bootstrap_matches_influence(
        (cohort, window) in cohort_and_window(false),
        g in prop::collection::vec(-3.0..3.0f64, 40),
    ) {
        let Ok(est) = BackwardEstimator::new(&cohort, window) else { return Ok(()) };
        let grid = est.default_grid();
        let boot = MultiplierBootstrap::new(&est, &grid).unwrap();
        let inf = est.influence(&grid).unwrap();
        let g = &g[..est.contributor_count()];
        let fast = boot.draw(g);
        let direct = inf.draw(g);
        let scale = direct.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in fast.iter().zip(&direct) {
            prop_assert!((a - b).abs() <= 1e-10 * scale, "{} vs {}", a, b);
        }
    }

    #[test]
    fn shift_keeps_backward_window_observed((cohort, _) in cohort_and_window(false), tau0 in 0.1..1.0f64) {
        let Ok(shifted) = apply_prevalent_shift(&cohort, tau0) else { return Ok(()) };
        for (s, orig) in shifted.subjects().iter().map(|s| (s, cohort.subjects().iter().find(|o| o.id == s.id).unwrap())) {
            if orig.w > 0.0 {
                prop_assert!(s.w == orig.w + tau0 && s.x >= s.w);
                prop_assert_eq!(&s.events, &orig.events);
            }
        }
    }
}
