use nsdreg::gaussian::{cholesky, fbm_cov, sample_fbm_at, CovKind, CovSpec, DeterministicW, NoisePath};
use nsdreg::montecarlo::{histogram, ks_distance};
use nsdreg::regression::{
    error_identity_rhs, lse, lse_from, make_sample, summation_by_parts, weighted_increment_sum, EstimatorKind,
};
use nsdreg::rng::root_rng;
use nsdreg::times::{count_n1, TimeModelSpec, TimeSequence};
use proptest::prelude::*;

fn durations() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..0.4, 3..40)
}

/// A sequence whose last time is just past the horizon.
fn sequence(t: Vec<f64>) -> TimeSequence {
    let mut spec = TimeModelSpec::fixed(t.len()).unwrap();
    let total: f64 = t.iter().sum();
    spec.horizon = total - 0.5 * t.last().unwrap();
    TimeSequence::from_durations(spec, t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn error_identity_and_summation_by_parts(t in durations(), hurst in 0.05f64..0.95, a in -3.0f64..3.0, seed in any::<u64>()) {
        let times = sequence(t);
        let path = sample_fbm_at(times.tau(), hurst, 1.0, &mut root_rng(seed)).unwrap();
        let est = lse(&make_sample(a, &times, &path, EstimatorKind::Stopped).unwrap(), EstimatorKind::Stopped).unwrap();
        let tau = &times.tau()[..times.n1()];
        prop_assert!((est.a_hat - a - error_identity_rhs(tau, &path).unwrap()).abs() <= 1e-10);

        let mut w = vec![0.0];
        w.extend(path.eval_many(tau).unwrap());
        prop_assert!((weighted_increment_sum(tau, &w) - summation_by_parts(tau, &w)).abs() <= 1e-10);
    }

    #[test]
    fn estimator_is_equivariant(t in durations(), c in -4.0f64..4.0, delta in -2.0f64..2.0, seed in any::<u64>()) {
        let times = sequence(t);
        let path = sample_fbm_at(times.tau(), 0.3, 1.0, &mut root_rng(seed)).unwrap();
        let sample = make_sample(1.0, &times, &path, EstimatorKind::Stopped).unwrap();
        let tau = &times.tau()[..sample.len()];
        let base = lse_from(tau, &sample.y).unwrap();

        let scaled: Vec<f64> = sample.y.iter().map(|y| c * y).collect();
        prop_assert!((lse_from(tau, &scaled).unwrap() - c * base).abs() <= 1e-12 * (1.0 + (c * base).abs()));

        let shifted = make_sample(1.0 + delta, &times, &path, EstimatorKind::Stopped).unwrap();
        let moved = lse(&shifted, EstimatorKind::Stopped).unwrap().a_hat;
        prop_assert!((moved - (base + delta)).abs() <= 1e-12 * (1.0 + base.abs() + delta.abs()));
    }

    #[test]
    fn zero_noise_recovers_the_trend(t in durations(), a in -10.0f64..10.0) {
        let times = sequence(t);
        let zero = NoisePath::deterministic(DeterministicW::Zero);
        let est = lse(&make_sample(a, &times, &zero, EstimatorKind::Full).unwrap(), EstimatorKind::Full).unwrap();
        prop_assert!((est.a_hat - a).abs() <= 1e-12);
    }

    #[test]
    fn fbm_cholesky_reconstructs(t in durations(), hurst in 0.05f64..0.95) {
        let times = sequence(t);
        let spec = CovSpec::centered(
            times.len(),
            CovKind::Fbm { hurst, sigma2: 1.0, grid: times.tau().to_vec() },
        ).unwrap();
        let factor = cholesky(&spec).unwrap();
        prop_assert!(factor.relative_reconstruction_error(&spec.packed()) < 1e-10);
    }

    #[test]
    fn fbm_covariance_symmetry(s in 0.0f64..5.0, t in 0.0f64..5.0, hurst in 0.01f64..0.99) {
        prop_assert_eq!(fbm_cov(hurst, 1.0, s, t).unwrap(), fbm_cov(hurst, 1.0, t, s).unwrap());
        prop_assert!((fbm_cov(0.5, 1.0, s, t).unwrap() - s.min(t)).abs() <= 1e-12);
        // Cauchy–Schwarz.
        let c = fbm_cov(hurst, 1.0, s, t).unwrap();
        prop_assert!(c * c <= fbm_cov(hurst, 1.0, s, s).unwrap() * fbm_cov(hurst, 1.0, t, t).unwrap() + 1e-12);
    }

    #[test]
    fn counting_identity(t in durations(), frac in 0.0f64..1.0) {
        let tau: Vec<f64> = t.iter().scan(0.0, |acc, x| { *acc += x; Some(*acc) }).collect();
        let horizon = frac * tau.last().unwrap();
        let n1 = count_n1(&tau, horizon).unwrap();
        prop_assert_eq!(n1, tau.iter().filter(|&&x| x <= horizon).count());
    }

    #[test]
    fn histogram_conserves_mass(xs in prop::collection::vec(-50.0f64..50.0, 1..300), bins in 1usize..40) {
        let h = histogram(&xs, bins, None).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<u64>(), xs.len() as u64);
        prop_assert_eq!(h.edges.len(), bins + 1);
        let h = histogram(&xs, bins, Some((-10.0, 10.0))).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<u64>() + h.underflow + h.overflow, xs.len() as u64);
    }

    #[test]
    fn ks_is_a_probability_distance(xs in prop::collection::vec(-5.0f64..5.0, 10..200), var in 0.1f64..10.0) {
        let d = ks_distance(&xs, var).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        // At least the jump at the largest point.
        prop_assert!(d >= 0.5 / xs.len() as f64);
    }
}
