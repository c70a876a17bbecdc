//! Path-by-path behaviour of the scaled error as the sampling rate grows.

use nsdreg::montecarlo::{fraction_shrinking, run_convergence, ConvergenceConfig, ConvergenceNoise, ConvergenceRow};
use nsdreg::regression::EstimatorKind;
use nsdreg::stats::median;
use nsdreg::times::{BlockLayout, JitterDist, TimeModel, DEFAULT_RHO};

const NSD: TimeModel = TimeModel::NsdLognormal { rho: DEFAULT_RHO, layout: BlockLayout::Blocks(5) };

fn median_deviation(rows: &[ConvergenceRow], n: usize) -> f64 {
    median(&rows.iter().filter(|r| r.n == n).map(|r| r.deviation).collect::<Vec<_>>())
}

#[test]
fn quadratic_noise_deviation_falls_like_root_n() {
    for estimator in [EstimatorKind::Stopped, EstimatorKind::Full] {
        let config = ConvergenceConfig {
            time: NSD,
            n_list: vec![250, 1000, 4000],
            seeds: (100..140).collect(),
            noise: ConvergenceNoise::Quadratic,
            estimator,
            a: 1.0,
        };
        let rows = run_convergence(&config).unwrap();
        let m: Vec<f64> = config.n_list.iter().map(|&n| median_deviation(&rows, n)).collect();
        // Each fourfold increase of N should roughly halve the typical deviation.
        assert!(m[1] < 0.75 * m[0] && m[2] < 0.75 * m[1], "{estimator:?}: {m:?}");
        assert!(rows.iter().filter(|r| r.n == 4000).all(|r| r.deviation < 0.15));
    }
}

#[test]
fn jittered_times_converge_on_every_path() {
    let config = ConvergenceConfig {
        time: TimeModel::Jittered(JitterDist::Uniform),
        n_list: vec![250, 4000],
        seeds: (0..50).collect(),
        noise: ConvergenceNoise::Quadratic,
        estimator: EstimatorKind::Stopped,
        a: 1.0,
    };
    let rows = run_convergence(&config).unwrap();
    assert!(fraction_shrinking(&rows, 250, 4000) >= 0.9);
}

#[test]
fn fbm_paths_approach_their_limit_functional() {
    let config = ConvergenceConfig {
        time: NSD,
        n_list: vec![100, 3000],
        seeds: (0..30).collect(),
        noise: ConvergenceNoise::InterpolatedFbm { hurst: 0.7, resolution_log2: 12 },
        estimator: EstimatorKind::Stopped,
        a: 1.0,
    };
    let rows = run_convergence(&config).unwrap();
    let (coarse, fine) = (median_deviation(&rows, 100), median_deviation(&rows, 3000));
    assert!(fine < 0.5 * coarse, "{coarse} -> {fine}");
    // The limit differs from path to path.
    let limits: Vec<f64> = rows.iter().filter(|r| r.n == 100).map(|r| r.limit_value).collect();
    assert!(limits.windows(2).any(|w| w[0] != w[1]));
}
