//! Least-squares estimation of a linear trend `Y = a t + noise` observed at
//! random, possibly dependent, sampling times, with fractional Brownian
//! motion noise.
//!
//! * [`gaussian`]: fBm covariance, Cholesky and constant-correlation
//!   factors, multivariate normal sampling, noise paths.
//! * [`times`]: observation-time models (block log-normal, jittered, fixed,
//!   renewal) and the count `N(1)` of times in `[0, 1]`.
//! * [`regression`]: the estimator, its error identity and the limit
//!   functional `3 ∫_0^1 (W(1) - W(s)) ds`.
//! * [`nsd`]: Monte Carlo checks of negative superadditive dependence and
//!   the moment inequalities that come with it.
//! * [`montecarlo`]: replicated experiments, histograms and per-path
//!   convergence runs.
//!
//! ```
//! use nsdreg::montecarlo::{run_experiment, ExperimentConfig};
//!
//! let config = ExperimentConfig::nsd_default(100, 0.5, 20, 7)?;
//! let summary = run_experiment(&config)?.summary;
//! assert!(summary.abs_mean_bias <= summary.l1_risk);
//! assert_eq!(summary.theo_variance, 3.0);
//! # Ok::<(), nsdreg::Error>(())
//! ```

pub mod error;
pub mod gaussian;
pub mod montecarlo;
pub mod nsd;
pub mod regression;
pub mod report;
pub mod rng;
pub mod stats;
pub mod times;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fbm.md")]
    mod fbm {}
    #[doc = include_str!("../../../book/src/random-times.md")]
    mod random_times {}
    #[doc = include_str!("../../../book/src/estimator.md")]
    mod estimator {}
    #[doc = include_str!("../../../book/src/nsd-checks.md")]
    mod nsd_checks {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
