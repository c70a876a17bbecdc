//! Linear trend regression observed at random times.
//!
//! Observations are `Y_i = a * tau_i + eps_i` with residuals
//! `eps_i = W(tau_i) - W(tau_{i-1})`, `tau_0 = 0`, for a continuous noise
//! function `W`. The trend is estimated by least squares through the origin,
//! `a_hat = sum(Y_i tau_i) / sum(tau_i^2)`, over either the `N(1)`
//! observations inside `[0, 1]` (stopped) or the first `N` (full).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{check_hurst, pow_pos, NoisePath};
use crate::report::fmt_f64;
use crate::times::TimeSequence;

/// Quadrature points for [`limit_functional`]: `2^14` panels, so the nodes
/// line up with every dyadic interpolated path of resolution up to 14.
pub const DEFAULT_QUADRATURE_POINTS: usize = (1 << 14) + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Observations up to the horizon; scaled by `N(1)`.
    Stopped,
    /// The first `N` observations regardless of the horizon; scaled by `N`.
    Full,
}

impl EstimatorKind {
    /// Number of observations the estimator uses on `times`.
    pub fn count(self, times: &TimeSequence) -> usize {
        match self {
            EstimatorKind::Stopped => times.n1(),
            EstimatorKind::Full => times.n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub a: f64,
    pub times: TimeSequence,
    /// Responses at `tau_1, tau_2, ...`.
    pub y: Vec<f64>,
    pub eps: Vec<f64>,
}

impl RegressionSample {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// CSV with columns `i, tau_i, y_i, eps_i` (1-based `i`).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "tau_i", "y_i", "eps_i"])?;
        for i in 0..self.len() {
            w.write_record([
                (i + 1).to_string(),
                fmt_f64(self.times.tau()[i]),
                fmt_f64(self.y[i]),
                fmt_f64(self.eps[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub a_hat: f64,
    /// Observations before the horizon.
    pub n1: usize,
    /// Sampling rate.
    pub n: usize,
    /// `n1 (a_hat - a)` for the stopped kind, `n (a_hat - a)` for the full kind.
    pub scaled_error: f64,
    pub kind: EstimatorKind,
}

impl EstimateRecord {
    pub fn new(a: f64, a_hat: f64, times: &TimeSequence, kind: EstimatorKind) -> Self {
        let scale = kind.count(times) as f64;
        EstimateRecord {
            a_hat,
            n1: times.n1(),
            n: times.n(),
            scaled_error: scale * (a_hat - a),
            kind,
        }
    }
}

/// Responses and residuals for the observations `design` uses: the first
/// `N(1)` for the stopped design, the first `N` for the full one.
pub fn make_sample(a: f64, times: &TimeSequence, w: &NoisePath, design: EstimatorKind) -> Result<RegressionSample> {
    let count = design.count(times);
    if count > times.len() {
        return Err(Error::SequenceTooShort {
            last: times.tau().last().copied().unwrap_or(0.0),
            horizon: times.spec().horizon,
        });
    }
    let tau = &times.tau()[..count];
    let mut prev = w.eval(0.0)?;
    let mut eps = Vec::with_capacity(count);
    let mut y = Vec::with_capacity(count);
    for &t in tau {
        let cur = w.eval(t)?;
        let e = cur - prev;
        prev = cur;
        eps.push(e);
        y.push(a * t + e);
    }
    Ok(RegressionSample { a, times: times.clone(), y, eps })
}

/// `sum(y_i tau_i) / sum(tau_i^2)`.
pub fn lse_from(tau: &[f64], y: &[f64]) -> Result<f64> {
    if tau.is_empty() {
        return Err(Error::NoObservations);
    }
    if tau.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: tau.len(), found: y.len() });
    }
    let (num, den) = tau
        .iter()
        .zip(y)
        .fold((0.0, 0.0), |(num, den), (&t, &yi)| (num + yi * t, den + t * t));
    if !(den > 0.0) {
        return Err(Error::NoObservations);
    }
    Ok(num / den)
}

/// Least-squares trend estimate over the observations selected by `kind`.
pub fn lse(sample: &RegressionSample, kind: EstimatorKind) -> Result<EstimateRecord> {
    let count = kind.count(&sample.times);
    if count == 0 {
        return Err(Error::NoObservations);
    }
    if count > sample.len() {
        return Err(Error::param(
            "sample",
            format!("holds {} observations but the {kind:?} estimator needs {count}", sample.len()),
        ));
    }
    let a_hat = lse_from(&sample.times.tau()[..count], &sample.y[..count])?;
    Ok(EstimateRecord::new(sample.a, a_hat, &sample.times, kind))
}

/// `sum_i tau_i (w_i - w_{i-1})` where `w[0]` is the value at `tau_0 = 0`
/// and `w[i]` the value at `tau[i - 1]`.
pub fn weighted_increment_sum(tau: &[f64], w: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), tau.len() + 1);
    tau.iter().zip(w.windows(2)).map(|(t, pair)| t * (pair[1] - pair[0])).sum()
}

/// The same sum rearranged by parts:
/// `tau_n w_n - sum_i w_{i-1} (tau_i - tau_{i-1})`.
pub fn summation_by_parts(tau: &[f64], w: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), tau.len() + 1);
    let Some(&last) = tau.last() else { return 0.0 };
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (i, &t) in tau.iter().enumerate() {
        acc += w[i] * (t - prev);
        prev = t;
    }
    last * w[tau.len()] - acc
}

/// Right-hand side of the estimation-error identity,
/// `a_hat - a = sum_i tau_i (W(tau_i) - W(tau_{i-1})) / sum_i tau_i^2`,
/// evaluated directly from the noise function.
pub fn error_identity_rhs(tau: &[f64], w: &NoisePath) -> Result<f64> {
    let mut values = Vec::with_capacity(tau.len() + 1);
    values.push(w.eval(0.0)?);
    for &t in tau {
        values.push(w.eval(t)?);
    }
    let den: f64 = tau.iter().map(|t| t * t).sum();
    Ok(weighted_increment_sum(tau, &values) / den)
}

/// Variance of `sum_i tau_i (B(tau_i) - B(tau_{i-1}))` for fBm `B`.
///
/// Writing the sum as `sum_i c_i B(tau_i)` with `c_i = tau_i - tau_{i+1}`
/// and `c_n = tau_n`, the variance is `cᵀ R c`, which needs one power per
/// pair of times. For `hurst = 1/2` the increments are independent and the
/// variance is `sigma2 * sum_i tau_i^2 (tau_i - tau_{i-1})`.
pub fn increment_sum_variance(tau: &[f64], hurst: f64, sigma2: f64) -> Result<f64> {
    check_hurst(hurst)?;
    let n = tau.len();
    if n == 0 {
        return Err(Error::NoObservations);
    }
    if hurst == 0.5 {
        let mut prev = 0.0;
        let v: f64 = tau
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                t * t * d
            })
            .sum();
        return Ok(sigma2 * v);
    }
    let two_h = 2.0 * hurst;
    let c: Vec<f64> = (0..n).map(|i| if i + 1 < n { tau[i] - tau[i + 1] } else { tau[i] }).collect();
    let sum_c: f64 = c.iter().sum();
    let sum_c_pow: f64 = c.iter().zip(tau).map(|(ci, t)| ci * t.powf(two_h)).sum();
    let mut cross = 0.0;
    for i in 1..n {
        let ti = tau[i];
        let mut acc = 0.0;
        for j in 0..i {
            acc += c[j] * pow_pos(ti - tau[j], two_h);
        }
        cross += c[i] * acc;
    }
    let v = sigma2 * (sum_c * sum_c_pow - cross);
    Ok(v.max(0.0))
}

/// `3 ∫_0^1 (W(1) - W(s)) ds` by the composite trapezoid rule on
/// `points` equally spaced nodes.
///
/// The rule is exact for paths that are linear between nodes; for smooth
/// paths the error is `O(points^-2)` times the curvature.
pub fn limit_functional(w: &NoisePath, points: usize) -> Result<f64> {
    if points < 2 {
        return Err(Error::param("points", format!("{points} < 2")));
    }
    if w.domain_end() < 1.0 {
        return Err(Error::OutsideDomain { t: 1.0, end: w.domain_end() });
    }
    let h = 1.0 / (points - 1) as f64;
    let w1 = w.eval(1.0)?;
    let mut interior = 0.0;
    for k in 1..points - 1 {
        interior += w1 - w.eval(k as f64 * h)?;
    }
    let ends = 0.5 * (w1 - w.eval(0.0)?);
    Ok(3.0 * h * (ends + interior))
}

/// Variance `9 / (2H + 2)` of the limit functional when `W` is unit fBm.
pub fn theoretical_variance(hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    Ok(9.0 / (2.0 * hurst + 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{fbm_gram_packed, packed_index, sample_fbm_at, DeterministicW};
    use crate::rng::root_rng;
    use crate::times::{gen_fixed, generate, TimeModelSpec};

    fn seq_from(tau: &[f64], n: usize) -> TimeSequence {
        let mut t = Vec::new();
        let mut prev = 0.0;
        for &x in tau {
            t.push(x - prev);
            prev = x;
        }
        TimeSequence::from_durations(TimeModelSpec::fixed(n).unwrap(), t).unwrap()
    }

    #[test]
    fn direct_formula() {
        let a_hat = lse_from(&[0.5, 1.0], &[0.6, 1.1]).unwrap();
        assert!((a_hat - 1.12).abs() < 1e-15);
        assert!(matches!(lse_from(&[], &[]), Err(Error::NoObservations)));
    }

    #[test]
    fn zero_noise_recovers_trend() {
        let spec = TimeModelSpec::nsd_default(300).unwrap();
        let times = generate(&spec, &mut root_rng(1)).unwrap();
        let zero = NoisePath::deterministic(DeterministicW::Zero);
        for a in [1.0, -3.5, 1e3] {
            let sample = make_sample(a, &times, &zero, EstimatorKind::Full).unwrap();
            assert!(sample.eps.iter().all(|&e| e == 0.0));
            for (yi, ti) in sample.y.iter().zip(times.tau()) {
                assert_eq!(*yi, a * ti);
            }
            for kind in [EstimatorKind::Stopped, EstimatorKind::Full] {
                let est = lse(&sample, kind).unwrap();
                assert!((est.a_hat - a).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn no_trend_means_responses_are_residuals() {
        let times = gen_fixed(&TimeModelSpec::fixed(20).unwrap()).unwrap();
        let w = sample_fbm_at(&times.tau()[..25], 0.4, 1.0, &mut root_rng(2)).unwrap();
        let sample = make_sample(0.0, &times, &w, EstimatorKind::Stopped).unwrap();
        assert_eq!(sample.y, sample.eps);
        let total: f64 = sample.eps.iter().sum();
        let expect = w.eval(times.tau()[times.n1() - 1]).unwrap() - w.eval(0.0).unwrap();
        assert!((total - expect).abs() < 1e-10);
    }

    #[test]
    fn noise_domain_is_enforced() {
        let times = gen_fixed(&TimeModelSpec::fixed(10).unwrap()).unwrap();
        let w = sample_fbm_at(&times.tau()[..5], 0.4, 1.0, &mut root_rng(2)).unwrap();
        assert!(matches!(make_sample(1.0, &times, &w, EstimatorKind::Stopped), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn scaled_error_uses_the_right_count() {
        let times = seq_from(&[0.3, 0.6, 0.9, 1.2, 1.5], 4);
        assert_eq!(times.n1(), 3);
        let w = NoisePath::deterministic(DeterministicW::Linear(0.5));
        let sample = make_sample(2.0, &times, &w, EstimatorKind::Full).unwrap();
        let stopped = lse(&sample, EstimatorKind::Stopped).unwrap();
        let full = lse(&sample, EstimatorKind::Full).unwrap();
        assert_eq!(stopped.scaled_error, 3.0 * (stopped.a_hat - 2.0));
        assert_eq!(full.scaled_error, 4.0 * (full.a_hat - 2.0));
        // Increments of 0.15 at tau = 0.3, 0.6, 0.9: 0.27 / 1.26 = 3/14.
        assert!((stopped.a_hat - (2.0 + 3.0 / 14.0)).abs() < 1e-14);

        let only_stopped = make_sample(2.0, &times, &w, EstimatorKind::Stopped).unwrap();
        assert!(lse(&only_stopped, EstimatorKind::Full).is_err());
    }

    #[test]
    fn empty_sample_is_an_error() {
        let times = seq_from(&[1.5, 2.0, 2.5], 2);
        assert_eq!(times.n1(), 0);
        let w = NoisePath::deterministic(DeterministicW::Zero);
        let sample = make_sample(1.0, &times, &w, EstimatorKind::Stopped).unwrap();
        assert!(matches!(lse(&sample, EstimatorKind::Stopped), Err(Error::NoObservations)));
    }

    #[test]
    fn limit_functional_examples() {
        let sq = NoisePath::deterministic(DeterministicW::Quadratic(1.0));
        assert!((limit_functional(&sq, 10_000).unwrap() - 2.0).abs() < 1e-6);
        let c = NoisePath::deterministic(DeterministicW::Constant(4.2));
        assert_eq!(limit_functional(&c, 100).unwrap(), 0.0);
        let lin = NoisePath::deterministic(DeterministicW::Linear(1.0));
        assert!((limit_functional(&lin, 7).unwrap() - 1.5).abs() < 1e-10);
        assert!(limit_functional(&lin, 1).is_err());
        let short = NoisePath::Deterministic { w: DeterministicW::Zero, domain_end: 0.5 };
        assert!(limit_functional(&short, 10).is_err());
    }

    #[test]
    fn limit_functional_is_exact_on_aligned_interpolants() {
        let path = crate::gaussian::make_interpolated_path(8, 0.3, 1.0, &mut root_rng(6)).unwrap();
        let NoisePath::Interpolated { values, .. } = &path else { unreachable!() };
        // Exact integral of the piecewise-linear path.
        let h = 1.0 / 256.0;
        let integral: f64 = values.windows(2).map(|p| 0.5 * h * (p[0] + p[1])).sum();
        let exact = 3.0 * (values[256] - integral);
        let approx = limit_functional(&path, DEFAULT_QUADRATURE_POINTS).unwrap();
        assert!((approx - exact).abs() < 1e-10);
    }

    #[test]
    fn theoretical_variance_values() {
        assert_eq!(theoretical_variance(0.5).unwrap(), 3.0);
        assert!((theoretical_variance(0.1).unwrap() - 4.090909090909091).abs() < 1e-15);
        assert!((theoretical_variance(0.9).unwrap() - 2.3684210526315788).abs() < 1e-15);
        assert!(theoretical_variance(1.0).is_err());
        assert!(theoretical_variance(0.0).is_err());
    }

    #[test]
    fn increment_variance_matches_gram_quadratic_form() {
        let tau = [0.05, 0.2, 0.21, 0.5, 0.77, 0.9, 1.3];
        for hurst in [0.1, 0.35, 0.5, 0.75, 0.95] {
            let n = tau.len();
            let gram = fbm_gram_packed(&tau, hurst, 1.7);
            let c: Vec<f64> = (0..n).map(|i| if i + 1 < n { tau[i] - tau[i + 1] } else { tau[i] }).collect();
            let mut direct = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let (a, b) = if j <= i { (i, j) } else { (j, i) };
                    direct += c[i] * c[j] * gram[packed_index(a, b)];
                }
            }
            let fast = increment_sum_variance(&tau, hurst, 1.7).unwrap();
            assert!((fast - direct).abs() < 1e-12 * direct.abs().max(1.0), "H={hurst}: {fast} vs {direct}");
        }
    }

    #[test]
    fn summation_by_parts_small_case() {
        let tau = [0.2, 0.5, 0.9];
        let w = [0.0, 1.0, -1.0, 2.0];
        let lhs = weighted_increment_sum(&tau, &w);
        assert!((lhs - (0.2 * 1.0 + 0.5 * -2.0 + 0.9 * 3.0)).abs() < 1e-15);
        assert!((summation_by_parts(&tau, &w) - lhs).abs() < 1e-15);
    }
}
