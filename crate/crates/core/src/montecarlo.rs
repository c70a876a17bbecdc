//! Replicated experiments: bias, L1 risk and variance of the scaled error,
//! histograms, and per-path convergence runs.
//!
//! Replication `k` draws everything from `stream_rng(seed, k)`, so results
//! do not depend on how replications are scheduled across threads.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{check_hurst, make_interpolated_path, sample_fbm_at, DeterministicW, NoisePath};
use crate::regression::{
    increment_sum_variance, limit_functional, lse, make_sample, theoretical_variance, EstimatorKind,
    DEFAULT_QUADRATURE_POINTS,
};
use crate::report::fmt_f64;
use crate::rng::stream_rng;
use crate::stats::normal_cdf;
use crate::times::{generate, TimeModel, TimeModelSpec};

/// Bins of emitted histogram files.
pub const DEFAULT_BINS: usize = 30;

/// How the noise of a replication is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Unit fBm sampled exactly at the realized observation times; the
    /// responses are formed and the estimator computed from them.
    FbmPath,
    /// Draws the estimation error directly. Given the times,
    /// `a_hat - a = sum_i tau_i (B(tau_i) - B(tau_{i-1})) / sum_i tau_i^2` is
    /// centered Gaussian with variance
    /// [`increment_sum_variance`]` / (sum tau_i^2)^2`, so one normal draw
    /// replaces the path. Same law as `FbmPath`, without the factorization.
    FbmProjected,
    /// `W = 0`: the responses lie exactly on the trend.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub time: TimeModelSpec,
    pub hurst: f64,
    pub a: f64,
    pub replications: u64,
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub noise: NoiseMode,
}

impl ExperimentConfig {
    /// Block log-normal times with the default correlation, unit trend and
    /// the stopped estimator on exact fBm paths.
    pub fn nsd_default(n: usize, hurst: f64, replications: u64, seed: u64) -> Result<Self> {
        Ok(ExperimentConfig {
            time: TimeModelSpec::nsd_default(n)?,
            hurst,
            a: 1.0,
            replications,
            seed,
            estimator: EstimatorKind::Stopped,
            noise: NoiseMode::FbmPath,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.time.validate()?;
        check_hurst(self.hurst)?;
        if self.replications == 0 {
            return Err(Error::param("replications", "must be at least 1"));
        }
        if !self.a.is_finite() {
            return Err(Error::param("a", format!("{} is not finite", self.a)));
        }
        Ok(())
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub k: u64,
    pub n1: usize,
    pub a_hat: f64,
    pub scaled_error: f64,
}

/// Runs replication `k` of `config`.
pub fn run_replication(config: &ExperimentConfig, k: u64) -> Result<ReplicationRecord> {
    let mut rng = stream_rng(config.seed, k);
    let times = generate(&config.time, &mut rng)?;
    let count = config.estimator.count(&times);
    if count == 0 {
        return Err(Error::NoObservations);
    }
    let a_hat = match config.noise {
        NoiseMode::FbmPath => {
            let path = sample_fbm_at(&times.tau()[..count], config.hurst, 1.0, &mut rng)?;
            lse(&make_sample(config.a, &times, &path, config.estimator)?, config.estimator)?.a_hat
        }
        NoiseMode::FbmProjected => {
            let tau = &times.tau()[..count];
            let var = increment_sum_variance(tau, config.hurst, 1.0)?;
            let den: f64 = tau.iter().map(|t| t * t).sum();
            let z: f64 = rng.sample(StandardNormal);
            config.a + var.sqrt() * z / den
        }
        NoiseMode::Zero => {
            let path = NoisePath::deterministic(DeterministicW::Zero);
            lse(&make_sample(config.a, &times, &path, config.estimator)?, config.estimator)?.a_hat
        }
    };
    Ok(ReplicationRecord {
        k,
        n1: times.n1(),
        a_hat,
        scaled_error: count as f64 * (a_hat - config.a),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    /// `|mean(a_hat) - a|`.
    pub abs_mean_bias: f64,
    /// `mean |a_hat - a|`.
    pub l1_risk: f64,
    /// `mean(scaled_error^2)`, denominator `M`.
    pub est_variance: f64,
    /// `9 / (2H + 2)`.
    pub theo_variance: f64,
    /// Kolmogorov–Smirnov distance of the scaled errors to
    /// `Normal(0, theo_variance)`; absent below 10 replications.
    pub ks_distance: Option<f64>,
    pub ratio_n1_mean: f64,
    /// Standard deviation of `n1 / N`, denominator `M`.
    pub ratio_n1_sd: f64,
    pub config: ExperimentConfig,
    pub version: String,
}

/// Summary plus the per-replication records in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub summary: McSummary,
    pub records: Vec<ReplicationRecord>,
}

/// Runs all replications in parallel. The first failing replication, by
/// index, aborts the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let results: Vec<Result<ReplicationRecord>> =
        (0..config.replications).into_par_iter().map(|k| run_replication(config, k)).collect();
    let mut records = Vec::with_capacity(results.len());
    for (k, r) in results.into_iter().enumerate() {
        records.push(r.map_err(|e| Error::Replication { index: k as u64, source: Box::new(e) })?);
    }
    let summary = summarize(config, &mut records)?;
    Ok(Experiment { summary, records })
}

/// Aggregates records (sorted by index first, so the input order is
/// irrelevant).
pub fn summarize(config: &ExperimentConfig, records: &mut [ReplicationRecord]) -> Result<McSummary> {
    if records.is_empty() {
        return Err(Error::param("records", "no replications to summarize"));
    }
    records.sort_by_key(|r| r.k);
    let m = records.len() as f64;
    let n = config.time.n as f64;
    let mut err_sum = 0.0;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut ratio_sum = 0.0;
    for r in records.iter() {
        let d = r.a_hat - config.a;
        err_sum += d;
        abs_sum += d.abs();
        sq_sum += r.scaled_error * r.scaled_error;
        ratio_sum += r.n1 as f64 / n;
    }
    let ratio_mean = ratio_sum / m;
    let ratio_var = records.iter().map(|r| (r.n1 as f64 / n - ratio_mean).powi(2)).sum::<f64>() / m;
    let theo_variance = theoretical_variance(config.hurst)?;
    let ks = if records.len() >= 10 {
        let errors: Vec<f64> = records.iter().map(|r| r.scaled_error).collect();
        Some(ks_distance(&errors, theo_variance)?)
    } else {
        None
    };
    Ok(McSummary {
        abs_mean_bias: (err_sum / m).abs(),
        l1_risk: abs_sum / m,
        est_variance: sq_sum / m,
        theo_variance,
        ks_distance: ks,
        ratio_n1_mean: ratio_mean,
        ratio_n1_sd: ratio_var.sqrt(),
        config: *config,
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

/// Sup-distance between the empirical CDF of `samples` and the CDF of
/// `Normal(0, variance)`.
pub fn ks_distance(samples: &[f64], variance: f64) -> Result<f64> {
    if samples.len() < 10 {
        return Err(Error::param("samples", format!("{} < 10 samples", samples.len())));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::param("variance", format!("{variance} is not positive")));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = normal_cdf(x, variance);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` uniformly spaced edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Samples below the first edge.
    pub underflow: u64,
    /// Samples above the last edge.
    pub overflow: u64,
}

impl Histogram {
    /// CSV with columns `lo, hi, count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lo", "hi", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([fmt_f64(self.edges[i]), fmt_f64(self.edges[i + 1]), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Uniform histogram over `range`, or over `[min, max]` of the data. All
/// bins are half-open except the last, which includes its upper edge.
/// Identical samples get the unit-width range centered on their value.
pub fn histogram(samples: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::param("samples", "empty sample"));
    }
    if bins == 0 {
        return Err(Error::param("bins", "must be at least 1"));
    }
    let (lo, hi) = match range {
        Some((lo, hi)) if lo < hi => (lo, hi),
        Some((lo, hi)) => return Err(Error::param("range", format!("({lo}, {hi}) is empty"))),
        None => {
            let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        }
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + i as f64 * width }).collect();
    let mut h = Histogram { edges, counts: vec![0; bins], underflow: 0, overflow: 0 };
    for &x in samples {
        if x < lo {
            h.underflow += 1;
        } else if x > hi {
            h.overflow += 1;
        } else {
            let i = (((x - lo) / width) as usize).min(bins - 1);
            h.counts[i] += 1;
        }
    }
    Ok(h)
}

/// CSV with columns `k, n1, a_hat, scaled_error`.
pub fn write_records_csv<W: Write>(records: &[ReplicationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "n1", "a_hat", "scaled_error"])?;
    for r in records {
        w.write_record([r.k.to_string(), r.n1.to_string(), fmt_f64(r.a_hat), fmt_f64(r.scaled_error)])?;
    }
    w.flush()?;
    Ok(())
}

/// Numeric summary fields as `(name, value)` pairs, in a fixed order.
pub fn summary_fields(s: &McSummary) -> Vec<(&'static str, f64)> {
    let mut v = vec![
        ("n", s.config.time.n as f64),
        ("hurst", s.config.hurst),
        ("a", s.config.a),
        ("replications", s.config.replications as f64),
        ("abs_mean_bias", s.abs_mean_bias),
        ("l1_risk", s.l1_risk),
        ("est_variance", s.est_variance),
        ("theo_variance", s.theo_variance),
    ];
    if let Some(ks) = s.ks_distance {
        v.push(("ks_distance", ks));
    }
    v.push(("ratio_n1_mean", s.ratio_n1_mean));
    v.push(("ratio_n1_sd", s.ratio_n1_sd));
    v
}

/// CSV with columns `field, value`.
pub fn write_summary_csv<W: Write>(summary: &McSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["field", "value"])?;
    for (name, value) in summary_fields(summary) {
        w.write_record([name.to_string(), fmt_f64(value)])?;
    }
    w.flush()?;
    Ok(())
}

/// Bias, L1 risk and variance tables with one row per `N` and one column
/// per `H`, rounded for display. Missing cells print as `-`.
pub fn render_tables(summaries: &[McSummary]) -> String {
    let mut ns: Vec<usize> = summaries.iter().map(|s| s.config.time.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut hs: Vec<f64> = summaries.iter().map(|s| s.config.hurst).collect();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    let cell = |n: usize, h: f64| summaries.iter().find(|s| s.config.time.n == n && s.config.hurst == h);

    let mut out = String::new();
    let header = |out: &mut String, title: &str| {
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:>8}", "N");
        for h in &hs {
            let _ = write!(out, "{:>12}", format!("H={h}"));
        }
        out.push('\n');
    };
    let tables: [(&str, fn(&McSummary) -> String); 3] = [
        ("Absolute mean bias", |s| format!("{:.2e}", s.abs_mean_bias)),
        ("L1 risk", |s| format!("{:.2e}", s.l1_risk)),
        ("Variance of the scaled error", |s| format!("{:.3}", s.est_variance)),
    ];
    for (i, (title, fmt)) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        header(&mut out, title);
        if i == 2 {
            let _ = write!(out, "{:>8}", "theory");
            for &h in &hs {
                let v = theoretical_variance(h).map(|v| format!("{v:.3}")).unwrap_or_else(|_| "-".into());
                let _ = write!(out, "{v:>12}");
            }
            out.push('\n');
        }
        for &n in &ns {
            let _ = write!(out, "{n:>8}");
            for &h in &hs {
                let v = cell(n, h).map(fmt).unwrap_or_else(|| "-".into());
                let _ = write!(out, "{v:>12}");
            }
            out.push('\n');
        }
    }
    out
}

/// Noise of a convergence run: one fixed path per seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceNoise {
    /// `W(t) = t^2`, whose limit value is exactly 2.
    Quadratic,
    /// Unit fBm on the dyadic grid of `[0, 2]` with `2^resolution_log2`
    /// panels, linearly interpolated.
    InterpolatedFbm { hurst: f64, resolution_log2: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    /// Time model; its sampling rate is replaced by each entry of `n_list`.
    pub time: TimeModel,
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
    pub noise: ConvergenceNoise,
    pub estimator: EstimatorKind,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub seed: u64,
    pub n: usize,
    pub n1: usize,
    pub scaled_error: f64,
    pub limit_value: f64,
    /// `|scaled_error - limit_value|`.
    pub deviation: f64,
}

/// The noise path of `seed`, shared by every `N`.
pub fn convergence_path(noise: ConvergenceNoise, seed: u64) -> Result<NoisePath> {
    match noise {
        ConvergenceNoise::Quadratic => Ok(NoisePath::deterministic(DeterministicW::Quadratic(1.0))),
        ConvergenceNoise::InterpolatedFbm { hurst, resolution_log2 } => {
            let path = make_interpolated_path(resolution_log2, hurst, 1.0, &mut stream_rng(seed, 1))?;
            // Self-similarity: B(2s) has the law of 2^H B(s).
            let NoisePath::Interpolated { step, values } = path else {
                unreachable!("interpolated path expected")
            };
            let scale = 2f64.powf(hurst);
            Ok(NoisePath::Interpolated { step: 2.0 * step, values: values.into_iter().map(|v| v * scale).collect() })
        }
    }
}

/// `3 ∫_0^1 (W(1) - W(s)) ds`, exact for the quadratic path.
pub fn convergence_limit(noise: ConvergenceNoise, path: &NoisePath) -> Result<f64> {
    match noise {
        ConvergenceNoise::Quadratic => Ok(2.0),
        ConvergenceNoise::InterpolatedFbm { .. } => limit_functional(path, DEFAULT_QUADRATURE_POINTS),
    }
}

/// For every seed and every `N`: the scaled error on one fixed path. The
/// times of a seed come from `stream_rng(seed, 0)` for every `N`, so for the
/// log-normal model the standardized durations are shared and only the
/// scale `1/N` changes.
pub fn run_convergence(config: &ConvergenceConfig) -> Result<Vec<ConvergenceRow>> {
    if config.n_list.is_empty() || config.seeds.is_empty() {
        return Err(Error::param("n_list", "need at least one N and one seed"));
    }
    let per_seed: Vec<Result<Vec<ConvergenceRow>>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let path = convergence_path(config.noise, seed)?;
            let limit = convergence_limit(config.noise, &path)?;
            config
                .n_list
                .iter()
                .map(|&n| {
                    let spec = TimeModelSpec::new(config.time, n, 1.0)?;
                    let times = generate(&spec, &mut stream_rng(seed, 0))?;
                    let est = lse(&make_sample(config.a, &times, &path, config.estimator)?, config.estimator)?;
                    Ok(ConvergenceRow {
                        seed,
                        n,
                        n1: est.n1,
                        scaled_error: est.scaled_error,
                        limit_value: limit,
                        deviation: (est.scaled_error - limit).abs(),
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Fraction of seeds whose deviation at the last `N` is below the one at the
/// first `N`.
pub fn fraction_shrinking(rows: &[ConvergenceRow], n_first: usize, n_last: usize) -> f64 {
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let find = |seed, n| rows.iter().find(|r| r.seed == seed && r.n == n).map(|r| r.deviation);
    let shrinking = seeds
        .iter()
        .filter(|&&s| matches!((find(s, n_first), find(s, n_last)), (Some(a), Some(b)) if b < a))
        .count();
    shrinking as f64 / seeds.len().max(1) as f64
}

/// CSV with columns `seed, n, n1, ratio, scaled_error, limit_value, deviation`.
pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "n", "n1", "ratio", "scaled_error", "limit_value", "deviation"])?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.n.to_string(),
            r.n1.to_string(),
            fmt_f64(r.n1 as f64 / r.n as f64),
            fmt_f64(r.scaled_error),
            fmt_f64(r.limit_value),
            fmt_f64(r.deviation),
        ])?;
    }
    w.flush()?;
    Ok(())
}
