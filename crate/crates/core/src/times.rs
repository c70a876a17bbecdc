//! Random observation times.
//!
//! A [`TimeSequence`] holds durations `t_j > 0`, their partial sums
//! `tau_j = t_1 + ... + t_j`, and the count `n1 = #{j : tau_j <= T}` of
//! observations inside the horizon. Every model has mean duration `1/N`.

use std::io::Write;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma, LogNormal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{EquicorrelatedFactor, GaussianFactor};
use crate::report::fmt_f64;

/// Default within-block correlation of the log-durations.
pub const DEFAULT_RHO: f64 = -0.25;
/// Default block length; the largest for which `rho = -1/4` is admissible.
pub const DEFAULT_BLOCK: usize = 5;

/// How the correlated log-normal durations are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockLayout {
    /// Independent blocks of this many durations, constant correlation inside.
    Blocks(usize),
    /// One block spanning the whole initial batch (constant correlation
    /// between every pair of durations). Only admissible when
    /// `rho >= -1/(len - 1)`.
    Global,
}

/// Zero-mean jitter supported in `(-1/2, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JitterDist {
    /// No jitter; reproduces the fixed design.
    Zero,
    Uniform,
    /// `B - 1/2` with `B ~ Beta(alpha, alpha)`.
    Beta(f64),
}

/// Durations of an i.i.d. renewal sequence, each with mean `1/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenewalDist {
    Exponential,
    Gamma(f64),
    /// Uniform on `(0, 2/N)`.
    Uniform,
    /// Log-normal with unit log-variance.
    LogNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeModel {
    /// `t_j = exp(X_j)`, `X ~ MVN(mu, Sigma)` blockwise with
    /// `mu_j = -ln N - 1/2`, unit variances and correlation `rho <= 0`.
    NsdLognormal { rho: f64, layout: BlockLayout },
    /// `tau_j = (j + X_j) / N`.
    Jittered(JitterDist),
    /// `t_j = 1/N`.
    Fixed,
    IidRenewal(RenewalDist),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeModelSpec {
    pub model: TimeModel,
    /// Sampling rate: every duration has mean `1/n`.
    pub n: usize,
    pub horizon: f64,
}

impl TimeModelSpec {
    pub fn new(model: TimeModel, n: usize, horizon: f64) -> Result<Self> {
        let spec = TimeModelSpec { model, n, horizon };
        spec.validate()?;
        Ok(spec)
    }

    /// Block log-normal model with `rho = -1/4`, blocks of 5, horizon 1.
    pub fn nsd_default(n: usize) -> Result<Self> {
        Self::new(
            TimeModel::NsdLognormal { rho: DEFAULT_RHO, layout: BlockLayout::Blocks(DEFAULT_BLOCK) },
            n,
            1.0,
        )
    }

    pub fn fixed(n: usize) -> Result<Self> {
        Self::new(TimeModel::Fixed, n, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("n", format!("sampling rate {} must be at least 2", self.n)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param("horizon", format!("{} must be positive", self.horizon)));
        }
        match self.model {
            TimeModel::NsdLognormal { rho, layout } => {
                if !(rho <= 0.0 && rho >= -1.0) {
                    return Err(Error::param("rho", format!("{rho} must lie in [-1, 0]")));
                }
                let block = match layout {
                    BlockLayout::Blocks(0) => return Err(Error::param("block", "must be positive")),
                    BlockLayout::Blocks(b) => b,
                    BlockLayout::Global => self.initial_len(),
                };
                EquicorrelatedFactor::new(block, rho, 1.0)?;
            }
            TimeModel::Jittered(JitterDist::Beta(alpha)) | TimeModel::IidRenewal(RenewalDist::Gamma(alpha)) => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::param("shape", format!("{alpha} must be positive")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Length of the first batch: twice the expected count before the horizon.
    pub fn initial_len(&self) -> usize {
        let want = (2.0 * self.n as f64 * self.horizon).ceil() as usize;
        want.max(2 * self.n)
    }

    /// Block length of the log-normal model, if any.
    pub fn block_len(&self) -> Option<usize> {
        match self.model {
            TimeModel::NsdLognormal { layout: BlockLayout::Blocks(b), .. } => Some(b),
            TimeModel::NsdLognormal { layout: BlockLayout::Global, .. } => Some(self.initial_len()),
            _ => None,
        }
    }

    /// Mean of the log-durations, `-ln N - 1/2`, so that `E t_j = 1/N`.
    pub fn log_mean(&self) -> f64 {
        -(self.n as f64).ln() - 0.5
    }
}

/// Observation times bound to one sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSequence {
    t: Vec<f64>,
    tau: Vec<f64>,
    n1: usize,
    spec: TimeModelSpec,
}

impl TimeSequence {
    /// Builds a sequence from durations; the partial sums must pass the horizon.
    pub fn from_durations(spec: TimeModelSpec, t: Vec<f64>) -> Result<Self> {
        if let Some(j) = t.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::param("t", format!("duration {} is not positive", j + 1)));
        }
        let mut acc = 0.0;
        let tau: Vec<f64> = t.iter().map(|&x| {
            acc += x;
            acc
        }).collect();
        Self::from_parts(spec, t, tau)
    }

    fn from_parts(spec: TimeModelSpec, t: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        let n1 = count_n1(&tau, spec.horizon)?;
        Ok(TimeSequence { t, tau, n1, spec })
    }

    pub fn durations(&self) -> &[f64] {
        &self.t
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// `N(T)`, the number of observation times not exceeding the horizon.
    pub fn n1(&self) -> usize {
        self.n1
    }

    /// The sampling rate `N`.
    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn spec(&self) -> &TimeModelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// Observation times inside the horizon.
    pub fn observed(&self) -> &[f64] {
        &self.tau[..self.n1]
    }

    /// CSV with columns `j, t_j, tau_j` (1-based `j`).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "t_j", "tau_j"])?;
        for (j, (t, tau)) in self.t.iter().zip(&self.tau).enumerate() {
            w.write_record([(j + 1).to_string(), fmt_f64(*t), fmt_f64(*tau)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `#{j : tau_j <= horizon}`. `tau` must be strictly increasing and its
/// last entry must exceed the horizon, otherwise the count is not final.
pub fn count_n1(tau: &[f64], horizon: f64) -> Result<usize> {
    if let Some(i) = tau.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::NonIncreasingGrid { index: i + 1 });
    }
    match tau.last() {
        Some(&last) if last > horizon => Ok(tau.partition_point(|&x| x <= horizon)),
        last => Err(Error::SequenceTooShort { last: last.copied().unwrap_or(0.0), horizon }),
    }
}

/// Generates a sequence according to `spec.model`.
pub fn generate<R: Rng + ?Sized>(spec: &TimeModelSpec, rng: &mut R) -> Result<TimeSequence> {
    match spec.model {
        TimeModel::NsdLognormal { .. } => gen_nsd_lognormal(spec, rng),
        TimeModel::Jittered(_) => gen_jittered(spec, rng),
        TimeModel::Fixed => gen_fixed(spec),
        TimeModel::IidRenewal(_) => gen_iid_renewal(spec, rng),
    }
}

/// Appends one correlated log-normal block of length `factor.dim()`.
fn push_lognormal_block<R: Rng + ?Sized>(
    factor: &EquicorrelatedFactor,
    log_mean: f64,
    z: &mut [f64],
    x: &mut [f64],
    out: &mut Vec<f64>,
    rng: &mut R,
) {
    for zi in z.iter_mut() {
        *zi = rng.sample(StandardNormal);
    }
    factor.transform(z, x);
    out.extend(x.iter().map(|xi| (log_mean + xi).exp()));
}

/// Draws at least `count` block log-normal durations, whole blocks at a time.
fn lognormal_durations<R: Rng + ?Sized>(
    spec: &TimeModelSpec,
    rho: f64,
    block: usize,
    count: usize,
    out: &mut Vec<f64>,
    rng: &mut R,
) -> Result<()> {
    let factor = EquicorrelatedFactor::new(block, rho, 1.0)?;
    let (mut z, mut x) = (vec![0.0; block], vec![0.0; block]);
    let target = out.len() + count;
    while out.len() < target {
        push_lognormal_block(&factor, spec.log_mean(), &mut z, &mut x, out, rng);
    }
    Ok(())
}

/// Block log-normal durations with nonpositive within-block correlation.
///
/// The first batch has [`TimeModelSpec::initial_len`] durations; further
/// batches of `N` are appended while the last time is still inside the
/// horizon. Blocks are drawn sequentially from `rng`, so the same stream
/// yields the same standardized durations for every `N`.
pub fn gen_nsd_lognormal<R: Rng + ?Sized>(spec: &TimeModelSpec, rng: &mut R) -> Result<TimeSequence> {
    spec.validate()?;
    let TimeModel::NsdLognormal { rho, .. } = spec.model else {
        return Err(Error::param("model", "expected the nsd-lognormal model"));
    };
    let block = spec.block_len().expect("log-normal model has a block length");
    let mut t = Vec::with_capacity(spec.initial_len() + block);
    lognormal_durations(spec, rho, block, spec.initial_len(), &mut t, rng)?;
    let mut last: f64 = t.iter().sum();
    while last <= spec.horizon {
        let start = t.len();
        let extra = if matches!(spec.model, TimeModel::NsdLognormal { layout: BlockLayout::Global, .. }) {
            block
        } else {
            spec.n
        };
        lognormal_durations(spec, rho, block, extra, &mut t, rng)?;
        last += t[start..].iter().sum::<f64>();
    }
    TimeSequence::from_durations(*spec, t)
}

fn draw_jitter<R: Rng + ?Sized>(dist: JitterDist, rng: &mut R) -> Result<f64> {
    Ok(match dist {
        JitterDist::Zero => 0.0,
        JitterDist::Uniform => loop {
            let x: f64 = rng.random::<f64>() - 0.5;
            if x > -0.5 {
                break x;
            }
        },
        JitterDist::Beta(alpha) => {
            let beta = Beta::new(alpha, alpha).map_err(|e| Error::param("jitter", e.to_string()))?;
            loop {
                let x = beta.sample(rng) - 0.5;
                if x > -0.5 && x < 0.5 {
                    break x;
                }
            }
        }
    })
}

/// Jittered sampling: `tau_j = (j + X_j)/N` with independent jitter.
/// Durations are recovered as differences with `tau_0 = 0`.
pub fn gen_jittered<R: Rng + ?Sized>(spec: &TimeModelSpec, rng: &mut R) -> Result<TimeSequence> {
    spec.validate()?;
    let TimeModel::Jittered(dist) = spec.model else {
        return Err(Error::param("model", "expected the jittered model"));
    };
    let n = spec.n as f64;
    let mut len = spec.initial_len();
    let mut tau = Vec::with_capacity(len);
    loop {
        for j in tau.len() + 1..=len {
            tau.push((j as f64 + draw_jitter(dist, rng)?) / n);
        }
        if *tau.last().expect("non-empty") > spec.horizon {
            break;
        }
        len += spec.n;
    }
    let mut prev = 0.0;
    let t = tau.iter().map(|&x| {
        let d = x - prev;
        prev = x;
        d
    }).collect();
    TimeSequence::from_parts(*spec, t, tau)
}

/// Fixed design `tau_j = j/N`.
pub fn gen_fixed(spec: &TimeModelSpec) -> Result<TimeSequence> {
    spec.validate()?;
    if spec.model != TimeModel::Fixed {
        return Err(Error::param("model", "expected the fixed design"));
    }
    let n = spec.n as f64;
    let len = spec.initial_len().max((spec.horizon * n).floor() as usize + 1);
    let tau: Vec<f64> = (1..=len).map(|j| j as f64 / n).collect();
    let t = vec![1.0 / n; len];
    TimeSequence::from_parts(*spec, t, tau)
}

/// I.i.d. durations with mean `1/N`.
pub fn gen_iid_renewal<R: Rng + ?Sized>(spec: &TimeModelSpec, rng: &mut R) -> Result<TimeSequence> {
    spec.validate()?;
    let TimeModel::IidRenewal(dist) = spec.model else {
        return Err(Error::param("model", "expected an i.i.d. renewal model"));
    };
    let mut t = Vec::with_capacity(spec.initial_len());
    renewal_durations(spec, dist, spec.initial_len(), &mut t, rng)?;
    let mut last: f64 = t.iter().sum();
    while last <= spec.horizon {
        let start = t.len();
        renewal_durations(spec, dist, spec.n, &mut t, rng)?;
        last += t[start..].iter().sum::<f64>();
    }
    TimeSequence::from_durations(*spec, t)
}

fn renewal_durations<R: Rng + ?Sized>(
    spec: &TimeModelSpec,
    dist: RenewalDist,
    count: usize,
    out: &mut Vec<f64>,
    rng: &mut R,
) -> Result<()> {
    let n = spec.n as f64;
    let bad = |e: String| Error::param("renewal", e);
    match dist {
        RenewalDist::Exponential => {
            let d = Exp::new(n).map_err(|e| bad(e.to_string()))?;
            out.extend((0..count).map(|_| d.sample(rng)));
        }
        RenewalDist::Gamma(shape) => {
            let d = Gamma::new(shape, 1.0 / (shape * n)).map_err(|e| bad(e.to_string()))?;
            out.extend((0..count).map(|_| d.sample(rng)));
        }
        RenewalDist::Uniform => {
            let d = Uniform::new(0.0, 2.0 / n).map_err(|e| bad(e.to_string()))?;
            out.extend((0..count).map(|_| loop {
                let x = d.sample(rng);
                if x > 0.0 {
                    break x;
                }
            }));
        }
        RenewalDist::LogNormal => {
            let d = LogNormal::new(spec.log_mean(), 1.0).map_err(|e| bad(e.to_string()))?;
            out.extend((0..count).map(|_| d.sample(rng)));
        }
    }
    Ok(())
}

/// The first `count` durations of a fresh sequence from `spec`, without
/// extending to the horizon. Used to probe the joint law of `(t_1, ..., t_m)`.
pub fn draw_durations<R: Rng + ?Sized>(spec: &TimeModelSpec, count: usize, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut t = Vec::with_capacity(count);
    match spec.model {
        TimeModel::NsdLognormal { rho, layout } => {
            let block = match layout {
                BlockLayout::Blocks(b) => b,
                BlockLayout::Global => count,
            };
            lognormal_durations(spec, rho, block, count, &mut t, rng)?;
        }
        TimeModel::IidRenewal(dist) => renewal_durations(spec, dist, count, &mut t, rng)?,
        TimeModel::Fixed => t.resize(count, 1.0 / spec.n as f64),
        TimeModel::Jittered(dist) => {
            let n = spec.n as f64;
            let mut prev = 0.0;
            for j in 1..=count {
                let tau = (j as f64 + draw_jitter(dist, rng)?) / n;
                t.push(tau - prev);
                prev = tau;
            }
        }
    }
    t.truncate(count);
    Ok(t)
}
