//! Monte Carlo evidence for negative superadditive dependence.
//!
//! A vector `X` is NSD when `E φ(X) <= E φ(X*)` for every superadditive `φ`,
//! where `X*` has independent coordinates with the same marginals. No finite
//! experiment can certify that, so this module checks a fixed battery of
//! superadditive functions, along with the moment inequalities NSD
//! durations are expected to satisfy. Passing is evidence, not proof.
//!
//! Durations are multiplied by `N` before testing. A common positive scale is
//! a non-decreasing map, so it preserves NSD and keeps the numbers near 1.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{EquicorrelatedFactor, GaussianFactor};
use crate::rng::stream_rng;
use crate::times::{draw_durations, BlockLayout, RenewalDist, TimeModel, TimeModelSpec};

/// Longest vector the battery accepts.
pub const MAX_ARITY: usize = 5;

/// Number of standard errors allowed in one-sided comparisons.
pub const SE_MULTIPLIER: f64 = 3.0;

/// A function `ℝ^m → ℝ` with nonnegative mixed second differences.
#[derive(Clone, Copy)]
pub struct SuperadditiveTest {
    pub name: &'static str,
    pub eval: fn(&[f64]) -> f64,
}

impl std::fmt::Debug for SuperadditiveTest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("SuperadditiveTest").field(&self.name).finish()
    }
}

fn pair_product(x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            acc += x[i] * x[j];
        }
    }
    acc
}

fn sum_squared(x: &[f64]) -> f64 {
    x.iter().sum::<f64>().powi(2)
}

fn minimum(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

fn exp_mean(x: &[f64]) -> f64 {
    (x.iter().sum::<f64>() / x.len() as f64).exp()
}

fn sigmoid_product(x: &[f64]) -> f64 {
    x.iter().map(|v| 1.0 / (1.0 + (-v).exp())).product()
}

/// The built-in battery: sum of pairwise products, squared sum, minimum,
/// exponential of the mean and product of logistic functions.
pub fn battery() -> Vec<SuperadditiveTest> {
    vec![
        SuperadditiveTest { name: "pair_product", eval: pair_product },
        SuperadditiveTest { name: "sum_squared", eval: sum_squared },
        SuperadditiveTest { name: "min", eval: minimum },
        SuperadditiveTest { name: "exp_mean", eval: exp_mean },
        SuperadditiveTest { name: "sigmoid_product", eval: sigmoid_product },
    ]
}

pub fn find_test(name: &str) -> Result<SuperadditiveTest> {
    battery()
        .into_iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::UnknownTest(name.to_string()))
}

/// Smallest scaled mixed second difference
/// `[φ(x + h e_i + h e_j) - φ(x + h e_i) - φ(x + h e_j) + φ(x)] / h²`
/// over a regular grid on `[lo, hi]^m`, all pairs `i != j`.
///
/// For smooth `φ` this approximates the mixed partials; for any `φ` a
/// nonnegative value is exactly the lattice superadditivity inequality on
/// the probed pairs of points.
pub fn min_mixed_difference(test: &SuperadditiveTest, m: usize, lo: f64, hi: f64, points: usize) -> f64 {
    let h = (hi - lo) / points as f64;
    let mut worst = f64::INFINITY;
    let mut idx = vec![0usize; m];
    let mut x = vec![0.0; m];
    loop {
        for (xi, &k) in x.iter_mut().zip(&idx) {
            *xi = lo + k as f64 * h;
        }
        for i in 0..m {
            for j in i + 1..m {
                let base = (test.eval)(&x);
                let mut xi = x.clone();
                xi[i] += h;
                let mut xj = x.clone();
                xj[j] += h;
                let mut xij = xi.clone();
                xij[j] += h;
                let d = ((test.eval)(&xij) - (test.eval)(&xi) - (test.eval)(&xj) + base) / (h * h);
                worst = worst.min(d);
            }
        }
        // Odometer over the grid.
        let mut pos = 0;
        loop {
            if pos == m {
                return worst;
            }
            idx[pos] += 1;
            if idx[pos] < points {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// One comparison `lhs` vs `rhs` with a standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsdReport {
    pub test: String,
    /// Estimate of the quantity that should be smaller.
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of the estimated `lhs - rhs`.
    pub stderr: f64,
    pub draws: u64,
    /// `lhs <= rhs + 3 stderr`.
    pub pass: bool,
}

impl NsdReport {
    fn one_sided(test: impl Into<String>, lhs: f64, rhs: f64, stderr: f64, draws: u64) -> Self {
        NsdReport {
            test: test.into(),
            lhs,
            rhs,
            stderr,
            draws,
            pass: lhs <= rhs + SE_MULTIPLIER * stderr,
        }
    }
}

/// A source of random m-vectors.
pub trait VectorSource {
    fn draw<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<f64>>;
}

/// The first `m` durations of a time model, multiplied by `N`.
#[derive(Debug, Clone, Copy)]
pub struct DurationSource(pub TimeModelSpec);

impl VectorSource for DurationSource {
    fn draw<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<f64>> {
        let scale = self.0.n as f64;
        Ok(draw_durations(&self.0, m, rng)?.into_iter().map(|t| t * scale).collect())
    }
}

/// Centered unit-variance Gaussian vector with constant correlation `rho`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianSource {
    pub rho: f64,
}

impl VectorSource for GaussianSource {
    fn draw<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<f64>> {
        let factor = EquicorrelatedFactor::new(m, self.rho, 1.0)?;
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = vec![0.0; m];
        factor.transform(&z, &mut x);
        Ok(x)
    }
}

/// Coordinatewise image of another source under `map`.
#[derive(Clone, Copy)]
pub struct MappedSource<S> {
    pub inner: S,
    pub map: fn(f64) -> f64,
}

impl<S: VectorSource> VectorSource for MappedSource<S> {
    fn draw<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.inner.draw(m, rng)?.into_iter().map(self.map).collect())
    }
}

fn check_arity(m: usize) -> Result<()> {
    if (1..=MAX_ARITY).contains(&m) {
        Ok(())
    } else {
        Err(Error::param("m", format!("{m} is not in [1, {MAX_ARITY}]")))
    }
}

fn check_draws(draws: u64) -> Result<()> {
    if draws >= 2 {
        Ok(())
    } else {
        Err(Error::param("draws", "need at least 2 draws"))
    }
}

/// Running mean and variance (Welford).
#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn stderr(&self) -> f64 {
        (self.m2 / (self.n as f64 - 1.0) / self.n as f64).sqrt()
    }
}

/// Compares `E φ(X)` with `E φ(X*)` for each test.
///
/// Each draw takes one vector for `X` and `m` further independent vectors,
/// using coordinate `i` of the `i`-th one for `X*_i`; the copies therefore
/// have exactly the marginals of `X`. The standard error is that of the
/// per-draw difference `φ(X) - φ(X*)`.
pub fn check_nsd<S, R>(
    source: &S,
    tests: &[SuperadditiveTest],
    m: usize,
    draws: u64,
    rng: &mut R,
) -> Result<Vec<NsdReport>>
where
    S: VectorSource + ?Sized,
    R: Rng + ?Sized,
{
    check_arity(m)?;
    check_draws(draws)?;
    let mut lhs = vec![Moments::default(); tests.len()];
    let mut rhs = vec![Moments::default(); tests.len()];
    let mut diff = vec![Moments::default(); tests.len()];
    let mut star = vec![0.0; m];
    for _ in 0..draws {
        let x = source.draw(m, rng)?;
        for (i, s) in star.iter_mut().enumerate() {
            *s = source.draw(m, rng)?[i];
        }
        for (k, test) in tests.iter().enumerate() {
            let (a, b) = ((test.eval)(&x), (test.eval)(&star));
            lhs[k].push(a);
            rhs[k].push(b);
            diff[k].push(a - b);
        }
    }
    Ok(tests
        .iter()
        .enumerate()
        .map(|(k, t)| NsdReport::one_sided(t.name, lhs[k].mean, rhs[k].mean, diff[k].stderr(), draws))
        .collect())
}

/// Outcome of the maximal-moment (Rosenthal) check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosenthalReport {
    pub test: String,
    pub p: f64,
    pub n: usize,
    /// `E max_k |X_1 + ... + X_k|^p`.
    pub lhs: f64,
    /// `2 (15p / ln p)^p [sum E|X_j|^p + (sum E X_j^2)^{p/2}]`.
    pub rhs: f64,
    /// Standard error of `lhs`.
    pub stderr: f64,
    pub draws: u64,
    /// `lhs <= rhs`.
    pub pass: bool,
}

/// Rosenthal's constant `2 (15p / ln p)^p`.
pub fn rosenthal_constant(p: f64) -> f64 {
    2.0 * (15.0 * p / p.ln()).powf(p)
}

/// Centered normalized durations `X_j = N t_j - 1`, `j = 1..=n`.
fn centered_durations<R: Rng + ?Sized>(spec: &TimeModelSpec, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let scale = spec.n as f64;
    Ok(draw_durations(spec, n, rng)?.into_iter().map(|t| scale * t - 1.0).collect())
}

/// Checks the Rosenthal inequality for `X_j = N t_j - 1` (the inequality is
/// homogeneous of degree `p`, so the scale by `N` is immaterial). Both
/// sides are Monte Carlo estimates from the same draws.
pub fn check_rosenthal<R: Rng + ?Sized>(
    spec: &TimeModelSpec,
    p: f64,
    n: usize,
    draws: u64,
    rng: &mut R,
) -> Result<RosenthalReport> {
    if !(p > 2.0 && p <= 4.0) {
        return Err(Error::param("p", format!("{p} is not in (2, 4]")));
    }
    if n == 0 {
        return Err(Error::param("n", "must be positive"));
    }
    check_draws(draws)?;
    let mut max_moment = Moments::default();
    let mut abs_p = vec![0.0; n];
    let mut second = vec![0.0; n];
    for _ in 0..draws {
        let x = centered_durations(spec, n, rng)?;
        let mut partial = 0.0;
        let mut peak: f64 = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            partial += xj;
            peak = peak.max(partial.abs());
            abs_p[j] += xj.abs().powf(p);
            second[j] += xj * xj;
        }
        max_moment.push(peak.powf(p));
    }
    let d = draws as f64;
    let sum_abs_p: f64 = abs_p.iter().sum::<f64>() / d;
    let sum_second: f64 = second.iter().sum::<f64>() / d;
    let rhs = rosenthal_constant(p) * (sum_abs_p + sum_second.powf(p / 2.0));
    let lhs = max_moment.mean;
    Ok(RosenthalReport {
        test: format!("rosenthal_p{p}_n{n}"),
        p,
        n,
        lhs,
        rhs,
        stderr: max_moment.stderr(),
        draws,
        pass: lhs <= rhs,
    })
}

/// `E (X_1 + ... + X_n)^2 <= sum_j E X_j^2` for the centered durations,
/// judged on the paired per-draw difference `2 sum_{i<j} X_i X_j`.
pub fn check_variance_bound<R: Rng + ?Sized>(spec: &TimeModelSpec, n: usize, draws: u64, rng: &mut R) -> Result<NsdReport> {
    check_draws(draws)?;
    let (mut lhs, mut rhs, mut diff) = (Moments::default(), Moments::default(), Moments::default());
    for _ in 0..draws {
        let x = centered_durations(spec, n, rng)?;
        let s: f64 = x.iter().sum();
        let sq: f64 = x.iter().map(|v| v * v).sum();
        lhs.push(s * s);
        rhs.push(sq);
        diff.push(s * s - sq);
    }
    Ok(NsdReport::one_sided(format!("variance_bound_n{n}"), lhs.mean, rhs.mean, diff.stderr(), draws))
}

/// `E(t_1 t_2) <= 1/N^2`, reported on the scale `N^2 E(t_1 t_2)` against 1.
pub fn check_cross_moment<R: Rng + ?Sized>(spec: &TimeModelSpec, draws: u64, rng: &mut R) -> Result<NsdReport> {
    check_draws(draws)?;
    let scale = spec.n as f64;
    let mut acc = Moments::default();
    for _ in 0..draws {
        let t = draw_durations(spec, 2, rng)?;
        acc.push(scale * t[0] * scale * t[1]);
    }
    Ok(NsdReport::one_sided("cross_moment", acc.mean, 1.0, acc.stderr(), draws))
}

/// Closed-form `N^2 E(t_1^2)` of the models that have one.
pub fn second_moment_bound(spec: &TimeModelSpec) -> Option<f64> {
    match spec.model {
        TimeModel::NsdLognormal { .. } | TimeModel::IidRenewal(RenewalDist::LogNormal) => Some(std::f64::consts::E),
        TimeModel::Fixed => Some(1.0),
        TimeModel::IidRenewal(RenewalDist::Exponential) => Some(2.0),
        TimeModel::IidRenewal(RenewalDist::Gamma(k)) => Some(1.0 + 1.0 / k),
        TimeModel::IidRenewal(RenewalDist::Uniform) => Some(4.0 / 3.0),
        TimeModel::Jittered(_) => None,
    }
}

/// `N^2 E(t_1^2)` against its closed form (`e` for the log-normal models).
pub fn check_second_moment<R: Rng + ?Sized>(spec: &TimeModelSpec, draws: u64, rng: &mut R) -> Result<NsdReport> {
    check_draws(draws)?;
    let bound = second_moment_bound(spec)
        .ok_or_else(|| Error::param("model", "no closed-form second moment"))?;
    let scale = spec.n as f64;
    let mut acc = Moments::default();
    for _ in 0..draws {
        let t = draw_durations(spec, 1, rng)?[0] * scale;
        acc.push(t * t);
    }
    Ok(NsdReport::one_sided("second_moment", acc.mean, bound, acc.stderr(), draws))
}

/// The battery on a Gaussian vector with constant correlation `rho` and on
/// its image under `exp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneClosureReport {
    pub preimage: Vec<NsdReport>,
    pub transformed: Vec<NsdReport>,
}

impl MonotoneClosureReport {
    pub fn all_pass(&self) -> bool {
        self.preimage.iter().chain(&self.transformed).all(|r| r.pass)
    }
}

pub fn check_monotone_closure<R: Rng + ?Sized>(m: usize, rho: f64, draws: u64, rng: &mut R) -> Result<MonotoneClosureReport> {
    if rho > 0.0 {
        return Err(Error::param("rho", format!("{rho} must be nonpositive")));
    }
    let tests = battery();
    let gaussian = GaussianSource { rho };
    let preimage = check_nsd(&gaussian, &tests, m, draws, rng)?;
    let transformed = check_nsd(&MappedSource { inner: gaussian, map: f64::exp }, &tests, m, draws, rng)?;
    Ok(MonotoneClosureReport { preimage, transformed })
}

/// Settings of a full verification run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    /// Sampling rate of the duration model.
    pub n: usize,
    pub m: usize,
    pub rho: f64,
    pub block: usize,
    /// One global correlation block of size `m` instead of blocks of `block`.
    pub strict: bool,
    pub draws: u64,
    pub seed: u64,
}

/// One line of a battery outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryRecord {
    pub test: String,
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    pub draws: u64,
    pub pass: bool,
}

impl From<NsdReport> for BatteryRecord {
    fn from(r: NsdReport) -> Self {
        BatteryRecord { test: r.test, lhs: r.lhs, rhs: r.rhs, stderr: r.stderr, draws: r.draws, pass: r.pass }
    }
}

impl From<RosenthalReport> for BatteryRecord {
    fn from(r: RosenthalReport) -> Self {
        BatteryRecord { test: r.test, lhs: r.lhs, rhs: r.rhs, stderr: r.stderr, draws: r.draws, pass: r.pass }
    }
}

/// The duration model a battery probes. In strict mode the `m` durations
/// form one correlation block, checked for admissibility before anything
/// else so that an inadmissible `(m, rho)` surfaces as a PSD diagnostic.
pub fn battery_model(config: &BatteryConfig) -> Result<TimeModelSpec> {
    let block = if config.strict { config.m } else { config.block };
    if config.strict && config.m >= 1 {
        EquicorrelatedFactor::new(config.m, config.rho, 1.0)?;
    }
    check_arity(config.m)?;
    TimeModelSpec::new(TimeModel::NsdLognormal { rho: config.rho, layout: BlockLayout::Blocks(block) }, config.n, 1.0)
}

/// Every check of this module on the block log-normal model. Each check
/// draws from its own stream of `seed`.
///
/// The Rosenthal and variance checks use 20 consecutive durations and at
/// most `draws / 10` draws (at least 1000).
pub fn run_battery(config: &BatteryConfig) -> Result<Vec<BatteryRecord>> {
    let spec = battery_model(config)?;
    let mut out: Vec<BatteryRecord> = Vec::new();
    let tests = battery();
    let seed = config.seed;
    out.extend(
        check_nsd(&DurationSource(spec), &tests, config.m, config.draws, &mut stream_rng(seed, 0))?
            .into_iter()
            .map(BatteryRecord::from),
    );
    out.push(check_cross_moment(&spec, config.draws, &mut stream_rng(seed, 1))?.into());
    out.push(check_second_moment(&spec, config.draws, &mut stream_rng(seed, 2))?.into());
    let small = (config.draws / 10).max(1000);
    out.push(check_rosenthal(&spec, 3.0, 20, small, &mut stream_rng(seed, 3))?.into());
    out.push(check_variance_bound(&spec, 20, small, &mut stream_rng(seed, 4))?.into());
    let closure = check_monotone_closure(config.m, config.rho, config.draws, &mut stream_rng(seed, 5))?;
    for (prefix, reports) in [("preimage", closure.preimage), ("exp", closure.transformed)] {
        out.extend(reports.into_iter().map(|mut r| {
            r.test = format!("{prefix}/{}", r.test);
            BatteryRecord::from(r)
        }));
    }
    Ok(out)
}
