//! Exact Gaussian sampling: dense covariance factorization, multivariate
//! normal draws, and fractional Brownian motion on arbitrary time grids.
//!
//! Matrices are stored as packed lower triangles in row-major order, so row
//! `i` occupies `i(i+1)/2 .. i(i+1)/2 + i + 1`. Both the Gram matrices built
//! here and their Cholesky factors use that layout.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Largest grid accepted by [`sample_fbm_at`]. The factorization is cubic in
/// the grid length and the packed matrix is quadratic in memory.
pub const MAX_FBM_GRID: usize = 20_000;

/// Relative pivot tolerance of [`cholesky`].
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Dyadic resolutions up to this exponent are generated by Cholesky,
/// finer ones by circulant embedding.
pub const CHOLESKY_MAX_LOG2: u32 = 10;

pub(crate) fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(Error::param("hurst", format!("{hurst} is not in (0, 1)")))
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::param("sigma2", format!("{sigma2} is not positive")))
    }
}

/// Covariance of fractional Brownian motion,
/// `R_H(t, s) = sigma2 / 2 * (t^{2H} + s^{2H} - |t - s|^{2H})`.
pub fn fbm_cov(hurst: f64, sigma2: f64, s: f64, t: f64) -> Result<f64> {
    check_hurst(hurst)?;
    check_sigma2(sigma2)?;
    if !(s >= 0.0 && t >= 0.0) {
        return Err(Error::param("s, t", format!("times ({s}, {t}) must be nonnegative")));
    }
    let two_h = 2.0 * hurst;
    Ok(0.5 * sigma2 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

#[inline]
pub(crate) fn packed_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `x^p` for `x >= 0`, `p > 0`. Computed as `exp(p ln x)`, which is about
/// three times faster than `powf` and accurate to a few ulps here.
#[inline]
pub(crate) fn pow_pos(x: f64, p: f64) -> f64 {
    (p * x.ln()).exp()
}

/// Packed Gram matrix of fBm on `grid`.
pub(crate) fn fbm_gram_packed(grid: &[f64], hurst: f64, sigma2: f64) -> Vec<f64> {
    let n = grid.len();
    let two_h = 2.0 * hurst;
    let powered: Vec<f64> = grid.iter().map(|t| t.powf(two_h)).collect();
    let mut packed = vec![0.0; n * (n + 1) / 2];
    for i in 0..n {
        let row = &mut packed[packed_index(i, 0)..=packed_index(i, i)];
        let (gi, pi) = (grid[i], powered[i]);
        for j in 0..i {
            row[j] = 0.5 * sigma2 * (pi + powered[j] - pow_pos((gi - grid[j]).abs(), two_h));
        }
        row[i] = sigma2 * pi;
    }
    packed
}

/// Covariance structure of a Gaussian vector.
#[derive(Debug, Clone, PartialEq)]
pub enum CovKind {
    /// Unit correlation `rho` off the diagonal, common `variance` on it.
    ConstantCorrelation { rho: f64, variance: f64 },
    /// Dense symmetric matrix, rows of length `m`.
    Explicit(Vec<Vec<f64>>),
    /// fBm sampled at a strictly increasing positive grid.
    Fbm { hurst: f64, sigma2: f64, grid: Vec<f64> },
}

/// Mean vector plus covariance structure.
#[derive(Debug, Clone, PartialEq)]
pub struct CovSpec {
    mean: Vec<f64>,
    kind: CovKind,
}

impl CovSpec {
    /// Validates the structural invariants. Positive definiteness is only
    /// checked when the matrix is factored.
    pub fn new(mean: Vec<f64>, kind: CovKind) -> Result<Self> {
        let m = mean.len();
        if m == 0 {
            return Err(Error::param("mean", "dimension must be positive"));
        }
        match &kind {
            CovKind::ConstantCorrelation { rho, variance } => {
                check_sigma2(*variance).map_err(|_| Error::param("variance", "must be positive"))?;
                if !(*rho >= -1.0 && *rho <= 1.0) {
                    return Err(Error::param("rho", format!("{rho} is not a correlation")));
                }
            }
            CovKind::Explicit(rows) => {
                if rows.len() != m {
                    return Err(Error::DimensionMismatch { expected: m, found: rows.len() });
                }
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != m {
                        return Err(Error::DimensionMismatch { expected: m, found: row.len() });
                    }
                    if !(row[i] > 0.0) {
                        return Err(Error::param("matrix", format!("diagonal entry {i} is not positive")));
                    }
                    for j in 0..i {
                        let (a, b) = (row[j], rows[j][i]);
                        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                            return Err(Error::param("matrix", format!("not symmetric at ({i}, {j})")));
                        }
                    }
                }
            }
            CovKind::Fbm { hurst, sigma2, grid } => {
                check_hurst(*hurst)?;
                check_sigma2(*sigma2)?;
                if grid.len() != m {
                    return Err(Error::DimensionMismatch { expected: m, found: grid.len() });
                }
                check_grid(grid)?;
            }
        }
        Ok(CovSpec { mean, kind })
    }

    /// Zero-mean spec.
    pub fn centered(dim: usize, kind: CovKind) -> Result<Self> {
        CovSpec::new(vec![0.0; dim], kind)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn kind(&self) -> &CovKind {
        &self.kind
    }

    /// Covariance entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.kind {
            CovKind::ConstantCorrelation { rho, variance } => {
                if i == j {
                    *variance
                } else {
                    rho * variance
                }
            }
            CovKind::Explicit(rows) => rows[i][j],
            CovKind::Fbm { hurst, sigma2, grid } => {
                let two_h = 2.0 * hurst;
                let (s, t) = (grid[i], grid[j]);
                0.5 * sigma2 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h))
            }
        }
    }

    /// Packed lower triangle of the covariance matrix.
    pub fn packed(&self) -> Vec<f64> {
        match &self.kind {
            CovKind::Fbm { hurst, sigma2, grid } => fbm_gram_packed(grid, *hurst, *sigma2),
            _ => {
                let m = self.dim();
                let mut packed = Vec::with_capacity(m * (m + 1) / 2);
                for i in 0..m {
                    for j in 0..=i {
                        packed.push(self.entry(i, j));
                    }
                }
                packed
            }
        }
    }

    /// Dense covariance matrix.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let m = self.dim();
        (0..m).map(|i| (0..m).map(|j| self.entry(i, j)).collect()).collect()
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for (index, &t) in grid.iter().enumerate() {
        if !(t > prev) || !t.is_finite() {
            return Err(Error::NonIncreasingGrid { index });
        }
        prev = t;
    }
    Ok(())
}

/// A linear map `z -> x` turning independent standard normals into a
/// Gaussian vector with a prescribed covariance.
pub trait GaussianFactor {
    fn dim(&self) -> usize;

    /// Writes `F z` into `out`. Both slices have length `dim()`.
    fn transform(&self, z: &[f64], out: &mut [f64]);
}

/// Lower-triangular Cholesky factor in packed row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholFactor {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.lower[packed_index(i, j)]
        }
    }

    /// Row `i` up to and including the diagonal.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.lower[packed_index(i, 0)..=packed_index(i, i)]
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.get(i, j)).collect()).collect()
    }

    /// Packed lower triangle of `L Lᵀ`.
    pub fn reconstruct_packed(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.lower.len());
        for i in 0..self.dim {
            for j in 0..=i {
                out.push(dot(self.row(i), &self.row(j)[..=j]));
            }
        }
        out
    }

    /// `‖L Lᵀ − Σ‖_F / ‖Σ‖_F` against a packed covariance.
    pub fn relative_reconstruction_error(&self, packed_cov: &[f64]) -> f64 {
        let rebuilt = self.reconstruct_packed();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..self.dim {
            for j in 0..=i {
                let k = packed_index(i, j);
                let w = if i == j { 1.0 } else { 2.0 };
                num += w * (rebuilt[k] - packed_cov[k]).powi(2);
                den += w * packed_cov[k].powi(2);
            }
        }
        (num / den).sqrt()
    }
}

impl GaussianFactor for CholFactor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn transform(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = dot(self.row(i), &z[..=i]);
        }
    }
}

/// Cholesky factorization of a covariance specification.
pub fn cholesky(spec: &CovSpec) -> Result<CholFactor> {
    cholesky_packed(spec.dim(), spec.packed())
}

/// In-place Cholesky–Banachiewicz on a packed lower triangle.
///
/// Fails on the first pivot not exceeding `PIVOT_TOLERANCE` times the
/// largest diagonal entry; nothing is regularized.
pub fn cholesky_packed(dim: usize, mut a: Vec<f64>) -> Result<CholFactor> {
    if a.len() != dim * (dim + 1) / 2 {
        return Err(Error::DimensionMismatch {
            expected: dim * (dim + 1) / 2,
            found: a.len(),
        });
    }
    let max_diag = (0..dim).map(|i| a[packed_index(i, i)]).fold(0.0f64, f64::max);
    let tol = PIVOT_TOLERANCE * max_diag;
    for i in 0..dim {
        let start = packed_index(i, 0);
        let (done, rest) = a.split_at_mut(start);
        let row = &mut rest[..=i];
        for j in 0..i {
            let rj = &done[packed_index(j, 0)..=packed_index(j, j)];
            let s = dot(&row[..j], &rj[..j]);
            row[j] = (row[j] - s) / rj[j];
        }
        let pivot = row[i] - dot(&row[..i], &row[..i]);
        if !(pivot > tol) {
            return Err(Error::NotPositiveDefinite { pivot: i, value: pivot });
        }
        row[i] = pivot.sqrt();
    }
    Ok(CholFactor { dim, lower: a })
}

/// Symmetric square root of the constant-correlation matrix
/// `variance * ((1 - rho) I + rho J)`.
///
/// `x_i = sd * (sqrt(1 - rho) (z_i - z̄) + sqrt(1 + (m - 1) rho) z̄)`.
/// Unlike Cholesky it stays valid on the semidefinite boundary
/// `rho = -1/(m - 1)`, where the coordinates sum to a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct EquicorrelatedFactor {
    dim: usize,
    sd: f64,
    within: f64,
    common: f64,
}

impl EquicorrelatedFactor {
    pub fn new(dim: usize, rho: f64, variance: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        check_sigma2(variance).map_err(|_| Error::param("variance", "must be positive"))?;
        if !(rho <= 1.0) {
            return Err(Error::param("rho", format!("{rho} is not a correlation")));
        }
        let eigenvalue = 1.0 + (dim as f64 - 1.0) * rho;
        if eigenvalue < -1e-12 {
            return Err(Error::NotPositiveSemidefinite { dim, rho, eigenvalue });
        }
        Ok(EquicorrelatedFactor {
            dim,
            sd: variance.sqrt(),
            within: (1.0 - rho).sqrt(),
            common: eigenvalue.max(0.0).sqrt(),
        })
    }
}

impl GaussianFactor for EquicorrelatedFactor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn transform(&self, z: &[f64], out: &mut [f64]) {
        let z = &z[..self.dim];
        let zbar = z.iter().sum::<f64>() / self.dim as f64;
        for (o, &zi) in out.iter_mut().zip(z) {
            *o = self.sd * (self.within * (zi - zbar) + self.common * zbar);
        }
    }
}

/// `mean + F z` for a given vector of standard normals `z`.
pub fn sample_mvn_from_normals<F: GaussianFactor + ?Sized>(
    factor: &F,
    mean: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    let m = factor.dim();
    for len in [mean.len(), z.len()] {
        if len != m {
            return Err(Error::DimensionMismatch { expected: m, found: len });
        }
    }
    let mut out = vec![0.0; m];
    factor.transform(z, &mut out);
    for (o, mu) in out.iter_mut().zip(mean) {
        *o += mu;
    }
    Ok(out)
}

/// One draw of `mean + F z` with `z` taken from `rng`.
pub fn sample_mvn<F, R>(factor: &F, mean: &[f64], rng: &mut R) -> Result<Vec<f64>>
where
    F: GaussianFactor + ?Sized,
    R: Rng + ?Sized,
{
    if mean.len() != factor.dim() {
        return Err(Error::DimensionMismatch { expected: factor.dim(), found: mean.len() });
    }
    let z: Vec<f64> = (0..factor.dim()).map(|_| rng.sample(StandardNormal)).collect();
    sample_mvn_from_normals(factor, mean, &z)
}

/// Deterministic continuous functions usable as noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeterministicW {
    Zero,
    Constant(f64),
    /// `slope * t`
    Linear(f64),
    /// `coef * t^2`
    Quadratic(f64),
}

impl DeterministicW {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            DeterministicW::Zero => 0.0,
            DeterministicW::Constant(c) => c,
            DeterministicW::Linear(slope) => slope * t,
            DeterministicW::Quadratic(coef) => coef * t * t,
        }
    }
}

/// A continuous noise function `W` on `[0, domain_end]`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoisePath {
    /// fBm known exactly on `grid`, and at 0 where it vanishes. Between
    /// nodes the path is linearly interpolated, which is an approximation of
    /// the process but still a continuous function.
    FbmExact {
        grid: Arc<[f64]>,
        values: Vec<f64>,
        hurst: f64,
        sigma2: f64,
    },
    /// Piecewise-linear path through `values[i]` at `i * step`.
    Interpolated { step: f64, values: Vec<f64> },
    Deterministic { w: DeterministicW, domain_end: f64 },
}

impl NoisePath {
    pub fn deterministic(w: DeterministicW) -> Self {
        NoisePath::Deterministic { w, domain_end: f64::INFINITY }
    }

    pub fn domain_end(&self) -> f64 {
        match self {
            NoisePath::FbmExact { grid, .. } => grid.last().copied().unwrap_or(0.0),
            NoisePath::Interpolated { step, values } => step * (values.len() - 1) as f64,
            NoisePath::Deterministic { domain_end, .. } => *domain_end,
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let end = self.domain_end();
        if !(t >= 0.0 && t <= end) {
            return Err(Error::OutsideDomain { t, end });
        }
        Ok(match self {
            NoisePath::FbmExact { grid, values, .. } => {
                if t == 0.0 {
                    return Ok(0.0);
                }
                let k = grid.partition_point(|&g| g < t);
                if grid[k] == t {
                    values[k]
                } else {
                    let (t0, w0) = if k == 0 { (0.0, 0.0) } else { (grid[k - 1], values[k - 1]) };
                    let (t1, w1) = (grid[k], values[k]);
                    w0 + (w1 - w0) * (t - t0) / (t1 - t0)
                }
            }
            NoisePath::Interpolated { step, values } => {
                let pos = t / step;
                let i = (pos.floor() as usize).min(values.len() - 1);
                let frac = pos - i as f64;
                if frac == 0.0 || i + 1 == values.len() {
                    values[i]
                } else {
                    values[i] + (values[i + 1] - values[i]) * frac
                }
            }
            NoisePath::Deterministic { w, .. } => w.eval(t),
        })
    }

    /// `W` at each point of `times`.
    pub fn eval_many(&self, times: &[f64]) -> Result<Vec<f64>> {
        times.iter().map(|&t| self.eval(t)).collect()
    }
}

/// Exact fBm draw at the points of `grid` (strictly increasing, positive).
pub fn sample_fbm_at<R: Rng + ?Sized>(
    grid: &[f64],
    hurst: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<NoisePath> {
    check_hurst(hurst)?;
    check_sigma2(sigma2)?;
    if grid.is_empty() {
        return Err(Error::param("grid", "must not be empty"));
    }
    if grid.len() > MAX_FBM_GRID {
        return Err(Error::CostGuard { len: grid.len(), limit: MAX_FBM_GRID });
    }
    check_grid(grid)?;
    let factor = cholesky_packed(grid.len(), fbm_gram_packed(grid, hurst, sigma2))?;
    let z: Vec<f64> = (0..grid.len()).map(|_| rng.sample(StandardNormal)).collect();
    let mut values = vec![0.0; grid.len()];
    factor.transform(&z, &mut values);
    Ok(NoisePath::FbmExact { grid: grid.into(), values, hurst, sigma2 })
}

/// fBm on the dyadic grid `i / 2^k`, `i = 0..=2^k`, frozen into a
/// piecewise-linear continuous path on `[0, 1]`.
pub fn make_interpolated_path<R: Rng + ?Sized>(
    resolution_log2: u32,
    hurst: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<NoisePath> {
    if !(8..=20).contains(&resolution_log2) {
        return Err(Error::param(
            "resolution_log2",
            format!("{resolution_log2} is not in [8, 20]"),
        ));
    }
    check_hurst(hurst)?;
    check_sigma2(sigma2)?;
    let n = 1usize << resolution_log2;
    let step = 1.0 / n as f64;
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    if resolution_log2 <= CHOLESKY_MAX_LOG2 {
        let grid: Vec<f64> = (1..=n).map(|i| i as f64 * step).collect();
        match sample_fbm_at(&grid, hurst, sigma2, rng)? {
            NoisePath::FbmExact { values: v, .. } => values.extend(v),
            _ => unreachable!(),
        }
    } else {
        let increments = circulant_fgn(n, step, hurst, sigma2, rng)?;
        let mut acc = 0.0;
        for dx in increments {
            acc += dx;
            values.push(acc);
        }
    }
    Ok(NoisePath::Interpolated { step, values })
}

/// Autocovariance of fBm increments over steps of length `step`.
fn fgn_autocov(lag: usize, step: f64, hurst: f64, sigma2: f64) -> f64 {
    let two_h = 2.0 * hurst;
    let k = lag as f64;
    let near = if lag == 0 { 1.0 } else { (k - 1.0).powf(two_h) };
    0.5 * sigma2 * step.powf(two_h) * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + near)
}

/// `n` consecutive fBm increments by circulant embedding of the increment
/// covariance (Davies–Harte). Exact whenever the embedding is nonnegative
/// definite, which holds for every `hurst` in `(0, 1)`.
pub(crate) fn circulant_fgn<R: Rng + ?Sized>(
    n: usize,
    step: f64,
    hurst: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let size = 2 * n;
    let mut row: Vec<Complex<f64>> = Vec::with_capacity(size);
    for k in 0..=n {
        row.push(Complex::new(fgn_autocov(k, step, hurst, sigma2), 0.0));
    }
    for k in (1..n).rev() {
        row.push(Complex::new(fgn_autocov(k, step, hurst, sigma2), 0.0));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(size);
    fft.process(&mut row);

    let scale = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    let mut weights = Vec::with_capacity(size);
    for (k, c) in row.iter().enumerate() {
        if c.re < -1e-10 * scale {
            return Err(Error::NotPositiveDefinite { pivot: k, value: c.re });
        }
        weights.push((c.re.max(0.0) / size as f64).sqrt());
    }
    let mut noise: Vec<Complex<f64>> = weights
        .iter()
        .map(|w| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(w * re, w * im)
        })
        .collect();
    fft.process(&mut noise);
    Ok(noise[..n].iter().map(|c| c.re).collect())
}
