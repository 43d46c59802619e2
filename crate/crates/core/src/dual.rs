//! Numerics of the dual rate-distortion objective.
//!
//! For a fixed reproduction marginal `Q` the rate function has the dual form
//!
//! ```text
//! R(Q, D) = sup_{β ≤ 0}  β·D − E_X[ ln E_Q[ exp(β·d(X, Y)) ] ]
//! ```
//!
//! Everything here works on an empirical distortion block `d_ij = d(x_i, y_j)`
//! with rows indexing source samples and columns reproduction samples. All
//! exponentials are taken after a per-row max shift. Values are in nats;
//! [`dual_rate`] converts to bits.
//!
//! `β` here is the non-positive slope multiplying `+d`. The Blahut–Arimoto
//! module uses the opposite convention (`β_ba = −β`).

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::autodiff::log_mean_exp_eps;
use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKernel {
    #[default]
    SquaredError,
    /// Number of coordinates that differ.
    Hamming,
}

impl DistortionKernel {
    pub fn eval(self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            DistortionKernel::SquaredError => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            DistortionKernel::Hamming => x.iter().zip(y).filter(|(a, b)| a != b).count() as f64,
        }
    }
}

/// Anything that can hand out rows of an `n×k` distortion block.
pub trait DistortionSource {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// Calls `f` once per row, in row order.
    fn for_each_row(&self, f: &mut dyn FnMut(usize, &[f64]));

    fn mean(&self) -> f64 {
        let mut total = 0.0;
        self.for_each_row(&mut |_, row| total += row.iter().sum::<f64>());
        total / (self.rows() * self.cols()) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistortionMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DistortionMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() || rows == 0 || cols == 0 {
            return Err(Error::shape(
                "distortion_matrix",
                format!("{rows}x{cols} with {} entries", data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!(
                "distortions must be finite and non-negative, found {v}"
            )));
        }
        Ok(DistortionMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("distortion_matrix", "ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

impl DistortionSource for DistortionMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn for_each_row(&self, f: &mut dyn FnMut(usize, &[f64])) {
        for (i, row) in self.data.chunks(self.cols).enumerate() {
            f(i, row);
        }
    }
}

/// Distortions between two sample blocks computed row by row on demand, for
/// blocks too large to hold as a dense matrix.
pub struct PairwiseDistortions<'a> {
    x: &'a SampleMatrix,
    y: &'a SampleMatrix,
    kernel: DistortionKernel,
}

impl<'a> PairwiseDistortions<'a> {
    pub fn new(x: &'a SampleMatrix, y: &'a SampleMatrix, kernel: DistortionKernel) -> Result<Self> {
        check_pair(x, y)?;
        Ok(PairwiseDistortions { x, y, kernel })
    }
}

impl DistortionSource for PairwiseDistortions<'_> {
    fn rows(&self) -> usize {
        self.x.rows()
    }

    fn cols(&self) -> usize {
        self.y.rows()
    }

    fn for_each_row(&self, f: &mut dyn FnMut(usize, &[f64])) {
        let mut buf = vec![0.0; self.y.rows()];
        for (i, xi) in self.x.iter_rows().enumerate() {
            for (b, yj) in buf.iter_mut().zip(self.y.iter_rows()) {
                *b = self.kernel.eval(xi, yj);
            }
            f(i, &buf);
        }
    }
}

fn check_pair(x: &SampleMatrix, y: &SampleMatrix) -> Result<()> {
    if x.cols() != y.cols() {
        return Err(Error::shape(
            "distortion_matrix",
            format!("source has {} columns, reproduction has {}", x.cols(), y.cols()),
        ));
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::shape("distortion_matrix", "empty sample block"));
    }
    Ok(())
}

pub fn distortion_matrix(x: &SampleMatrix, y: &SampleMatrix, kernel: DistortionKernel) -> Result<DistortionMatrix> {
    check_pair(x, y)?;
    let mut data = Vec::with_capacity(x.rows() * y.rows());
    for xi in x.iter_rows() {
        for yj in y.iter_rows() {
            data.push(kernel.eval(xi, yj));
        }
    }
    DistortionMatrix::new(x.rows(), y.rows(), data)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta <= 0.0) || beta.is_infinite() {
        return Err(Error::invalid(format!("beta must be finite and <= 0, got {beta}")));
    }
    Ok(())
}

/// `β·D − (1/n) Σ_i ln((1/k) Σ_j exp(β·d_ij) + eps)`, in nats.
pub fn inner_objective<S: DistortionSource + ?Sized>(d_target: f64, beta: f64, dist: &S, eps: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("eps must be >= 0, got {eps}")));
    }
    let mut scaled = vec![0.0; dist.cols()];
    let mut total = 0.0;
    dist.for_each_row(&mut |_, row| {
        for (s, &d) in scaled.iter_mut().zip(row) {
            *s = beta * d;
        }
        total += log_mean_exp_eps(&scaled, eps);
    });
    Ok(beta * d_target - total / dist.rows() as f64)
}

/// Softmax-weighted mean distortion: `(1/n) Σ_i Σ_j d_ij · softmax_j(β·d_i·)`.
///
/// This is the distortion of the channel tilted by `β` towards each source
/// row, and is nondecreasing in `β`.
pub fn stationary_distortion<S: DistortionSource + ?Sized>(beta: f64, dist: &S) -> f64 {
    let mut total = 0.0;
    dist.for_each_row(&mut |_, row| {
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        // max of β·d is β·min(d) for β ≤ 0
        let mut num = 0.0;
        let mut den = 0.0;
        for &d in row {
            let w = (beta * (d - min)).exp();
            num += w * d;
            den += w;
        }
        total += num / den;
    });
    total / dist.rows() as f64
}

/// [`stationary_distortion`] and its derivative in `β`, which is the mean over
/// rows of the softmax-weighted variance of `d`.
pub fn stationary_distortion_with_slope<S: DistortionSource + ?Sized>(beta: f64, dist: &S) -> (f64, f64) {
    let mut total = 0.0;
    let mut slope = 0.0;
    dist.for_each_row(&mut |_, row| {
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let (mut den, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for &d in row {
            let w = if beta == 0.0 { 1.0 } else { (beta * (d - min)).exp() };
            let c = d - min;
            den += w;
            m1 += w * c;
            m2 += w * c * c;
        }
        let mean_c = m1 / den;
        total += min + mean_c;
        slope += (m2 / den - mean_c * mean_c).max(0.0);
    });
    let n = dist.rows() as f64;
    (total / n, slope / n)
}

/// Diagonal-pairing batch estimator of the stationary distortion:
/// `(1/B) Σ_i d_ii · B·κ_ii / Σ_j κ_ij` with `κ_ij = exp(β d_ij)`. Needs a
/// square block whose diagonal pairs `x_i` with `G(z_i)`.
pub fn stationary_distortion_diagonal(beta: f64, dist: &DistortionMatrix) -> Result<f64> {
    if dist.rows != dist.cols {
        return Err(Error::shape(
            "stationary_distortion_diagonal",
            format!("needs a square block, got {}x{}", dist.rows, dist.cols),
        ));
    }
    let b = dist.rows as f64;
    let mut total = 0.0;
    for i in 0..dist.rows {
        let row = dist.row(i);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let den: f64 = row.iter().map(|&d| (beta * (d - min)).exp()).sum();
        let kii = (beta * (row[i] - min)).exp();
        total += row[i] * b * kii / den;
    }
    Ok(total / b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BetaEstimator {
    /// Full `n×k` softmax average.
    #[default]
    FullMatrix,
    /// Diagonal-pairing estimator, square batches only.
    PaperDiagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaStatus {
    Converged,
    /// Distortion at `β = 0` already meets the target.
    ZeroRate,
    /// Even `beta_min` leaves the distortion above target.
    Saturated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaSolution {
    pub beta: f64,
    /// Stationary distortion at `beta`.
    pub distortion: f64,
    pub status: BetaStatus,
}

pub const DEFAULT_BETA_TOL: f64 = 1e-6;
const BETA_MIN_SCALE: f64 = 50.0;
const MAX_BISECTIONS: usize = 200;

/// `−50 / mean(dist)`: keeps the bracket proportionate to the distortion units.
pub fn default_beta_min(mean_distortion: f64) -> f64 {
    if mean_distortion > 0.0 {
        -BETA_MIN_SCALE / mean_distortion
    } else {
        -BETA_MIN_SCALE
    }
}

/// Bisection for `stationary(β) = d_target` over `[beta_min, 0]`, relying on
/// `stationary` being nondecreasing in `β`.
pub fn bisect_beta(stationary: impl Fn(f64) -> f64, d_target: f64, tol: f64, beta_min: f64) -> Result<BetaSolution> {
    bracketed_solve(|b| (stationary(b), None), d_target, tol, beta_min, None)
}

/// Same bracket and stopping rule as [`bisect_beta`], but `stationary` also
/// returns `dD/dβ`; a Newton step is taken whenever it lands inside the
/// current bracket and shrinks it fast enough, otherwise the bracket is halved.
/// `hint`, when inside the bracket, is tried first.
pub fn bisect_beta_newton(
    stationary: impl Fn(f64) -> (f64, f64),
    d_target: f64,
    tol: f64,
    beta_min: f64,
    hint: Option<f64>,
) -> Result<BetaSolution> {
    bracketed_solve(
        |b| {
            let (d, slope) = stationary(b);
            (d, Some(slope))
        },
        d_target,
        tol,
        beta_min,
        hint,
    )
}

fn bracketed_solve(
    stationary: impl Fn(f64) -> (f64, Option<f64>),
    d_target: f64,
    tol: f64,
    beta_min: f64,
    hint: Option<f64>,
) -> Result<BetaSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be > 0, got {tol}")));
    }
    if !(d_target > 0.0) {
        return Err(Error::invalid(format!("target distortion must be > 0, got {d_target}")));
    }
    if !(beta_min < 0.0) || beta_min.is_infinite() {
        return Err(Error::invalid(format!(
            "beta_min must be finite and < 0, got {beta_min}"
        )));
    }
    let (at_zero, slope_zero) = stationary(0.0);
    if at_zero <= d_target {
        return Ok(BetaSolution {
            beta: 0.0,
            distortion: at_zero,
            status: BetaStatus::ZeroRate,
        });
    }
    let (at_min, _) = stationary(beta_min);
    if at_min > d_target + tol {
        return Ok(BetaSolution {
            beta: beta_min,
            distortion: at_min,
            status: BetaStatus::Saturated,
        });
    }
    if at_min >= d_target - tol {
        return Ok(BetaSolution {
            beta: beta_min,
            distortion: at_min,
            status: BetaStatus::Converged,
        });
    }

    let (mut lo, mut hi) = (beta_min, 0.0);
    let mut best = BetaSolution {
        beta: beta_min,
        distortion: at_min,
        status: BetaStatus::Converged,
    };
    // Newton state: current point, residual and slope there, last two step sizes
    let (mut x, mut f, mut df) = (0.0, at_zero - d_target, slope_zero);
    if let Some(h) = hint.filter(|&h| h > beta_min && h < 0.0) {
        let (d, slope) = stationary(h);
        best = BetaSolution {
            beta: h,
            distortion: d,
            status: BetaStatus::Converged,
        };
        if (d - d_target).abs() <= tol {
            return Ok(best);
        }
        if d > d_target {
            hi = h;
        } else {
            lo = h;
        }
        (x, f, df) = (h, d - d_target, slope);
    }
    let mut step = hi - lo;
    let mut step_old = step;
    for _ in 0..MAX_BISECTIONS {
        let newton = df.filter(|&s| s > 0.0).map(|s| x - f / s);
        let next = match newton {
            Some(cand) if cand > lo && cand < hi && (2.0 * f).abs() <= (step_old * df.unwrap()).abs() => {
                step_old = step;
                step = (x - cand).abs();
                cand
            }
            _ => {
                step_old = step;
                step = 0.5 * (hi - lo);
                0.5 * (lo + hi)
            }
        };
        let (d, slope) = stationary(next);
        best = BetaSolution {
            beta: next,
            distortion: d,
            status: BetaStatus::Converged,
        };
        if (d - d_target).abs() <= tol {
            break;
        }
        if d > d_target {
            hi = next;
        } else {
            lo = next;
        }
        (x, f, df) = (next, d - d_target, slope);
        if hi - lo <= f64::EPSILON * lo.abs() {
            break;
        }
    }
    Ok(best)
}

/// Solves for the optimal slope at `d_target`. `beta_min = None` uses
/// [`default_beta_min`].
pub fn solve_beta<S: DistortionSource + ?Sized>(
    d_target: f64,
    dist: &S,
    tol: f64,
    beta_min: Option<f64>,
) -> Result<BetaSolution> {
    solve_beta_near(d_target, dist, tol, beta_min, None)
}

/// [`solve_beta`] started from `hint`, e.g. the previous training step's slope.
pub fn solve_beta_near<S: DistortionSource + ?Sized>(
    d_target: f64,
    dist: &S,
    tol: f64,
    beta_min: Option<f64>,
    hint: Option<f64>,
) -> Result<BetaSolution> {
    let beta_min = beta_min.unwrap_or_else(|| default_beta_min(dist.mean()));
    bisect_beta_newton(
        |b| stationary_distortion_with_slope(b, dist),
        d_target,
        tol,
        beta_min,
        hint,
    )
}

pub fn solve_beta_with(
    estimator: BetaEstimator,
    d_target: f64,
    dist: &DistortionMatrix,
    tol: f64,
    beta_min: Option<f64>,
    hint: Option<f64>,
) -> Result<BetaSolution> {
    match estimator {
        BetaEstimator::FullMatrix => solve_beta_near(d_target, dist, tol, beta_min, hint),
        BetaEstimator::PaperDiagonal => {
            stationary_distortion_diagonal(0.0, dist)?;
            let beta_min = beta_min.unwrap_or_else(|| default_beta_min(dist.mean()));
            bisect_beta(
                |b| stationary_distortion_diagonal(b, dist).expect("square checked"),
                d_target,
                tol,
                beta_min,
            )
        }
    }
}

/// Dual objective at `beta`, converted to bits and clamped at zero.
pub fn dual_rate<S: DistortionSource + ?Sized>(beta: f64, d_target: f64, dist: &S, eps: f64) -> Result<f64> {
    let nats = inner_objective(d_target, beta, dist, eps)?;
    Ok((nats / LN_2).max(0.0))
}

/// A solved operating point: slope (nats per distortion unit), rate in bits,
/// and the distortion the tilted channel achieves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub beta: f64,
    pub rate_bits: f64,
    pub distortion: f64,
}

/// Solves `β*` then evaluates the rate there.
pub fn solve_dual<S: DistortionSource + ?Sized>(
    d_target: f64,
    dist: &S,
    eps: f64,
    tol: f64,
) -> Result<(DualSolution, BetaStatus)> {
    let sol = solve_beta(d_target, dist, tol, None)?;
    let rate_bits = if sol.beta == 0.0 {
        0.0
    } else {
        dual_rate(sol.beta, d_target, dist, eps)?
    };
    Ok((
        DualSolution {
            beta: sol.beta,
            rate_bits,
            distortion: sol.distortion,
        },
        sol.status,
    ))
}
