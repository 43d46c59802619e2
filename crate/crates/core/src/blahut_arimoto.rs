//! Blahut–Arimoto for discrete alphabets, and the plug-in estimator that
//! runs it on the empirical distribution of a sample.
//!
//! Here `β ≥ 0` multiplies `−d`, so the channel is `q(y|x) ∝ r(y)e^{−βd(x,y)}`.
//! The dual module uses the opposite sign; convert with `β_ba = −β_dual`.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::curve::{FailedPoint, Provenance, RdCurve, RdPoint};
use crate::dual::{distortion_matrix, DistortionKernel, DistortionMatrix, DistortionSource};
use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Default cap on the plug-in problem's `n×n` storage.
pub const DEFAULT_MEMORY_BUDGET: u64 = 1 << 30;

const PX_SUM_TOL: f64 = 1e-12;
// slack for rounding when checking the objective is nonincreasing
const OBJECTIVE_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteRdProblem {
    px: Vec<f64>,
    dist: DistortionMatrix,
    beta: f64,
}

impl DiscreteRdProblem {
    pub fn new(px: Vec<f64>, dist: DistortionMatrix, beta: f64) -> Result<Self> {
        if px.len() != dist.rows() {
            return Err(Error::shape(
                "ba_problem",
                format!("{} source probabilities for {} distortion rows", px.len(), dist.rows()),
            ));
        }
        if px.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("source probabilities must be finite and nonnegative"));
        }
        let total: f64 = px.iter().sum();
        if (total - 1.0).abs() > PX_SUM_TOL {
            return Err(Error::invalid(format!("source probabilities sum to {total}, not 1")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::invalid(format!("BA beta must be finite and >= 0, got {beta}")));
        }
        Ok(DiscreteRdProblem { px, dist, beta })
    }

    pub fn uniform(dist: DistortionMatrix, beta: f64) -> Result<Self> {
        let n = dist.rows();
        Self::new(vec![1.0 / n as f64; n], dist, beta)
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.px.clone(), self.dist.clone(), beta)
    }

    pub fn px(&self) -> &[f64] {
        &self.px
    }

    pub fn dist(&self) -> &DistortionMatrix {
        &self.dist
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn source_size(&self) -> usize {
        self.px.len()
    }

    pub fn output_size(&self) -> usize {
        self.dist.cols()
    }

    /// `min_y E d(X, y)`: the smallest distortion reachable at zero rate.
    pub fn max_useful_distortion(&self) -> f64 {
        (0..self.output_size())
            .map(|j| {
                self.px
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p * self.dist.get(i, j))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `E min_y d(X, y)`: no channel does better.
    pub fn min_distortion(&self) -> f64 {
        self.px
            .iter()
            .enumerate()
            .map(|(i, p)| p * self.dist.row(i).iter().copied().fold(f64::INFINITY, f64::min))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaResult {
    pub r: Vec<f64>,
    pub rate_bits: f64,
    pub distortion: f64,
    pub beta: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `−Σ_x p(x) ln Σ_y r(y)e^{−βd(x,y)}` per iterate, in nats.
    pub objective_trace: Vec<f64>,
}

pub fn ba_solve(problem: &DiscreteRdProblem, tol: f64, max_iter: usize) -> Result<BaResult> {
    let k = problem.output_size();
    ba_solve_from(problem, &vec![1.0 / k as f64; k], tol, max_iter)
}

/// BA from an arbitrary starting marginal `r0` (normalized here).
pub fn ba_solve_from(problem: &DiscreteRdProblem, r0: &[f64], tol: f64, max_iter: usize) -> Result<BaResult> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let n = problem.source_size();
    let k = problem.output_size();
    if r0.len() != k {
        return Err(Error::shape(
            "ba_solve",
            format!("initial marginal has {} entries, expected {k}", r0.len()),
        ));
    }
    let r0_total: f64 = r0.iter().sum();
    if r0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(r0_total > 0.0) {
        return Err(Error::invalid(
            "initial marginal must be nonnegative with positive mass",
        ));
    }

    let beta = problem.beta;
    let log_px: Vec<f64> = problem.px.iter().map(|p| p.ln()).collect();
    let mut log_r: Vec<f64> = r0.iter().map(|v| (v / r0_total).ln()).collect();
    let mut r: Vec<f64> = log_r.iter().map(|v| v.exp()).collect();
    // log q(y|x), row-major n×k
    let mut log_q = vec![0.0; n * k];
    let mut row_norm = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let objective = update_channel(problem, beta, &log_r, &mut log_q, &mut row_norm);
        if let Some(&prev) = trace.last() {
            debug_assert!(
                objective <= prev + OBJECTIVE_SLACK * prev.abs().max(1.0),
                "BA objective rose from {prev} to {objective}"
            );
        }
        trace.push(objective);

        let mut change: f64 = 0.0;
        for j in 0..k {
            for i in 0..n {
                col[i] = log_px[i] + log_q[i * k + j];
            }
            let lr = log_sum_exp(&col);
            let rj = lr.exp();
            change = change.max((rj - r[j]).abs());
            log_r[j] = lr;
            r[j] = rj;
        }
        if change < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("BA did not converge in {max_iter} iterations at beta = {beta}");
    }

    // q from the final r, and the joint's own output marginal for the rate
    update_channel(problem, beta, &log_r, &mut log_q, &mut row_norm);
    let mut marginal_log = vec![0.0; k];
    for j in 0..k {
        for i in 0..n {
            col[i] = log_px[i] + log_q[i * k + j];
        }
        marginal_log[j] = log_sum_exp(&col);
    }
    let mut rate = 0.0;
    let mut distortion = 0.0;
    for i in 0..n {
        if problem.px[i] == 0.0 {
            continue;
        }
        for j in 0..k {
            let lq = log_q[i * k + j];
            if lq == f64::NEG_INFINITY {
                continue;
            }
            let w = problem.px[i] * lq.exp();
            rate += w * (lq - marginal_log[j]);
            distortion += w * problem.dist.get(i, j);
        }
    }
    let r: Vec<f64> = marginal_log.iter().map(|v| v.exp()).collect();
    let cap = (n.min(k) as f64).log2();
    Ok(BaResult {
        r,
        rate_bits: (rate / LN_2).clamp(0.0, cap),
        distortion,
        beta,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Fills `log_q` with the channel induced by `log_r` and returns the objective.
fn update_channel(
    problem: &DiscreteRdProblem,
    beta: f64,
    log_r: &[f64],
    log_q: &mut [f64],
    row_norm: &mut [f64],
) -> f64 {
    let k = log_r.len();
    let mut objective = 0.0;
    for (i, norm) in row_norm.iter_mut().enumerate() {
        let d = problem.dist.row(i);
        let row = &mut log_q[i * k..(i + 1) * k];
        for j in 0..k {
            row[j] = log_r[j] - beta * d[j];
        }
        *norm = log_sum_exp(row);
        for v in row.iter_mut() {
            *v -= *norm;
        }
        if problem.px[i] > 0.0 {
            objective -= problem.px[i] * *norm;
        }
    }
    objective
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Finds the `β` whose BA solution has distortion `d_target` by bisection.
/// Targets at or above the `β = 0` distortion return the zero-rate solution.
pub fn ba_solve_for_distortion(
    problem: &DiscreteRdProblem,
    d_target: f64,
    tol: f64,
    max_iter: usize,
) -> Result<BaResult> {
    let at_zero = ba_solve(&problem.with_beta(0.0)?, tol, max_iter)?;
    if d_target >= at_zero.distortion {
        return Ok(at_zero);
    }
    let d_min = problem.min_distortion();
    if d_target <= d_min {
        return Err(Error::invalid(format!(
            "target distortion {d_target} is not above the minimum achievable {d_min}"
        )));
    }

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut best = ba_solve(&problem.with_beta(hi)?, tol, max_iter)?;
    while best.distortion > d_target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Saturated {
                beta: hi,
                achieved: best.distortion,
                target: d_target,
            });
        }
        best = ba_solve_from(&problem.with_beta(hi)?, &best.r, tol, max_iter)?;
    }
    let mut warm = best.r.clone();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let sol = ba_solve_from(&problem.with_beta(mid)?, &warm, tol, max_iter)?;
        warm.clone_from(&sol.r);
        if sol.distortion > d_target {
            lo = mid;
        } else {
            hi = mid;
            best = sol;
        }
        if (best.distortion - d_target).abs() <= 1e-12 * d_target.max(1.0) || hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PluginOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Bytes allowed for the `n×n` distortion and channel matrices.
    pub memory_budget: u64,
}

impl Default for PluginOptions {
    fn default() -> Self {
        PluginOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

/// Bytes the plug-in problem on `n` points needs: distortion plus log-channel, both `n×n` f64.
pub fn plugin_memory_bytes(n: usize) -> u64 {
    2 * 8 * (n as u64) * (n as u64)
}

pub fn ba_plugin_sweep(data: &SampleMatrix, beta_list: &[f64]) -> Result<RdCurve> {
    ba_plugin_sweep_with(data, beta_list, &PluginOptions::default())
}

/// Plug-in `R(D)`: the empirical distribution of `data` as source, its own
/// rows as the reproduction alphabet, squared error. Distortions are reported
/// in the data's original units.
pub fn ba_plugin_sweep_with(data: &SampleMatrix, beta_list: &[f64], opts: &PluginOptions) -> Result<RdCurve> {
    let n = data.rows();
    if n == 0 {
        return Err(Error::invalid("plug-in estimator needs at least one sample"));
    }
    let needed = plugin_memory_bytes(n);
    if needed > opts.memory_budget {
        return Err(Error::MemoryBudget {
            needed,
            budget: opts.memory_budget,
        });
    }
    let dist = distortion_matrix(data, data, DistortionKernel::SquaredError)?;
    let base = DiscreteRdProblem::uniform(dist, 0.0)?;
    let digest = plugin_digest(data);
    let scale = data.scale();

    let mut betas = beta_list.to_vec();
    betas.sort_by(f64::total_cmp);
    let mut curve = RdCurve::default();
    // every slope starts from uniform: a marginal that collapsed at a small
    // slope takes BA a very long time to spread out again
    for beta in betas {
        let result = base.with_beta(beta).and_then(|p| ba_solve(&p, opts.tol, opts.max_iter));
        match result {
            Ok(sol) => {
                if !sol.converged {
                    log::warn!(
                        "plug-in BA at beta = {beta} stopped after {} iterations",
                        sol.iterations
                    );
                }
                curve.points.push(RdPoint {
                    distortion: scale.distortion_to_original(sol.distortion),
                    rate_bits: sol.rate_bits,
                    provenance: Provenance::BaPlugin,
                    n,
                    params_digest: digest.clone(),
                });
            }
            Err(e) => curve.failures.push(FailedPoint {
                distortion: f64::NAN,
                error: format!("beta = {beta}: {e}"),
            }),
        }
    }
    curve.sort();
    Ok(curve)
}

/// Plug-in points at the requested distortions (original units), each found
/// by [`ba_solve_for_distortion`]. Unreachable targets become failed points.
pub fn ba_plugin_at_distortions(data: &SampleMatrix, d_list: &[f64], opts: &PluginOptions) -> Result<RdCurve> {
    let n = data.rows();
    if n == 0 {
        return Err(Error::invalid("plug-in estimator needs at least one sample"));
    }
    let needed = plugin_memory_bytes(n);
    if needed > opts.memory_budget {
        return Err(Error::MemoryBudget {
            needed,
            budget: opts.memory_budget,
        });
    }
    let dist = distortion_matrix(data, data, DistortionKernel::SquaredError)?;
    let base = DiscreteRdProblem::uniform(dist, 0.0)?;
    let digest = plugin_digest(data);
    let scale = data.scale();
    let to_stored = scale.factor * scale.factor;
    let mut curve = RdCurve::default();
    for &d in d_list {
        match ba_solve_for_distortion(&base, d / to_stored, opts.tol, opts.max_iter) {
            Ok(sol) => curve.points.push(RdPoint {
                distortion: scale.distortion_to_original(sol.distortion),
                rate_bits: sol.rate_bits,
                provenance: Provenance::BaPlugin,
                n,
                params_digest: digest.clone(),
            }),
            Err(e) => curve.failures.push(FailedPoint {
                distortion: d,
                error: e.to_string(),
            }),
        }
    }
    curve.sort();
    Ok(curve)
}

fn plugin_digest(data: &SampleMatrix) -> String {
    let mut bytes = Vec::with_capacity(data.values().len() * 8 + 16);
    bytes.extend_from_slice(&(data.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(data.cols() as u64).to_le_bytes());
    for v in data.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    crate::digest::short_hex(&crate::digest::sha256(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h2(p: f64) -> f64 {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    fn hamming_2x2() -> DistortionMatrix {
        DistortionMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn beta_zero_is_uniform_fixed_point() {
        let dist = DistortionMatrix::from_rows(&[vec![0.0, 2.0, 5.0], vec![1.0, 0.5, 3.0]]).unwrap();
        let p = DiscreteRdProblem::new(vec![0.3, 0.7], dist, 0.0).unwrap();
        let sol = ba_solve(&p, 1e-12, 100).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
        assert!(sol.rate_bits.abs() < 1e-15);
        for r in &sol.r {
            assert!((r - 1.0 / 3.0).abs() < 1e-15);
        }
        let expected = 0.3 * (0.0 + 2.0 + 5.0) / 3.0 + 0.7 * (1.0 + 0.5 + 3.0) / 3.0;
        assert!((sol.distortion - expected).abs() < 1e-14);
    }

    #[test]
    fn binary_source_matches_closed_form() {
        let p = DiscreteRdProblem::uniform(hamming_2x2(), 0.0).unwrap();
        let sol = ba_solve_for_distortion(&p, 0.1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((sol.distortion - 0.1).abs() < 1e-9);
        assert!((sol.rate_bits - (1.0 - h2(0.1))).abs() < 1e-3);
        // the slope at D is ln((1−D)/D)
        assert!((sol.beta - (0.9f64 / 0.1).ln()).abs() < 1e-4);
    }

    #[test]
    fn single_output_point() {
        let dist = DistortionMatrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let p = DiscreteRdProblem::new(vec![0.25, 0.75], dist, 4.0).unwrap();
        let sol = ba_solve(&p, 1e-12, 10).unwrap();
        assert_eq!(sol.rate_bits, 0.0);
        assert!((sol.distortion - 2.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_problems() {
        assert!(DiscreteRdProblem::new(vec![0.5, 0.6], hamming_2x2(), 1.0).is_err());
        assert!(DiscreteRdProblem::new(vec![0.5, 0.5], hamming_2x2(), -1.0).is_err());
        assert!(DiscreteRdProblem::new(vec![1.0], hamming_2x2(), 1.0).is_err());
        let p = DiscreteRdProblem::uniform(hamming_2x2(), 1.0).unwrap();
        assert!(ba_solve(&p, 0.0, 10).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let dist =
            DistortionMatrix::from_rows(&[vec![0.0, 1.0, 4.0], vec![1.0, 0.0, 1.0], vec![4.0, 1.0, 0.0]]).unwrap();
        let p = DiscreteRdProblem::uniform(dist, 0.7).unwrap();
        let sol = ba_solve(&p, 1e-15, 2).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
        assert!((sol.r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn plugin_single_point() {
        let data = SampleMatrix::from_rows(&[vec![0.3, -2.0]]).unwrap();
        let curve = ba_plugin_sweep(&data, &[0.0, 1.0, 100.0]).unwrap();
        for p in &curve.points {
            assert_eq!(p.rate_bits, 0.0);
            assert_eq!(p.distortion, 0.0);
        }
    }

    #[test]
    fn plugin_four_points_tends_to_two_bits() {
        let data = SampleMatrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0], vec![7.0]]).unwrap();
        let curve = ba_plugin_sweep(&data, &[1.0, 10.0, 60.0]).unwrap();
        let last = curve.points.first().unwrap();
        assert!((last.rate_bits - 2.0).abs() < 1e-6, "{}", last.rate_bits);
        assert!(last.distortion < 1e-6);
        assert!(curve.is_nonincreasing(1e-12));
    }

    #[test]
    fn plugin_memory_guard() {
        let data = SampleMatrix::new(100, 1, (0..100).map(|i| i as f64).collect()).unwrap();
        let opts = PluginOptions {
            memory_budget: 1000,
            ..PluginOptions::default()
        };
        let err = ba_plugin_sweep_with(&data, &[1.0], &opts).unwrap_err();
        assert!(matches!(
            err,
            Error::MemoryBudget {
                needed: 160_000,
                budget: 1000
            }
        ));
        assert!(err.to_string().contains("subsample"));
    }

    #[test]
    fn plugin_reports_original_units() {
        let data = SampleMatrix::from_rows(&[vec![0.0], vec![1.0]])
            .unwrap()
            .with_scale(crate::Scale {
                offset: 0.0,
                factor: 3.0,
            });
        let curve = ba_plugin_sweep(&data, &[0.0]).unwrap();
        // β = 0: each x pays half of d = 1 stored, i.e. 9 original
        assert!((curve.points[0].distortion - 4.5).abs() < 1e-12);
    }

    #[test]
    fn plugin_at_distortions_hits_targets() {
        let data = SampleMatrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0], vec![7.0]])
            .unwrap()
            .with_scale(crate::Scale {
                offset: 1.0,
                factor: 2.0,
            });
        let curve = ba_plugin_at_distortions(&data, &[4.0, 1.0, 0.0], &PluginOptions::default()).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(curve.failures.len(), 1);
        for (p, d) in curve.points.iter().zip([1.0, 4.0]) {
            assert!((p.distortion - d).abs() < 1e-6, "{} vs {d}", p.distortion);
            assert!(p.rate_bits > 0.0 && p.rate_bits < 2.0);
        }
    }

    fn problem_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, f64)> {
        (2usize..6, 2usize..6).prop_flat_map(|(n, k)| {
            (
                proptest::collection::vec(0.05f64..1.0, n),
                proptest::collection::vec(proptest::collection::vec(0.0f64..4.0, k), n),
                0.0f64..6.0,
            )
        })
    }

    fn build(px: &[f64], rows: &[Vec<f64>], beta: f64) -> DiscreteRdProblem {
        let total: f64 = px.iter().sum();
        let px: Vec<f64> = px.iter().map(|p| p / total).collect();
        let fix: f64 = px.iter().sum();
        let mut px = px;
        px[0] += 1.0 - fix;
        DiscreteRdProblem::new(px, DistortionMatrix::from_rows(rows).unwrap(), beta).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn objective_nonincreasing_and_rate_bounded((px, rows, beta) in problem_strategy()) {
            let p = build(&px, &rows, beta);
            let sol = ba_solve(&p, 1e-10, 20_000).unwrap();
            for w in sol.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
            let cap = (p.source_size().min(p.output_size()) as f64).log2();
            prop_assert!(sol.rate_bits >= 0.0 && sol.rate_bits <= cap + 1e-12);
            prop_assert!((sol.r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn initialization_does_not_matter((px, rows, beta) in problem_strategy(), seed in 0u64..1000) {
            let p = build(&px, &rows, beta);
            let k = p.output_size();
            let r0: Vec<f64> = (0..k).map(|j| 1.0 + ((seed as usize * 31 + j * 17) % 7) as f64).collect();
            let a = ba_solve(&p, 1e-12, 200_000).unwrap();
            let b = ba_solve_from(&p, &r0, 1e-12, 200_000).unwrap();
            prop_assume!(a.converged && b.converged);
            // R and D are unique even when r is not
            prop_assert!((a.rate_bits - b.rate_bits).abs() < 1e-5);
            prop_assert!((a.distortion - b.distortion).abs() < 1e-5);
        }

        #[test]
        fn column_permutation_permutes_marginal((px, rows, beta) in problem_strategy(), shift in 1usize..5) {
            let p = build(&px, &rows, beta);
            let k = p.output_size();
            let perm: Vec<usize> = (0..k).map(|j| (j + shift) % k).collect();
            let permuted: Vec<Vec<f64>> = rows.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
            let q = build(&px, &permuted, beta);
            let a = ba_solve(&p, 1e-10, 20_000).unwrap();
            let b = ba_solve(&q, 1e-10, 20_000).unwrap();
            prop_assert!((a.rate_bits - b.rate_bits).abs() < 1e-10);
            prop_assert!((a.distortion - b.distortion).abs() < 1e-10);
            for (j, &src) in perm.iter().enumerate() {
                prop_assert!((b.r[j] - a.r[src]).abs() < 1e-10);
            }
        }

        #[test]
        fn sweep_is_monotone((px, rows, _beta) in problem_strategy()) {
            let p = build(&px, &rows, 0.0);
            let mut prev: Option<BaResult> = None;
            for beta in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
                let sol = ba_solve(&p.with_beta(beta).unwrap(), 1e-11, 50_000).unwrap();
                if let Some(prev) = &prev {
                    prop_assert!(sol.distortion <= prev.distortion + 1e-7);
                    prop_assert!(sol.rate_bits >= prev.rate_bits - 1e-7);
                }
                prev = Some(sol);
            }
        }
    }
}
