//! Closed-form rate-distortion of Gaussian sources under squared error.
//!
//! For `X ~ N(0, V diag(σ²) Vᵀ)` the rate-distortion function is given by
//! reverse water-filling on the eigenvalues: a water level `λ` with
//! `Σ_i min(λ, σ_i²) = D`, and `R(D) = Σ_{σ_i² > λ} ½ log₂(σ_i² / λ)`.
//! The optimal channel and output marginal factor over the eigen-coordinates,
//! which lets the codec be checked against exact densities.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::curve::{Provenance, RdCurve, RdPoint};
use crate::error::{Error, Result};

const ORTHOGONALITY_TOL: f64 = 1e-9;
const WATER_LEVEL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSourceSpec {
    /// Eigenvalues of the covariance.
    pub variances: Vec<f64>,
    /// Orthogonal `m×m` eigenbasis, row-major. `None` means the identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<Vec<f64>>,
}

impl GaussianSourceSpec {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        let spec = GaussianSourceSpec {
            variances,
            mixing: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_mixing(mut self, mixing: Vec<f64>) -> Result<Self> {
        self.mixing = Some(mixing);
        self.validate()?;
        Ok(self)
    }

    /// `σ_k² = 4·exp(−k/16)`, `k = 1..=m`: the spectrum used for estimator tests.
    pub fn exp_decay(m: usize) -> Result<Self> {
        Self::new((1..=m).map(|k| 4.0 * (-(k as f64) / 16.0).exp()).collect())
    }

    /// `σ_k² = 4·exp(−k²/16)`, `k = 1..=m`: the spectrum used for codec tests.
    pub fn exp_square_decay(m: usize) -> Result<Self> {
        Self::new((1..=m).map(|k| 4.0 * (-((k * k) as f64) / 16.0).exp()).collect())
    }

    /// Haar-random orthogonal mixing from the QR factorization of a seeded
    /// Gaussian matrix.
    pub fn with_random_mixing(self, seed: u64) -> Result<Self> {
        let m = self.dim();
        let v = random_orthogonal(m, seed);
        self.with_mixing(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variances.is_empty() {
            return Err(Error::invalid("Gaussian spec needs at least one variance"));
        }
        if let Some(v) = self.variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(format!("variances must be positive, found {v}")));
        }
        if let Some(mix) = &self.mixing {
            let m = self.dim();
            if mix.len() != m * m {
                return Err(Error::shape(
                    "gaussian_spec",
                    format!("mixing matrix has {} entries, expected {}", mix.len(), m * m),
                ));
            }
            let v = DMatrix::from_row_slice(m, m, mix);
            let err = (v.transpose() * &v - DMatrix::<f64>::identity(m, m)).amax();
            if !(err <= ORTHOGONALITY_TOL) {
                return Err(Error::invalid(format!(
                    "mixing matrix is not orthogonal (max |VᵀV − I| = {err:e})"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    pub fn total_variance(&self) -> f64 {
        self.variances.iter().sum()
    }

    pub fn max_variance(&self) -> f64 {
        self.variances.iter().copied().fold(0.0, f64::max)
    }

    /// Eigen-coordinates `Vᵀx`.
    pub fn to_eigen(&self, x: &[f64]) -> Vec<f64> {
        match &self.mixing {
            None => x.to_vec(),
            Some(v) => {
                let m = self.dim();
                (0..m).map(|k| (0..m).map(|i| v[i * m + k] * x[i]).sum()).collect()
            }
        }
    }

    /// Original coordinates `V u`.
    pub fn from_eigen(&self, u: &[f64]) -> Vec<f64> {
        match &self.mixing {
            None => u.to_vec(),
            Some(v) => {
                let m = self.dim();
                (0..m).map(|i| (0..m).map(|k| v[i * m + k] * u[k]).sum()).collect()
            }
        }
    }

    /// One draw from `N(0, V diag(σ²) Vᵀ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: Vec<f64> = self
            .variances
            .iter()
            .map(|s| {
                s.sqrt() * {
                    let z: f64 = StandardNormal.sample(rng);
                    z
                }
            })
            .collect();
        self.from_eigen(&u)
    }
}

pub fn random_orthogonal(m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix so the distribution is Haar rather than biased by the QR convention
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            for i in 0..m {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            out.push(q[(i, j)]);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaterfillSolution {
    pub lambda: f64,
    /// Indices with `σ_i² > λ`.
    pub active_set: Vec<usize>,
    pub rate_bits: f64,
    pub distortion: f64,
}

impl WaterfillSolution {
    /// `λ|A| + Σ_{i∉A} σ_i² − D`.
    pub fn residual(&self, spec: &GaussianSourceSpec, d: f64) -> f64 {
        water_level_distortion(spec, self.lambda, &self.active_set) - d
    }

    /// Slope `dR/dD` in nats per distortion unit: `−1/(2λ)` in the positive-rate regime.
    pub fn slope_nats(&self) -> f64 {
        if self.active_set.is_empty() {
            0.0
        } else {
            -0.5 / self.lambda
        }
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active_set.binary_search(&k).is_ok()
    }
}

fn water_level_distortion(spec: &GaussianSourceSpec, lambda: f64, active: &[usize]) -> f64 {
    let inactive: f64 = spec
        .variances
        .iter()
        .enumerate()
        .filter(|(i, _)| active.binary_search(i).is_err())
        .map(|(_, s)| s)
        .sum();
    lambda * active.len() as f64 + inactive
}

pub fn waterfill(spec: &GaussianSourceSpec, d: f64) -> Result<WaterfillSolution> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::invalid(format!("distortion must be positive, got {d}")));
    }
    spec.validate()?;
    let total = spec.total_variance();
    if d >= total {
        return Ok(WaterfillSolution {
            lambda: spec.max_variance(),
            active_set: Vec::new(),
            rate_bits: 0.0,
            distortion: total,
        });
    }

    // Σ min(λ, σ²) is continuous, piecewise linear and increasing on (0, max σ²]
    let level = |lambda: f64| -> f64 { spec.variances.iter().map(|&s| s.min(lambda)).sum() };
    let (mut lo, mut hi) = (0.0, spec.max_variance());
    while hi - lo > WATER_LEVEL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if level(mid) < d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let approx = 0.5 * (lo + hi);

    // exact solve on the linear piece the bisection landed on
    let mut active: Vec<usize> = (0..spec.dim()).filter(|&i| spec.variances[i] > approx).collect();
    let mut lambda = exact_level(spec, &active, d);
    // a coordinate sitting on the boundary belongs to the inactive side
    while let Some(pos) = active.iter().position(|&i| spec.variances[i] <= lambda) {
        active.remove(pos);
        if active.is_empty() {
            break;
        }
        lambda = exact_level(spec, &active, d);
    }
    if active.is_empty() {
        return Ok(WaterfillSolution {
            lambda: spec.max_variance(),
            active_set: Vec::new(),
            rate_bits: 0.0,
            distortion: total,
        });
    }

    let rate_bits = active.iter().map(|&i| 0.5 * (spec.variances[i] / lambda).log2()).sum();
    Ok(WaterfillSolution {
        lambda,
        active_set: active,
        rate_bits,
        distortion: d,
    })
}

fn exact_level(spec: &GaussianSourceSpec, active: &[usize], d: f64) -> f64 {
    let inactive: f64 = spec
        .variances
        .iter()
        .enumerate()
        .filter(|(i, _)| active.binary_search(i).is_err())
        .map(|(_, s)| s)
        .sum();
    (d - inactive) / active.len() as f64
}

pub fn oracle_curve(spec: &GaussianSourceSpec, d_list: &[f64]) -> RdCurve {
    let digest = spec_digest(spec);
    let mut curve = RdCurve::default();
    for &d in d_list {
        match waterfill(spec, d) {
            Ok(sol) => curve.points.push(RdPoint {
                distortion: sol.distortion.min(d),
                rate_bits: sol.rate_bits,
                provenance: Provenance::Oracle,
                n: 0,
                params_digest: digest.clone(),
            }),
            Err(e) => curve.failures.push(crate::curve::FailedPoint {
                distortion: d,
                error: e.to_string(),
            }),
        }
    }
    curve.sort();
    curve
}

/// Short hex digest of the serialized spec, used as curve provenance.
pub fn spec_digest(spec: &GaussianSourceSpec) -> String {
    let json = serde_json::to_vec(spec).expect("spec serializes");
    crate::digest::short_hex(&crate::digest::sha256(&json))
}

/// Which closed-form channel the sampler realizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelForm {
    /// The rate-distortion achieving pair: `Y ~ N(0, σ²−λ)` and
    /// `Y | X=x ~ N((1−λ/σ²)x, λ(1−λ/σ²))` on active coordinates. Its density
    /// ratio is proportional to `exp(−(x−y)²/(2λ))`, and its mutual
    /// information equals `R(D)`.
    #[default]
    Optimal,
    /// Additive-noise form `Y | X=x ~ N(x, λ)` with marginal `N(0, σ²+λ)`.
    /// Same distortion as the optimal channel, but higher mutual information.
    Forward,
}

/// Closed-form channel and output marginal at a fixed distortion, per
/// eigen-coordinate. Inactive coordinates are a point mass at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianTestChannel {
    spec: GaussianSourceSpec,
    solution: WaterfillSolution,
    form: ChannelForm,
    active: Vec<bool>,
}

impl GaussianTestChannel {
    pub fn new(spec: &GaussianSourceSpec, d: f64, form: ChannelForm) -> Result<Self> {
        let solution = waterfill(spec, d)?;
        let mut active = vec![false; spec.dim()];
        for &k in &solution.active_set {
            active[k] = true;
        }
        Ok(GaussianTestChannel {
            spec: spec.clone(),
            solution,
            form,
            active,
        })
    }

    pub fn spec(&self) -> &GaussianSourceSpec {
        &self.spec
    }

    pub fn solution(&self) -> &WaterfillSolution {
        &self.solution
    }

    pub fn form(&self) -> ChannelForm {
        self.form
    }

    pub fn lambda(&self) -> f64 {
        self.solution.lambda
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// `β* = −1/(2λ)`, nats per distortion unit.
    pub fn slope_nats(&self) -> f64 {
        self.solution.slope_nats()
    }

    /// Per eigen-coordinate marginal variance (0 when inactive).
    pub fn marginal_variances(&self) -> Vec<f64> {
        let lambda = self.lambda();
        self.spec
            .variances
            .iter()
            .zip(&self.active)
            .map(|(&s, &a)| match (a, self.form) {
                (false, _) => 0.0,
                (true, ChannelForm::Optimal) => s - lambda,
                (true, ChannelForm::Forward) => s + lambda,
            })
            .collect()
    }

    /// `(gain, noise variance)` of the conditional on an active coordinate.
    fn conditional(&self, k: usize) -> (f64, f64) {
        let lambda = self.lambda();
        match self.form {
            ChannelForm::Optimal => {
                let a = 1.0 - lambda / self.spec.variances[k];
                (a, a * lambda)
            }
            ChannelForm::Forward => (1.0, lambda),
        }
    }

    pub fn sample_channel<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let u = self.spec.to_eigen(x);
        let y: Vec<f64> = (0..self.dim())
            .map(|k| {
                if !self.active[k] {
                    return 0.0;
                }
                let (gain, var) = self.conditional(k);
                let z: f64 = StandardNormal.sample(rng);
                gain * u[k] + var.sqrt() * z
            })
            .collect();
        self.spec.from_eigen(&y)
    }

    pub fn sample_marginal<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.dim());
        self.sample_marginal_into(rng, &mut y);
        y
    }

    pub(crate) fn sample_marginal_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        let vars = self.marginal_variances();
        for (k, v) in vars.iter().enumerate() {
            if self.active[k] {
                let z: f64 = StandardNormal.sample(rng);
                out.push(v.sqrt() * z);
            } else {
                out.push(0.0);
            }
        }
        if self.spec.mixing.is_some() {
            *out = self.spec.from_eigen(out);
        }
    }

    /// `ln dQ_{Y|X=x}/dQ_Y (y)` in nats. Inactive coordinates contribute nothing.
    pub fn log_density_ratio(&self, x: &[f64], y: &[f64]) -> f64 {
        let u = self.spec.to_eigen(x);
        let v = self.spec.to_eigen(y);
        let marg = self.marginal_variances();
        (0..self.dim())
            .filter(|&k| self.active[k])
            .map(|k| {
                let (gain, var) = self.conditional(k);
                normal_log_pdf(v[k], gain * u[k], var) - normal_log_pdf(v[k], 0.0, marg[k])
            })
            .sum()
    }

    /// `I(X;Y)` of the realized channel in bits.
    pub fn mutual_information_bits(&self) -> f64 {
        let lambda = self.lambda();
        self.solution
            .active_set
            .iter()
            .map(|&k| {
                let s = self.spec.variances[k];
                match self.form {
                    ChannelForm::Optimal => 0.5 * (s / lambda).ln() / LN_2,
                    ChannelForm::Forward => 0.5 * ((s + lambda) / lambda).ln() / LN_2,
                }
            })
            .sum()
    }
}

/// One channel draw `y | x` at distortion `d`.
pub fn optimal_channel_sample<R: Rng + ?Sized>(
    spec: &GaussianSourceSpec,
    d: f64,
    form: ChannelForm,
    x: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(GaussianTestChannel::new(spec, d, form)?.sample_channel(x, rng))
}

/// One draw from the output marginal at distortion `d`.
pub fn optimal_marginal_sample<R: Rng + ?Sized>(
    spec: &GaussianSourceSpec,
    d: f64,
    form: ChannelForm,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(GaussianTestChannel::new(spec, d, form)?.sample_marginal(rng))
}

pub fn log_density_ratio_gaussian(
    spec: &GaussianSourceSpec,
    d: f64,
    form: ChannelForm,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    Ok(GaussianTestChannel::new(spec, d, form)?.log_density_ratio(x, y))
}

fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean) * (x - mean) / var)
}
