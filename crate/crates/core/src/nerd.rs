//! Neural estimation of the rate-distortion function.
//!
//! The reproduction marginal is the pushforward of `N(0, I)` through a
//! generator. Each training step draws a data batch and a generator batch,
//! solves the slope `β*` on the batch distortion block, and takes a gradient
//! step on `−(1/B) Σ_i ln((1/B) Σ_j exp(β*·d_ij) + ε)` with `β*` held fixed.
//! The reported estimate re-solves `β*` on fresh generator draws.

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Architecture, GeneratorModel, Optimizer, OptimizerKind, OutputActivation, Tape};
use crate::curve::{FailedPoint, Provenance, RdCurve, RdPoint};
use crate::dual::{
    dual_rate, solve_beta, solve_beta_with, BetaEstimator, BetaStatus, DistortionKernel, DistortionMatrix,
    DistortionSource, DualSolution, PairwiseDistortions, DEFAULT_BETA_TOL,
};
use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;

const INIT_STREAM: u64 = 0;
const BATCH_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;
/// Rates may rise by this much along a sorted sweep before a warning.
pub const MONOTONE_SLACK_BITS: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NerdConfig {
    #[serde(rename = "D_target")]
    pub d_target: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub eps: f64,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output_activation: OutputActivation,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub beta_estimator: BetaEstimator,
    pub beta_tol: f64,
    /// Evaluation uses `eval_batches · batch_size` generator draws.
    pub eval_batches: usize,
    /// Evaluation uses at most this many data rows (a fixed subsample beyond it).
    pub eval_max_rows: usize,
    /// Dense evaluation blocks above this many bytes are streamed instead.
    pub eval_memory_budget: u64,
    /// Sweeps start each point from the previous (larger-D) model.
    pub warm_start: bool,
    /// Parallel sweep points; only used when `warm_start` is off.
    pub jobs: usize,
}

impl Default for NerdConfig {
    fn default() -> Self {
        NerdConfig {
            d_target: 1.0,
            batch_size: 512,
            steps: 5000,
            learning_rate: 1e-4,
            eps: 1e-10,
            latent_dim: 16,
            hidden: vec![256, 256],
            activation: Activation::LeakyRelu,
            output_activation: OutputActivation::Identity,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            beta_estimator: BetaEstimator::FullMatrix,
            beta_tol: DEFAULT_BETA_TOL,
            eval_batches: 8,
            eval_max_rows: 10_000,
            eval_memory_budget: 512 << 20,
            warm_start: true,
            jobs: 1,
        }
    }
}

impl NerdConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(msg));
        if !(self.d_target > 0.0 && self.d_target.is_finite()) {
            return fail(format!("D_target must be positive, got {}", self.d_target));
        }
        if self.batch_size < 2 {
            return fail(format!("batch size must be >= 2, got {}", self.batch_size));
        }
        if self.steps < 1 {
            return fail("steps must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return fail(format!("eps must be >= 0, got {}", self.eps));
        }
        if self.latent_dim == 0 {
            return fail("latent dimension must be positive".into());
        }
        if !(self.beta_tol > 0.0) {
            return fail(format!("beta tolerance must be positive, got {}", self.beta_tol));
        }
        if self.eval_batches == 0 || self.eval_max_rows == 0 {
            return fail("evaluation needs at least one batch and one row".into());
        }
        Ok(())
    }

    pub fn architecture(&self, output_dim: usize) -> Architecture {
        Architecture {
            input_dim: self.latent_dim,
            output_dim,
            hidden: self.hidden.clone(),
            activation: self.activation,
            output_activation: self.output_activation,
        }
    }

    /// Number of generator draws used by [`evaluate`].
    pub fn eval_draws(&self) -> usize {
        self.eval_batches * self.batch_size
    }
}

#[derive(Clone, Debug)]
pub struct NerdResult {
    pub model: GeneratorModel,
    pub solution: DualSolution,
    /// Training loss per step, nats.
    pub loss_history: Vec<f64>,
    /// Batch rate estimate `β*·D + loss` per step, nats.
    pub batch_rate_history: Vec<f64>,
    pub saturated_steps: usize,
    pub n_train: usize,
    pub d_target: f64,
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Seed for the `index`-th point of a sweep.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    let mut rng = stream(seed, 1000 + index as u64);
    rng.next_u64()
}

pub fn train(data: &SampleMatrix, cfg: &NerdConfig) -> Result<NerdResult> {
    cfg.validate()?;
    let model = GeneratorModel::new_random(cfg.architecture(data.cols()), &mut stream(cfg.seed, INIT_STREAM))?;
    train_from(data, cfg, model)
}

/// Training starting from an existing model (warm start).
pub fn train_from(data: &SampleMatrix, cfg: &NerdConfig, mut model: GeneratorModel) -> Result<NerdResult> {
    cfg.validate()?;
    let b = cfg.batch_size;
    let n = data.rows();
    if n < b {
        return Err(Error::invalid(format!(
            "need at least batch_size = {b} samples, got {n}"
        )));
    }
    if model.output_dim() != data.cols() || model.input_dim() != cfg.latent_dim {
        return Err(Error::shape(
            "nerd_train",
            format!(
                "model maps {} -> {}, config/data need {} -> {}",
                model.input_dim(),
                model.output_dim(),
                cfg.latent_dim,
                data.cols()
            ),
        ));
    }
    let m = data.cols();
    let mut rng = stream(cfg.seed, BATCH_STREAM);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate)?;
    let mut loss_history = Vec::with_capacity(cfg.steps);
    let mut batch_rate_history = Vec::with_capacity(cfg.steps);
    let mut saturated_steps = 0;
    let mut x_batch = vec![0.0; b * m];
    let mut prev_beta = None;

    for step in 0..cfg.steps {
        for (slot, i) in index::sample(&mut rng, n, b).into_iter().enumerate() {
            x_batch[slot * m..(slot + 1) * m].copy_from_slice(data.row(i));
        }
        let z = model.sample_latent(b, &mut rng);

        let mut tape = Tape::new();
        let x = tape.leaf(crate::autodiff::Tensor::matrix(b, m, x_batch.clone())?);
        let zl = tape.leaf(z);
        let (y, params) = model.record(&mut tape, zl)?;
        let d = tape.pairwise_sq_dist(x, y)?;

        let block = DistortionMatrix::new(b, b, tape.value(d).data().to_vec())?;
        let sol = solve_beta_with(cfg.beta_estimator, cfg.d_target, &block, cfg.beta_tol, None, prev_beta)?;
        if sol.status == BetaStatus::Saturated {
            saturated_steps += 1;
        }
        let beta = sol.beta;
        prev_beta = Some(beta);

        let scaled = tape.scale(d, beta);
        let lme = tape.row_log_mean_exp(scaled, cfg.eps)?;
        let mean = tape.mean(lme);
        let loss = tape.scale(mean, -1.0);
        let loss_value = tape.value(loss).data()[0];
        if !loss_value.is_finite() {
            return Err(Error::Divergence { step, loss: loss_value });
        }
        loss_history.push(loss_value);
        batch_rate_history.push(beta * cfg.d_target + loss_value);

        let grads = tape.backward(loss)?;
        let grads: Vec<_> = params
            .iter()
            .zip(model.parameters())
            .map(|(&id, p)| grads.get_or_zeros(id, p))
            .collect();
        opt.step_model(&mut model, &grads)?;
    }
    if saturated_steps > 0 {
        log::warn!(
            "beta hit its lower bracket on {saturated_steps} of {} steps at D = {}",
            cfg.steps,
            cfg.d_target
        );
    }

    let solution = evaluate(&model, data, cfg.d_target, cfg)?;
    Ok(NerdResult {
        model,
        solution,
        loss_history,
        batch_rate_history,
        saturated_steps,
        n_train: n,
        d_target: cfg.d_target,
    })
}

/// Re-solves the slope on `eval_batches · batch_size` fresh generator draws
/// against the data (or a fixed subsample of `eval_max_rows` rows) and
/// reports the dual rate there. Deterministic in `cfg.seed`.
pub fn evaluate(model: &GeneratorModel, data: &SampleMatrix, d_target: f64, cfg: &NerdConfig) -> Result<DualSolution> {
    if data.is_empty() {
        return Err(Error::invalid("evaluation needs data"));
    }
    if !(d_target > 0.0) {
        return Err(Error::invalid(format!("D_target must be positive, got {d_target}")));
    }
    let mut rng = stream(cfg.seed, EVAL_STREAM);
    let x = if data.rows() > cfg.eval_max_rows {
        let mut idx = index::sample(&mut rng, data.rows(), cfg.eval_max_rows).into_vec();
        idx.sort_unstable();
        data.select_rows(&idx)
    } else {
        data.clone()
    };
    let y = model.sample(cfg.eval_draws(), &mut rng)?;

    let bytes = (x.rows() as u64) * (y.rows() as u64) * 8;
    if bytes <= cfg.eval_memory_budget {
        let dense = crate::dual::distortion_matrix(&x, &y, DistortionKernel::SquaredError)?;
        solve_on(&dense, d_target, cfg)
    } else {
        let streamed = PairwiseDistortions::new(&x, &y, DistortionKernel::SquaredError)?;
        solve_on(&streamed, d_target, cfg)
    }
}

fn solve_on<S: DistortionSource + ?Sized>(dist: &S, d_target: f64, cfg: &NerdConfig) -> Result<DualSolution> {
    let sol = solve_beta(d_target, dist, cfg.beta_tol, None)?;
    if sol.status == BetaStatus::Saturated {
        log::warn!(
            "evaluation slope saturated at {}: distortion {} above target {d_target}",
            sol.beta,
            sol.distortion
        );
    }
    let rate_bits = if sol.beta == 0.0 {
        0.0
    } else {
        dual_rate(sol.beta, d_target, dist, cfg.eps)?
    };
    Ok(DualSolution {
        beta: sol.beta,
        rate_bits,
        distortion: sol.distortion,
    })
}

/// One trained point of a sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub d_target: f64,
    pub seed: u64,
    pub result: NerdResult,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub curve: RdCurve,
    /// Successful points, one per distinct D, largest D first.
    pub points: Vec<SweepPoint>,
    pub monotone: bool,
}

pub fn sweep(data: &SampleMatrix, d_list: &[f64], cfg: &NerdConfig) -> Result<RdCurve> {
    Ok(sweep_detailed(data, d_list, cfg, "")?.curve)
}

/// Trains one model per distinct D (largest first). Duplicate D values share
/// a result. Failed points are recorded in the curve instead of aborting.
/// Distortions are reported in the data's original units.
pub fn sweep_detailed(
    data: &SampleMatrix,
    d_list: &[f64],
    cfg: &NerdConfig,
    params_digest: &str,
) -> Result<SweepOutcome> {
    if d_list.is_empty() {
        return Err(Error::invalid("sweep needs at least one distortion target"));
    }
    if let Some(d) = d_list.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::invalid(format!("distortion targets must be positive, got {d}")));
    }
    let mut targets: Vec<f64> = d_list.to_vec();
    targets.sort_by(|a, b| b.total_cmp(a));
    targets.dedup();

    let run = |i: usize, d: f64, warm: Option<GeneratorModel>| -> Result<SweepPoint> {
        let seed = derive_seed(cfg.seed, i);
        let point_cfg = NerdConfig {
            d_target: d,
            seed,
            ..cfg.clone()
        };
        let result = match warm {
            Some(model) => train_from(data, &point_cfg, model)?,
            None => train(data, &point_cfg)?,
        };
        Ok(SweepPoint {
            d_target: d,
            seed,
            result,
        })
    };

    let outcomes: Vec<(f64, Result<SweepPoint>)> = if cfg.warm_start || cfg.jobs <= 1 {
        let mut out = Vec::with_capacity(targets.len());
        let mut warm: Option<GeneratorModel> = None;
        for (i, &d) in targets.iter().enumerate() {
            let r = run(i, d, if cfg.warm_start { warm.clone() } else { None });
            if let Ok(p) = &r {
                warm = Some(p.result.model.clone());
            }
            out.push((d, r));
        }
        out
    } else {
        let jobs = cfg.jobs.min(targets.len());
        let mut slots: Vec<Option<Result<SweepPoint>>> = (0..targets.len()).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..jobs)
                .map(|j| {
                    let targets = &targets;
                    let run = &run;
                    s.spawn(move || {
                        (j..targets.len())
                            .step_by(jobs)
                            .map(|i| (i, run(i, targets[i], None)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("sweep worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        targets
            .iter()
            .zip(slots)
            .map(|(&d, r)| (d, r.expect("every point ran")))
            .collect()
    };

    let scale = data.scale();
    let mut curve = RdCurve::default();
    let mut points = Vec::new();
    for (d, r) in outcomes {
        match r {
            Ok(p) => {
                for _ in d_list.iter().filter(|&&x| x == d) {
                    curve.points.push(RdPoint {
                        distortion: scale.distortion_to_original(d),
                        rate_bits: p.result.solution.rate_bits,
                        provenance: Provenance::Nerd,
                        n: data.rows(),
                        params_digest: params_digest.to_string(),
                    });
                }
                points.push(p);
            }
            Err(e) => {
                log::warn!("sweep point D = {d} failed: {e}");
                curve.failures.push(FailedPoint {
                    distortion: scale.distortion_to_original(d),
                    error: e.to_string(),
                });
            }
        }
    }
    curve.sort();
    let monotone = curve.is_nonincreasing(MONOTONE_SLACK_BITS);
    if !monotone {
        log::warn!("NERD sweep rates rise with distortion by more than {MONOTONE_SLACK_BITS} bits");
    }
    Ok(SweepOutcome {
        curve,
        points,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianSourceSpec;
    use crate::io::gen_gaussian;

    fn small_cfg() -> NerdConfig {
        NerdConfig {
            batch_size: 64,
            steps: 200,
            learning_rate: 1e-3,
            latent_dim: 2,
            hidden: vec![16],
            eval_batches: 8,
            ..NerdConfig::default()
        }
    }

    #[test]
    fn defaults_are_valid() {
        NerdConfig::default().validate().unwrap();
        let cfg = NerdConfig::default();
        assert_eq!(cfg.eval_draws(), 4096);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = [
            NerdConfig {
                batch_size: 1,
                ..NerdConfig::default()
            },
            NerdConfig {
                steps: 0,
                ..NerdConfig::default()
            },
            NerdConfig {
                learning_rate: 0.0,
                ..NerdConfig::default()
            },
            NerdConfig {
                eps: -1.0,
                ..NerdConfig::default()
            },
            NerdConfig {
                d_target: 0.0,
                ..NerdConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn needs_a_full_batch_of_data() {
        let data = SampleMatrix::new(10, 1, vec![0.5; 10]).unwrap();
        assert!(train(&data, &small_cfg()).is_err());
    }

    #[test]
    fn loss_history_has_one_entry_per_step() {
        let spec = GaussianSourceSpec::new(vec![1.0]).unwrap();
        let data = gen_gaussian(&spec, 256, 1).unwrap();
        let cfg = NerdConfig {
            steps: 17,
            d_target: 0.5,
            ..small_cfg()
        };
        let r = train(&data, &cfg).unwrap();
        assert_eq!(r.loss_history.len(), 17);
        assert!(r.solution.beta <= 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let spec = GaussianSourceSpec::new(vec![1.0, 0.5]).unwrap();
        let data = gen_gaussian(&spec, 300, 2).unwrap();
        let cfg = NerdConfig {
            steps: 30,
            d_target: 0.6,
            ..small_cfg()
        };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.solution, b.solution);
        assert_eq!(a.model, b.model);
        assert_eq!(
            evaluate(&a.model, &data, 0.6, &cfg).unwrap(),
            evaluate(&a.model, &data, 0.6, &cfg).unwrap()
        );
    }

    #[test]
    fn zero_generator_at_zero_rate_distortion() {
        let data =
            SampleMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0], vec![0.5, 0.5], vec![-0.5, -0.5]]).unwrap();
        let d_max = data.zero_rate_distortion();
        let cfg = small_cfg();
        let model = GeneratorModel::zeros(cfg.architecture(2)).unwrap();
        let sol = evaluate(&model, &data, d_max, &cfg).unwrap();
        assert_eq!(sol.rate_bits, 0.0);
        assert_eq!(sol.beta, 0.0);
    }

    #[test]
    fn constant_source_collapses() {
        let data = SampleMatrix::new(128, 2, [0.7, -0.3].repeat(128)).unwrap();
        let cfg = NerdConfig {
            steps: 400,
            d_target: 0.01,
            learning_rate: 5e-3,
            ..small_cfg()
        };
        let r = train(&data, &cfg).unwrap();
        assert!(r.solution.rate_bits < 0.05, "{}", r.solution.rate_bits);
        let mut rng = stream(9, 0);
        let y = r.model.sample(2000, &mut rng).unwrap();
        let mean = y.column_means();
        assert!((mean[0] - 0.7).abs() < 0.05 && (mean[1] + 0.3).abs() < 0.05, "{mean:?}");
    }

    #[test]
    fn sweep_shares_duplicate_targets() {
        let spec = GaussianSourceSpec::new(vec![1.0]).unwrap();
        let data = gen_gaussian(&spec, 256, 3).unwrap();
        let cfg = NerdConfig {
            steps: 20,
            ..small_cfg()
        };
        let curve = sweep(&data, &[0.5, 0.5, 0.8], &cfg).unwrap();
        assert_eq!(curve.len(), 3);
        assert_eq!(curve.points[0].rate_bits, curve.points[1].rate_bits);
        assert!(curve.failures.is_empty());
    }

    #[test]
    fn parallel_sweep_matches_sequential() {
        let spec = GaussianSourceSpec::new(vec![1.0]).unwrap();
        let data = gen_gaussian(&spec, 256, 4).unwrap();
        let base = NerdConfig {
            steps: 15,
            warm_start: false,
            ..small_cfg()
        };
        let seq = sweep(
            &data,
            &[0.3, 0.6, 0.9],
            &NerdConfig {
                jobs: 1,
                ..base.clone()
            },
        )
        .unwrap();
        let par = sweep(&data, &[0.3, 0.6, 0.9], &NerdConfig { jobs: 3, ..base }).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn sweep_records_failures() {
        let data = SampleMatrix::new(10, 1, (0..10).map(|i| i as f64).collect()).unwrap();
        // batch larger than the data: every point fails but the sweep returns
        let curve = sweep(&data, &[1.0, 2.0], &small_cfg()).unwrap();
        assert!(curve.is_empty());
        assert_eq!(curve.failures.len(), 2);
    }
}
