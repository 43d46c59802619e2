//! End-to-end acceptance run. Each criterion prints one PASS/FAIL line; the
//! test fails if any criterion does.

use std::time::{Duration, Instant};

use nerd_core::autodiff::{Architecture, GeneratorModel, Tape, Tensor};
use nerd_core::blahut_arimoto::{ba_plugin_sweep, ba_solve_for_distortion, DiscreteRdProblem};
use nerd_core::dual::{DistortionKernel, DistortionMatrix};
use nerd_core::gaussian::{waterfill, ChannelForm, GaussianSourceSpec, GaussianTestChannel};
use nerd_core::io::gen_gaussian;
use nerd_core::nerd::{sweep, train, NerdConfig};
use nerd_core::rcc::{
    decode, encode, rate_distortion_eval, regenerate_candidates, regenerate_weights, select_index, CompressedMessage,
    GaussianMarginal, GeneratorMarginal, Marginal, RccConfig, Scheme,
};
use nerd_core::zipf_huffman::ZipfCodebook;
use nerd_core::{Error, SampleMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome, failed: &mut Vec<usize>) {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            o.pass = false;
            o.detail = format!("{}; over the {:?} budget", o.detail, limit);
        }
    }
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("{tag} {id:>2} {name}: {} ({:.1?})", o.detail, elapsed);
    if !o.pass {
        failed.push(id);
    }
}

fn scalar_spec() -> GaussianSourceSpec {
    GaussianSourceSpec::new(vec![1.0]).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn waterfill_exactness() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let mut worst_residual: f64 = 0.0;
    let mut worst_rate: f64 = 0.0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=20);
        let vars: Vec<f64> = (0..m).map(|_| rng.random_range(1e-3..10.0)).collect();
        let total: f64 = vars.iter().sum();
        let d = rng.random_range(1e-3..1.2) * total;
        let spec = GaussianSourceSpec::new(vars.clone()).unwrap();
        let sol = waterfill(&spec, d).unwrap();
        let allocated: f64 = vars.iter().map(|&s| s.min(sol.lambda)).sum();
        let residual = if d >= total {
            0.0
        } else {
            (allocated - d).abs() / d.max(1.0)
        };
        let rate: f64 = vars.iter().map(|&s| 0.5 * (s / s.min(sol.lambda)).log2()).sum();
        worst_residual = worst_residual.max(residual);
        worst_rate = worst_rate.max((rate - sol.rate_bits).abs());
    }
    let hand = waterfill(&GaussianSourceSpec::new(vec![1.0, 4.0]).unwrap(), 2.0).unwrap();
    let pass = worst_residual < 1e-10 && worst_rate < 1e-10 && (hand.rate_bits - 1.0).abs() < 1e-12;
    outcome(
        pass,
        format!(
            "max residual {worst_residual:.1e}, max rate mismatch {worst_rate:.1e}, sigma2=(1,4) D=2 -> {} bits",
            hand.rate_bits
        ),
    )
}

fn h2(p: f64) -> f64 {
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

fn ba_bernoulli() -> Outcome {
    let dist = DistortionMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let problem = DiscreteRdProblem::new(vec![0.5, 0.5], dist, 0.0).unwrap();
    let mut worst: f64 = 0.0;
    for d in [0.05, 0.1, 0.2, 0.3] {
        let sol = ba_solve_for_distortion(&problem, d, 1e-12, 100_000).unwrap();
        worst = worst.max((sol.rate_bits - (1.0 - h2(d))).abs());
    }
    outcome(worst < 1e-3, format!("max |R - (1 - h2(D))| = {worst:.2e} bits"))
}

fn plugin_ceiling() -> Outcome {
    let spec = GaussianSourceSpec::new(vec![1.0; 4]).unwrap();
    let data = gen_gaussian(&spec, 256, 3).unwrap();
    let curve = ba_plugin_sweep(&data, &[0.0, 10.0, 100.0, 1e3, 1e4]).unwrap();
    let low = &curve.points[0];
    let pass = curve.failures.is_empty() && (low.rate_bits - 8.0).abs() <= 0.05 && low.distortion < 1e-3;
    outcome(
        pass,
        format!("lowest distortion {:.1e} at {:.4} bits", low.distortion, low.rate_bits),
    )
}

fn nerd_accuracy() -> Outcome {
    let spec = GaussianSourceSpec::exp_decay(5).unwrap();
    let data = gen_gaussian(&spec, 10_000, 1).unwrap();
    let total = spec.total_variance();
    let targets: Vec<f64> = [0.75, 0.6, 0.5, 0.42, 0.35].iter().map(|f| f * total).collect();
    let cfg = NerdConfig {
        batch_size: 256,
        steps: 3000,
        learning_rate: 1e-3,
        latent_dim: 5,
        hidden: vec![64, 64],
        seed: 5,
        ..NerdConfig::default()
    };
    let curve = sweep(&data, &targets, &cfg).unwrap();
    if !curve.failures.is_empty() || curve.len() != targets.len() {
        return outcome(false, format!("sweep failures: {:?}", curve.failures));
    }
    let mut errs = Vec::new();
    let mut in_range = true;
    for p in &curve.points {
        let oracle = waterfill(&spec, p.distortion).unwrap().rate_bits;
        in_range &= (0.5..=4.0).contains(&oracle);
        errs.push((p.rate_bits - oracle).abs());
    }
    let max = errs.iter().copied().fold(0.0, f64::max);
    let close = errs.iter().filter(|&&e| e <= 0.3).count();
    let pass = in_range && max <= 0.5 && 2 * close > errs.len();
    let listed: Vec<String> = errs.iter().map(|e| format!("{e:.3}")).collect();
    outcome(
        pass,
        format!("|error| bits [{}], {close}/5 within 0.3", listed.join(", ")),
    )
}

fn zero_rate() -> Outcome {
    let spec = GaussianSourceSpec::new(vec![1.0, 0.5]).unwrap();
    let shift = [3.0, -2.0];
    let base = gen_gaussian(&spec, 5000, 9).unwrap();
    let shifted: Vec<f64> = base
        .iter_rows()
        .flat_map(|r| r.iter().zip(shift).map(|(v, s)| v + s).collect::<Vec<_>>())
        .collect();
    let data = SampleMatrix::new(base.rows(), 2, shifted).unwrap();
    let d_max = data.zero_rate_distortion();
    let cfg = NerdConfig {
        d_target: d_max,
        batch_size: 256,
        steps: 2000,
        learning_rate: 1e-3,
        latent_dim: 2,
        hidden: vec![32, 32],
        seed: 2,
        ..NerdConfig::default()
    };
    let result = train(&data, &cfg).unwrap();
    let y = result.model.sample(10_000, &mut ChaCha20Rng::seed_from_u64(4)).unwrap();
    let (gm, dm) = (y.column_means(), data.column_means());
    let diff = gm.iter().zip(&dm).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = dm.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rel = diff / norm;
    let rate = result.solution.rate_bits;
    outcome(
        rate <= 0.05 && rel <= 0.02,
        format!("rate {rate:.4} bits, generator mean relative error {:.2}%", 100.0 * rel),
    )
}

fn consistency() -> Outcome {
    let spec = scalar_spec();
    let mut medians = Vec::new();
    for n in [100, 1000, 10_000] {
        let errs: Vec<f64> = (0..5u64)
            .map(|s| {
                let data = gen_gaussian(&spec, n, 100 + s).unwrap();
                let cfg = NerdConfig {
                    d_target: 0.25,
                    batch_size: 256.min(n),
                    steps: 2000,
                    learning_rate: 1e-3,
                    latent_dim: 2,
                    hidden: vec![32, 32],
                    seed: 200 + s,
                    ..NerdConfig::default()
                };
                (train(&data, &cfg).unwrap().solution.rate_bits - 1.0).abs()
            })
            .collect();
        medians.push(median(errs));
    }
    let pass = medians.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        pass,
        format!(
            "median |error| bits n=1e2 {:.3}, n=1e3 {:.3}, n=1e4 {:.3}",
            medians[0], medians[1], medians[2]
        ),
    )
}

fn rcc_setting(scheme: Scheme) -> (SampleMatrix, RccConfig, GaussianMarginal) {
    let spec = scalar_spec();
    let test = gen_gaussian(&spec, 1000, 21).unwrap();
    let cfg = RccConfig::new(scheme, 1 << 12, -2.0, 1.0, 77).unwrap();
    let marginal = GaussianMarginal::new(&spec, 0.25, ChannelForm::Optimal).unwrap();
    (test, cfg, marginal)
}

fn rcc_rate() -> Outcome {
    let (test, cfg, marginal) = rcc_setting(Scheme::Orc);
    let eval = rate_distortion_eval(&test, &cfg, &marginal, 1).unwrap();
    outcome(
        eval.mean_rate_bits <= 7.0 && eval.mean_distortion <= 0.275,
        format!(
            "mean payload {:.3} bits, mean distortion {:.4}",
            eval.mean_rate_bits, eval.mean_distortion
        ),
    )
}

fn selection_equivalence() -> Outcome {
    let spec = scalar_spec();
    let channel = GaussianTestChannel::new(&spec, 0.25, ChannelForm::Optimal).unwrap();
    let marginal = GaussianMarginal::new(&spec, 0.25, ChannelForm::Optimal).unwrap();
    let beta = channel.slope_nats();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut agree = 0;
    for trial in 0..1000u64 {
        let x = spec.sample(&mut rng);
        let n = 1024;
        let ys = regenerate_candidates(trial, n, &marginal).unwrap();
        let w = regenerate_weights(trial, if trial % 2 == 0 { Scheme::Orc } else { Scheme::Pfr }, n);
        let k = select_index(&x, &ys, &w, beta, DistortionKernel::SquaredError).unwrap();
        let mut best = (0, f64::INFINITY);
        for (i, (y, wi)) in ys.iter().zip(&w).enumerate() {
            let score = wi.ln() - channel.log_density_ratio(&x, y);
            if score < best.1 {
                best = (i + 1, score);
            }
        }
        agree += usize::from(best.0 == k);
    }
    outcome(agree == 1000, format!("{agree}/1000 trials agree"))
}

fn codec_integrity() -> Outcome {
    let spec = GaussianSourceSpec::exp_square_decay(3).unwrap();
    let gaussian = GaussianMarginal::new(&spec, 0.5, ChannelForm::Optimal).unwrap();
    let arch = Architecture::mlp(2, vec![8], 3);
    let model = GeneratorModel::new_random(arch.clone(), &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
    let other = GeneratorModel::new_random(arch, &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
    let generator = GeneratorMarginal::new(model);
    let impostor = GeneratorMarginal::new(other);
    let mut rng = ChaCha20Rng::seed_from_u64(12);

    let mut exact = 0;
    let mut caught = 0;
    for i in 0..1000u64 {
        let marginal: &dyn Marginal = if i % 2 == 0 { &gaussian } else { &generator };
        let scheme = if i % 3 == 0 { Scheme::Pfr } else { Scheme::Orc };
        let cfg = RccConfig::new(scheme, 64 + (i as usize % 200), -1.5, 0.5 + (i % 5) as f64, i).unwrap();
        let x = spec.sample(&mut rng);
        let enc = encode(&x, &cfg, marginal).unwrap();
        let bytes = enc.message.to_bytes();
        let msg = CompressedMessage::from_bytes(&bytes).unwrap();
        let y = decode(&msg, marginal).unwrap();
        let same = msg == enc.message
            && y.len() == enc.reconstruction.len()
            && y.iter()
                .zip(&enc.reconstruction)
                .all(|(a, b)| a.to_bits() == b.to_bits());
        exact += usize::from(same);

        let mut tampered = msg.clone();
        tampered.digest[(i % 32) as usize] ^= 1 << (i % 8);
        let wrong: &dyn Marginal = if i % 2 == 0 { &generator } else { &impostor };
        let both = matches!(decode(&tampered, marginal), Err(Error::DigestMismatch(_)))
            && matches!(decode(&msg, wrong), Err(Error::DigestMismatch(_)));
        caught += usize::from(both);
    }

    let mut codes_ok = true;
    for n in [1, 2, 257, 1 << 12] {
        let book = ZipfCodebook::build(n, 1.0).unwrap();
        let words = book.codewords();
        codes_ok &= book.kraft_sum() <= 1.0 + 1e-12;
        for (a, wa) in words.iter().enumerate() {
            for (b, wb) in words.iter().enumerate() {
                if a != b && wa.len <= wb.len && (wb.bits >> (wb.len - wa.len)) == wa.bits {
                    codes_ok = false;
                }
            }
        }
    }
    outcome(
        exact == 1000 && caught == 1000 && codes_ok,
        format!("{exact}/1000 bit-exact, {caught}/1000 tamperings caught, prefix-free and Kraft: {codes_ok}"),
    )
}

fn gradients() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let depth = rng.random_range(1..=2);
        let hidden = (0..depth).map(|_| rng.random_range(2..=6)).collect();
        let arch = Architecture::mlp(rng.random_range(1..=3), hidden, rng.random_range(1..=3));
        let model = GeneratorModel::new_random(arch, &mut rng).unwrap();
        let x = Tensor::matrix(
            4,
            model.output_dim(),
            (0..4 * model.output_dim())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap();
        let z = model.sample_latent(5, &mut rng);
        let beta = -rng.random_range(0.2..3.0);
        let eval = |m: &GeneratorModel| {
            let mut tape = Tape::new();
            let xl = tape.leaf(x.clone());
            let zl = tape.leaf(z.clone());
            let (y, params) = m.record(&mut tape, zl).unwrap();
            let d = tape.pairwise_sq_dist(xl, y).unwrap();
            let s = tape.scale(d, beta);
            let l = tape.row_log_mean_exp(s, 1e-6).unwrap();
            let out = tape.mean(l);
            let g = tape.backward(out).unwrap();
            let grads: Vec<Tensor> = params
                .iter()
                .zip(m.parameters())
                .map(|(&id, p)| g.get_or_zeros(id, p))
                .collect();
            (tape.value(out).data()[0], grads)
        };
        let (_, analytic) = eval(&model);
        let (mut diff, mut norm) = (0.0, 0.0);
        for (p, g) in analytic.iter().enumerate() {
            for (i, &a) in g.data().iter().enumerate() {
                let mut plus = model.clone();
                plus.parameters_mut()[p].data_mut()[i] += 1e-5;
                let mut minus = model.clone();
                minus.parameters_mut()[p].data_mut()[i] -= 1e-5;
                let fd = (eval(&plus).0 - eval(&minus).0) / 2e-5;
                diff += (a - fd).powi(2);
                norm += a * a;
            }
        }
        worst = worst.max(f64::sqrt(diff) / f64::sqrt(norm).max(1e-8));
    }
    outcome(worst < 1e-4, format!("worst relative error {worst:.1e}"))
}

fn scheme_parity() -> Outcome {
    let (test, orc_cfg, marginal) = rcc_setting(Scheme::Orc);
    let pfr_cfg = RccConfig {
        scheme: Scheme::Pfr,
        ..orc_cfg
    };
    let orc = rate_distortion_eval(&test, &orc_cfg, &marginal, 1).unwrap();
    let pfr = rate_distortion_eval(&test, &pfr_cfg, &marginal, 1).unwrap();
    let gap = (orc.mean_rate_bits - pfr.mean_rate_bits).abs();
    outcome(
        gap <= 0.5,
        format!(
            "ORC {:.3} bits, PFR {:.3} bits, gap {gap:.3}",
            orc.mean_rate_bits, pfr.mean_rate_bits
        ),
    )
}

#[test]
fn acceptance() {
    let mut failed = Vec::new();
    let secs = Duration::from_secs;
    run(
        1,
        "gaussian oracle exactness",
        Some(secs(1)),
        waterfill_exactness,
        &mut failed,
    );
    run(2, "blahut-arimoto bernoulli", Some(secs(5)), ba_bernoulli, &mut failed);
    run(
        3,
        "plug-in log2(n) ceiling",
        Some(secs(30)),
        plugin_ceiling,
        &mut failed,
    );
    run(4, "nerd accuracy", Some(secs(20 * 60)), nerd_accuracy, &mut failed);
    run(5, "zero-rate behavior", Some(secs(5 * 60)), zero_rate, &mut failed);
    run(6, "consistency trend", None, consistency, &mut failed);
    run(7, "rcc rate guarantee", Some(secs(120)), rcc_rate, &mut failed);
    run(8, "selection equivalence", None, selection_equivalence, &mut failed);
    run(9, "codec integrity", None, codec_integrity, &mut failed);
    run(10, "gradient correctness", None, gradients, &mut failed);
    run(11, "pfr/orc parity", None, scheme_parity, &mut failed);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
