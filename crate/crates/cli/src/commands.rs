use std::path::Path;

use nerd_core::blahut_arimoto::{ba_plugin_at_distortions, ba_plugin_sweep_with, PluginOptions};
use nerd_core::curve::RdCurve;
use nerd_core::dual::BetaEstimator;
use nerd_core::gaussian::{oracle_curve, waterfill, ChannelForm, GaussianSourceSpec};
use nerd_core::io::{
    decode_checkpoint, encode_checkpoint, encode_vectors, gen_gaussian, parse_samples, sample_digest,
    CheckpointMetadata, VectorDtype,
};
use nerd_core::nerd::{sweep_detailed, NerdConfig, NerdResult};
use nerd_core::rcc::{
    decode, encode, rate_distortion_eval, sample_seeds, CompressedMessage, GaussianMarginal, GeneratorMarginal,
    Marginal, RccConfig, Scheme,
};
use nerd_core::{digest, io::curve_to_csv, SampleMatrix, Scale};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::output::{manifest_beside, read_config, typed_config, Run};
use crate::{
    BaArgs, ChannelArg, CodecArgs, Command, DtypeArg, EstimatorArg, GenArgs, MarginalArgs, NerdArgs, NerdCommand,
    OracleArgs, Preprocess, RccCommand, RccDecodeArgs, RccEncodeArgs, RccEvalArgs, SchemeArg,
};

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Oracle(a) => oracle(a),
        Command::Ba(a) => ba(a),
        Command::Nerd(NerdCommand::Train(a)) => nerd(a, false),
        Command::Nerd(NerdCommand::Sweep(a)) => nerd(a, true),
        Command::Rcc(RccCommand::Encode(a)) => rcc_encode(a),
        Command::Rcc(RccCommand::Decode(a)) => rcc_decode(a),
        Command::Rcc(RccCommand::Eval(a)) => rcc_eval(a),
        Command::GenGaussian(a) => gen(a),
    }
}

/// Preset names or a JSON file path.
fn load_spec(arg: &str, run: &mut Run) -> CliResult<GaussianSourceSpec> {
    if let Some((name, m)) = arg.split_once(':') {
        let preset = match name {
            "exp-decay" => Some(GaussianSourceSpec::exp_decay as fn(usize) -> _),
            "exp-square-decay" => Some(GaussianSourceSpec::exp_square_decay as fn(usize) -> _),
            _ => None,
        };
        if let Some(build) = preset {
            let m: usize = m
                .parse()
                .map_err(|_| CliError::config(format!("preset dimension \"{m}\" is not a positive integer")))?;
            return Ok(build(m)?);
        }
    }
    let bytes = run.input(Path::new(arg))?;
    let spec: GaussianSourceSpec =
        serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("Gaussian spec {arg}: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

fn load_data(path: &Path, run: &mut Run) -> CliResult<SampleMatrix> {
    let bytes = run.input(path)?;
    parse_samples(&bytes).map_err(|e| CliError::from(e).context(path.display()))
}

fn check_targets(d: &[f64]) -> CliResult<()> {
    if d.is_empty() {
        return Err(CliError::config(
            "at least one target distortion is required (--d-targets)",
        ));
    }
    if let Some(bad) = d.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(CliError::config(format!(
            "target distortions must be positive, got {bad}"
        )));
    }
    Ok(())
}

fn write_curve(run: &mut Run, path: &Path, curve: &RdCurve) -> CliResult<()> {
    run.output(path, &curve_to_csv(curve)?)
}

fn oracle(a: OracleArgs) -> CliResult<()> {
    let mut run = Run::new("oracle");
    check_targets(&a.d_targets)?;
    let spec = load_spec(&a.spec, &mut run)?;
    run.config(&json!({ "spec": spec, "d_targets": a.d_targets }));
    let curve = oracle_curve(&spec, &a.d_targets);
    write_curve(&mut run, &a.out, &curve)?;
    run.finish(&manifest_beside(&a.out))
}

fn ba(a: BaArgs) -> CliResult<()> {
    let mut run = Run::new("ba");
    let data = load_data(&a.data, &mut run)?;
    let opts = PluginOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        memory_budget: a.memory_budget,
    };
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(CliError::config("tolerance and iteration limit must be positive"));
    }
    let curve = if !a.d_targets.is_empty() {
        check_targets(&a.d_targets)?;
        ba_plugin_at_distortions(&data, &a.d_targets, &opts)?
    } else {
        if a.betas.is_empty() {
            return Err(CliError::config("give --betas or --d-targets"));
        }
        if let Some(b) = a.betas.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(CliError::config(format!("BA slopes must be finite and >= 0, got {b}")));
        }
        ba_plugin_sweep_with(&data, &a.betas, &opts)?
    };
    for f in &curve.failures {
        log::warn!("{}", f.error);
    }
    run.config(&json!({ "options": opts, "betas": a.betas, "d_targets": a.d_targets }));
    if curve.is_empty() {
        return Err(CliError::numeric("no plug-in point succeeded"));
    }
    write_curve(&mut run, &a.out, &curve)?;
    run.finish(&manifest_beside(&a.out))
}

/// Resolves file config and flag overrides; returns the overridden names.
fn nerd_config(a: &NerdArgs) -> CliResult<(NerdConfig, Vec<String>)> {
    let mut cfg: NerdConfig = match &a.config {
        Some(p) => typed_config(read_config(p)?, &p.display().to_string())?,
        None => NerdConfig::default(),
    };
    let mut set = Vec::new();
    macro_rules! apply {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                cfg.$field = v;
                set.push(stringify!($field).to_string());
            }
        };
    }
    apply!(seed, a.seed);
    apply!(eps, a.eps);
    apply!(jobs, a.jobs);
    apply!(steps, a.steps);
    apply!(batch_size, a.batch_size);
    apply!(learning_rate, a.learning_rate);
    apply!(
        beta_estimator,
        a.beta_estimator.map(|e| match e {
            EstimatorArg::Full => BetaEstimator::FullMatrix,
            EstimatorArg::Paper => BetaEstimator::PaperDiagonal,
        })
    );
    apply!(warm_start, a.no_warm_start.then_some(false));
    // validated per point once D is known
    Ok((cfg, set))
}

/// Per-point result record, distortions in the data's original units.
#[derive(Serialize)]
struct NerdRecord {
    #[serde(rename = "D_target")]
    d_target: f64,
    /// Nats per original distortion unit.
    beta: f64,
    rate_bits: f64,
    distortion: f64,
    n: usize,
    seed: u64,
    config_digest: String,
    checkpoint: String,
}

fn nerd(a: NerdArgs, is_sweep: bool) -> CliResult<()> {
    let mut run = Run::new(if is_sweep { "nerd sweep" } else { "nerd train" });
    let (cfg, overrides) = nerd_config(&a)?;
    check_targets(&a.d_targets)?;
    if !is_sweep && a.d_targets.len() != 1 {
        return Err(CliError::config("`nerd train` takes exactly one target distortion"));
    }
    let loaded = load_data(&a.data, &mut run)?;
    let data = match a.preprocess {
        Preprocess::None => loaded,
        Preprocess::UnitRange => loaded.normalized_unit_range(),
    };
    let scale = data.scale();
    let to_stored = scale.factor * scale.factor;
    let stored_targets: Vec<f64> = a.d_targets.iter().map(|d| d / to_stored).collect();
    NerdConfig {
        d_target: stored_targets[0],
        ..cfg.clone()
    }
    .validate()?;
    if data.rows() < cfg.batch_size {
        return Err(CliError::config(format!(
            "batch size {} exceeds the {} samples in {}",
            cfg.batch_size,
            data.rows(),
            a.data.display()
        )));
    }

    let config_json = serde_json::to_value(&cfg).map_err(|e| CliError::config(e.to_string()))?;
    let config_digest = digest::short_hex(&digest::sha256(config_json.to_string().as_bytes()));
    run.config(&json!({ "nerd": config_json, "preprocess": format!("{:?}", a.preprocess), "d_targets": a.d_targets }));
    run.overrides(overrides);
    run.seed("seed", cfg.seed);

    let outcome = sweep_detailed(&data, &stored_targets, &cfg, &config_digest)?;
    if outcome.points.is_empty() {
        let why: Vec<&str> = outcome.curve.failures.iter().map(|f| f.error.as_str()).collect();
        return Err(CliError::numeric(format!("training failed: {}", why.join("; "))));
    }
    let data_digest = sample_digest(&data);
    let mut records = Vec::new();
    for (i, p) in outcome.points.iter().enumerate() {
        let name = if is_sweep {
            format!("model-{i:03}.nerd")
        } else {
            "model.nerd".to_string()
        };
        let path = a.out.join(&name);
        run.seed(&format!("point-{i:03}"), p.seed);
        run.output(&path, &checkpoint_bytes(&p.result, p.seed, &data_digest, scale)?)?;
        records.push(NerdRecord {
            d_target: scale.distortion_to_original(p.d_target),
            beta: p.result.solution.beta / to_stored,
            rate_bits: p.result.solution.rate_bits,
            distortion: scale.distortion_to_original(p.result.solution.distortion),
            n: data.rows(),
            seed: p.seed,
            config_digest: config_digest.clone(),
            checkpoint: name,
        });
    }
    if is_sweep {
        write_curve(&mut run, &a.out.join("curve.csv"), &outcome.curve)?;
        run.output_json(&a.out.join("results.json"), &records)?;
    } else {
        run.output_json(&a.out.join("result.json"), &records[0])?;
    }
    run.finish(&a.out.join("manifest.json"))
}

fn checkpoint_bytes(result: &NerdResult, seed: u64, data_digest: &str, scale: Scale) -> CliResult<Vec<u8>> {
    let meta = CheckpointMetadata {
        beta: result.solution.beta,
        d_target: result.d_target,
        rate_bits: result.solution.rate_bits,
        train_seed: seed,
        data_digest: data_digest.to_string(),
        scale,
    };
    Ok(encode_checkpoint(&result.model, &meta)?)
}

/// A candidate distribution with its default slope and rate parameter, all in
/// the units the marginal works in.
struct Source {
    marginal: Box<dyn Marginal>,
    beta: f64,
    rate_bits: f64,
    scale: Scale,
    description: Value,
}

fn load_marginal(a: &MarginalArgs, run: &mut Run) -> CliResult<Source> {
    if let Some(path) = &a.checkpoint {
        let bytes = run.input(path)?;
        let ck = decode_checkpoint(&bytes).map_err(|e| CliError::from(e).context(path.display()))?;
        let m = ck.metadata;
        return Ok(Source {
            description: json!({ "checkpoint": path.display().to_string(), "metadata": m }),
            marginal: Box::new(GeneratorMarginal::new(ck.model)),
            beta: m.beta,
            rate_bits: m.rate_bits,
            scale: m.scale,
        });
    }
    let spec_arg = a
        .spec
        .as_deref()
        .ok_or_else(|| CliError::config("give --checkpoint or --spec"))?;
    let d = a.d_target.ok_or_else(|| CliError::config("--spec needs --d-target"))?;
    let spec = load_spec(spec_arg, run)?;
    let form = match a.channel {
        ChannelArg::Optimal => ChannelForm::Optimal,
        ChannelArg::Forward => ChannelForm::Forward,
    };
    let marginal = GaussianMarginal::new(&spec, d, form)?;
    let solution = waterfill(&spec, d)?;
    Ok(Source {
        description: json!({ "spec": spec, "D_target": d, "channel": form }),
        beta: marginal.channel().slope_nats(),
        rate_bits: solution.rate_bits,
        marginal: Box::new(marginal),
        scale: Scale::IDENTITY,
    })
}

fn codec_config(c: &CodecArgs, src: &Source) -> CliResult<RccConfig> {
    let scheme = match c.scheme {
        SchemeArg::Pfr => Scheme::Pfr,
        SchemeArg::Orc => Scheme::Orc,
    };
    let beta = c.beta.unwrap_or(src.beta);
    if beta == 0.0 {
        return Err(CliError::config(
            "the marginal sits at zero rate (slope 0); pass --beta to compress anyway",
        ));
    }
    Ok(RccConfig::new(
        scheme,
        c.num_candidates,
        beta,
        c.rate_param.unwrap_or(src.rate_bits.max(0.0)),
        c.seed,
    )?)
}

fn check_scale(data: &SampleMatrix, src: &Source) {
    if data.scale() != src.scale {
        log::warn!(
            "sample file scale {:?} differs from the model's {:?}; values are used as stored",
            data.scale(),
            src.scale
        );
    }
}

fn rcc_encode(a: RccEncodeArgs) -> CliResult<()> {
    let mut run = Run::new("rcc encode");
    let src = load_marginal(&a.marginal, &mut run)?;
    let cfg = codec_config(&a.codec, &src)?;
    let data = load_data(&a.data, &mut run)?;
    check_scale(&data, &src);
    run.config(&json!({ "marginal": src.description, "codec": cfg }));
    run.seed("master", cfg.seed);
    let mut bytes = Vec::new();
    for (row, seed) in data.iter_rows().zip(sample_seeds(cfg.seed, data.rows())) {
        let enc = encode(row, &RccConfig { seed, ..cfg }, src.marginal.as_ref())?;
        bytes.extend(enc.message.to_bytes());
    }
    run.output(&a.out, &bytes)?;
    run.finish(&manifest_beside(&a.out))
}

fn rcc_decode(a: RccDecodeArgs) -> CliResult<()> {
    let mut run = Run::new("rcc decode");
    let src = load_marginal(&a.marginal, &mut run)?;
    let bytes = run.input(&a.input)?;
    let messages =
        CompressedMessage::parse_concatenated(&bytes).map_err(|e| CliError::from(e).context(a.input.display()))?;
    let m = src.marginal.dim();
    let mut values = Vec::with_capacity(messages.len() * m);
    for msg in &messages {
        values.extend(decode(msg, src.marginal.as_ref())?);
    }
    let recon = SampleMatrix::new(messages.len(), m, values)?.with_scale(src.scale);
    run.config(&json!({ "marginal": src.description, "messages": messages.len() }));
    run.output(&a.out, &encode_vectors(&recon, VectorDtype::F64))?;
    run.finish(&manifest_beside(&a.out))
}

fn rcc_eval(a: RccEvalArgs) -> CliResult<()> {
    let mut run = Run::new("rcc eval");
    let src = load_marginal(&a.marginal, &mut run)?;
    let cfg = codec_config(&a.codec, &src)?;
    let data = load_data(&a.data, &mut run)?;
    check_scale(&data, &src);
    if a.jobs == 0 {
        return Err(CliError::config("--jobs must be at least 1"));
    }
    run.config(&json!({ "marginal": src.description, "codec": cfg, "jobs": a.jobs }));
    run.seed("master", cfg.seed);
    let eval = rate_distortion_eval(&data, &cfg, src.marginal.as_ref(), a.jobs)?;
    let report = json!({
        "scheme": cfg.scheme.to_string(),
        "num_candidates": cfg.num_candidates,
        "beta": cfg.beta,
        "rate_param": cfg.rate_param,
        "samples": eval.samples,
        "mean_rate_bits": eval.mean_rate_bits,
        "mean_distortion": eval.mean_distortion,
        "mean_distortion_original_units": src.scale.distortion_to_original(eval.mean_distortion),
        "mean_message_bits": eval.mean_message_bits,
        "mean_log2_index": eval.mean_log2_index,
    });
    run.output_json(&a.out, &report)?;
    run.finish(&manifest_beside(&a.out))
}

fn gen(a: GenArgs) -> CliResult<()> {
    let mut run = Run::new("gen-gaussian");
    let spec = load_spec(&a.spec, &mut run)?;
    if a.n == 0 {
        return Err(CliError::config("--n must be at least 1"));
    }
    let data = gen_gaussian(&spec, a.n, a.seed)?;
    let dtype = match a.dtype {
        DtypeArg::F32 => VectorDtype::F32,
        DtypeArg::F64 => VectorDtype::F64,
    };
    run.config(&json!({ "spec": spec, "n": a.n, "dtype": format!("{dtype:?}") }));
    run.seed("seed", a.seed);
    run.output(&a.out, &encode_vectors(&data, dtype))?;
    run.finish(&manifest_beside(&a.out))
}
