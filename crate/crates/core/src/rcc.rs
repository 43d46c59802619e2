//! One-shot lossy compression by reverse channel coding.
//!
//! Encoder and decoder share a seed. From it both draw the same candidates
//! `Y_1..Y_N` from the reproduction marginal and the same cumulative weights
//! `W_1 < … < W_N`. The encoder sends the index
//! `K = argmin_i d(x, Y_i) − β⁻¹ ln W_i` (`β < 0`), coded with a Zipf-Huffman
//! code. The decoder regenerates candidates up to `K`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::autodiff::GeneratorModel;
use crate::digest::sha256;
use crate::dual::DistortionKernel;
use crate::error::{Error, Result};
use crate::gaussian::{ChannelForm, GaussianSourceSpec, GaussianTestChannel};
use crate::matrix::SampleMatrix;
use crate::zipf_huffman::{BitReader, BitWriter, ZipfCodebook};

pub const MESSAGE_MAGIC: &[u8; 4] = b"NRCC";
pub const MESSAGE_VERSION: u8 = 1;
pub const DEFAULT_NUM_CANDIDATES: usize = 1 << 12;
/// Candidates are produced in fixed-size batches so both ends draw identically.
pub const CANDIDATE_BATCH: usize = 256;

const WEIGHT_STREAM: u64 = 0;
const CANDIDATE_STREAM: u64 = 1;
const HEADER_LEN: usize = 4 + 1 + 1 + 4 + 8 + 8 + 8 + 32 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Pfr,
    #[default]
    Orc,
}

impl Scheme {
    pub fn code(self) -> u8 {
        match self {
            Scheme::Pfr => 0,
            Scheme::Orc => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Scheme::Pfr),
            1 => Some(Scheme::Orc),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Pfr => "pfr",
            Scheme::Orc => "orc",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pfr" => Ok(Scheme::Pfr),
            "orc" => Ok(Scheme::Orc),
            other => Err(Error::invalid(format!("unknown scheme {other:?}, expected pfr or orc"))),
        }
    }
}

/// Cumulative weights from given exponential draws `X_1..X_N`.
/// PFR: `W_i = Σ_{j≤i} X_j`. ORC: `W_i = Σ_{j≤i} N/(N−j+1)·X_j`.
pub fn weights_from_exponentials(scheme: Scheme, xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mut acc = 0.0;
    xs.iter()
        .enumerate()
        .map(|(j, &x)| {
            acc += match scheme {
                Scheme::Pfr => x,
                Scheme::Orc => n / (n - j as f64) * x,
            };
            acc
        })
        .collect()
}

pub fn cumulative_weights<R: Rng + ?Sized>(scheme: Scheme, n: usize, rng: &mut R) -> Vec<f64> {
    let xs: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    weights_from_exponentials(scheme, &xs)
}

/// The quantity minimized over candidates: `d − β⁻¹ ln W`.
#[inline]
pub fn selection_score(distortion: f64, weight: f64, beta: f64) -> f64 {
    distortion - weight.ln() / beta
}

/// Smallest 1-based index minimizing `d(x, Y_i) − β⁻¹ ln W_i`.
pub fn select_index(
    x: &[f64],
    candidates: &[Vec<f64>],
    weights: &[f64],
    beta: f64,
    kernel: DistortionKernel,
) -> Result<usize> {
    if !(beta < 0.0) {
        return Err(Error::invalid(format!("selection needs beta < 0, got {beta}")));
    }
    if candidates.is_empty() || candidates.len() != weights.len() {
        return Err(Error::shape(
            "select_index",
            format!("{} candidates, {} weights", candidates.len(), weights.len()),
        ));
    }
    let mut best = ArgMin::default();
    for (i, (y, &w)) in candidates.iter().zip(weights).enumerate() {
        best.offer(i, selection_score(kernel.eval(x, y), w, beta));
    }
    Ok(best.index + 1)
}

#[derive(Clone, Copy, Debug)]
struct ArgMin {
    index: usize,
    score: f64,
}

impl Default for ArgMin {
    fn default() -> Self {
        ArgMin {
            index: 0,
            score: f64::INFINITY,
        }
    }
}

impl ArgMin {
    // strict comparison keeps the smallest index on ties
    fn offer(&mut self, index: usize, score: f64) {
        if score < self.score {
            self.index = index;
            self.score = score;
        }
    }
}

/// A reproduction distribution both ends can sample identically from a seeded stream.
pub trait Marginal: Sync {
    fn dim(&self) -> usize;

    /// Replaces `out` with the next `count` candidates, row-major.
    fn sample_batch(&self, rng: &mut ChaCha20Rng, count: usize, out: &mut Vec<f64>) -> Result<()>;

    /// Identifies the exact snapshot; encoder and decoder must agree on it.
    fn digest(&self) -> [u8; 32];
}

/// The pushforward `G(Z)`, `Z ~ N(0, I)`.
#[derive(Clone, Debug)]
pub struct GeneratorMarginal {
    model: GeneratorModel,
    digest: [u8; 32],
}

impl GeneratorMarginal {
    pub fn new(model: GeneratorModel) -> Self {
        let digest = generator_digest(&model);
        GeneratorMarginal { model, digest }
    }

    pub fn model(&self) -> &GeneratorModel {
        &self.model
    }
}

/// SHA-256 over the architecture and every parameter as f64 little-endian.
pub fn generator_digest(model: &GeneratorModel) -> [u8; 32] {
    let arch = serde_json::to_vec(model.architecture()).expect("architecture serializes");
    let mut bytes = Vec::with_capacity(arch.len() + 8 * model.architecture().parameter_count() + 16);
    bytes.extend_from_slice(b"generator\0");
    bytes.extend_from_slice(&arch);
    for p in model.parameters() {
        for v in p.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    sha256(&bytes)
}

impl Marginal for GeneratorMarginal {
    fn dim(&self) -> usize {
        self.model.output_dim()
    }

    fn sample_batch(&self, rng: &mut ChaCha20Rng, count: usize, out: &mut Vec<f64>) -> Result<()> {
        let z = self.model.sample_latent(count, rng);
        *out = self.model.forward_tensor(&z)?.into_data();
        Ok(())
    }

    fn digest(&self) -> [u8; 32] {
        self.digest
    }
}

/// Closed-form Gaussian output marginal at a fixed distortion.
#[derive(Clone, Debug)]
pub struct GaussianMarginal {
    channel: GaussianTestChannel,
    distortion: f64,
    digest: [u8; 32],
}

impl GaussianMarginal {
    pub fn new(spec: &GaussianSourceSpec, distortion: f64, form: ChannelForm) -> Result<Self> {
        let channel = GaussianTestChannel::new(spec, distortion, form)?;
        let mut bytes = b"gaussian\0".to_vec();
        bytes.extend_from_slice(&serde_json::to_vec(spec)?);
        bytes.extend_from_slice(&distortion.to_le_bytes());
        bytes.extend_from_slice(&serde_json::to_vec(&form)?);
        Ok(GaussianMarginal {
            channel,
            distortion,
            digest: sha256(&bytes),
        })
    }

    pub fn channel(&self) -> &GaussianTestChannel {
        &self.channel
    }

    pub fn distortion(&self) -> f64 {
        self.distortion
    }
}

impl Marginal for GaussianMarginal {
    fn dim(&self) -> usize {
        self.channel.dim()
    }

    fn sample_batch(&self, rng: &mut ChaCha20Rng, count: usize, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        let mut y = Vec::with_capacity(self.dim());
        for _ in 0..count {
            self.channel.sample_marginal_into(rng, &mut y);
            out.extend_from_slice(&y);
        }
        Ok(())
    }

    fn digest(&self) -> [u8; 32] {
        self.digest
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RccConfig {
    pub scheme: Scheme,
    pub num_candidates: usize,
    /// Slope in nats per distortion unit, negative.
    pub beta: f64,
    /// Zipf rate parameter `C` in bits.
    pub rate_param: f64,
    pub seed: u64,
    #[serde(default = "default_kernel")]
    pub kernel: DistortionKernel,
}

fn default_kernel() -> DistortionKernel {
    DistortionKernel::SquaredError
}

impl RccConfig {
    pub fn new(scheme: Scheme, num_candidates: usize, beta: f64, rate_param: f64, seed: u64) -> Result<Self> {
        let cfg = RccConfig {
            scheme,
            num_candidates,
            beta,
            rate_param,
            seed,
            kernel: DistortionKernel::SquaredError,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_candidates == 0 || self.num_candidates > u32::MAX as usize {
            return Err(Error::invalid(format!(
                "number of candidates must be in 1..=2^32-1, got {}",
                self.num_candidates
            )));
        }
        if !(self.beta < 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!(
                "beta must be finite and negative, got {}",
                self.beta
            )));
        }
        if !(self.rate_param >= 0.0 && self.rate_param.is_finite()) {
            return Err(Error::invalid(format!(
                "rate parameter must be finite and >= 0, got {}",
                self.rate_param
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedMessage {
    pub scheme: Scheme,
    pub num_candidates: u32,
    pub beta: f64,
    pub rate_param: f64,
    pub seed: u64,
    pub digest: [u8; 32],
    pub payload_bits: u32,
    pub payload: Vec<u8>,
}

impl CompressedMessage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(MESSAGE_MAGIC);
        out.push(MESSAGE_VERSION);
        out.push(self.scheme.code());
        out.extend_from_slice(&self.num_candidates.to_le_bytes());
        out.extend_from_slice(&self.beta.to_le_bytes());
        out.extend_from_slice(&self.rate_param.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.digest);
        out.extend_from_slice(&self.payload_bits.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteCursor { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MESSAGE_MAGIC {
            return Err(Error::format(0, format!("expected magic \"NRCC\", found {magic:02x?}")));
        }
        let version = r.take(1)?[0];
        if version != MESSAGE_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "compressed message",
                version: version as u32,
            });
        }
        let scheme_at = r.pos as u64;
        let scheme_code = r.take(1)?[0];
        let scheme = Scheme::from_code(scheme_code)
            .ok_or_else(|| Error::format(scheme_at, format!("unknown scheme code {scheme_code}")))?;
        let num_candidates = u32::from_le_bytes(r.array()?);
        let beta = f64::from_le_bytes(r.array()?);
        let rate_param = f64::from_le_bytes(r.array()?);
        let seed = u64::from_le_bytes(r.array()?);
        let digest: [u8; 32] = r.array()?;
        let payload_bits = u32::from_le_bytes(r.array()?);
        let payload_len = (payload_bits as usize).div_ceil(8);
        let payload_at = r.pos as u64;
        let payload = r.take(payload_len)?.to_vec();
        if r.pos != bytes.len() {
            return Err(Error::format(
                r.pos as u64,
                format!("{} trailing bytes after payload", bytes.len() - r.pos),
            ));
        }
        let used = payload_bits as usize % 8;
        if used != 0 && payload[payload_len - 1] & (0xffu8 >> used) != 0 {
            return Err(Error::format(
                payload_at + payload_len as u64 - 1,
                "nonzero padding bits in payload",
            ));
        }
        Ok(CompressedMessage {
            scheme,
            num_candidates,
            beta,
            rate_param,
            seed,
            digest,
            payload_bits,
            payload,
        })
    }

    /// Splits a file of back-to-back messages; each one's length follows from
    /// its payload bit count.
    pub fn parse_concatenated(bytes: &[u8]) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < bytes.len() {
            let rest = &bytes[pos..];
            if rest.len() < HEADER_LEN {
                return Err(Error::format(pos as u64, "truncated message header"));
            }
            let bits = u32::from_le_bytes(rest[HEADER_LEN - 4..HEADER_LEN].try_into().expect("4 bytes"));
            let len = HEADER_LEN + (bits as usize).div_ceil(8);
            if rest.len() < len {
                return Err(Error::format(pos as u64, "truncated message payload"));
            }
            out.push(Self::from_bytes(&rest[..len]).map_err(|e| match e {
                Error::Format { offset, detail } => Error::Format {
                    offset: offset + pos as u64,
                    detail,
                },
                other => other,
            })?);
            pos += len;
        }
        Ok(out)
    }

    /// Total serialized size in bits, header included.
    pub fn total_bits(&self) -> usize {
        8 * (HEADER_LEN + self.payload.len())
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!(
                    "truncated message: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub message: CompressedMessage,
    /// 1-based selected index.
    pub index: usize,
    pub reconstruction: Vec<f64>,
    pub distortion: f64,
}

/// Compresses one sample. Candidates are scored in a streaming pass.
pub fn encode(x: &[f64], cfg: &RccConfig, marginal: &dyn Marginal) -> Result<Encoding> {
    cfg.validate()?;
    if x.len() != marginal.dim() {
        return Err(Error::shape(
            "rcc_encode",
            format!("sample has {} coordinates, marginal has {}", x.len(), marginal.dim()),
        ));
    }
    let n = cfg.num_candidates;
    let weights = cumulative_weights(cfg.scheme, n, &mut stream(cfg.seed, WEIGHT_STREAM));
    let mut rng = stream(cfg.seed, CANDIDATE_STREAM);
    let m = marginal.dim();
    let mut batch = Vec::new();
    let mut best = ArgMin::default();
    let mut best_y = vec![0.0; m];
    let mut start = 0;
    while start < n {
        let count = CANDIDATE_BATCH.min(n - start);
        marginal.sample_batch(&mut rng, count, &mut batch)?;
        for (r, y) in batch.chunks_exact(m).enumerate() {
            let i = start + r;
            let score = selection_score(cfg.kernel.eval(x, y), weights[i], cfg.beta);
            if score < best.score {
                best_y.copy_from_slice(y);
            }
            best.offer(i, score);
        }
        start += count;
    }
    if !best.score.is_finite() {
        return Err(Error::invalid("no candidate had a finite selection score"));
    }
    let index = best.index + 1;

    let book = ZipfCodebook::build(n, cfg.rate_param)?;
    let mut writer = BitWriter::new();
    book.encode_index(index, &mut writer)?;
    let payload_bits = writer.bit_len() as u32;
    let message = CompressedMessage {
        scheme: cfg.scheme,
        num_candidates: n as u32,
        beta: cfg.beta,
        rate_param: cfg.rate_param,
        seed: cfg.seed,
        digest: marginal.digest(),
        payload_bits,
        payload: writer.into_bytes(),
    };
    let distortion = cfg.kernel.eval(x, &best_y);
    Ok(Encoding {
        message,
        index,
        reconstruction: best_y,
        distortion,
    })
}

/// Reads the index from a message without touching the marginal.
pub fn decode_index(msg: &CompressedMessage) -> Result<usize> {
    if msg.num_candidates == 0 {
        return Err(Error::Bitstream("message declares zero candidates".into()));
    }
    let book = ZipfCodebook::build(msg.num_candidates as usize, msg.rate_param)?;
    let mut reader = BitReader::new(&msg.payload, msg.payload_bits as usize)?;
    let k = book.decode_index(&mut reader)?;
    if reader.remaining() != 0 {
        return Err(Error::Bitstream(format!(
            "{} bits left after the index",
            reader.remaining()
        )));
    }
    Ok(k)
}

/// Regenerates `Y_K` from the shared seed. Fails if the snapshot differs from the encoder's.
pub fn decode(msg: &CompressedMessage, marginal: &dyn Marginal) -> Result<Vec<f64>> {
    let ours = marginal.digest();
    if ours != msg.digest {
        return Err(Error::DigestMismatch(format!(
            "message was encoded against marginal {}, decoder has {}",
            crate::digest::hex(&msg.digest),
            crate::digest::hex(&ours)
        )));
    }
    let k = decode_index(msg)?;
    let m = marginal.dim();
    let mut rng = stream(msg.seed, CANDIDATE_STREAM);
    let mut batch = Vec::new();
    let mut start = 0;
    loop {
        let count = CANDIDATE_BATCH.min(msg.num_candidates as usize - start);
        marginal.sample_batch(&mut rng, count, &mut batch)?;
        if k <= start + count {
            let r = k - 1 - start;
            return Ok(batch[r * m..(r + 1) * m].to_vec());
        }
        start += count;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RccEval {
    pub samples: usize,
    pub mean_rate_bits: f64,
    pub mean_distortion: f64,
    /// Mean size including the fixed header.
    pub mean_message_bits: f64,
    pub mean_log2_index: f64,
}

/// Per-sample seeds for an evaluation run, drawn from a master stream.
pub fn sample_seeds(master_seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// Encodes every row of `test` (each with its own derived seed) and averages
/// payload length and distortion. `cfg.seed` is the master seed.
pub fn rate_distortion_eval(
    test: &SampleMatrix,
    cfg: &RccConfig,
    marginal: &dyn Marginal,
    jobs: usize,
) -> Result<RccEval> {
    cfg.validate()?;
    let n = test.rows();
    if n == 0 {
        return Err(Error::invalid("evaluation needs at least one test sample"));
    }
    let seeds = sample_seeds(cfg.seed, n);
    let jobs = jobs.clamp(1, n);
    let chunk = n.div_ceil(jobs);
    let results: Vec<Result<Vec<(f64, f64, f64, f64)>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let seeds = &seeds;
                s.spawn(move || {
                    let lo = j * chunk;
                    let hi = ((j + 1) * chunk).min(n);
                    (lo..hi)
                        .map(|i| {
                            let c = RccConfig { seed: seeds[i], ..*cfg };
                            let e = encode(test.row(i), &c, marginal)?;
                            Ok((
                                e.message.payload_bits as f64,
                                e.distortion,
                                e.message.total_bits() as f64,
                                (e.index as f64).log2(),
                            ))
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("eval worker panicked"))
            .collect()
    });
    let mut sums = [0.0; 4];
    for part in results {
        for (a, b, c, d) in part? {
            sums[0] += a;
            sums[1] += b;
            sums[2] += c;
            sums[3] += d;
        }
    }
    let nf = n as f64;
    Ok(RccEval {
        samples: n,
        mean_rate_bits: sums[0] / nf,
        mean_distortion: sums[1] / nf,
        mean_message_bits: sums[2] / nf,
        mean_log2_index: sums[3] / nf,
    })
}

/// Candidates `Y_1..Y_N` exactly as the encoder draws them, for inspection and tests.
pub fn regenerate_candidates(seed: u64, n: usize, marginal: &dyn Marginal) -> Result<Vec<Vec<f64>>> {
    let m = marginal.dim();
    let mut rng = stream(seed, CANDIDATE_STREAM);
    let mut out = Vec::with_capacity(n);
    let mut batch = Vec::new();
    let mut start = 0;
    while start < n {
        let count = CANDIDATE_BATCH.min(n - start);
        marginal.sample_batch(&mut rng, count, &mut batch)?;
        out.extend(batch.chunks_exact(m).map(|c| c.to_vec()));
        start += count;
    }
    Ok(out)
}

/// Weights `W_1..W_N` exactly as the encoder draws them.
pub fn regenerate_weights(seed: u64, scheme: Scheme, n: usize) -> Vec<f64> {
    cumulative_weights(scheme, n, &mut stream(seed, WEIGHT_STREAM))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Architecture;
    use rand_chacha::ChaCha8Rng;

    fn scalar_marginal() -> GaussianMarginal {
        GaussianMarginal::new(&GaussianSourceSpec::new(vec![1.0]).unwrap(), 0.25, ChannelForm::Optimal).unwrap()
    }

    #[test]
    fn weights_by_hand() {
        let xs = [0.5, 1.0, 0.2];
        let pfr = weights_from_exponentials(Scheme::Pfr, &xs);
        let orc = weights_from_exponentials(Scheme::Orc, &xs);
        for (a, b) in pfr.iter().zip([0.5, 1.5, 1.7]) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in orc.iter().zip([0.5, 2.0, 2.6]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(
            weights_from_exponentials(Scheme::Pfr, &[0.7]),
            weights_from_exponentials(Scheme::Orc, &[0.7])
        );
    }

    #[test]
    fn pfr_last_weight_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50;
        let trials = 10_000;
        let vals: Vec<f64> = (0..trials)
            .map(|_| *cumulative_weights(Scheme::Pfr, n, &mut rng).last().unwrap() / n as f64)
            .collect();
        let mean = vals.iter().sum::<f64>() / trials as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn orc_dominates_pfr_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 16;
        let mut pfr = vec![0.0; n];
        let mut orc = vec![0.0; n];
        for _ in 0..2000 {
            for (a, w) in pfr.iter_mut().zip(cumulative_weights(Scheme::Pfr, n, &mut rng)) {
                *a += w;
            }
            for (a, w) in orc.iter_mut().zip(cumulative_weights(Scheme::Orc, n, &mut rng)) {
                *a += w;
            }
        }
        for i in 1..n - 1 {
            assert!(orc[i] > pfr[i], "i = {i}");
        }
    }

    #[test]
    fn weights_strictly_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for scheme in [Scheme::Pfr, Scheme::Orc] {
            let w = cumulative_weights(scheme, 4096, &mut rng);
            assert!(w.windows(2).all(|p| p[0] < p[1]));
            assert!(w[0] > 0.0);
        }
    }

    #[test]
    fn selection_edge_cases() {
        let k = DistortionKernel::SquaredError;
        let same = vec![vec![1.0, 2.0]; 5];
        let w = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(select_index(&[0.0, 0.0], &same, &w, -3.0, k).unwrap(), 1);

        let cands = vec![vec![5.0], vec![0.1], vec![-3.0]];
        let w = [0.01, 5.0, 9.0];
        assert_eq!(select_index(&[0.0], &cands, &w, -1e12, k).unwrap(), 2);

        assert!(select_index(&[0.0], &cands, &w, 0.0, k).is_err());
        assert!(select_index(&[0.0], &cands, &w[..2], -1.0, k).is_err());
    }

    #[test]
    fn selection_invariant_to_joint_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let kernel = DistortionKernel::SquaredError;
        for _ in 0..200 {
            let cands: Vec<Vec<f64>> = (0..64).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
            let w = cumulative_weights(Scheme::Orc, 64, &mut rng);
            let x = [rng.random_range(-2.0..2.0)];
            let beta = -rng.random_range(0.5..5.0);
            let k1 = select_index(&x, &cands, &w, beta, kernel).unwrap();
            // d scaled by c = 4 (coordinates by 2), β by 1/4
            let scaled: Vec<Vec<f64>> = cands.iter().map(|y| vec![2.0 * y[0]]).collect();
            let k2 = select_index(&[2.0 * x[0]], &scaled, &w, beta / 4.0, kernel).unwrap();
            assert_eq!(k1, k2);
        }
    }

    #[test]
    fn encoder_agrees_with_batch_selection() {
        let marg = scalar_marginal();
        let cfg = RccConfig::new(Scheme::Orc, 1000, -2.0, 1.0, 42).unwrap();
        let x = [0.7];
        let enc = encode(&x, &cfg, &marg).unwrap();
        let cands = regenerate_candidates(42, 1000, &marg).unwrap();
        let w = regenerate_weights(42, Scheme::Orc, 1000);
        let k = select_index(&x, &cands, &w, -2.0, DistortionKernel::SquaredError).unwrap();
        assert_eq!(enc.index, k);
        assert_eq!(enc.reconstruction, cands[k - 1]);
        assert_eq!(decode(&enc.message, &marg).unwrap(), cands[k - 1]);
    }

    #[test]
    fn message_bytes_round_trip() {
        let marg = scalar_marginal();
        let cfg = RccConfig::new(Scheme::Pfr, 300, -2.0, 1.0, 9).unwrap();
        let enc = encode(&[-1.3], &cfg, &marg).unwrap();
        let bytes = enc.message.to_bytes();
        assert_eq!(&bytes[..4], b"NRCC");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 0);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 300);
        let back = CompressedMessage::from_bytes(&bytes).unwrap();
        assert_eq!(back, enc.message);
        assert_eq!(decode(&back, &marg).unwrap(), enc.reconstruction);
    }

    #[test]
    fn concatenated_messages_split() {
        let marg = scalar_marginal();
        let msgs: Vec<CompressedMessage> = [0.1, -0.7, 2.5]
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cfg = RccConfig::new(Scheme::Orc, 100 + 50 * i, -2.0, 1.0, i as u64).unwrap();
                encode(&[x], &cfg, &marg).unwrap().message
            })
            .collect();
        let mut bytes: Vec<u8> = msgs.iter().flat_map(|m| m.to_bytes()).collect();
        assert_eq!(CompressedMessage::parse_concatenated(&bytes).unwrap(), msgs);
        assert!(CompressedMessage::parse_concatenated(&[]).unwrap().is_empty());
        bytes.pop();
        assert!(CompressedMessage::parse_concatenated(&bytes).is_err());
    }

    #[test]
    fn malformed_messages_rejected() {
        let marg = scalar_marginal();
        let cfg = RccConfig::new(Scheme::Orc, 64, -2.0, 1.0, 1).unwrap();
        let bytes = encode(&[0.2], &cfg, &marg).unwrap().message.to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            CompressedMessage::from_bytes(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            CompressedMessage::from_bytes(&bad),
            Err(Error::UnsupportedVersion { version: 2, .. })
        ));
        let mut bad = bytes.clone();
        bad[5] = 7;
        assert!(matches!(
            CompressedMessage::from_bytes(&bad),
            Err(Error::Format { offset: 5, .. })
        ));
        assert!(CompressedMessage::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(CompressedMessage::from_bytes(&bad).is_err());
    }

    #[test]
    fn digest_mismatch_is_hard_error() {
        let marg = scalar_marginal();
        let cfg = RccConfig::new(Scheme::Orc, 64, -2.0, 1.0, 1).unwrap();
        let mut msg = encode(&[0.2], &cfg, &marg).unwrap().message;
        msg.digest[31] ^= 1;
        assert!(matches!(decode(&msg, &marg), Err(Error::DigestMismatch(_))));

        let other =
            GaussianMarginal::new(&GaussianSourceSpec::new(vec![1.0]).unwrap(), 0.3, ChannelForm::Optimal).unwrap();
        let msg = encode(&[0.2], &cfg, &marg).unwrap().message;
        assert!(decode(&msg, &other).is_err());
    }

    #[test]
    fn single_candidate() {
        let marg = scalar_marginal();
        let cfg = RccConfig::new(Scheme::Pfr, 1, -2.0, 1.0, 77).unwrap();
        let a = encode(&[5.0], &cfg, &marg).unwrap();
        let b = encode(&[-5.0], &cfg, &marg).unwrap();
        assert_eq!(a.index, 1);
        assert_eq!(a.reconstruction, b.reconstruction);
        assert_eq!(a.message.payload_bits, 1);
        assert_eq!(decode(&a.message, &marg).unwrap(), a.reconstruction);
    }

    #[test]
    fn generator_marginal_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = GeneratorModel::new_random(Architecture::mlp(3, vec![8], 2), &mut rng).unwrap();
        let marg = GeneratorMarginal::new(model);
        let cfg = RccConfig::new(Scheme::Orc, 700, -1.5, 2.0, 5).unwrap();
        for i in 0..20 {
            let x = [i as f64 * 0.1 - 1.0, 0.3];
            let enc = encode(&x, &RccConfig { seed: i, ..cfg }, &marg).unwrap();
            assert_eq!(decode(&enc.message, &marg).unwrap(), enc.reconstruction);
        }
    }

    #[test]
    fn first_index_is_most_frequent() {
        let spec = GaussianSourceSpec::new(vec![1.0, 1.0]).unwrap();
        let marg = GaussianMarginal::new(&spec, 0.2, ChannelForm::Optimal).unwrap();
        let mut counts = vec![0usize; 64];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for seed in 0..3000 {
            let x = spec.sample(&mut rng);
            let cfg = RccConfig::new(Scheme::Orc, 64, -1.0, 1.0, seed).unwrap();
            counts[encode(&x, &cfg, &marg).unwrap().index - 1] += 1;
        }
        let max = *counts.iter().max().unwrap();
        assert_eq!(counts[0], max);
    }

    #[test]
    fn eval_is_deterministic() {
        let marg = scalar_marginal();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vals: Vec<f64> = (0..40).map(|_| marg.channel().spec().sample(&mut rng)[0]).collect();
        let test = SampleMatrix::new(40, 1, vals).unwrap();
        let cfg = RccConfig::new(Scheme::Orc, 256, -2.0, 1.0, 3).unwrap();
        let a = rate_distortion_eval(&test, &cfg, &marg, 1).unwrap();
        let b = rate_distortion_eval(&test, &cfg, &marg, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("PFR".parse::<Scheme>().unwrap(), Scheme::Pfr);
        assert_eq!("orc".parse::<Scheme>().unwrap(), Scheme::Orc);
        assert!("a*".parse::<Scheme>().is_err());
        assert_eq!(Scheme::from_code(Scheme::Orc.code()), Some(Scheme::Orc));
    }
}
