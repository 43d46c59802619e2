//! File formats: IDX image sets, raw vector files, generator checkpoints and
//! rate-distortion CSVs, plus the seeded Gaussian sampler.
//!
//! Every format has a byte-level encoder/decoder pair so callers can choose
//! how bytes reach disk; the `save_*`/`load_*` helpers use plain `std::fs`.

mod checkpoint;
mod curve_csv;
mod idx;
mod vectors;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMetadata,
    CHECKPOINT_DIGEST, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use curve_csv::{curve_from_csv, curve_to_csv, read_curve, write_curve, CURVE_HEADER};
pub use idx::{load_idx, parse_idx};
pub use vectors::{
    decode_vectors, encode_vectors, load_vectors, save_vectors, VectorDtype, VECTOR_MAGIC, VECTOR_VERSION,
};

use crate::digest::sha256;
use crate::error::{Error, Result};
use crate::gaussian::GaussianSourceSpec;
use crate::matrix::SampleMatrix;

/// `n` seeded draws from the Gaussian source, one per row.
pub fn gen_gaussian(spec: &GaussianSourceSpec, n: usize, seed: u64) -> Result<SampleMatrix> {
    spec.validate()?;
    let m = spec.dim();
    if n == 0 {
        return Ok(SampleMatrix::empty(m));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * m);
    for _ in 0..n {
        values.extend(spec.sample(&mut rng));
    }
    SampleMatrix::new(n, m, values)
}

/// Loads IDX or raw vector files, chosen by the leading magic bytes.
pub fn load_samples(path: impl AsRef<Path>) -> Result<SampleMatrix> {
    let bytes = std::fs::read(path.as_ref())?;
    parse_samples(&bytes)
}

pub fn parse_samples(bytes: &[u8]) -> Result<SampleMatrix> {
    if bytes.starts_with(VECTOR_MAGIC) {
        decode_vectors(bytes)
    } else if bytes.len() >= 2 && bytes[0] == 0 && bytes[1] == 0 {
        parse_idx(bytes)
    } else {
        Err(Error::format(0, "not an IDX or NVEC file"))
    }
}

/// SHA-256 of shape, scale and values (all little-endian), as lowercase hex.
pub fn sample_digest(data: &SampleMatrix) -> String {
    let mut bytes = Vec::with_capacity(32 + data.values().len() * 8);
    bytes.extend_from_slice(&(data.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(data.cols() as u64).to_le_bytes());
    bytes.extend_from_slice(&data.scale().offset.to_le_bytes());
    bytes.extend_from_slice(&data.scale().factor.to_le_bytes());
    for v in data.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    crate::digest::hex(&sha256(&bytes))
}
