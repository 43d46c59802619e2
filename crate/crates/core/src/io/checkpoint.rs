use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Architecture, GeneratorModel, OutputActivation, Tensor};
use crate::digest::sha256;
use crate::error::{Error, Result};
use crate::matrix::Scale;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NERD";
pub const CHECKPOINT_VERSION: u16 = 1;
/// Name of the trailing digest, stored in the header.
pub const CHECKPOINT_DIGEST: &str = "sha256";
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    /// Dual slope at the trained operating point, nats per distortion unit (≤ 0).
    pub beta: f64,
    #[serde(rename = "D_target")]
    pub d_target: f64,
    pub rate_bits: f64,
    pub train_seed: u64,
    pub data_digest: String,
    /// Map from generator output units back to the data's original units.
    #[serde(default)]
    pub scale: Scale,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: GeneratorModel,
    pub metadata: CheckpointMetadata,
}

/// Layout (little-endian): magic "NERD", u16 version, u8 digest-name length
/// and name, architecture (u32 input, u32 output, u32 hidden count, u32 per
/// hidden width, u8 activation, u8 output activation), u64 parameter count,
/// f32 parameters (W0, b0, W1, b1, …), u32 metadata length, metadata JSON,
/// then the SHA-256 of every preceding byte.
pub fn encode_checkpoint(model: &GeneratorModel, metadata: &CheckpointMetadata) -> Result<Vec<u8>> {
    let arch = model.architecture();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(CHECKPOINT_DIGEST.len() as u8);
    out.extend_from_slice(CHECKPOINT_DIGEST.as_bytes());
    let dim = |v: usize| -> Result<[u8; 4]> {
        u32::try_from(v)
            .map(u32::to_le_bytes)
            .map_err(|_| Error::invalid(format!("layer width {v} does not fit in u32")))
    };
    out.extend_from_slice(&dim(arch.input_dim)?);
    out.extend_from_slice(&dim(arch.output_dim)?);
    out.extend_from_slice(&dim(arch.hidden.len())?);
    for &h in &arch.hidden {
        out.extend_from_slice(&dim(h)?);
    }
    out.push(arch.activation.code());
    out.push(arch.output_activation.code());
    out.extend_from_slice(&(arch.parameter_count() as u64).to_le_bytes());
    for p in model.parameters() {
        for &v in p.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let json = serde_json::to_vec(metadata)?;
    out.extend_from_slice(&dim(json.len())?);
    out.extend_from_slice(&json);
    let digest = sha256(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated checkpoint, needed {n} more bytes"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 6 {
        return Err(Error::format(bytes.len() as u64, "truncated checkpoint header"));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::format(0, "expected magic \"NERD\""));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "checkpoint",
            version: version as u32,
        });
    }
    if bytes.len() < 6 + DIGEST_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated checkpoint"));
    }
    let (body, stored) = bytes.split_at(bytes.len() - DIGEST_LEN);
    let actual = sha256(body);
    if actual.as_slice() != stored {
        return Err(Error::DigestMismatch(format!(
            "checkpoint content hashes to {}, file records {}",
            crate::digest::hex(&actual),
            crate::digest::hex(stored)
        )));
    }

    let mut c = Cursor { bytes: body, pos: 6 };
    let name_len = c.u8()? as usize;
    let name_at = c.pos;
    let name = c.take(name_len)?;
    if name != CHECKPOINT_DIGEST.as_bytes() {
        return Err(Error::format(
            name_at as u64,
            format!("unsupported digest {:?}", String::from_utf8_lossy(name)),
        ));
    }
    let input_dim = c.u32()? as usize;
    let output_dim = c.u32()? as usize;
    let n_hidden = c.u32()? as usize;
    let mut hidden = Vec::with_capacity(n_hidden.min(1024));
    for _ in 0..n_hidden {
        hidden.push(c.u32()? as usize);
    }
    let act_at = c.pos;
    let activation =
        Activation::from_code(c.u8()?).ok_or_else(|| Error::format(act_at as u64, "unknown activation code"))?;
    let out_act = OutputActivation::from_code(c.u8()?)
        .ok_or_else(|| Error::format(act_at as u64 + 1, "unknown output activation code"))?;
    let arch = Architecture {
        input_dim,
        output_dim,
        hidden,
        activation,
        output_activation: out_act,
    };
    let count_at = c.pos;
    let count = u64::from_le_bytes(c.take(8)?.try_into().unwrap());
    if count != arch.parameter_count() as u64 {
        return Err(Error::format(
            count_at as u64,
            format!(
                "{count} parameters stored, architecture needs {}",
                arch.parameter_count()
            ),
        ));
    }
    let mut params = Vec::new();
    for (fan_in, fan_out) in arch.layer_dims() {
        for shape in [vec![fan_in, fan_out], vec![fan_out]] {
            let len: usize = shape.iter().product();
            let raw = c.take(len * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            params.push(Tensor::new(shape, data)?);
        }
    }
    let model = GeneratorModel::from_parameters(arch, params)?;
    let json_len = c.u32()? as usize;
    let json_at = c.pos;
    let metadata: CheckpointMetadata = serde_json::from_slice(c.take(json_len)?)
        .map_err(|e| Error::format(json_at as u64, format!("bad metadata JSON: {e}")))?;
    if c.pos != body.len() {
        return Err(Error::format(c.pos as u64, "unexpected bytes before the digest"));
    }
    Ok(Checkpoint { model, metadata })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &GeneratorModel, metadata: &CheckpointMetadata) -> Result<()> {
    std::fs::write(path.as_ref(), encode_checkpoint(model, metadata)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path.as_ref())?)
}
