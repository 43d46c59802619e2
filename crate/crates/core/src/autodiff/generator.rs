//! Fully connected generator `G: R^{m_z} -> R^m` pushing a standard normal
//! base distribution forward onto the reproduction alphabet.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::tape::{sigmoid, NodeId, Tape};
use super::tensor::{self, Tensor};
use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
}

pub const LEAKY_RELU_SLOPE: f64 = 0.2;

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_RELU_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    fn record(self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_RELU_SLOPE),
            Activation::Tanh => tape.tanh(x),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::LeakyRelu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::LeakyRelu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

impl OutputActivation {
    fn apply(self, x: f64) -> f64 {
        match self {
            OutputActivation::Identity => x,
            OutputActivation::Sigmoid => sigmoid(x),
        }
    }

    fn record(self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            OutputActivation::Identity => x,
            OutputActivation::Sigmoid => tape.sigmoid(x),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            OutputActivation::Identity => 0,
            OutputActivation::Sigmoid => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(OutputActivation::Identity),
            1 => Some(OutputActivation::Sigmoid),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output_activation: OutputActivation,
}

impl Architecture {
    pub fn mlp(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Architecture {
            input_dim,
            output_dim,
            hidden,
            activation: Activation::LeakyRelu,
            output_activation: OutputActivation::Identity,
        }
    }

    /// `(fan_in, fan_out)` for every layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_dim);
        widths.extend(&self.hidden);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid(format!(
                "all layer widths must be positive: {} -> {:?} -> {}",
                self.input_dim, self.hidden, self.output_dim
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `[fan_in × fan_out]`, applied as `x · W`.
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorModel {
    arch: Architecture,
    layers: Vec<Dense>,
}

impl GeneratorModel {
    /// Weights uniform on `(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn new_random<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new(-a, a).expect("a > 0");
                let w: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
                Dense {
                    weight: Tensor::matrix(fan_in, fan_out, w).expect("dims match"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        Ok(GeneratorModel { arch, layers })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| Dense {
                weight: Tensor::zeros(&[fan_in, fan_out]),
                bias: Tensor::zeros(&[fan_out]),
            })
            .collect();
        Ok(GeneratorModel { arch, layers })
    }

    /// Rebuilds a model from a flat `[W0, b0, W1, b1, ...]` parameter list.
    pub fn from_parameters(arch: Architecture, params: Vec<Tensor>) -> Result<Self> {
        arch.validate()?;
        let dims = arch.layer_dims();
        if params.len() != 2 * dims.len() {
            return Err(Error::shape(
                "generator",
                format!("expected {} parameter tensors, got {}", 2 * dims.len(), params.len()),
            ));
        }
        let mut it = params.into_iter();
        let mut layers = Vec::with_capacity(dims.len());
        for (fan_in, fan_out) in dims {
            let weight = it.next().expect("counted");
            let bias = it.next().expect("counted");
            if weight.shape() != [fan_in, fan_out] || bias.shape() != [fan_out] {
                return Err(Error::shape(
                    "generator",
                    format!(
                        "layer {fan_in}->{fan_out} got weight {:?}, bias {:?}",
                        weight.shape(),
                        bias.shape()
                    ),
                ));
            }
            if !weight.is_finite() || !bias.is_finite() {
                return Err(Error::invalid("non-finite generator parameter"));
            }
            layers.push(Dense { weight, bias });
        }
        Ok(GeneratorModel { arch, layers })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn forward(&self, z: &SampleMatrix) -> Result<SampleMatrix> {
        if z.cols() != self.arch.input_dim {
            return Err(Error::shape(
                "forward",
                format!("input has {} columns, model expects {}", z.cols(), self.arch.input_dim),
            ));
        }
        if z.is_empty() {
            return Ok(SampleMatrix::empty(self.arch.output_dim));
        }
        SampleMatrix::from_tensor(&self.forward_tensor(&z.to_tensor())?)
    }

    pub fn forward_tensor(&self, z: &Tensor) -> Result<Tensor> {
        let last = self.layers.len() - 1;
        let mut h = z.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            h = tensor::matmul(&h, &layer.weight)?;
            let width = layer.bias.len();
            let bias = layer.bias.data();
            for row in h.data_mut().chunks_mut(width) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            h = if idx == last {
                h.map(|x| self.arch.output_activation.apply(x))
            } else {
                h.map(|x| self.arch.activation.apply(x))
            };
        }
        Ok(h)
    }

    /// Records the forward pass on `tape`; returns the output node and one leaf
    /// per parameter, in `parameters()` order.
    pub fn record(&self, tape: &mut Tape, z: NodeId) -> Result<(NodeId, Vec<NodeId>)> {
        let (_, cols) = tape.value(z).dims2()?;
        if cols != self.arch.input_dim {
            return Err(Error::shape(
                "forward",
                format!("input has {cols} columns, model expects {}", self.arch.input_dim),
            ));
        }
        let last = self.layers.len() - 1;
        let mut params = Vec::with_capacity(2 * self.layers.len());
        let mut h = z;
        for (idx, layer) in self.layers.iter().enumerate() {
            let w = tape.leaf(layer.weight.clone());
            let b = tape.leaf(layer.bias.clone());
            params.push(w);
            params.push(b);
            let lin = tape.matmul(h, w)?;
            let lin = tape.add_bias(lin, b)?;
            h = if idx == last {
                self.arch.output_activation.record(tape, lin)
            } else {
                self.arch.activation.record(tape, lin)
            };
        }
        Ok((h, params))
    }

    /// Draws `n` latent rows from the standard normal base distribution.
    pub fn sample_latent<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        let data: Vec<f64> = (0..n * self.arch.input_dim)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Tensor::matrix(n, self.arch.input_dim, data).expect("dims match")
    }

    /// `n` draws from the pushforward of the base distribution.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SampleMatrix> {
        if n == 0 {
            return Ok(SampleMatrix::empty(self.arch.output_dim));
        }
        let z = self.sample_latent(n, rng);
        SampleMatrix::from_tensor(&self.forward_tensor(&z)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_maps_to_zero() {
        let model = GeneratorModel::zeros(Architecture::mlp(3, vec![4], 2)).unwrap();
        let z = SampleMatrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let y = model.forward(&z).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_linear_layer_is_identity() {
        let arch = Architecture::mlp(3, vec![], 3);
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 4] = 1.0;
        }
        let model =
            GeneratorModel::from_parameters(arch, vec![Tensor::matrix(3, 3, eye).unwrap(), Tensor::zeros(&[3])])
                .unwrap();
        let z = SampleMatrix::from_rows(&[vec![1.5, -2.0, 0.25]]).unwrap();
        assert_eq!(model.forward(&z).unwrap(), z);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = GeneratorModel::new_random(Architecture::mlp(2, vec![4], 1), &mut rng).unwrap();
        let z = SampleMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(model.forward(&z), Err(Error::Shape { .. })));
    }

    #[test]
    fn init_respects_glorot_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = GeneratorModel::new_random(Architecture::mlp(16, vec![8], 4), &mut rng).unwrap();
        let a0 = (6.0f64 / 24.0).sqrt();
        assert!(model.layers()[0].weight.data().iter().all(|w| w.abs() < a0));
        assert!(model.layers()[0].bias.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn taped_forward_matches_plain_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut arch = Architecture::mlp(2, vec![5, 4], 3);
        arch.activation = Activation::Tanh;
        arch.output_activation = OutputActivation::Sigmoid;
        let model = GeneratorModel::new_random(arch, &mut rng).unwrap();
        let z = model.sample_latent(7, &mut rng);
        let mut tape = Tape::new();
        let zn = tape.leaf(z.clone());
        let (out, params) = model.record(&mut tape, zn).unwrap();
        assert_eq!(params.len(), 6);
        assert_eq!(tape.value(out), &model.forward_tensor(&z).unwrap());
    }
}
