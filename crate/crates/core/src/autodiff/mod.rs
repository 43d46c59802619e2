//! Small dense-tensor reverse-mode differentiation, just enough to train a
//! fully connected generator against the dual rate-distortion objective.

mod generator;
mod optim;
mod tape;
mod tensor;

pub use generator::{Activation, Architecture, Dense, GeneratorModel, OutputActivation, LEAKY_RELU_SLOPE};
pub use optim::{AdamParams, Optimizer, OptimizerKind};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::{matmul, pairwise_sq_dist, Tensor};

pub(crate) use tape::log_mean_exp_eps;
