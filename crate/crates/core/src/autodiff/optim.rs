use serde::{Deserialize, Serialize};

use super::generator::GeneratorModel;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Plain gradient descent or Adam; Adam's moment estimates live here between steps.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    adam: AdamParams,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Optimizer {
            kind,
            lr,
            adam: AdamParams::default(),
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, lr)
    }

    pub fn with_adam_params(mut self, params: AdamParams) -> Self {
        self.adam = params;
        self
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates `params` in place. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(
                "optimizer",
                format!("{} parameters but {} gradients", params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape(
                    "optimizer",
                    format!("parameter {i} is {:?}, gradient is {:?}", p.shape(), g.shape()),
                ));
            }
            if let Some((index, &value)) = g.data().iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { param: i, index, value });
            }
        }

        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, dw) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= self.lr * dw;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first.is_empty() {
                    self.first = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
                    self.second = self.first.clone();
                }
                let AdamParams { beta1, beta2, eps } = self.adam;
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first.iter_mut().zip(self.second.iter_mut()))
                {
                    let it = p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
                    for ((w, &dw), (mi, vi)) in it {
                        *mi = beta1 * *mi + (1.0 - beta1) * dw;
                        *vi = beta2 * *vi + (1.0 - beta2) * dw * dw;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *w -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn step_model(&mut self, model: &mut GeneratorModel, grads: &[Tensor]) -> Result<()> {
        let mut params = model.parameters_mut();
        self.step(&mut params, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_scalar_step() {
        let mut w = Tensor::scalar(1.0);
        let mut opt = Optimizer::sgd(0.1).unwrap();
        opt.step(&mut [&mut w], &[Tensor::scalar(2.0)]).unwrap();
        assert!((w.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the update is lr·g/(|g| + eps)
        for g in [3.0, -0.02, 1e-3, -250.0] {
            let mut w = Tensor::scalar(0.5);
            let mut opt = Optimizer::adam(1e-2).unwrap();
            opt.step(&mut [&mut w], &[Tensor::scalar(g)]).unwrap();
            let expected = 0.5 - 1e-2 * g / (g.abs() + 1e-8);
            assert!((w.data()[0] - expected).abs() < 1e-15);
            assert!(((0.5 - w.data()[0]) - 1e-2 * g.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut w = Tensor::matrix(1, 3, vec![1.0, -2.0, 3.0]).unwrap();
            let before = w.clone();
            let mut opt = Optimizer::new(kind, 0.1).unwrap();
            opt.step(&mut [&mut w], &[Tensor::zeros(&[1, 3])]).unwrap();
            assert_eq!(w, before);
        }
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut w = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let before = w.clone();
        let mut opt = Optimizer::adam(0.1).unwrap();
        let err = opt
            .step(&mut [&mut w], &[Tensor::matrix(1, 2, vec![0.0, f64::NAN]).unwrap()])
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { param: 0, index: 1, .. }));
        assert_eq!(w, before);
        assert_eq!(opt.steps_taken(), 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut w = Tensor::zeros(&[2]);
        let mut opt = Optimizer::sgd(0.1).unwrap();
        assert!(opt.step(&mut [&mut w], &[Tensor::zeros(&[3])]).is_err());
    }
}
