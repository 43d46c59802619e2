//! Wengert tape for reverse-mode differentiation.
//!
//! Every op appends a node whose parents already live on the tape, so node
//! indices are a topological order and the backward sweep is a single pass
//! over the nodes in reverse.

use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Exp(NodeId),
    Log(NodeId),
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    PairwiseSqDist(NodeId, NodeId),
    RowLogMeanExp(NodeId),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradient of a scalar with respect to every node of the tape that produced it.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `id`, or zeros shaped like `like` if nothing flowed into it.
    pub fn get_or_zeros(&self, id: NodeId, like: &Tensor) -> Tensor {
        self.get(id).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// `a[n×m] + b[m]`, bias broadcast over rows.
    pub fn add_bias(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, m) = self.value(a).dims2()?;
        let bias = self.value(b);
        if bias.len() != m {
            return Err(Error::shape(
                "add_bias",
                format!("bias of length {} for {m} columns", bias.len()),
            ));
        }
        let mut out = self.value(a).clone();
        let bd = bias.data().to_vec();
        for row in out.data_mut().chunks_mut(m).take(n) {
            for (o, b) in row.iter_mut().zip(&bd) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("add", format!("{:?} + {:?}", va.shape(), vb.shape())));
        }
        let mut out = va.clone();
        out.add_assign(vb);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| c * x);
        self.push(v, Op::Scale(a, c))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(v, Op::Mean(a))
    }

    pub fn pairwise_sq_dist(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::pairwise_sq_dist(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::PairwiseSqDist(a, b)))
    }

    /// Per row of `a[n×k]`: `ln((1/k) Σ_j exp(a_ij) + eps)`, evaluated with a
    /// max shift so rows of very negative entries stay finite when `eps == 0`.
    pub fn row_log_mean_exp(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        if eps < 0.0 {
            return Err(Error::invalid(format!("eps must be >= 0, got {eps}")));
        }
        let (n, k) = self.value(a).dims2()?;
        let data = self.value(a).data();
        let out: Vec<f64> = (0..n)
            .map(|i| log_mean_exp_eps(&data[i * k..(i + 1) * k], eps))
            .collect();
        let v = Tensor::new(vec![n], out)?;
        Ok(self.push(v, Op::RowLogMeanExp(a)))
    }

    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = tensor::matmul_nt(&g, self.value(b))?;
                    let db = tensor::matmul_tn(self.value(a), &g)?;
                    accumulate(&mut grads, a, da);
                    accumulate(&mut grads, b, db);
                }
                Op::AddBias(a, b) => {
                    let m = self.value(b).len();
                    let mut db = vec![0.0; m];
                    for row in g.data().chunks(m) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    let db = Tensor::new(self.value(b).shape().to_vec(), db)?;
                    accumulate(&mut grads, b, db);
                    accumulate(&mut grads, a, g.clone());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g.clone());
                }
                Op::Scale(a, c) => accumulate(&mut grads, a, g.map(|x| c * x)),
                Op::Exp(a) => {
                    accumulate(&mut grads, a, zip_map(&g, &node.value, |g, y| g * y));
                }
                Op::Log(a) => {
                    accumulate(&mut grads, a, zip_map(&g, self.value(a), |g, x| g / x));
                }
                Op::Relu(a) => {
                    let d = zip_map(&g, self.value(a), |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, a, d);
                }
                Op::LeakyRelu(a, slope) => {
                    let d = zip_map(&g, self.value(a), |g, x| if x > 0.0 { g } else { slope * g });
                    accumulate(&mut grads, a, d);
                }
                Op::Tanh(a) => {
                    accumulate(&mut grads, a, zip_map(&g, &node.value, |g, y| g * (1.0 - y * y)));
                }
                Op::Sigmoid(a) => {
                    accumulate(&mut grads, a, zip_map(&g, &node.value, |g, y| g * y * (1.0 - y)));
                }
                Op::Sum(a) => {
                    let d = Tensor::filled(self.value(a).shape(), g.data()[0]);
                    accumulate(&mut grads, a, d);
                }
                Op::Mean(a) => {
                    let t = self.value(a);
                    let d = Tensor::filled(t.shape(), g.data()[0] / t.len() as f64);
                    accumulate(&mut grads, a, d);
                }
                Op::PairwiseSqDist(a, b) => {
                    let (da, db) = pairwise_sq_dist_backward(&g, self.value(a), self.value(b))?;
                    accumulate(&mut grads, a, da);
                    accumulate(&mut grads, b, db);
                }
                Op::RowLogMeanExp(a) => {
                    let x = self.value(a);
                    let (n, k) = x.dims2()?;
                    let ln_k = (k as f64).ln();
                    let mut d = vec![0.0; n * k];
                    for i in 0..n {
                        let shift = node.value.data()[i] + ln_k;
                        let gi = g.data()[i];
                        for j in 0..k {
                            d[i * k + j] = gi * (x.data()[i * k + j] - shift).exp();
                        }
                    }
                    accumulate(&mut grads, a, Tensor::matrix(n, k, d)?);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip_map on equal shapes")
}

fn pairwise_sq_dist_backward(g: &Tensor, a: &Tensor, b: &Tensor) -> Result<(Tensor, Tensor)> {
    let (n, m) = a.dims2()?;
    let (k, _) = b.dims2()?;
    let gd = g.data();
    let ad = a.data();
    let bd = b.data();
    let mut da = vec![0.0; n * m];
    let mut db = vec![0.0; k * m];
    for i in 0..n {
        let arow = &ad[i * m..(i + 1) * m];
        for j in 0..k {
            let w = 2.0 * gd[i * k + j];
            if w == 0.0 {
                continue;
            }
            let brow = &bd[j * m..(j + 1) * m];
            for c in 0..m {
                let diff = w * (arow[c] - brow[c]);
                da[i * m + c] += diff;
                db[j * m + c] -= diff;
            }
        }
    }
    Ok((Tensor::matrix(n, m, da)?, Tensor::matrix(k, m, db)?))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln((1/k) Σ exp(row) + eps)` without overflow or spurious `-inf`.
pub(crate) fn log_mean_exp_eps(row: &[f64], eps: f64) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return eps.ln();
    }
    let s: f64 = row.iter().map(|&v| (v - max).exp()).sum();
    let lme = max + (s / row.len() as f64).ln();
    if eps > 0.0 {
        log_add_exp(lme, eps.ln())
    } else {
        lme
    }
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}
