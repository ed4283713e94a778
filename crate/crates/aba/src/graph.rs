//! Reverse-mode automatic differentiation over a per-step tape.
//!
//! A `Graph` is built fresh for every training step: leaves are inserted for
//! parameters and inputs, ops append nodes, and `backward` walks the tape in
//! reverse. Nodes only ever reference earlier nodes, so the graph is acyclic
//! by construction. Every op output is checked for finiteness; NaN/Inf is an
//! error, not a silent value.

use crate::error::{AbaError, Result};
use crate::ops;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

enum Op<T> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    AddScalar(NodeId, T),
    Softplus(NodeId),
    LeakyRelu(NodeId, f64),
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
    },
    MaxPool2 {
        input: NodeId,
        argmax: Vec<u32>,
    },
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
    },
    Flatten(NodeId),
    SumAll(NodeId),
    Softmax(NodeId),
    LogSoftmaxNll {
        logits: NodeId,
        labels: Vec<usize>,
    },
    KlCategorical {
        p: NodeId,
        q: NodeId,
    },
    GaussianKlPrior {
        mu: NodeId,
        rho: NodeId,
        prior_var: f64,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients keyed by node id, produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf, zero-filled if the loss never touched it.
    pub fn get_or_zeros(&self, id: NodeId, shape: &[usize]) -> Tensor<T> {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Insert a differentiable leaf (a parameter).
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Insert a non-differentiable leaf (data, noise draws, constants).
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push_unchecked(value, Op::Leaf, false)
    }

    fn push_unchecked(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, context: &'static str) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(AbaError::NonFinite {
                context: context.to_string(),
            });
        }
        let needs_grad = op_parents(&op).iter().any(|p| self.nodes[p.0].needs_grad);
        Ok(self.push_unchecked(value, op, needs_grad))
    }

    fn binary_shapes(&self, a: NodeId, b: NodeId, context: &'static str) -> Result<()> {
        if self.nodes[a.0].value.shape() != self.nodes[b.0].value.shape() {
            return Err(AbaError::shape(
                context,
                format!("{:?}", self.nodes[a.0].value.shape()),
                format!("{:?}", self.nodes[b.0].value.shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_shapes(a, b, "add")?;
        let mut v = self.nodes[a.0].value.clone();
        v.add_assign(&self.nodes[b.0].value)?;
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_shapes(a, b, "sub")?;
        let mut v = self.nodes[a.0].value.clone();
        v.add_scaled(&self.nodes[b.0].value, -T::one())?;
        self.push(v, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_shapes(a, b, "mul")?;
        let mut v = self.nodes[a.0].value.clone();
        for (x, y) in v.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *x *= *y;
        }
        self.push(v, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId> {
        let mut v = self.nodes[a.0].value.clone();
        v.scale_in_place(c);
        self.push(v, Op::Scale(a, c), "scale")
    }

    pub fn add_scalar(&mut self, a: NodeId, c: T) -> Result<NodeId> {
        let v = self.nodes[a.0].value.map(|x| x + c);
        self.push(v, Op::AddScalar(a, c), "add_scalar")
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.map(ops::softplus);
        self.push(v, Op::Softplus(a), "softplus")
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> Result<NodeId> {
        if !(0.0..1.0).contains(&slope) {
            return Err(AbaError::invalid(format!(
                "leaky_relu slope must be in [0, 1), got {}",
                slope
            )));
        }
        let v = ops::leaky_relu_forward(&self.nodes[a.0].value, slope);
        self.push(v, Op::LeakyRelu(a, slope), "leaky_relu")
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.leaky_relu(a, 0.0)
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        let v = ops::conv2d_forward(
            &self.nodes[input.0].value,
            &self.nodes[kernel.0].value,
            bias.map(|b| &self.nodes[b.0].value),
        )?;
        self.push(
            v,
            Op::Conv2d {
                input,
                kernel,
                bias,
            },
            "conv2d",
        )
    }

    pub fn max_pool2(&mut self, input: NodeId) -> Result<NodeId> {
        let (v, argmax) = ops::max_pool2_forward(&self.nodes[input.0].value)?;
        self.push(v, Op::MaxPool2 { input, argmax }, "max_pool2")
    }

    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        let v = ops::linear_forward(
            &self.nodes[input.0].value,
            &self.nodes[weight.0].value,
            bias.map(|b| &self.nodes[b.0].value),
        )?;
        self.push(
            v,
            Op::Linear {
                input,
                weight,
                bias,
            },
            "linear",
        )
    }

    /// Reshape to `[batch, rest]`, keeping the leading axis.
    pub fn flatten(&mut self, input: NodeId) -> Result<NodeId> {
        let shape = self.nodes[input.0].value.shape().to_vec();
        if shape.is_empty() {
            return Err(AbaError::invalid("flatten on scalar"));
        }
        let rest: usize = shape[1..].iter().product();
        let v = self.nodes[input.0]
            .value
            .clone()
            .reshaped(&[shape[0], rest])?;
        self.push(v, Op::Flatten(input), "flatten")
    }

    /// Sum of every element, as a scalar node.
    pub fn sum_all(&mut self, input: NodeId) -> Result<NodeId> {
        let v = crate::linalg::sum_lanes(self.nodes[input.0].value.data());
        self.push(Tensor::scalar(v), Op::SumAll(input), "sum_all")
    }

    pub fn softmax(&mut self, logits: NodeId) -> Result<NodeId> {
        let v = ops::softmax_forward(&self.nodes[logits.0].value)?;
        self.push(v, Op::Softmax(logits), "softmax")
    }

    pub fn log_softmax_nll(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let v = ops::log_softmax_nll_forward(&self.nodes[logits.0].value, labels)?;
        self.push(
            Tensor::scalar(v),
            Op::LogSoftmaxNll {
                logits,
                labels: labels.to_vec(),
            },
            "log_softmax_nll",
        )
    }

    pub fn kl_categorical(&mut self, p: NodeId, q: NodeId) -> Result<NodeId> {
        let v = ops::kl_categorical_forward(&self.nodes[p.0].value, &self.nodes[q.0].value)?;
        self.push(Tensor::scalar(v), Op::KlCategorical { p, q }, "kl_categorical")
    }

    pub fn gaussian_kl_prior(&mut self, mu: NodeId, rho: NodeId, prior_var: f64) -> Result<NodeId> {
        self.binary_shapes(mu, rho, "gaussian_kl_prior")?;
        if prior_var <= 0.0 {
            return Err(AbaError::invalid("prior variance must be positive"));
        }
        let v = ops::gaussian_kl_prior_forward(&self.nodes[mu.0].value, &self.nodes[rho.0].value, prior_var);
        self.push(
            Tensor::scalar(v),
            Op::GaussianKlPrior { mu, rho, prior_var },
            "gaussian_kl_prior",
        )
    }

    /// Reverse pass from a scalar loss. Leaves untouched by the loss get no
    /// gradient entry; read them with [`Gradients::get_or_zeros`].
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(AbaError::invalid(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            if grads[i].is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            let g = grads[i].take().unwrap();
            self.apply_backward(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Tensor<T>>],
        target: NodeId,
        contribution: Tensor<T>,
    ) -> Result<()> {
        if !self.nodes[target.0].needs_grad {
            return Ok(());
        }
        match &mut grads[target.0] {
            Some(existing) => existing.add_assign(&contribution)?,
            slot @ None => *slot = Some(contribution),
        }
        Ok(())
    }

    fn apply_backward(
        &self,
        node: usize,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                let mut neg = g.clone();
                neg.scale_in_place(-T::one());
                self.accumulate(grads, *b, neg)?;
            }
            Op::Mul(a, b) => {
                let mut da = g.clone();
                for (x, y) in da.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
                    *x *= *y;
                }
                let mut db = g.clone();
                for (x, y) in db.data_mut().iter_mut().zip(self.nodes[a.0].value.data()) {
                    *x *= *y;
                }
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *b, db)?;
            }
            Op::Scale(a, c) => {
                let mut da = g.clone();
                da.scale_in_place(*c);
                self.accumulate(grads, *a, da)?;
            }
            Op::AddScalar(a, _) => {
                self.accumulate(grads, *a, g.clone())?;
            }
            Op::Softplus(a) => {
                let mut da = g.clone();
                for (x, &v) in da.data_mut().iter_mut().zip(self.nodes[a.0].value.data()) {
                    *x *= ops::sigmoid(v);
                }
                self.accumulate(grads, *a, da)?;
            }
            Op::LeakyRelu(a, slope) => {
                let da = ops::leaky_relu_backward(&self.nodes[a.0].value, g, *slope);
                self.accumulate(grads, *a, da)?;
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
            } => {
                let need_input = self.nodes[input.0].needs_grad;
                let need_kernel = self.nodes[kernel.0].needs_grad;
                let need_bias = bias.map(|b| self.nodes[b.0].needs_grad).unwrap_or(false);
                let gr = ops::conv2d_backward(
                    &self.nodes[input.0].value,
                    &self.nodes[kernel.0].value,
                    g,
                    need_input,
                    need_kernel,
                    need_bias,
                )?;
                if let Some(dx) = gr.d_input {
                    self.accumulate(grads, *input, dx)?;
                }
                if let Some(dw) = gr.d_kernel {
                    self.accumulate(grads, *kernel, dw)?;
                }
                if let (Some(db), Some(b)) = (gr.d_bias, bias) {
                    self.accumulate(grads, *b, db)?;
                }
            }
            Op::MaxPool2 { input, argmax } => {
                let dx =
                    ops::max_pool2_backward(self.nodes[input.0].value.shape(), argmax, g);
                self.accumulate(grads, *input, dx)?;
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let need_input = self.nodes[input.0].needs_grad;
                let need_weight = self.nodes[weight.0].needs_grad;
                let need_bias = bias.map(|b| self.nodes[b.0].needs_grad).unwrap_or(false);
                let gr = ops::linear_backward(
                    &self.nodes[input.0].value,
                    &self.nodes[weight.0].value,
                    g,
                    need_input,
                    need_weight,
                    need_bias,
                )?;
                if let Some(dx) = gr.d_input {
                    self.accumulate(grads, *input, dx)?;
                }
                if let Some(dw) = gr.d_weight {
                    self.accumulate(grads, *weight, dw)?;
                }
                if let (Some(db), Some(b)) = (gr.d_bias, bias) {
                    self.accumulate(grads, *b, db)?;
                }
            }
            Op::Flatten(input) => {
                let dx = g.clone().reshaped(self.nodes[input.0].value.shape())?;
                self.accumulate(grads, *input, dx)?;
            }
            Op::SumAll(input) => {
                let dx = Tensor::filled(self.nodes[input.0].value.shape(), g.item());
                self.accumulate(grads, *input, dx)?;
            }
            Op::Softmax(logits) => {
                let dx = ops::softmax_backward(&self.nodes[node].value, g);
                self.accumulate(grads, *logits, dx)?;
            }
            Op::LogSoftmaxNll { logits, labels } => {
                let dx =
                    ops::log_softmax_nll_backward(&self.nodes[logits.0].value, labels, g.item());
                self.accumulate(grads, *logits, dx)?;
            }
            Op::KlCategorical { p, q } => {
                let (dp, dq) = ops::kl_categorical_backward(
                    &self.nodes[p.0].value,
                    &self.nodes[q.0].value,
                    g.item(),
                );
                self.accumulate(grads, *p, dp)?;
                self.accumulate(grads, *q, dq)?;
            }
            Op::GaussianKlPrior { mu, rho, prior_var } => {
                let (dmu, drho) = ops::gaussian_kl_prior_backward(
                    &self.nodes[mu.0].value,
                    &self.nodes[rho.0].value,
                    *prior_var,
                    g.item(),
                );
                self.accumulate(grads, *mu, dmu)?;
                self.accumulate(grads, *rho, drho)?;
            }
        }
        Ok(())
    }
}

fn op_parents<T>(op: &Op<T>) -> Vec<NodeId> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
        Op::Scale(a, _) | Op::AddScalar(a, _) | Op::Softplus(a) | Op::LeakyRelu(a, _) => vec![*a],
        Op::Conv2d {
            input,
            kernel,
            bias,
        } => {
            let mut v = vec![*input, *kernel];
            if let Some(b) = bias {
                v.push(*b);
            }
            v
        }
        Op::MaxPool2 { input, .. } | Op::Flatten(input) | Op::SumAll(input) | Op::Softmax(input) => {
            vec![*input]
        }
        Op::Linear {
            input,
            weight,
            bias,
        } => {
            let mut v = vec![*input, *weight];
            if let Some(b) = bias {
                v.push(*b);
            }
            v
        }
        Op::LogSoftmaxNll { logits, .. } => vec![*logits],
        Op::KlCategorical { p, q } => vec![*p, *q],
        Op::GaussianKlPrior { mu, rho, .. } => vec![*mu, *rho],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        // loss = x * x at x = 3 -> dloss/dx = 6
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0f64));
        let loss = g.mul(x, x).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn untouched_leaf_gets_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0f64));
        let w = g.leaf(Tensor::scalar(5.0f64));
        let loss = g.mul(x, x).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(w).is_none());
        assert_eq!(grads.get_or_zeros(w, &[]).item(), 0.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::<f64>::zeros(&[2, 2]));
        let y = g.add(x, x).unwrap();
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn constant_accumulates_no_grad() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(3.0f64));
        let loss = g.mul(x, x).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn non_finite_forward_is_error() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.0e308f64));
        assert!(g.scale(x, 10.0).is_err());
    }
}
