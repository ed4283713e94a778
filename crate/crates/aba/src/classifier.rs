//! The classifier f(x; theta): a small descriptor-driven CNN with a logits
//! head and a penultimate feature tap.

use crate::error::{AbaError, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::{self, Stream};
use crate::tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv { out: usize, k: usize },
    Relu,
    MaxPool2,
    Flatten,
    Fc { out: usize },
}

/// Architecture descriptor: input shape, class count and the layer sequence.
/// The last layer must be the `Fc` producing the logits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub name: String,
    pub input: (usize, usize, usize),
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Desk-scale default: two conv/pool stages and a 128-wide head.
    pub fn desknet(input: (usize, usize, usize), classes: usize) -> Self {
        Architecture {
            name: "desknet".to_string(),
            input,
            classes,
            layers: vec![
                LayerSpec::Conv { out: 32, k: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Conv { out: 64, k: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Fc { out: 128 },
                LayerSpec::Relu,
                LayerSpec::Fc { out: classes },
            ],
        }
    }

    /// Larger digit-net style descriptor: 5x5 convs and 1024-wide head.
    pub fn digitnet_like(input: (usize, usize, usize), classes: usize) -> Self {
        Architecture {
            name: "digitnet-like".to_string(),
            input,
            classes,
            layers: vec![
                LayerSpec::Conv { out: 64, k: 5 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Conv { out: 128, k: 5 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Fc { out: 1024 },
                LayerSpec::Relu,
                LayerSpec::Fc { out: classes },
            ],
        }
    }

    /// Walk the layer list and return, per parameterized layer, its name and
    /// the (weight, bias, fan_in) shapes. Errors on inconsistent chains.
    pub fn param_plan(&self) -> Result<Vec<ParamPlan>> {
        let (mut c, mut h, mut w) = self.input;
        let mut flat: Option<usize> = None;
        let mut plan = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv { out, k } => {
                    if flat.is_some() {
                        return Err(AbaError::invalid("conv after flatten"));
                    }
                    if k % 2 == 0 {
                        return Err(AbaError::invalid(format!("even conv kernel {}", k)));
                    }
                    plan.push(ParamPlan {
                        name: format!("layer{}.conv", i),
                        weight_shape: vec![*out, c, *k, *k],
                        bias_shape: vec![*out],
                        fan_in: c * k * k,
                    });
                    c = *out;
                }
                LayerSpec::Relu => {}
                LayerSpec::MaxPool2 => {
                    if flat.is_some() {
                        return Err(AbaError::invalid("pool after flatten"));
                    }
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(AbaError::invalid(format!(
                            "pool on odd extent {}x{}",
                            h, w
                        )));
                    }
                    h /= 2;
                    w /= 2;
                }
                LayerSpec::Flatten => {
                    flat = Some(c * h * w);
                }
                LayerSpec::Fc { out } => {
                    let d_in = flat.ok_or_else(|| AbaError::invalid("fc before flatten"))?;
                    plan.push(ParamPlan {
                        name: format!("layer{}.fc", i),
                        weight_shape: vec![*out, d_in],
                        bias_shape: vec![*out],
                        fan_in: d_in,
                    });
                    flat = Some(*out);
                }
            }
        }
        match (flat, self.layers.last()) {
            (Some(width), Some(LayerSpec::Fc { .. })) if width == self.classes => Ok(plan),
            _ => Err(AbaError::invalid(
                "architecture must end in an Fc layer with `classes` outputs",
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.param_plan().map(|_| ())
    }

    /// Width of the activations entering the final FC layer.
    pub fn penultimate_width(&self) -> Result<usize> {
        let plan = self.param_plan()?;
        let last = plan.last().expect("validated architecture has an fc");
        Ok(last.weight_shape[1])
    }
}

pub struct ParamPlan {
    pub name: String,
    pub weight_shape: Vec<usize>,
    pub bias_shape: Vec<usize>,
    pub fan_in: usize,
}

/// Classifier weights in layer order: weight then bias per parameterized layer.
#[derive(Debug, Clone)]
pub struct ClassifierParams<T> {
    pub arch: Architecture,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ClassifierParams<T> {
    /// Named views over the tensors, matching `param_plan` order.
    pub fn named(&self) -> Result<Vec<(String, &Tensor<T>)>> {
        let plan = self.arch.param_plan()?;
        let mut out = Vec::with_capacity(plan.len() * 2);
        for (i, p) in plan.iter().enumerate() {
            out.push((format!("{}.weight", p.name), &self.tensors[2 * i]));
            out.push((format!("{}.bias", p.name), &self.tensors[2 * i + 1]));
        }
        Ok(out)
    }

    /// A cheap order-sensitive digest of all parameters, for determinism checks.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tensors {
            for v in t.data() {
                h ^= v.as_f64().to_bits();
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        }
        h
    }
}

/// He initialization: weights from N(0, 2/fan_in), biases exactly zero.
pub fn init_classifier<T: Scalar>(arch: &Architecture, rng: &mut Stream) -> Result<ClassifierParams<T>> {
    let plan = arch.param_plan()?;
    let mut tensors = Vec::with_capacity(plan.len() * 2);
    for p in &plan {
        let std = (2.0 / p.fan_in as f64).sqrt();
        tensors.push(rng::normal_tensor(&p.weight_shape, std, rng));
        tensors.push(Tensor::zeros(&p.bias_shape));
    }
    Ok(ClassifierParams {
        arch: arch.clone(),
        tensors,
    })
}

/// Insert all parameter tensors into a graph, as leaves (trainable) or
/// constants (frozen), returning the node ids in tensor order.
pub fn insert_params<T: Scalar>(
    g: &mut Graph<T>,
    params: &ClassifierParams<T>,
    trainable: bool,
) -> Vec<NodeId> {
    params
        .tensors
        .iter()
        .map(|t| {
            if trainable {
                g.leaf(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
        .collect()
}

pub struct ClassifierNodes {
    pub logits: NodeId,
    pub features: NodeId,
}

/// Build the forward pass on a graph. `param_ids` must come from
/// [`insert_params`] on the same architecture. `features` is the activation
/// entering the final FC layer.
pub fn forward_on_graph<T: Scalar>(
    g: &mut Graph<T>,
    arch: &Architecture,
    param_ids: &[NodeId],
    images: NodeId,
) -> Result<ClassifierNodes> {
    let mut x = images;
    let mut pi = 0;
    let mut features = None;
    let n_layers = arch.layers.len();
    for (i, layer) in arch.layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv { .. } => {
                x = g.conv2d(x, param_ids[pi], Some(param_ids[pi + 1]))?;
                pi += 2;
            }
            LayerSpec::Relu => {
                x = g.relu(x)?;
            }
            LayerSpec::MaxPool2 => {
                x = g.max_pool2(x)?;
            }
            LayerSpec::Flatten => {
                x = g.flatten(x)?;
            }
            LayerSpec::Fc { .. } => {
                if i + 1 == n_layers {
                    features = Some(x);
                }
                x = g.linear(x, param_ids[pi], Some(param_ids[pi + 1]))?;
                pi += 2;
            }
        }
    }
    Ok(ClassifierNodes {
        logits: x,
        features: features.ok_or_else(|| AbaError::invalid("architecture has no final fc"))?,
    })
}

/// Inference walk without graph bookkeeping: activations mutate in place and
/// nothing is retained for a backward pass. Applies the identical kernels in
/// the identical order as the graph path, so outputs are bit-equal to it.
fn infer<T: Scalar>(
    params: &ClassifierParams<T>,
    images: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let arch = &params.arch;
    let mut x = images.clone();
    let mut pi = 0;
    let mut features = None;
    let n_layers = arch.layers.len();
    for (i, layer) in arch.layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv { .. } => {
                x = crate::ops::conv2d_forward(&x, &params.tensors[pi], Some(&params.tensors[pi + 1]))?;
                pi += 2;
            }
            LayerSpec::Relu => {
                for v in x.data_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
            LayerSpec::MaxPool2 => {
                x = crate::ops::max_pool2_forward(&x)?.0;
            }
            LayerSpec::Flatten => {
                let b = x.shape()[0];
                let rest: usize = x.shape()[1..].iter().product();
                x = x.reshaped(&[b, rest])?;
            }
            LayerSpec::Fc { .. } => {
                if i + 1 == n_layers {
                    features = Some(x.clone());
                }
                x = crate::ops::linear_forward(&x, &params.tensors[pi], Some(&params.tensors[pi + 1]))?;
                pi += 2;
            }
        }
    }
    if !x.all_finite() {
        return Err(AbaError::NonFinite {
            context: "classifier forward".into(),
        });
    }
    let features = features.ok_or_else(|| AbaError::invalid("architecture has no final fc"))?;
    Ok((x, features))
}

/// Logits for a batch; the plain inference path.
pub fn forward<T: Scalar>(params: &ClassifierParams<T>, images: &Tensor<T>) -> Result<Tensor<T>> {
    infer(params, images).map(|(logits, _)| logits)
}

/// Penultimate activations (the input to the final FC layer) for a batch.
pub fn features<T: Scalar>(params: &ClassifierParams<T>, images: &Tensor<T>) -> Result<Tensor<T>> {
    infer(params, images).map(|(_, features)| features)
}
