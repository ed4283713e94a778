//! Image-to-image augmentation families.
//!
//! Three families share the same convolutional stack shape: the Bayesian
//! augmenter (`bayes`, the one fitted adversarially per training iteration),
//! plain random convolutions (`randconv`), and a deterministic adversarial
//! stack (`altlite`) kept around for comparison runs.

mod altlite;
mod bayes;
mod randconv;

pub use altlite::{altlite_fit, init_altlite, AltStack};
pub use bayes::{
    adversarial_fit, augment, augmented_cross_entropy, elbo_loss, init_episode, kl_to_prior,
    reparam_on_graph, sample_weights, AugmenterState, ConcreteWeights, ElboParts, EpisodeRefs,
    FitReport, KlSign, VariationalLayer, INIT_SIGMA_SCALE,
};
pub use randconv::{randconv_augment, sample_randconv_kernel};

use crate::error::{AbaError, Result};
use crate::graph::{Graph, NodeId};
use crate::ops;
use crate::tensor::{Scalar, Tensor};

/// Structure of an augmenter stack: layer count, the kernel-size choice set,
/// interior width, and the image channel count the first/last layers must
/// match.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmenterSpec {
    pub layers: usize,
    pub kernel_choices: Vec<usize>,
    pub hidden_width: usize,
    pub image_channels: usize,
    pub leaky_slope: f64,
}

impl AugmenterSpec {
    pub fn new(layers: usize, image_channels: usize) -> Self {
        AugmenterSpec {
            layers,
            kernel_choices: vec![1, 3, 5, 7],
            hidden_width: 32,
            image_channels,
            leaky_slope: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(AbaError::invalid("augmenter needs at least one layer"));
        }
        if self.kernel_choices.is_empty() {
            return Err(AbaError::invalid("kernel choice set is empty"));
        }
        if let Some(&k) = self.kernel_choices.iter().find(|&&k| k % 2 == 0 || k == 0) {
            return Err(AbaError::invalid(format!(
                "kernel choices must be odd and >= 1, got {}",
                k
            )));
        }
        if self.hidden_width == 0 || self.image_channels == 0 {
            return Err(AbaError::invalid("zero-width augmenter layer"));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(AbaError::invalid(format!(
                "leaky slope must be in [0, 1), got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    /// (C_in, C_out) of layer `l`; first and last match the image channels.
    pub fn channels(&self, l: usize) -> (usize, usize) {
        let c = self.image_channels;
        let w = self.hidden_width;
        let c_in = if l == 0 { c } else { w };
        let c_out = if l + 1 == self.layers { c } else { w };
        (c_in, c_out)
    }
}

/// He-style prior variance of a conv layer with the given fan-in.
pub fn prior_variance(kernel_size: usize, c_in: usize) -> f64 {
    1.0 / (kernel_size * kernel_size * c_in) as f64
}

/// Run a conv stack: LeakyReLU between layers, no activation after the last
/// (outputs span the full real line; clamping happens at sampling time).
pub fn stack_forward<T: Scalar>(
    images: &Tensor<T>,
    weights: &[Tensor<T>],
    slope: f64,
) -> Result<Tensor<T>> {
    let mut x = images.clone();
    let last = weights.len() - 1;
    for (l, w) in weights.iter().enumerate() {
        x = ops::conv2d_forward(&x, w, None)?;
        if l != last {
            x = ops::leaky_relu_forward(&x, slope);
        }
    }
    Ok(x)
}

/// Graph version of [`stack_forward`] for paths that need gradients.
pub fn stack_forward_on_graph<T: Scalar>(
    g: &mut Graph<T>,
    images: NodeId,
    weight_ids: &[NodeId],
    slope: f64,
) -> Result<NodeId> {
    let mut x = images;
    let last = weight_ids.len() - 1;
    for (l, &w) in weight_ids.iter().enumerate() {
        x = g.conv2d(x, w, None)?;
        if l != last {
            x = g.leaky_relu(x, slope)?;
        }
    }
    Ok(x)
}
