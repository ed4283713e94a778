//! Random-convolution augmentation: one conv layer whose weights are freshly
//! sampled from a fixed zero-mean Gaussian, applied and clamped.

use crate::error::{AbaError, Result};
use crate::ops;
use crate::rng::{self, Stream};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

/// Draw the kernel: k uniform from the choice set, entries i.i.d. from
/// N(0, 1/(C*k*k)).
pub fn sample_randconv_kernel<T: Scalar>(
    channels: usize,
    kernel_choices: &[usize],
    rng: &mut Stream,
) -> Result<Tensor<T>> {
    if kernel_choices.is_empty() {
        return Err(AbaError::invalid("kernel choice set is empty"));
    }
    let k = kernel_choices[rng.gen_range(0..kernel_choices.len())];
    let std = super::prior_variance(k, channels).sqrt();
    Ok(rng::normal_tensor(&[channels, channels, k, k], std, rng))
}

/// One freshly sampled convolution, clamped to [0, 1].
pub fn randconv_augment<T: Scalar>(
    images: &Tensor<T>,
    kernel_choices: &[usize],
    rng: &mut Stream,
) -> Result<Tensor<T>> {
    if images.shape().len() != 4 {
        return Err(AbaError::shape("randconv", "B x C x H x W", format!("{:?}", images.shape())));
    }
    let kernel = sample_randconv_kernel::<T>(images.shape()[1], kernel_choices, rng)?;
    let mut out = ops::conv2d_forward(images, &kernel, None)?;
    out.clamp01();
    Ok(out)
}
