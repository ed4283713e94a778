//! Deterministic adversarial conv stack: same structure as the Bayesian
//! augmenter but with point weights, fitted by gradient *ascent* on the
//! classifier's cross-entropy. A simplified comparison family.

use super::{prior_variance, stack_forward, stack_forward_on_graph, AugmenterSpec};
use crate::classifier::{self, ClassifierParams};
use crate::error::{AbaError, Result};
use crate::graph::Graph;
use crate::rng::{self, Stream};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct AltStack<T> {
    pub spec: AugmenterSpec,
    pub weights: Vec<Tensor<T>>,
    pub kernel_sizes: Vec<usize>,
}

/// Point weights drawn from the same per-layer distribution as the Bayesian
/// augmenter's means.
pub fn init_altlite<T: Scalar>(spec: &AugmenterSpec, rng: &mut Stream) -> Result<AltStack<T>> {
    spec.validate()?;
    let mut weights = Vec::with_capacity(spec.layers);
    let mut kernel_sizes = Vec::with_capacity(spec.layers);
    for l in 0..spec.layers {
        let (c_in, c_out) = spec.channels(l);
        let k = spec.kernel_choices[rng.gen_range(0..spec.kernel_choices.len())];
        let std = prior_variance(k, c_in).sqrt();
        weights.push(rng::normal_tensor(&[c_out, c_in, k, k], std, rng));
        kernel_sizes.push(k);
    }
    Ok(AltStack {
        spec: spec.clone(),
        weights,
        kernel_sizes,
    })
}

impl<T: Scalar> AltStack<T> {
    pub fn apply(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        stack_forward(images, &self.weights, self.spec.leaky_slope)
    }
}

/// `t_adv` gradient-ascent steps on the cross-entropy of the classifier on
/// the augmented batch; `t_adv == 0` leaves the weights unchanged.
pub fn altlite_fit<T: Scalar>(
    stack: &mut AltStack<T>,
    clf: &ClassifierParams<T>,
    images: &Tensor<T>,
    labels: &[usize],
    adv_lr: f64,
    t_adv: usize,
) -> Result<super::FitReport> {
    if adv_lr <= 0.0 {
        return Err(AbaError::invalid("adversarial learning rate must be > 0"));
    }
    let mut report = super::FitReport {
        initial_loss: f64::NAN,
        final_loss: f64::NAN,
        initial_ce: f64::NAN,
        final_ce: f64::NAN,
        steps: t_adv,
    };
    let lr = T::from_f64(adv_lr);
    for step in 0..t_adv {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let clf_ids = classifier::insert_params(&mut g, clf, false);
        let weight_ids: Vec<_> = stack.weights.iter().map(|w| g.leaf(w.clone())).collect();
        let aug = stack_forward_on_graph(&mut g, x, &weight_ids, stack.spec.leaky_slope)?;
        let logits = classifier::forward_on_graph(&mut g, &clf.arch, &clf_ids, aug)?.logits;
        let ce = g.log_softmax_nll(logits, labels)?;
        let ce_val = g.value(ce).item().as_f64();
        if !ce_val.is_finite() {
            return Err(AbaError::NonFinite {
                context: format!("altlite episode step {}", step),
            });
        }
        if step == 0 {
            report.initial_ce = ce_val;
            report.initial_loss = ce_val;
        }
        report.final_ce = ce_val;
        report.final_loss = ce_val;
        let grads = g.backward(ce)?;
        for (w, &id) in stack.weights.iter_mut().zip(weight_ids.iter()) {
            let gw = grads.get_or_zeros(id, w.shape());
            w.add_scaled(&gw, lr)?;
        }
    }
    Ok(report)
}
