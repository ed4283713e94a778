//! The Bayesian convolutional augmenter and its per-iteration adversarial fit.
//!
//! Each training iteration runs one *episode*: re-initialize the variational
//! parameters, take `t_adv` gradient steps on the evidence lower bound so the
//! augmented images fool the classifier, then sample concrete weights and
//! discard the episode.

use super::{prior_variance, stack_forward, stack_forward_on_graph, AugmenterSpec};
use crate::classifier::{self, ClassifierParams};
use crate::error::{AbaError, Result};
use crate::graph::{Graph, NodeId};
use crate::ops;
use crate::optim::Optimizer;
use crate::rng::{self, Stream};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

/// Episode initialization draws sigma at this fraction of the prior std, so
/// the augmenter starts near-deterministic at a RandConv-like weight scale.
pub const INIT_SIGMA_SCALE: f64 = 0.1;

/// Per-layer variational posterior: mean and pre-softplus spread of the
/// kernel entries, plus the prior they are pulled against.
#[derive(Debug, Clone)]
pub struct VariationalLayer<T> {
    pub mu: Tensor<T>,
    pub rho: Tensor<T>,
    pub kernel_size: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl<T: Scalar> VariationalLayer<T> {
    pub fn prior_var(&self) -> f64 {
        prior_variance(self.kernel_size, self.c_in)
    }

    pub fn sigma(&self) -> Tensor<T> {
        self.rho.map(ops::softplus)
    }
}

/// The whole posterior: spec plus one `VariationalLayer` per layer, with this
/// episode's sampled kernel sizes baked into the layer shapes.
#[derive(Debug, Clone)]
pub struct AugmenterState<T> {
    pub spec: AugmenterSpec,
    pub layers: Vec<VariationalLayer<T>>,
}

/// One concrete weight draw and the noise that produced it.
#[derive(Debug, Clone)]
pub struct ConcreteWeights<T> {
    pub phi: Vec<Tensor<T>>,
    pub eps: Vec<Tensor<T>>,
}

/// Fresh episode: kernel sizes drawn per layer from the choice set, mu from
/// the layer prior, sigma at `INIT_SIGMA_SCALE` times the prior std. No biases.
pub fn init_episode<T: Scalar>(spec: &AugmenterSpec, rng: &mut Stream) -> Result<AugmenterState<T>> {
    spec.validate()?;
    let mut layers = Vec::with_capacity(spec.layers);
    for l in 0..spec.layers {
        let (c_in, c_out) = spec.channels(l);
        let k = spec.kernel_choices[rng.gen_range(0..spec.kernel_choices.len())];
        let prior_std = prior_variance(k, c_in).sqrt();
        let mu = rng::normal_tensor(&[c_out, c_in, k, k], prior_std, rng);
        let rho_val = T::from_f64(ops::softplus_inv(INIT_SIGMA_SCALE * prior_std));
        let rho = Tensor::filled(&[c_out, c_in, k, k], rho_val);
        layers.push(VariationalLayer {
            mu,
            rho,
            kernel_size: k,
            c_in,
            c_out,
        });
    }
    Ok(AugmenterState {
        spec: spec.clone(),
        layers,
    })
}

/// Reparameterized draw phi = mu + softplus(rho) * eps with fresh standard
/// normal eps per layer.
pub fn sample_weights<T: Scalar>(state: &AugmenterState<T>, rng: &mut Stream) -> ConcreteWeights<T> {
    let mut phi = Vec::with_capacity(state.layers.len());
    let mut eps = Vec::with_capacity(state.layers.len());
    for layer in &state.layers {
        let e: Tensor<T> = rng::normal_tensor(layer.mu.shape(), 1.0, rng);
        let mut p = layer.mu.clone();
        for ((pv, &rv), &ev) in p
            .data_mut()
            .iter_mut()
            .zip(layer.rho.data().iter())
            .zip(e.data().iter())
        {
            *pv += ops::softplus(rv) * ev;
        }
        phi.push(p);
        eps.push(e);
    }
    ConcreteWeights { phi, eps }
}

/// Apply the stack with the given concrete weights. Output is shape-preserving
/// and deliberately unclamped; the trainer clamps at sampling time.
pub fn augment<T: Scalar>(
    state: &AugmenterState<T>,
    weights: &ConcreteWeights<T>,
    images: &Tensor<T>,
) -> Result<Tensor<T>> {
    if images.shape().len() != 4 || images.shape()[1] != state.spec.image_channels {
        return Err(AbaError::shape(
            "augment",
            format!("B x {} x H x W", state.spec.image_channels),
            format!("{:?}", images.shape()),
        ));
    }
    stack_forward(images, &weights.phi, state.spec.leaky_slope)
}

/// Closed-form KL(q || prior) summed over every weight of every layer.
pub fn kl_to_prior<T: Scalar>(state: &AugmenterState<T>) -> T {
    let mut total = T::zero();
    for layer in &state.layers {
        total += ops::gaussian_kl_prior_forward(&layer.mu, &layer.rho, layer.prior_var());
    }
    total
}

/// Sign of the KL term inside the descended inner-loop loss.
///
/// `Negative` is the evidence lower bound as defined (loss = -CE - beta*KL):
/// descending it raises both the classifier loss and the divergence from the
/// prior. `Positive` flips the KL term so descent pulls the posterior back
/// toward the prior while still raising the classifier loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum KlSign {
    Negative,
    Positive,
}

impl Default for KlSign {
    fn default() -> Self {
        KlSign::Negative
    }
}

/// Node ids of the episode parameters inside an inner-loop graph.
pub struct EpisodeRefs {
    pub mu_ids: Vec<NodeId>,
    pub rho_ids: Vec<NodeId>,
    pub phi_ids: Vec<NodeId>,
}

/// Pieces of the inner-loop loss, for logging and tests.
pub struct ElboParts {
    pub loss: NodeId,
    pub cross_entropy: NodeId,
    pub kl: Option<NodeId>,
    pub refs: EpisodeRefs,
}

/// Insert mu/rho leaves and the reparameterized phi nodes for the given noise.
pub fn reparam_on_graph<T: Scalar>(
    g: &mut Graph<T>,
    state: &AugmenterState<T>,
    eps: &[Tensor<T>],
) -> Result<EpisodeRefs> {
    let mut refs = EpisodeRefs {
        mu_ids: Vec::new(),
        rho_ids: Vec::new(),
        phi_ids: Vec::new(),
    };
    for (layer, e) in state.layers.iter().zip(eps.iter()) {
        let mu = g.leaf(layer.mu.clone());
        let rho = g.leaf(layer.rho.clone());
        let eps_node = g.constant(e.clone());
        let sigma = g.softplus(rho)?;
        let noise = g.mul(sigma, eps_node)?;
        let phi = g.add(mu, noise)?;
        refs.mu_ids.push(mu);
        refs.rho_ids.push(rho);
        refs.phi_ids.push(phi);
    }
    Ok(refs)
}

/// Build the inner-loop loss on `g`:
///
///   loss = -(mean log-likelihood of the labels under f on g(x))
///          -/+ beta * KL(q || prior)
///
/// with `mc_samples` Monte-Carlo draws of the weights averaged into the
/// likelihood term (one draw is the default the trainer uses). The classifier
/// enters as constants, so gradients reach only the episode parameters.
#[allow(clippy::too_many_arguments)]
pub fn elbo_loss<T: Scalar>(
    g: &mut Graph<T>,
    state: &AugmenterState<T>,
    clf: &ClassifierParams<T>,
    images: &Tensor<T>,
    labels: &[usize],
    beta: f64,
    kl_sign: KlSign,
    mc_samples: usize,
    rng: &mut Stream,
) -> Result<ElboParts> {
    if beta < 0.0 {
        return Err(AbaError::invalid("beta must be >= 0"));
    }
    let samples = mc_samples.max(1);
    let x = g.constant(images.clone());
    let clf_ids = classifier::insert_params(g, clf, false);

    // One set of parameter leaves, shared by every Monte-Carlo draw.
    let mut refs = EpisodeRefs {
        mu_ids: Vec::with_capacity(state.layers.len()),
        rho_ids: Vec::with_capacity(state.layers.len()),
        phi_ids: Vec::new(),
    };
    let mut sigma_ids = Vec::with_capacity(state.layers.len());
    for layer in &state.layers {
        let mu = g.leaf(layer.mu.clone());
        let rho = g.leaf(layer.rho.clone());
        let sigma = g.softplus(rho)?;
        refs.mu_ids.push(mu);
        refs.rho_ids.push(rho);
        sigma_ids.push(sigma);
    }

    let mut ce_total: Option<NodeId> = None;
    for _ in 0..samples {
        let mut phi_ids = Vec::with_capacity(state.layers.len());
        for (l, layer) in state.layers.iter().enumerate() {
            let eps: Tensor<T> = rng::normal_tensor(layer.mu.shape(), 1.0, rng);
            let eps_node = g.constant(eps);
            let noise = g.mul(sigma_ids[l], eps_node)?;
            phi_ids.push(g.add(refs.mu_ids[l], noise)?);
        }
        let aug = stack_forward_on_graph(g, x, &phi_ids, state.spec.leaky_slope)?;
        let logits = classifier::forward_on_graph(g, &clf.arch, &clf_ids, aug)?.logits;
        let ce = g.log_softmax_nll(logits, labels)?;
        ce_total = Some(match ce_total {
            Some(prev) => g.add(prev, ce)?,
            None => ce,
        });
        if refs.phi_ids.is_empty() {
            refs.phi_ids = phi_ids;
        }
    }
    let ce_total = ce_total.expect("at least one sample");
    let cross_entropy = if samples == 1 {
        ce_total
    } else {
        g.scale(ce_total, T::from_f64(1.0 / samples as f64))?
    };
    let mut loss = g.scale(cross_entropy, T::from_f64(-1.0))?;
    let mut kl_node = None;
    if beta > 0.0 {
        let mut kl: Option<NodeId> = None;
        for (l, layer) in state.layers.iter().enumerate() {
            let node = g.gaussian_kl_prior(refs.mu_ids[l], refs.rho_ids[l], layer.prior_var())?;
            kl = Some(match kl {
                Some(prev) => g.add(prev, node)?,
                None => node,
            });
        }
        let kl = kl.expect("at least one layer");
        let coeff = match kl_sign {
            KlSign::Negative => -beta,
            KlSign::Positive => beta,
        };
        let scaled = g.scale(kl, T::from_f64(coeff))?;
        loss = g.add(loss, scaled)?;
        kl_node = Some(kl);
    }
    Ok(ElboParts {
        loss,
        cross_entropy,
        kl: kl_node,
        refs,
    })
}

/// Diagnostics from one adversarial episode fit.
#[derive(Debug, Clone, Copy)]
pub struct FitReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub initial_ce: f64,
    pub final_ce: f64,
    pub steps: usize,
}

/// Take `t_adv` plain gradient-descent steps on the inner-loop loss with a
/// fresh weight draw each step, updating the episode parameters in place.
/// `t_adv == 0` is an allowed no-op. A non-finite loss aborts with the
/// episode diagnostics in the error.
#[allow(clippy::too_many_arguments)]
pub fn adversarial_fit<T: Scalar>(
    state: &mut AugmenterState<T>,
    clf: &ClassifierParams<T>,
    images: &Tensor<T>,
    labels: &[usize],
    adv_lr: f64,
    t_adv: usize,
    beta: f64,
    kl_sign: KlSign,
    rng: &mut Stream,
) -> Result<FitReport> {
    if adv_lr <= 0.0 {
        return Err(AbaError::invalid("adversarial learning rate must be > 0"));
    }
    let mut report = FitReport {
        initial_loss: f64::NAN,
        final_loss: f64::NAN,
        initial_ce: f64::NAN,
        final_ce: f64::NAN,
        steps: t_adv,
    };
    let mut opt = Optimizer::sgd(adv_lr);
    for step in 0..t_adv {
        let mut g = Graph::new();
        let parts = elbo_loss(&mut g, state, clf, images, labels, beta, kl_sign, 1, rng)?;
        let loss_val = g.value(parts.loss).item().as_f64();
        let ce_val = g.value(parts.cross_entropy).item().as_f64();
        if !loss_val.is_finite() {
            return Err(AbaError::NonFinite {
                context: format!("adversarial episode step {}", step),
            });
        }
        if step == 0 {
            report.initial_loss = loss_val;
            report.initial_ce = ce_val;
        }
        report.final_loss = loss_val;
        report.final_ce = ce_val;
        let grads = g.backward(parts.loss)?;
        let mut params: Vec<&mut Tensor<T>> = Vec::with_capacity(state.layers.len() * 2);
        let mut grad_list: Vec<Tensor<T>> = Vec::with_capacity(state.layers.len() * 2);
        for (l, layer) in state.layers.iter_mut().enumerate() {
            grad_list.push(grads.get_or_zeros(parts.refs.mu_ids[l], layer.mu.shape()));
            grad_list.push(grads.get_or_zeros(parts.refs.rho_ids[l], layer.rho.shape()));
            params.push(&mut layer.mu);
            params.push(&mut layer.rho);
        }
        opt.step(&mut params, &grad_list)?;
    }
    Ok(report)
}

/// Mean cross-entropy of the classifier on one fresh augmented draw; the
/// quantity the adversarial fit is trying to raise.
pub fn augmented_cross_entropy<T: Scalar>(
    state: &AugmenterState<T>,
    clf: &ClassifierParams<T>,
    images: &Tensor<T>,
    labels: &[usize],
    rng: &mut Stream,
) -> Result<f64> {
    let weights = sample_weights(state, rng);
    let aug = augment(state, &weights, images)?;
    let logits = classifier::forward(clf, &aug)?;
    Ok(ops::log_softmax_nll_forward(&logits, labels)?.as_f64())
}
