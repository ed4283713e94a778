//! The training loop: warmup ERM, per-iteration adversarial episodes,
//! two-sample Bayesian augmentation with clamping, and the classifier update
//! with cross-entropy plus consistency regularization. Baseline modes (ERM,
//! RandConv, ALT-lite and the combo variants) share the same loop skeleton.

use crate::augment::{
    self, adversarial_fit, init_altlite, init_episode, randconv_augment, sample_weights,
    AugmenterSpec, KlSign,
};
use crate::classifier::{self, Architecture, ClassifierParams};
use crate::data::{Batcher, DomainDataset};
use crate::error::{AbaError, Result};
use crate::graph::Graph;
use crate::ops;
use crate::optim::Optimizer;
use crate::rng::{stream, StreamKind};
use crate::tensor::{Scalar, Tensor};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Erm,
    Aba,
    RandConv,
    AltLite,
    AbaRandConv,
    AbaAugmenter2,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Erm => "erm",
            Mode::Aba => "aba",
            Mode::RandConv => "randconv",
            Mode::AltLite => "altlite",
            Mode::AbaRandConv => "aba+randconv",
            Mode::AbaAugmenter2 => "aba+augmenter2",
        }
    }

    pub fn uses_episodes(self) -> bool {
        matches!(self, Mode::Aba | Mode::AbaRandConv | Mode::AbaAugmenter2)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = AbaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erm" => Ok(Mode::Erm),
            "aba" => Ok(Mode::Aba),
            "randconv" => Ok(Mode::RandConv),
            "altlite" => Ok(Mode::AltLite),
            "aba+randconv" => Ok(Mode::AbaRandConv),
            "aba+augmenter2" => Ok(Mode::AbaAugmenter2),
            other => Err(AbaError::invalid(format!("unknown mode `{}`", other))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SecondSample {
    Bayes,
    RandConv,
}

impl FromStr for SecondSample {
    type Err = AbaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayes" => Ok(SecondSample::Bayes),
            "randconv" => Ok(SecondSample::RandConv),
            other => Err(AbaError::invalid(format!("unknown second-sample source `{}`", other))),
        }
    }
}

/// Whether metric rows carry measured wall-clock. `Deterministic` writes 0.0
/// so identical runs produce byte-identical logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    Deterministic,
    Real,
}

/// Every scalar knob of the training procedure.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub warmup: usize,
    pub adv_steps: usize,
    pub adv_lr: f64,
    pub classifier_lr: f64,
    pub consistency_weight: f64,
    pub elbo_beta: f64,
    pub batch_size: usize,
    pub mode: Mode,
    pub second_sample: SecondSample,
    pub num_bayes_samples: usize,
    pub kl_sign: KlSign,
    pub clean_ce: bool,
    pub eval_interval: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// The digit-benchmark defaults: T = 10000, B = 512, gamma = 1e-4,
    /// alpha = 3, eta = 5e-6, T_adv = 10, T_warmup = 5, beta = 1.
    pub fn digits_defaults() -> Self {
        TrainConfig {
            iterations: 10_000,
            warmup: 5,
            adv_steps: 10,
            adv_lr: 5e-6,
            classifier_lr: 1e-4,
            consistency_weight: 3.0,
            elbo_beta: 1.0,
            batch_size: 512,
            mode: Mode::Aba,
            second_sample: SecondSample::Bayes,
            num_bayes_samples: 2,
            kl_sign: KlSign::Negative,
            clean_ce: false,
            eval_interval: 0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup > self.iterations {
            return Err(AbaError::invalid(format!(
                "warmup {} exceeds iterations {}",
                self.warmup, self.iterations
            )));
        }
        if self.adv_lr <= 0.0 || self.classifier_lr <= 0.0 {
            return Err(AbaError::invalid("learning rates must be > 0"));
        }
        if self.consistency_weight < 0.0 || self.elbo_beta < 0.0 {
            return Err(AbaError::invalid("alpha and beta must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(AbaError::invalid("batch size must be >= 1"));
        }
        if self.num_bayes_samples == 0 {
            return Err(AbaError::invalid("num_bayes_samples must be >= 1"));
        }
        Ok(())
    }

    /// Default checkpoint schedule: 20 evaluation points across the run.
    pub fn effective_eval_interval(&self) -> usize {
        if self.eval_interval > 0 {
            self.eval_interval
        } else {
            (self.iterations / 20).max(1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Main,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Main => "main",
        }
    }
}

/// One row of the training log. `accuracy` is filled at eval checkpoints,
/// ordered like the eval-domain list passed to `train`.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub iteration: usize,
    pub phase: Phase,
    pub loss_cls: f64,
    pub loss_kl: f64,
    pub loss_elbo_final: f64,
    pub fallback: bool,
    pub accuracy: Option<Vec<f64>>,
    pub wall_clock_s: f64,
}

pub struct TrainOutcome<T> {
    pub params: ClassifierParams<T>,
    pub metrics: Vec<MetricsRow>,
    pub eval_domains: Vec<String>,
}

/// The three softmax predictions of one iteration and their exact mean.
#[derive(Debug, Clone)]
pub struct PredTriple<T> {
    pub p_clean: Tensor<T>,
    pub p_aug1: Tensor<T>,
    pub p_aug2: Tensor<T>,
    pub p_mean: Tensor<T>,
}

impl<T: Scalar> PredTriple<T> {
    pub fn new(p_clean: Tensor<T>, p_aug1: Tensor<T>, p_aug2: Tensor<T>) -> Result<Self> {
        if p_clean.shape() != p_aug1.shape() || p_clean.shape() != p_aug2.shape() {
            return Err(AbaError::shape(
                "PredTriple",
                format!("{:?}", p_clean.shape()),
                format!("{:?} / {:?}", p_aug1.shape(), p_aug2.shape()),
            ));
        }
        let third = T::from_f64(1.0 / 3.0);
        let mut p_mean = p_clean.clone();
        p_mean.add_assign(&p_aug1)?;
        p_mean.add_assign(&p_aug2)?;
        p_mean.scale_in_place(third);
        Ok(PredTriple {
            p_clean,
            p_aug1,
            p_aug2,
            p_mean,
        })
    }
}

/// Sum of the three forward KLs to the mean prediction, each batch-averaged.
pub fn consistency_loss<T: Scalar>(triple: &PredTriple<T>) -> Result<T> {
    let a = ops::kl_categorical_forward(&triple.p_clean, &triple.p_mean)?;
    let b = ops::kl_categorical_forward(&triple.p_aug1, &triple.p_mean)?;
    let c = ops::kl_categorical_forward(&triple.p_aug2, &triple.p_mean)?;
    Ok(a + b + c)
}

#[derive(Debug, Clone, Copy)]
pub struct StepLosses {
    pub loss_cls: f64,
    pub loss_kl: f64,
}

fn check_image_range<T: Scalar>(images: &Tensor<T>, what: &'static str) -> Result<()> {
    if images
        .data()
        .iter()
        .any(|&v| v < T::zero() || v > T::one())
    {
        return Err(AbaError::invalid(format!(
            "{} contains values outside [0, 1]; clamp before the classifier step",
            what
        )));
    }
    Ok(())
}

/// One optimizer step on L_cls + alpha * L_KL.
///
/// L_cls is the cross-entropy on the first augmented view only (optionally
/// plus the clean view when `clean_ce` is set); L_KL is the sum of forward
/// KLs from each prediction (clean plus every augmented view) to their mean.
/// Gradients flow into the classifier only; augmented images are constants.
pub fn classifier_step<T: Scalar>(
    params: &mut ClassifierParams<T>,
    opt: &mut Optimizer<T>,
    clean: &Tensor<T>,
    augmented: &[Tensor<T>],
    labels: &[usize],
    alpha: f64,
    clean_ce: bool,
) -> Result<StepLosses> {
    if augmented.is_empty() {
        return Err(AbaError::invalid("classifier_step needs at least one augmented view"));
    }
    for a in augmented {
        check_image_range(a, "augmented batch")?;
    }
    let mut g = Graph::new();
    let ids = classifier::insert_params(&mut g, params, true);
    let x_clean = g.constant(clean.clone());
    let logits_clean = classifier::forward_on_graph(&mut g, &params.arch, &ids, x_clean)?.logits;

    let mut aug_logits = Vec::with_capacity(augmented.len());
    for a in augmented {
        let xa = g.constant(a.clone());
        aug_logits.push(classifier::forward_on_graph(&mut g, &params.arch, &ids, xa)?.logits);
    }

    let mut loss_cls = g.log_softmax_nll(aug_logits[0], labels)?;
    if clean_ce {
        let ce_clean = g.log_softmax_nll(logits_clean, labels)?;
        loss_cls = g.add(loss_cls, ce_clean)?;
    }

    // consistency: KL(p_i || p_mean) over clean + all augmented views
    let p_clean = g.softmax(logits_clean)?;
    let mut preds = vec![p_clean];
    for &l in &aug_logits {
        preds.push(g.softmax(l)?);
    }
    let mut sum = preds[0];
    for &p in &preds[1..] {
        sum = g.add(sum, p)?;
    }
    let p_mean = g.scale(sum, T::from_f64(1.0 / preds.len() as f64))?;
    let mut loss_kl = None;
    for &p in &preds {
        let kl = g.kl_categorical(p, p_mean)?;
        loss_kl = Some(match loss_kl {
            Some(prev) => g.add(prev, kl)?,
            None => kl,
        });
    }
    let loss_kl = loss_kl.expect("at least one prediction");

    let scaled_kl = g.scale(loss_kl, T::from_f64(alpha))?;
    let total = g.add(loss_cls, scaled_kl)?;
    let losses = StepLosses {
        loss_cls: g.value(loss_cls).item().as_f64(),
        loss_kl: g.value(loss_kl).item().as_f64(),
    };
    if !g.value(total).item().is_finite() {
        return Err(AbaError::NonFinite {
            context: "classifier step loss".into(),
        });
    }
    let grads = g.backward(total)?;
    apply_param_grads(params, opt, &ids, &grads)?;
    Ok(losses)
}

/// Plain cross-entropy step on the clean batch.
pub fn erm_step<T: Scalar>(
    params: &mut ClassifierParams<T>,
    opt: &mut Optimizer<T>,
    images: &Tensor<T>,
    labels: &[usize],
) -> Result<f64> {
    let mut g = Graph::new();
    let ids = classifier::insert_params(&mut g, params, true);
    let x = g.constant(images.clone());
    let logits = classifier::forward_on_graph(&mut g, &params.arch, &ids, x)?.logits;
    let loss = g.log_softmax_nll(logits, labels)?;
    let loss_val = g.value(loss).item().as_f64();
    if !loss_val.is_finite() {
        return Err(AbaError::NonFinite {
            context: "erm step loss".into(),
        });
    }
    let grads = g.backward(loss)?;
    apply_param_grads(params, opt, &ids, &grads)?;
    Ok(loss_val)
}

fn apply_param_grads<T: Scalar>(
    params: &mut ClassifierParams<T>,
    opt: &mut Optimizer<T>,
    ids: &[crate::graph::NodeId],
    grads: &crate::graph::Gradients<T>,
) -> Result<()> {
    let grad_list: Vec<Tensor<T>> = params
        .tensors
        .iter()
        .zip(ids.iter())
        .map(|(t, &id)| grads.get_or_zeros(id, t.shape()))
        .collect();
    let mut refs: Vec<&mut Tensor<T>> = params.tensors.iter_mut().collect();
    opt.step(&mut refs, &grad_list)
}

/// Fraction of argmax(logits) == label; ties resolve to the lowest class index.
pub fn evaluate<T: Scalar>(params: &ClassifierParams<T>, ds: &DomainDataset<T>) -> Result<f64> {
    if ds.is_empty() {
        return Err(AbaError::invalid("evaluate on empty dataset"));
    }
    const EVAL_BATCH: usize = 256;
    let mut correct = 0usize;
    let mut done = 0usize;
    while done < ds.len() {
        let end = (done + EVAL_BATCH).min(ds.len());
        let idx: Vec<usize> = (done..end).collect();
        let (images, labels) = ds.batch(&idx)?;
        let logits = classifier::forward(params, &images)?;
        let k = logits.shape()[1];
        for (row, &label) in logits.data().chunks(k).zip(labels.iter()) {
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            if best == label {
                correct += 1;
            }
        }
        done = end;
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Run the full procedure and return the trained parameters plus the log.
pub fn train<T: Scalar>(
    cfg: &TrainConfig,
    aug_spec: &AugmenterSpec,
    arch: &Architecture,
    source: &DomainDataset<T>,
    eval_domains: &[&DomainDataset<T>],
    timing: Timing,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    aug_spec.validate()?;
    arch.validate()?;
    if source.is_empty() {
        return Err(AbaError::invalid("source dataset is empty"));
    }
    let dims = source.image_dims();
    if aug_spec.image_channels != dims.0 {
        return Err(AbaError::shape(
            "train",
            format!("augmenter channels {}", aug_spec.image_channels),
            format!("source channels {}", dims.0),
        ));
    }
    if arch.input != dims {
        return Err(AbaError::shape(
            "train",
            format!("architecture input {:?}", arch.input),
            format!("source images {:?}", dims),
        ));
    }

    let mut data_rng = stream(cfg.seed, StreamKind::Data);
    let mut episode_rng = stream(cfg.seed, StreamKind::Episode);
    let mut randconv_rng = stream(cfg.seed, StreamKind::RandConv);
    let mut altlite_rng = stream(cfg.seed, StreamKind::AltLite);
    let mut init_rng = stream(cfg.seed, StreamKind::ClassifierInit);

    let mut params = classifier::init_classifier::<T>(arch, &mut init_rng)?;
    let mut opt = Optimizer::adam(cfg.classifier_lr);
    let mut batcher = Batcher::new(source.len(), cfg.batch_size)?;
    let interval = cfg.effective_eval_interval();
    let start = Instant::now();
    let mut metrics = Vec::with_capacity(cfg.iterations);

    for t in 0..cfg.iterations {
        let idx = batcher.next(&mut data_rng);
        let (x, y) = source.batch(&idx)?;
        let phase = if t < cfg.warmup {
            Phase::Warmup
        } else {
            Phase::Main
        };

        let mut row = MetricsRow {
            iteration: t + 1,
            phase,
            loss_cls: f64::NAN,
            loss_kl: 0.0,
            loss_elbo_final: f64::NAN,
            fallback: false,
            accuracy: None,
            wall_clock_s: 0.0,
        };

        if phase == Phase::Warmup || cfg.mode == Mode::Erm {
            row.loss_cls = erm_step(&mut params, &mut opt, &x, &y)?;
        } else {
            match run_augmented_iteration(
                cfg,
                aug_spec,
                &mut params,
                &mut opt,
                &x,
                &y,
                &mut episode_rng,
                &mut randconv_rng,
                &mut altlite_rng,
            ) {
                Ok((losses, elbo_final)) => {
                    row.loss_cls = losses.loss_cls;
                    row.loss_kl = losses.loss_kl;
                    row.loss_elbo_final = elbo_final;
                }
                Err(AbaError::NonFinite { context }) => {
                    // Discard the episode, fall back to a plain step; never
                    // train on corrupted augmentations.
                    eprintln!(
                        "iteration {}: non-finite inner loss ({}), falling back to ERM step",
                        t + 1,
                        context
                    );
                    row.loss_cls = erm_step(&mut params, &mut opt, &x, &y)?;
                    row.fallback = true;
                }
                Err(e) => return Err(e),
            }
        }

        if (t + 1) % interval == 0 || t + 1 == cfg.iterations {
            let accs = eval_domains
                .iter()
                .map(|d| evaluate(&params, d))
                .collect::<Result<Vec<f64>>>()?;
            row.accuracy = Some(accs);
        }
        if timing == Timing::Real {
            row.wall_clock_s = start.elapsed().as_secs_f64();
        }
        metrics.push(row);
    }

    Ok(TrainOutcome {
        params,
        metrics,
        eval_domains: eval_domains.iter().map(|d| d.name.clone()).collect(),
    })
}

/// One main-phase iteration of an augmented mode: build the augmented views,
/// then take the classifier step. Returns the step losses and the episode's
/// final inner loss (NaN for episode-free modes).
#[allow(clippy::too_many_arguments)]
fn run_augmented_iteration<T: Scalar>(
    cfg: &TrainConfig,
    aug_spec: &AugmenterSpec,
    params: &mut ClassifierParams<T>,
    opt: &mut Optimizer<T>,
    x: &Tensor<T>,
    y: &[usize],
    episode_rng: &mut crate::rng::Stream,
    randconv_rng: &mut crate::rng::Stream,
    altlite_rng: &mut crate::rng::Stream,
) -> Result<(StepLosses, f64)> {
    let mut elbo_final = f64::NAN;
    let mut augmented: Vec<Tensor<T>> = Vec::with_capacity(cfg.num_bayes_samples);

    match cfg.mode {
        Mode::Aba | Mode::AbaRandConv | Mode::AbaAugmenter2 => {
            let mut state = init_episode::<T>(aug_spec, episode_rng)?;
            if cfg.adv_steps > 0 {
                let report = adversarial_fit(
                    &mut state,
                    params,
                    x,
                    y,
                    cfg.adv_lr,
                    cfg.adv_steps,
                    cfg.elbo_beta,
                    cfg.kl_sign,
                    episode_rng,
                )?;
                elbo_final = report.final_loss;
            }
            let second_from_randconv = cfg.mode == Mode::AbaRandConv
                || (cfg.mode == Mode::Aba && cfg.second_sample == SecondSample::RandConv);
            let bayes_draws = if second_from_randconv || cfg.mode == Mode::AbaAugmenter2 {
                cfg.num_bayes_samples.saturating_sub(1).max(1)
            } else {
                cfg.num_bayes_samples
            };
            for _ in 0..bayes_draws {
                let w = sample_weights(&state, episode_rng);
                let mut img = augment::augment(&state, &w, x)?;
                img.clamp01();
                augmented.push(img);
            }
            if second_from_randconv {
                augmented.push(randconv_augment(x, &aug_spec.kernel_choices, randconv_rng)?);
            } else if cfg.mode == Mode::AbaAugmenter2 {
                let mut state2 = init_episode::<T>(aug_spec, episode_rng)?;
                if cfg.adv_steps > 0 {
                    adversarial_fit(
                        &mut state2,
                        params,
                        x,
                        y,
                        cfg.adv_lr,
                        cfg.adv_steps,
                        cfg.elbo_beta,
                        cfg.kl_sign,
                        episode_rng,
                    )?;
                }
                let w = sample_weights(&state2, episode_rng);
                let mut img = augment::augment(&state2, &w, x)?;
                img.clamp01();
                augmented.push(img);
            }
        }
        Mode::RandConv => {
            for _ in 0..cfg.num_bayes_samples {
                augmented.push(randconv_augment(x, &aug_spec.kernel_choices, randconv_rng)?);
            }
        }
        Mode::AltLite => {
            let mut stack = init_altlite::<T>(aug_spec, altlite_rng)?;
            if cfg.adv_steps > 0 {
                let report =
                    augment::altlite_fit(&mut stack, params, x, y, cfg.adv_lr, cfg.adv_steps)?;
                elbo_final = report.final_ce;
            }
            let mut img = stack.apply(x)?;
            img.clamp01();
            // deterministic stack: one fitted view, replicated
            for _ in 0..cfg.num_bayes_samples.max(2) {
                augmented.push(img.clone());
            }
        }
        Mode::Erm => unreachable!("handled by the caller"),
    }

    let losses = classifier_step(
        params,
        opt,
        x,
        &augmented,
        y,
        cfg.consistency_weight,
        cfg.clean_ce,
    )?;
    Ok((losses, elbo_final))
}
