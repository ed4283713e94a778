//! Statistical verification of the variational machinery: initialization
//! moments, reparameterized sampling moments, the closed-form prior KL against
//! a Monte-Carlo estimate, and the descent/ascent behavior of the episode fits.

mod common;

use aba::augment::{
    adversarial_fit, augment, augmented_cross_entropy, elbo_loss, init_episode, kl_to_prior,
    sample_weights, AugmenterSpec, AugmenterState, KlSign,
};
use aba::classifier::init_classifier;
use aba::data::synth_digits;
use aba::graph::Graph;
use aba::ops;
use aba::optim::Optimizer;
use aba::rng::{stream, StreamKind};
use aba::tensor::Tensor;
use aba::trainer::erm_step;
use common::TestRand;

/// Empirical variance of mu entries at init matches the layer prior within 3%.
#[test]
fn init_mu_variance_matches_prior() {
    let spec = AugmenterSpec {
        layers: 1,
        kernel_choices: vec![3],
        hidden_width: 4,
        image_channels: 3,
        leaky_slope: 0.01,
    };
    let mut rng = stream(100, StreamKind::Episode);
    let mut values: Vec<f64> = Vec::with_capacity(100_000);
    while values.len() < 100_000 {
        let state: AugmenterState<f64> = init_episode(&spec, &mut rng).unwrap();
        values.extend(state.layers[0].mu.data().iter().copied());
    }
    values.truncate(100_000);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    let target = 1.0 / 27.0;
    assert!(
        (var - target).abs() / target < 0.03,
        "init variance {} vs prior {}",
        var,
        target
    );
}

/// 1e5 reparameterized draws of a single weight reproduce (mu, sigma): mean
/// within 3 standard errors, std within 3%.
#[test]
fn sampled_weight_moments() {
    let spec = AugmenterSpec {
        layers: 1,
        kernel_choices: vec![1],
        hidden_width: 1,
        image_channels: 1,
        leaky_slope: 0.01,
    };
    let mut rng = stream(7, StreamKind::Episode);
    let mut state: AugmenterState<f64> = init_episode(&spec, &mut rng).unwrap();
    let mu = 0.37;
    let sigma = 0.21;
    state.layers[0].mu = Tensor::from_vec(&[1, 1, 1, 1], vec![mu]).unwrap();
    state.layers[0].rho = Tensor::from_vec(&[1, 1, 1, 1], vec![ops::softplus_inv(sigma)]).unwrap();

    let n = 100_000;
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        let w = sample_weights(&state, &mut rng);
        draws.push(w.phi[0].data()[0]);
    }
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let se = sigma / (n as f64).sqrt();
    assert!(
        (mean - mu).abs() < 3.0 * se,
        "mean {} vs {} (3se = {})",
        mean,
        mu,
        3.0 * se
    );
    assert!((std - sigma).abs() / sigma < 0.03, "std {} vs {}", std, sigma);
}

/// Monte-Carlo estimate of E_q[log q(phi) - log p(phi)] agrees with the
/// closed form within 1% on randomized small states.
#[test]
fn kl_closed_form_matches_monte_carlo() {
    let mut r = TestRand::new(31);
    for trial in 0..3 {
        let (kl, mc, se) = kl_mc_trial(&mut r, 1_000_000, trial);
        let rel = (kl - mc).abs() / kl;
        assert!(
            rel < 0.01,
            "trial {}: closed form {} vs MC {} (rel {}, se {})",
            trial,
            kl,
            mc,
            rel,
            se
        );
    }
}

fn kl_mc_trial(r: &mut TestRand, samples: usize, trial: u64) -> (f64, f64, f64) {
    let spec = AugmenterSpec {
        layers: 2,
        kernel_choices: vec![1, 3],
        hidden_width: 2,
        image_channels: 1,
        leaky_slope: 0.01,
    };
    let mut rng = stream(500 + trial, StreamKind::Episode);
    let mut state: AugmenterState<f64> = init_episode(&spec, &mut rng).unwrap();
    // spread the posterior away from the prior so KL is O(1)
    for layer in &mut state.layers {
        for v in layer.mu.data_mut() {
            *v = r.uniform(-0.8, 0.8);
        }
        for v in layer.rho.data_mut() {
            *v = ops::softplus_inv(r.uniform(0.05, 0.6));
        }
    }
    let kl: f64 = kl_to_prior(&state);

    // Monte-Carlo: draw phi ~ q per weight, average log q - log p.
    // Gaussian densities: log q - log p =
    //   log(s_p/s_q) + (phi-mu)^2/(2 s_q^2) * (-1) ... computed explicitly.
    let mut total = 0.0f64;
    let mut total_sq = 0.0f64;
    for _ in 0..samples {
        let mut acc = 0.0;
        for layer in &state.layers {
            let sp = layer.prior_var().sqrt();
            for (&m, &rh) in layer.mu.data().iter().zip(layer.rho.data().iter()) {
                let sq = ops::softplus(rh);
                let phi = m + sq * r.normal();
                let log_q = -0.5 * ((phi - m) / sq).powi(2) - sq.ln();
                let log_p = -0.5 * (phi / sp).powi(2) - sp.ln();
                acc += log_q - log_p;
            }
        }
        total += acc;
        total_sq += acc * acc;
    }
    let mc = total / samples as f64;
    let var = total_sq / samples as f64 - mc * mc;
    (kl, mc, (var / samples as f64).sqrt())
}

fn small_trained_classifier(
    seed: u64,
    iters: usize,
) -> (
    aba::classifier::ClassifierParams<f64>,
    aba::data::DomainDataset<f64>,
) {
    let src = synth_digits::<f64>(256, 11).unwrap();
    let arch = aba::classifier::Architecture::desknet((3, 28, 28), 10);
    let mut rng = stream(seed, StreamKind::ClassifierInit);
    let mut params = init_classifier(&arch, &mut rng).unwrap();
    let mut opt = Optimizer::adam(1e-3);
    let mut data_rng = stream(seed, StreamKind::Data);
    let mut batcher = aba::data::Batcher::new(src.len(), 32).unwrap();
    for _ in 0..iters {
        let idx = batcher.next(&mut data_rng);
        let (x, y) = src.batch(&idx).unwrap();
        erm_step(&mut params, &mut opt, &x, &y).unwrap();
    }
    (params, src)
}

/// With a fixed noise draw and a tiny step, the inner loss is non-increasing
/// step to step (plain gradient descent on a smooth objective).
#[test]
fn adversarial_descent_with_fixed_noise() {
    let (clf, src) = small_trained_classifier(21, 30);
    let spec = AugmenterSpec {
        layers: 2,
        kernel_choices: vec![3],
        hidden_width: 4,
        image_channels: 3,
        leaky_slope: 0.01,
    };
    let mut rng = stream(9, StreamKind::Episode);
    let mut state: AugmenterState<f64> = init_episode(&spec, &mut rng).unwrap();
    let (x, y) = src.batch(&[0, 1, 2, 3, 4, 5, 6, 7]).unwrap();

    // Manual descent loop with an identical noise seed every step (beta = 0
    // isolates the likelihood term).
    let eta = 1e-6;
    let mut losses = Vec::new();
    let mut opt = Optimizer::sgd(eta);
    for _ in 0..10 {
        let mut g = Graph::new();
        let mut noise_rng = stream(123, StreamKind::Episode);
        let parts =
            elbo_loss(&mut g, &state, &clf, &x, &y, 0.0, KlSign::Negative, 1, &mut noise_rng)
                .unwrap();
        losses.push(g.value(parts.loss).item());
        let grads = g.backward(parts.loss).unwrap();
        let mut params: Vec<&mut Tensor<f64>> = Vec::new();
        let mut grad_list = Vec::new();
        for (l, layer) in state.layers.iter_mut().enumerate() {
            grad_list.push(grads.get_or_zeros(parts.refs.mu_ids[l], layer.mu.shape()));
            grad_list.push(grads.get_or_zeros(parts.refs.rho_ids[l], layer.rho.shape()));
            params.push(&mut layer.mu);
            params.push(&mut layer.rho);
        }
        opt.step(&mut params, &grad_list).unwrap();
    }
    for w in losses.windows(2) {
        assert!(
            w[1] <= w[0] + 1e-12,
            "inner loss increased under fixed noise: {:?}",
            losses
        );
    }
}

/// T_adv = 0 leaves the episode parameters untouched.
#[test]
fn zero_steps_is_noop() {
    let (clf, src) = small_trained_classifier(22, 5);
    let spec = AugmenterSpec::new(2, 3);
    let mut rng = stream(10, StreamKind::Episode);
    let mut state: AugmenterState<f64> = init_episode(&spec, &mut rng).unwrap();
    let before: Vec<Vec<f64>> = state.layers.iter().map(|l| l.mu.data().to_vec()).collect();
    let (x, y) = src.batch(&[0, 1, 2, 3]).unwrap();
    adversarial_fit(&mut state, &clf, &x, &y, 5e-6, 0, 1.0, KlSign::Negative, &mut rng).unwrap();
    let after: Vec<Vec<f64>> = state.layers.iter().map(|l| l.mu.data().to_vec()).collect();
    assert_eq!(before, after);
}

/// Paired over episodes with common evaluation noise, the fitted augmenter
/// fools the classifier more than the fresh one.
#[test]
fn adversarial_fit_raises_cross_entropy() {
    let (clf, src) = small_trained_classifier(23, 60);
    let spec = AugmenterSpec::new(3, 3);
    let mut episode_rng = stream(40, StreamKind::Episode);
    let mut data_rng = stream(41, StreamKind::Data);
    let mut batcher = aba::data::Batcher::new(src.len(), 32).unwrap();

    let episodes = 12;
    let mut wins = 0;
    for _ in 0..episodes {
        let idx = batcher.next(&mut data_rng);
        let (x, y) = src.batch(&idx).unwrap();
        let mut state: AugmenterState<f64> = init_episode(&spec, &mut episode_rng).unwrap();
        let init_state = state.clone();
        adversarial_fit(&mut state, &clf, &x, &y, 5e-6, 10, 1.0, KlSign::Negative, &mut episode_rng)
            .unwrap();
        // common noise for the paired comparison
        let draw_seed = 7_000 + wins as u64;
        let ce_init = mean_ce_common_noise(&init_state, &clf, &x, &y, draw_seed, 4);
        let ce_fit = mean_ce_common_noise(&state, &clf, &x, &y, draw_seed, 4);
        if ce_fit > ce_init {
            wins += 1;
        }
    }
    let p = common::sign_test_p(wins, episodes);
    assert!(
        p < 0.05,
        "adversarial fit not effective: {}/{} wins (p = {:.4})",
        wins,
        episodes,
        p
    );
}

fn mean_ce_common_noise(
    state: &AugmenterState<f64>,
    clf: &aba::classifier::ClassifierParams<f64>,
    x: &Tensor<f64>,
    y: &[usize],
    draw_seed: u64,
    draws: usize,
) -> f64 {
    let mut total = 0.0;
    let mut rng = stream(draw_seed, StreamKind::Episode);
    for _ in 0..draws {
        let w = sample_weights(state, &mut rng);
        let img = augment(state, &w, x).unwrap();
        let logits = aba::classifier::forward(clf, &img).unwrap();
        total += ops::log_softmax_nll_forward(&logits, y).unwrap();
    }
    total / draws as f64
}

/// ALT-lite gradient ascent raises the cross-entropy on the augmented batch,
/// and the same seed fits identical weights.
#[test]
fn altlite_ascends_and_is_deterministic() {
    let (clf, src) = small_trained_classifier(24, 40);
    let spec = AugmenterSpec::new(2, 3);
    let (x, y) = src.batch(&(0..16).collect::<Vec<_>>()).unwrap();

    let mut s1 = aba::augment::init_altlite::<f64>(&spec, &mut stream(3, StreamKind::AltLite)).unwrap();
    let report = aba::augment::altlite_fit(&mut s1, &clf, &x, &y, 1e-4, 8).unwrap();
    assert!(
        report.final_ce >= report.initial_ce,
        "ascent failed: {} -> {}",
        report.initial_ce,
        report.final_ce
    );

    let mut s2 = aba::augment::init_altlite::<f64>(&spec, &mut stream(3, StreamKind::AltLite)).unwrap();
    aba::augment::altlite_fit(&mut s2, &clf, &x, &y, 1e-4, 8).unwrap();
    for (a, b) in s1.weights.iter().zip(s2.weights.iter()) {
        assert_eq!(a.data(), b.data());
    }
}

/// ELBO with beta = 0 equals the negated cross-entropy on the augmented batch,
/// and the composite value matches an independent recomputation from the
/// elementary pieces.
#[test]
fn elbo_composition_oracle() {
    let (clf, src) = small_trained_classifier(25, 10);
    let spec = AugmenterSpec {
        layers: 1,
        kernel_choices: vec![3],
        hidden_width: 4,
        image_channels: 3,
        leaky_slope: 0.01,
    };
    let mut rng = stream(55, StreamKind::Episode);
    let state: AugmenterState<f64> = init_episode(&spec, &mut rng).unwrap();
    let (x, y) = src.batch(&[0, 1, 2, 3]).unwrap();

    // beta = 0: loss == -CE of the (single) augmented sample
    let mut g = Graph::new();
    let mut noise = stream(77, StreamKind::Episode);
    let parts = elbo_loss(&mut g, &state, &clf, &x, &y, 0.0, KlSign::Negative, 1, &mut noise).unwrap();
    let ce = g.value(parts.cross_entropy).item();
    assert!((g.value(parts.loss).item() + ce).abs() < 1e-12);

    // independent recomputation: same noise stream -> same weights; compose
    // CE and closed-form KL by hand
    let mut noise = stream(77, StreamKind::Episode);
    let w = sample_weights(&state, &mut noise);
    let img = augment(&state, &w, &x).unwrap();
    let logits = aba::classifier::forward(&clf, &img).unwrap();
    let ce_direct = ops::log_softmax_nll_forward(&logits, &y).unwrap();
    assert!((ce - ce_direct).abs() < 1e-12);

    let beta = 0.7;
    let mut g2 = Graph::new();
    let mut noise = stream(77, StreamKind::Episode);
    let parts2 =
        elbo_loss(&mut g2, &state, &clf, &x, &y, beta, KlSign::Negative, 1, &mut noise).unwrap();
    let expected = -ce_direct - beta * kl_to_prior(&state);
    assert!(
        (g2.value(parts2.loss).item() - expected).abs() < 1e-10,
        "elbo {} vs recomposed {}",
        g2.value(parts2.loss).item(),
        expected
    );
}

/// Fresh noise every draw: two augmented samples from one episode differ
/// (the two-view invariant), across 50 episodes.
#[test]
fn two_draws_always_differ() {
    let spec = AugmenterSpec::new(1, 3);
    let mut rng = stream(60, StreamKind::Episode);
    let src = synth_digits::<f64>(8, 5).unwrap();
    let (x, _) = src.batch(&[0, 1]).unwrap();
    for _ in 0..50 {
        let state: AugmenterState<f64> = init_episode(&spec, &mut rng).unwrap();
        let w1 = sample_weights(&state, &mut rng);
        let w2 = sample_weights(&state, &mut rng);
        let a = augment(&state, &w1, &x).unwrap();
        let b = augment(&state, &w2, &x).unwrap();
        assert_ne!(a.data(), b.data());
    }
}

/// RandConv weight variance matches the declared N(0, 1/(C*k*k)) with
/// k = 3, C = 3: empirical variance of 1e5 entries within 3% of 1/27.
#[test]
fn randconv_weight_variance() {
    let mut rng = stream(70, StreamKind::RandConv);
    let mut values: Vec<f64> = Vec::with_capacity(100_000);
    while values.len() < 100_000 {
        let kernel = aba::augment::sample_randconv_kernel::<f64>(3, &[3], &mut rng).unwrap();
        values.extend(kernel.data().iter().copied());
    }
    values.truncate(100_000);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    let target = 1.0 / 27.0;
    assert!(
        (var - target).abs() / target < 0.03,
        "randconv variance {} vs {}",
        var,
        target
    );
}

/// `augmented_cross_entropy` is finite and positive on a fresh episode.
#[test]
fn augmented_ce_smoke() {
    let (clf, src) = small_trained_classifier(26, 5);
    let spec = AugmenterSpec::new(1, 3);
    let mut rng = stream(80, StreamKind::Episode);
    let state: AugmenterState<f64> = init_episode(&spec, &mut rng).unwrap();
    let (x, y) = src.batch(&[0, 1, 2, 3]).unwrap();
    let ce = augmented_cross_entropy(&state, &clf, &x, &y, &mut rng).unwrap();
    assert!(ce.is_finite() && ce > 0.0);
}
