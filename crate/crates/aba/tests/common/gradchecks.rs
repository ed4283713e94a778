//! Finite-difference gradient checks for every differentiable operator and
//! the composite training losses. Each case builds a random micro-instance
//! from a seed, computes the analytic gradients through the graph, and
//! compares them against the central-difference oracle.

use super::{assert_grads_close, finite_diff_grads, TestRand};
use aba::augment::{self, AugmenterSpec, AugmenterState, KlSign, VariationalLayer};
use aba::classifier::{
    forward_on_graph, insert_params, Architecture, ClassifierParams, LayerSpec,
};
use aba::graph::Graph;
use aba::rng::{stream, StreamKind};
use aba::tensor::Tensor;

/// (name, check) pairs for every differentiable op plus the composites;
/// the acceptance suite runs all of them.
pub type Check = fn(u64) -> f64;

pub fn all_checks() -> Vec<(&'static str, Check)> {
    vec![
        ("add_sub_scale", check_add_sub_scale),
        ("mul_softplus", check_mul_softplus),
        ("leaky_relu", check_leaky_relu),
        ("conv2d", check_conv2d),
        ("max_pool2", check_max_pool2),
        ("linear", check_linear),
        ("softmax", check_softmax),
        ("log_softmax_nll", check_log_softmax_nll),
        ("kl_categorical", check_kl_categorical),
        ("gaussian_kl_prior", check_gaussian_kl_prior),
        ("reparameterization", check_reparameterization),
        ("classifier_ce", check_classifier_ce),
        ("elbo", check_elbo),
        ("cls_plus_consistency", check_cls_plus_consistency),
    ]
}

fn weighted_sum_readout(
    g: &mut Graph<f64>,
    node: aba::graph::NodeId,
    weights: &Tensor<f64>,
) -> aba::graph::NodeId {
    let c = g.constant(weights.clone());
    let prod = g.mul(node, c).unwrap();
    g.sum_all(prod).unwrap()
}

pub fn check_add_sub_scale(seed: u64) -> f64 {
    let mut r = TestRand::new(seed);
    let shape = [2, 3];
    let x0 = r.tensor(&shape, -1.0, 1.0);
    let y0 = r.tensor(&shape, -1.0, 1.0);
    let c = r.tensor(&shape, -1.0, 1.0);
    let a = r.uniform(-2.0, 2.0);
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let x = g.leaf(p[0].clone());
        let y = g.leaf(p[1].clone());
        let s = g.sub(x, y).unwrap();
        let t = g.add(s, x).unwrap();
        let u = g.scale(t, a).unwrap();
        let loss = weighted_sum_readout(&mut g, u, &c);
        g.value(loss).item()
    };
    let params = vec![x0.clone(), y0.clone()];
    let mut g = Graph::new();
    let x = g.leaf(x0);
    let y = g.leaf(y0);
    let s = g.sub(x, y).unwrap();
    let t = g.add(s, x).unwrap();
    let u = g.scale(t, a).unwrap();
    let loss = weighted_sum_readout(&mut g, u, &c);
    let grads = g.backward(loss).unwrap();
    let analytic = vec![
        grads.get_or_zeros(x, &shape),
        grads.get_or_zeros(y, &shape),
    ];
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "add_sub_scale")
}

pub fn check_mul_softplus(seed: u64) -> f64 {
    let mut r = TestRand::new(seed);
    let shape = [3, 2];
    let x0 = r.tensor(&shape, -2.0, 2.0);
    let y0 = r.tensor(&shape, -2.0, 2.0);
    let c = r.tensor(&shape, -1.0, 1.0);
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let x = g.leaf(p[0].clone());
        let y = g.leaf(p[1].clone());
        let sp = g.softplus(x).unwrap();
        let m = g.mul(sp, y).unwrap();
        let loss = weighted_sum_readout(&mut g, m, &c);
        g.value(loss).item()
    };
    let params = vec![x0.clone(), y0.clone()];
    let mut g = Graph::new();
    let x = g.leaf(x0);
    let y = g.leaf(y0);
    let sp = g.softplus(x).unwrap();
    let m = g.mul(sp, y).unwrap();
    let loss = weighted_sum_readout(&mut g, m, &c);
    let grads = g.backward(loss).unwrap();
    let analytic = vec![grads.get_or_zeros(x, &shape), grads.get_or_zeros(y, &shape)];
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "mul_softplus")
}

pub fn check_leaky_relu(seed: u64) -> f64 {
    let mut r = TestRand::new(seed);
    let shape = [4, 3];
    // keep inputs away from the kink at zero so FD stays valid
    let mut x0 = r.tensor(&shape, -1.0, 1.0);
    for v in x0.data_mut() {
        if v.abs() < 1e-3 {
            *v += 2e-3_f64.copysign(*v + 1e-12);
        }
    }
    let c = r.tensor(&shape, -1.0, 1.0);
    let slope = r.uniform(0.01, 0.5);
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let x = g.leaf(p[0].clone());
        let lr = g.leaky_relu(x, slope).unwrap();
        let loss = weighted_sum_readout(&mut g, lr, &c);
        g.value(loss).item()
    };
    let params = vec![x0.clone()];
    let mut g = Graph::new();
    let x = g.leaf(x0);
    let lr = g.leaky_relu(x, slope).unwrap();
    let loss = weighted_sum_readout(&mut g, lr, &c);
    let grads = g.backward(loss).unwrap();
    let analytic = vec![grads.get_or_zeros(x, &shape)];
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "leaky_relu")
}

pub fn check_conv2d(seed: u64) -> f64 {
    let mut r = TestRand::new(seed);
    let (b, c_in, c_out) = (1 + r.pick(2), 1 + r.pick(3), 1 + r.pick(3));
    let (h, w) = (3 + r.pick(4), 3 + r.pick(4));
    let k = [1usize, 3, 5][r.pick(3)];
    let x0 = r.tensor(&[b, c_in, h, w], -1.0, 1.0);
    let w0 = r.tensor(&[c_out, c_in, k, k], -0.5, 0.5);
    let b0 = r.tensor(&[c_out], -0.5, 0.5);
    let c = r.tensor(&[b, c_out, h, w], -1.0, 1.0);
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let x = g.leaf(p[0].clone());
        let kw = g.leaf(p[1].clone());
        let kb = g.leaf(p[2].clone());
        let out = g.conv2d(x, kw, Some(kb)).unwrap();
        let loss = weighted_sum_readout(&mut g, out, &c);
        g.value(loss).item()
    };
    let params = vec![x0.clone(), w0.clone(), b0.clone()];
    let mut g = Graph::new();
    let x = g.leaf(x0);
    let kw = g.leaf(w0);
    let kb = g.leaf(b0);
    let out = g.conv2d(x, kw, Some(kb)).unwrap();
    let loss = weighted_sum_readout(&mut g, out, &c);
    let grads = g.backward(loss).unwrap();
    let analytic = vec![
        grads.get_or_zeros(x, params[0].shape()),
        grads.get_or_zeros(kw, params[1].shape()),
        grads.get_or_zeros(kb, params[2].shape()),
    ];
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "conv2d")
}

pub fn check_max_pool2(seed: u64) -> f64 {
    let mut r = TestRand::new(seed);
    let (b, c) = (1 + r.pick(2), 1 + r.pick(2));
    let (h, w) = (4 + 2 * r.pick(2), 4 + 2 * r.pick(2));
    // distinct well-separated levels so FD never straddles an argmax change
    let n = b * c * h * w;
    let mut levels: Vec<f64> = (0..n).map(|i| i as f64 / (n as f64 + 1.0)).collect();
    for i in (1..n).rev() {
        let j = r.pick(i + 1);
        levels.swap(i, j);
    }
    let x0 = Tensor::from_vec(&[b, c, h, w], levels).unwrap();
    let cw = r.tensor(&[b, c, h / 2, w / 2], -1.0, 1.0);
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let x = g.leaf(p[0].clone());
        let out = g.max_pool2(x).unwrap();
        let loss = weighted_sum_readout(&mut g, out, &cw);
        g.value(loss).item()
    };
    let params = vec![x0.clone()];
    let mut g = Graph::new();
    let x = g.leaf(x0);
    let out = g.max_pool2(x).unwrap();
    let loss = weighted_sum_readout(&mut g, out, &cw);
    let grads = g.backward(loss).unwrap();
    let analytic = vec![grads.get_or_zeros(x, params[0].shape())];
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "max_pool2")
}

pub fn check_linear(seed: u64) -> f64 {
    let mut r = TestRand::new(seed);
    let (b, d_in, d_out) = (1 + r.pick(3), 2 + r.pick(4), 1 + r.pick(4));
    let x0 = r.tensor(&[b, d_in], -1.0, 1.0);
    let w0 = r.tensor(&[d_out, d_in], -0.5, 0.5);
    let b0 = r.tensor(&[d_out], -0.5, 0.5);
    let c = r.tensor(&[b, d_out], -1.0, 1.0);
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let x = g.leaf(p[0].clone());
        let wt = g.leaf(p[1].clone());
        let bt = g.leaf(p[2].clone());
        let out = g.linear(x, wt, Some(bt)).unwrap();
        let loss = weighted_sum_readout(&mut g, out, &c);
        g.value(loss).item()
    };
    let params = vec![x0.clone(), w0.clone(), b0.clone()];
    let mut g = Graph::new();
    let x = g.leaf(x0);
    let wt = g.leaf(w0);
    let bt = g.leaf(b0);
    let out = g.linear(x, wt, Some(bt)).unwrap();
    let loss = weighted_sum_readout(&mut g, out, &c);
    let grads = g.backward(loss).unwrap();
    let analytic = vec![
        grads.get_or_zeros(x, params[0].shape()),
        grads.get_or_zeros(wt, params[1].shape()),
        grads.get_or_zeros(bt, params[2].shape()),
    ];
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "linear")
}

pub fn check_softmax(seed: u64) -> f64 {
    let mut r = TestRand::new(seed);
    let (b, k) = (1 + r.pick(3), 2 + r.pick(5));
    let x0 = r.tensor(&[b, k], -2.0, 2.0);
    let c = r.tensor(&[b, k], -1.0, 1.0);
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let x = g.leaf(p[0].clone());
        let s = g.softmax(x).unwrap();
        let loss = weighted_sum_readout(&mut g, s, &c);
        g.value(loss).item()
    };
    let params = vec![x0.clone()];
    let mut g = Graph::new();
    let x = g.leaf(x0);
    let s = g.softmax(x).unwrap();
    let loss = weighted_sum_readout(&mut g, s, &c);
    let grads = g.backward(loss).unwrap();
    let analytic = vec![grads.get_or_zeros(x, params[0].shape())];
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "softmax")
}

pub fn check_log_softmax_nll(seed: u64) -> f64 {
    let mut r = TestRand::new(seed);
    let (b, k) = (1 + r.pick(4), 2 + r.pick(6));
    let x0 = r.tensor(&[b, k], -2.0, 2.0);
    let labels: Vec<usize> = (0..b).map(|_| r.pick(k)).collect();
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let x = g.leaf(p[0].clone());
        let loss = g.log_softmax_nll(x, &labels).unwrap();
        g.value(loss).item()
    };
    let params = vec![x0.clone()];
    let mut g = Graph::new();
    let x = g.leaf(x0);
    let loss = g.log_softmax_nll(x, &labels).unwrap();
    let grads = g.backward(loss).unwrap();
    let analytic = vec![grads.get_or_zeros(x, params[0].shape())];
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "log_softmax_nll")
}

pub fn check_kl_categorical(seed: u64) -> f64 {
    let mut r = TestRand::new(seed);
    let (b, k) = (1 + r.pick(3), 2 + r.pick(4));
    // parameterize through softmax so rows stay normalized under FD
    let a0 = r.tensor(&[b, k], -1.5, 1.5);
    let b0 = r.tensor(&[b, k], -1.5, 1.5);
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let a = g.leaf(p[0].clone());
        let bb = g.leaf(p[1].clone());
        let pa = g.softmax(a).unwrap();
        let pb = g.softmax(bb).unwrap();
        let loss = g.kl_categorical(pa, pb).unwrap();
        g.value(loss).item()
    };
    let params = vec![a0.clone(), b0.clone()];
    let mut g = Graph::new();
    let a = g.leaf(a0);
    let bb = g.leaf(b0);
    let pa = g.softmax(a).unwrap();
    let pb = g.softmax(bb).unwrap();
    let loss = g.kl_categorical(pa, pb).unwrap();
    let grads = g.backward(loss).unwrap();
    let analytic = vec![
        grads.get_or_zeros(a, params[0].shape()),
        grads.get_or_zeros(bb, params[1].shape()),
    ];
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "kl_categorical")
}

pub fn check_gaussian_kl_prior(seed: u64) -> f64 {
    let mut r = TestRand::new(seed);
    let shape = [2, 1, 3, 3];
    let mu0 = r.tensor(&shape, -1.0, 1.0);
    let rho0 = r.tensor(&shape, -3.0, 1.0);
    let prior_var = r.uniform(0.02, 1.0);
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let mu = g.leaf(p[0].clone());
        let rho = g.leaf(p[1].clone());
        let loss = g.gaussian_kl_prior(mu, rho, prior_var).unwrap();
        g.value(loss).item()
    };
    let params = vec![mu0.clone(), rho0.clone()];
    let mut g = Graph::new();
    let mu = g.leaf(mu0);
    let rho = g.leaf(rho0);
    let loss = g.gaussian_kl_prior(mu, rho, prior_var).unwrap();
    let grads = g.backward(loss).unwrap();
    let analytic = vec![
        grads.get_or_zeros(mu, params[0].shape()),
        grads.get_or_zeros(rho, params[1].shape()),
    ];
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "gaussian_kl_prior")
}

/// phi = mu + softplus(rho) * eps: gradient w.r.t. mu is the readout weight,
/// w.r.t. rho it carries eps through the softplus derivative.
pub fn check_reparameterization(seed: u64) -> f64 {
    let mut r = TestRand::new(seed);
    let shape = [1, 1, 3, 3];
    let mu0 = r.tensor(&shape, -1.0, 1.0);
    let rho0 = r.tensor(&shape, -3.0, 1.0);
    let eps = r.normal_tensor(&shape, 1.0);
    let c = r.tensor(&shape, -1.0, 1.0);
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let mu = g.leaf(p[0].clone());
        let rho = g.leaf(p[1].clone());
        let e = g.constant(eps.clone());
        let sigma = g.softplus(rho).unwrap();
        let noise = g.mul(sigma, e).unwrap();
        let phi = g.add(mu, noise).unwrap();
        let loss = weighted_sum_readout(&mut g, phi, &c);
        g.value(loss).item()
    };
    let params = vec![mu0.clone(), rho0.clone()];
    let mut g = Graph::new();
    let mu = g.leaf(mu0);
    let rho = g.leaf(rho0);
    let e = g.constant(eps.clone());
    let sigma = g.softplus(rho).unwrap();
    let noise = g.mul(sigma, e).unwrap();
    let phi = g.add(mu, noise).unwrap();
    let loss = weighted_sum_readout(&mut g, phi, &c);
    let grads = g.backward(loss).unwrap();
    let analytic = vec![
        grads.get_or_zeros(mu, params[0].shape()),
        grads.get_or_zeros(rho, params[1].shape()),
    ];
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "reparameterization")
}

/// Micro classifier for composite-loss checks: 8x8 single-channel input.
pub fn micro_arch() -> Architecture {
    Architecture {
        name: "micro-8".into(),
        input: (1, 8, 8),
        classes: 3,
        layers: vec![
            LayerSpec::Conv { out: 2, k: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Conv { out: 2, k: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Flatten,
            LayerSpec::Fc { out: 4 },
            LayerSpec::Relu,
            LayerSpec::Fc { out: 3 },
        ],
    }
}

pub fn micro_params(r: &mut TestRand) -> ClassifierParams<f64> {
    let arch = micro_arch();
    let plan = arch.param_plan().unwrap();
    let tensors = plan
        .iter()
        .flat_map(|p| {
            let std = (2.0 / p.fan_in as f64).sqrt();
            [r.normal_tensor(&p.weight_shape, std), r.normal_tensor(&p.bias_shape, 0.05)]
        })
        .collect();
    ClassifierParams { arch, tensors }
}

fn params_to_vec(p: &ClassifierParams<f64>) -> Vec<Tensor<f64>> {
    p.tensors.clone()
}

fn with_params(base: &ClassifierParams<f64>, tensors: &[Tensor<f64>]) -> ClassifierParams<f64> {
    ClassifierParams {
        arch: base.arch.clone(),
        tensors: tensors.to_vec(),
    }
}

/// Cross-entropy through the whole micro classifier w.r.t. every theta tensor.
pub fn check_classifier_ce(seed: u64) -> f64 {
    let mut r = TestRand::new(seed);
    let clf = micro_params(&mut r);
    let batch = 2;
    let images = r.tensor(&[batch, 1, 8, 8], 0.0, 1.0);
    let labels: Vec<usize> = (0..batch).map(|_| r.pick(3)).collect();
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let clf = with_params(&clf, p);
        let mut g = Graph::new();
        let ids = insert_params(&mut g, &clf, true);
        let x = g.constant(images.clone());
        let logits = forward_on_graph(&mut g, &clf.arch, &ids, x).unwrap().logits;
        let loss = g.log_softmax_nll(logits, &labels).unwrap();
        g.value(loss).item()
    };
    let params = params_to_vec(&clf);
    let mut g = Graph::new();
    let ids = insert_params(&mut g, &clf, true);
    let x = g.constant(images.clone());
    let logits = forward_on_graph(&mut g, &clf.arch, &ids, x).unwrap().logits;
    let loss = g.log_softmax_nll(logits, &labels).unwrap();
    let grads = g.backward(loss).unwrap();
    let analytic: Vec<Tensor<f64>> = params
        .iter()
        .zip(ids.iter())
        .map(|(t, &id)| grads.get_or_zeros(id, t.shape()))
        .collect();
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "classifier_ce")
}

fn micro_augmenter(seed: u64) -> AugmenterState<f64> {
    let spec = AugmenterSpec {
        layers: 2,
        kernel_choices: vec![3],
        hidden_width: 2,
        image_channels: 1,
        leaky_slope: 0.01,
    };
    let mut rng = stream(seed, StreamKind::Episode);
    augment::init_episode(&spec, &mut rng).unwrap()
}

fn state_with(state: &AugmenterState<f64>, flat: &[Tensor<f64>]) -> AugmenterState<f64> {
    let mut s = state.clone();
    for (l, layer) in s.layers.iter_mut().enumerate() {
        layer.mu = flat[2 * l].clone();
        layer.rho = flat[2 * l + 1].clone();
    }
    s
}

fn flatten_state(state: &AugmenterState<f64>) -> Vec<Tensor<f64>> {
    state
        .layers
        .iter()
        .flat_map(|l: &VariationalLayer<f64>| [l.mu.clone(), l.rho.clone()])
        .collect()
}

/// The inner-loop loss w.r.t. the episode parameters, classifier frozen.
pub fn check_elbo(seed: u64) -> f64 {
    let mut r = TestRand::new(seed ^ 0xe1b0);
    let clf = micro_params(&mut r);
    let state = micro_augmenter(seed);
    let batch = 2;
    let images = r.tensor(&[batch, 1, 8, 8], 0.0, 1.0);
    let labels: Vec<usize> = (0..batch).map(|_| r.pick(3)).collect();
    let beta = r.uniform(0.1, 2.0);

    let eval = |p: &[Tensor<f64>]| -> f64 {
        let s = state_with(&state, p);
        let mut g = Graph::new();
        // fixed noise: same stream seed on every call
        let mut rng = stream(seed.wrapping_add(17), StreamKind::Episode);
        let parts = augment::elbo_loss(
            &mut g, &s, &clf, &images, &labels, beta, KlSign::Negative, 1, &mut rng,
        )
        .unwrap();
        g.value(parts.loss).item()
    };
    let params = flatten_state(&state);
    let mut g = Graph::new();
    let mut rng = stream(seed.wrapping_add(17), StreamKind::Episode);
    let parts = augment::elbo_loss(
        &mut g, &state, &clf, &images, &labels, beta, KlSign::Negative, 1, &mut rng,
    )
    .unwrap();
    let grads = g.backward(parts.loss).unwrap();
    let mut analytic = Vec::new();
    for l in 0..state.layers.len() {
        analytic.push(grads.get_or_zeros(parts.refs.mu_ids[l], params[2 * l].shape()));
        analytic.push(grads.get_or_zeros(parts.refs.rho_ids[l], params[2 * l + 1].shape()));
    }
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "elbo")
}

/// L_cls + alpha * L_KL w.r.t. theta, with fixed augmented views.
pub fn check_cls_plus_consistency(seed: u64) -> f64 {
    let mut r = TestRand::new(seed ^ 0xc15);
    let clf = micro_params(&mut r);
    let batch = 2;
    let clean = r.tensor(&[batch, 1, 8, 8], 0.0, 1.0);
    let aug1 = r.tensor(&[batch, 1, 8, 8], 0.0, 1.0);
    let aug2 = r.tensor(&[batch, 1, 8, 8], 0.0, 1.0);
    let labels: Vec<usize> = (0..batch).map(|_| r.pick(3)).collect();
    let alpha = r.uniform(0.5, 4.0);

    let build = |clf: &ClassifierParams<f64>| -> (Graph<f64>, Vec<aba::graph::NodeId>, aba::graph::NodeId) {
        let mut g = Graph::new();
        let ids = insert_params(&mut g, clf, true);
        let xc = g.constant(clean.clone());
        let x1 = g.constant(aug1.clone());
        let x2 = g.constant(aug2.clone());
        let lc = forward_on_graph(&mut g, &clf.arch, &ids, xc).unwrap().logits;
        let l1 = forward_on_graph(&mut g, &clf.arch, &ids, x1).unwrap().logits;
        let l2 = forward_on_graph(&mut g, &clf.arch, &ids, x2).unwrap().logits;
        let ce = g.log_softmax_nll(l1, &labels).unwrap();
        let pc = g.softmax(lc).unwrap();
        let p1 = g.softmax(l1).unwrap();
        let p2 = g.softmax(l2).unwrap();
        let s = g.add(pc, p1).unwrap();
        let s = g.add(s, p2).unwrap();
        let pbar = g.scale(s, 1.0 / 3.0).unwrap();
        let k0 = g.kl_categorical(pc, pbar).unwrap();
        let k1 = g.kl_categorical(p1, pbar).unwrap();
        let k2 = g.kl_categorical(p2, pbar).unwrap();
        let kl = g.add(k0, k1).unwrap();
        let kl = g.add(kl, k2).unwrap();
        let akl = g.scale(kl, alpha).unwrap();
        let total = g.add(ce, akl).unwrap();
        (g, ids, total)
    };

    let eval = |p: &[Tensor<f64>]| -> f64 {
        let clf = with_params(&clf, p);
        let (g, _, total) = build(&clf);
        g.value(total).item()
    };
    let params = params_to_vec(&clf);
    let (g, ids, total) = build(&clf);
    let grads = g.backward(total).unwrap();
    let analytic: Vec<Tensor<f64>> = params
        .iter()
        .zip(ids.iter())
        .map(|(t, &id)| grads.get_or_zeros(id, t.shape()))
        .collect();
    let numeric = finite_diff_grads(&params, &eval);
    assert_grads_close(&analytic, &numeric, "cls_plus_consistency")
}
