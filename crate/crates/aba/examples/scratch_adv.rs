use aba::augment::*;
use aba::classifier::init_classifier;
use aba::data::{synth_digits, Batcher};
use aba::optim::Optimizer;
use aba::rng::{stream, StreamKind};
use aba::tensor::Tensor;
use aba::trainer::erm_step;

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
        total += aba::ops::log_softmax_nll_forward(&logits, y).unwrap();
    }
    total / draws as f64
}

fn main() {
    for (erm_iters, batch, draws) in [(150usize, 128usize, 8usize), (600, 128, 8), (600, 128, 16)] {
        let src = synth_digits::<f64>(2000, 11).unwrap();
        let arch = aba::classifier::Architecture::desknet((3, 28, 28), 10);
        let mut rng = stream(21, StreamKind::ClassifierInit);
        let mut clf = init_classifier(&arch, &mut rng).unwrap();
        let mut opt = Optimizer::adam(1e-3);
        let mut data_rng = stream(21, StreamKind::Data);
        let mut b = Batcher::new(src.len(), 64).unwrap();
        for _ in 0..erm_iters {
            let idx = b.next(&mut data_rng);
            let (x, y) = src.batch(&idx).unwrap();
            erm_step(&mut clf, &mut opt, &x, &y).unwrap();
        }
        let acc = aba::trainer::evaluate(&clf, &src).unwrap();
        println!("== ERM f {} iters (acc {:.3}), episode batch {}, draws {} ==", erm_iters, acc, batch, draws);

        let spec = AugmenterSpec::new(3, 3);
        let mut episode_rng = stream(40, StreamKind::Episode);
        let mut data_rng = stream(41, StreamKind::Data);
        let mut batcher = Batcher::new(src.len(), batch).unwrap();
        let mut wins = 0;
        let n = 30;
        let mut deltas = Vec::new();
        for e in 0..n {
            let idx = batcher.next(&mut data_rng);
            let (x, y) = src.batch(&idx).unwrap();
            let mut state: AugmenterState<f64> = init_episode(&spec, &mut episode_rng).unwrap();
            let init_state = state.clone();
            adversarial_fit(&mut state, &clf, &x, &y, 5e-6, 10, 1.0, KlSign::Negative, &mut episode_rng).unwrap();
            let ce_i = mean_ce_common_noise(&init_state, &clf, &x, &y, 9000 + e, draws);
            let ce_f = mean_ce_common_noise(&state, &clf, &x, &y, 9000 + e, draws);
            deltas.push(ce_f - ce_i);
            if ce_f > ce_i { wins += 1; }
        }
        let pos: Vec<String> = deltas.iter().map(|d| format!("{:+.1e}", d)).collect();
        println!("beta 1: wins {}/{} deltas {:?}", wins, n, pos);
    }
}
