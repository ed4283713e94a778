//! One adversarial episode in isolation: re-initialize the Bayesian
//! augmenter, descend the evidence lower bound for a few steps, and watch the
//! classifier's cross-entropy on the augmented batch rise.
//!
//!     cargo run --release --example adversarial_episode

use aba::augment::{
    adversarial_fit, augmented_cross_entropy, init_episode, kl_to_prior, AugmenterSpec, KlSign,
};
use aba::classifier::{init_classifier, Architecture};
use aba::data::{synth_digits, Batcher};
use aba::optim::Optimizer;
use aba::rng::{stream, StreamKind};
use aba::trainer::erm_step;

fn main() -> aba::Result<()> {
    // a lightly trained classifier to attack
    let src = synth_digits::<f32>(512, 11)?;
    let arch = Architecture::desknet((3, 28, 28), 10);
    let mut init_rng = stream(1, StreamKind::ClassifierInit);
    let mut clf = init_classifier::<f32>(&arch, &mut init_rng)?;
    let mut opt = Optimizer::adam(1e-3);
    let mut data_rng = stream(1, StreamKind::Data);
    let mut batcher = Batcher::new(src.len(), 64)?;
    for _ in 0..150 {
        let idx = batcher.next(&mut data_rng);
        let (x, y) = src.batch(&idx)?;
        erm_step(&mut clf, &mut opt, &x, &y)?;
    }
    println!("classifier source accuracy: {:.3}", aba::trainer::evaluate(&clf, &src)?);

    let spec = AugmenterSpec::new(3, 3);
    let mut episode_rng = stream(7, StreamKind::Episode);
    let idx = batcher.next(&mut data_rng);
    let (x, y) = src.batch(&idx)?;

    let mut state = init_episode::<f32>(&spec, &mut episode_rng)?;
    let kernel_sizes: Vec<usize> = state.layers.iter().map(|l| l.kernel_size).collect();
    println!("episode kernel sizes: {:?}", kernel_sizes);
    let ce0 = augmented_cross_entropy(&state, &clf, &x, &y, &mut episode_rng)?;
    println!("cross-entropy on g(x) at init: {:.4} (kl to prior {:.4})", ce0, kl_to_prior(&state));

    let report = adversarial_fit(
        &mut state,
        &clf,
        &x,
        &y,
        5e-5, // stronger than the paper default so one episode shows clearly
        10,
        1.0,
        KlSign::Negative,
        &mut episode_rng,
    )?;
    println!(
        "inner loss {:.4} -> {:.4} over {} steps",
        report.initial_loss, report.final_loss, report.steps
    );
    let ce1 = augmented_cross_entropy(&state, &clf, &x, &y, &mut episode_rng)?;
    println!(
        "cross-entropy on g(x) after fit: {:.4} (kl to prior {:.4})",
        ce1,
        kl_to_prior(&state)
    );
    Ok(())
}
