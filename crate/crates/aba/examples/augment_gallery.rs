//! Side-by-side gallery of the three augmentation families applied to the
//! same digits, written as runs/gallery.svg.
//!
//!     cargo run --release --example augment_gallery

use aba::augment::{
    altlite_fit, augment, init_altlite, init_episode, randconv_augment, sample_weights,
    AugmenterSpec,
};
use aba::classifier::{init_classifier, Architecture};
use aba::data::synth_digits;
use aba::harness::image_grid_svg;
use aba::rng::{stream, StreamKind};
use aba::tensor::Tensor;

fn main() -> aba::Result<()> {
    let src = synth_digits::<f32>(64, 5)?;
    let idx: Vec<usize> = (0..8).collect();
    let (x, y) = src.batch(&idx)?;

    let spec = AugmenterSpec::new(3, 3);
    let mut rng = stream(4, StreamKind::Episode);

    // untrained classifier is enough to drive the fits for a visual demo
    let arch = Architecture::desknet((3, 28, 28), 10);
    let mut init_rng = stream(4, StreamKind::ClassifierInit);
    let clf = init_classifier::<f32>(&arch, &mut init_rng)?;

    let mut state = init_episode::<f32>(&spec, &mut rng)?;
    aba::augment::adversarial_fit(&mut state, &clf, &x, &y, 5e-5, 10, 1.0, Default::default(), &mut rng)?;
    let w1 = sample_weights(&state, &mut rng);
    let mut bayes1 = augment(&state, &w1, &x)?;
    bayes1.clamp01();
    let w2 = sample_weights(&state, &mut rng);
    let mut bayes2 = augment(&state, &w2, &x)?;
    bayes2.clamp01();

    let mut rc_rng = stream(4, StreamKind::RandConv);
    let rc = randconv_augment(&x, &spec.kernel_choices, &mut rc_rng)?;

    let mut alt_rng = stream(4, StreamKind::AltLite);
    let mut alt = init_altlite::<f32>(&spec, &mut alt_rng)?;
    altlite_fit(&mut alt, &clf, &x, &y, 5e-5, 10)?;
    let mut alt_images = alt.apply(&x)?;
    alt_images.clamp01();

    let rows: Vec<(String, &Tensor<f32>)> = vec![
        ("input".into(), &x),
        ("bayes draw 1".into(), &bayes1),
        ("bayes draw 2".into(), &bayes2),
        ("randconv".into(), &rc),
        ("altlite".into(), &alt_images),
    ];
    std::fs::create_dir_all("runs")?;
    std::fs::write("runs/gallery.svg", image_grid_svg(&rows, 8))?;
    println!("wrote runs/gallery.svg");
    Ok(())
}
