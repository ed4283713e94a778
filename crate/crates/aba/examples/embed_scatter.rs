//! Feature-distribution scatter: train briefly, then project source, target
//! and augmented-image features onto the top-2 principal components.
//!
//!     cargo run --release --example embed_scatter

use aba::harness::{embed_features, run_experiment, ExperimentConfig, SourceKind};
use aba::trainer::Mode;
use std::path::PathBuf;

fn main() -> aba::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.source = SourceKind::Synth;
    cfg.train_size = 512;
    cfg.test_size = 256;
    cfg.train.mode = Mode::Aba;
    cfg.train.iterations = 150;
    cfg.train.batch_size = 32;
    cfg.train.adv_steps = 5;
    cfg.train.classifier_lr = 1e-3;
    cfg.aug.layers = 1;
    cfg.aug.hidden_width = 8;
    cfg.out_dir = PathBuf::from("runs/embed");

    println!("training a small model ...");
    let artifacts = run_experiment(&cfg)?;
    let embed = embed_features(&cfg, &artifacts.checkpoint, 120)?;
    println!("coordinates: {}", embed.coords_csv.display());
    println!("scatter:     {}", embed.svg.display());
    Ok(())
}
