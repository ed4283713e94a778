//! Smallest end-to-end run: train with adversarial Bayesian augmentation on
//! the bundled 64-image fixture and print per-domain accuracy.
//!
//!     cargo run --release --example train_quickstart

use aba::harness::{run_experiment, ExperimentConfig, SourceKind};
use aba::trainer::Mode;

fn main() -> aba::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.source = SourceKind::Fixture;
    cfg.train.mode = Mode::Aba;
    cfg.train.iterations = 60;
    cfg.train.warmup = 5;
    cfg.train.batch_size = 16;
    cfg.train.adv_steps = 5;
    cfg.train.classifier_lr = 1e-3;
    cfg.aug.layers = 2;
    cfg.aug.hidden_width = 8;
    cfg.out_dir = std::path::PathBuf::from("runs/quickstart");

    let artifacts = run_experiment(&cfg)?;
    println!("artifacts in {}", artifacts.out_dir.display());
    let results = std::fs::read_to_string(&artifacts.results_csv)?;
    print!("{results}");
    Ok(())
}
