//! Micro hyperparameter sweep over the adversarial step count.
//!
//!     cargo run --release --example sweep_micro

use aba::harness::{sweep, ExperimentConfig, SourceKind, SweepParam, SweepSpec};
use aba::trainer::Mode;
use std::path::PathBuf;

fn main() -> aba::Result<()> {
    let mut base = ExperimentConfig::default();
    base.source = SourceKind::Fixture;
    base.train.mode = Mode::Aba;
    base.train.iterations = 40;
    base.train.batch_size = 16;
    base.train.classifier_lr = 1e-3;
    base.aug.layers = 1;
    base.aug.hidden_width = 8;
    base.out_dir = PathBuf::from("runs/sweep_micro");

    let spec = SweepSpec {
        parameter: SweepParam::AdvSteps,
        values: vec!["0".into(), "5".into(), "10".into()],
        seeds: 2,
    };
    let csv = sweep(&base, &spec)?;
    println!("sweep written to {}", csv.display());
    print!("{}", std::fs::read_to_string(csv)?);
    Ok(())
}
