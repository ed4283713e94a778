//! Micro comparison run: ERM vs RandConv vs ABA on the synthetic digit
//! source, aggregated into a small table. Budgets are deliberately tiny;
//! raise `iterations` for a meaningful comparison.
//!
//!     cargo run --release --example baselines_compare [iterations]

use aba::harness::{read_results, render_text, run_experiment, ExperimentConfig, SourceKind};
use aba::trainer::Mode;
use std::path::PathBuf;

fn main() -> aba::Result<()> {
    let iterations: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);
    let mut results = Vec::new();
    for mode in [Mode::Erm, Mode::RandConv, Mode::Aba] {
        let mut cfg = ExperimentConfig::default();
        cfg.source = SourceKind::Synth;
        cfg.train_size = 512;
        cfg.test_size = 256;
        cfg.train.mode = mode;
        cfg.train.iterations = iterations;
        cfg.train.batch_size = 32;
        cfg.train.adv_steps = 5;
        cfg.aug.layers = 3;
        cfg.aug.hidden_width = 16;
        cfg.aug.kernel_choices = vec![1, 3, 5];
        cfg.out_dir = PathBuf::from(format!("runs/compare/{}", mode.name()));
        println!("training {} for {} iterations ...", mode.name(), iterations);
        let artifacts = run_experiment(&cfg)?;
        results.push(artifacts.results_csv);
    }
    let table = read_results(&results)?;
    print!("{}", render_text(&table));
    Ok(())
}
