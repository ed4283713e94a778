//! End-to-end harness behavior: run artifacts, idempotency, sweeps, reports
//! and the embedding pipeline on desk-micro budgets.

mod common;

use aba::harness::{
    self, embed_features, run_experiment, sweep, ExperimentConfig, SourceKind, SweepParam,
    SweepSpec,
};
use aba::trainer::Mode;
use std::path::Path;

fn micro_cfg(dir: &Path, mode: Mode, iterations: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.train.mode = mode;
    cfg.train.iterations = iterations;
    cfg.train.warmup = 2;
    cfg.train.batch_size = 8;
    cfg.train.adv_steps = 2;
    cfg.train.classifier_lr = 1e-3;
    cfg.train.seed = 3;
    cfg.aug.layers = 1;
    cfg.aug.hidden_width = 4;
    cfg.aug.kernel_choices = vec![1, 3];
    cfg.source = SourceKind::Fixture;
    cfg.out_dir = dir.to_path_buf();
    cfg
}

#[test]
fn erm_smoke_run_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_cfg(dir.path(), Mode::Erm, 50);
    let artifacts = run_experiment(&cfg).unwrap();
    assert!(artifacts.results_csv.exists());
    assert!(artifacts.metrics_csv.exists());
    assert!(artifacts.checkpoint.exists());
    assert!(artifacts.config_snapshot.exists());

    let results = std::fs::read_to_string(&artifacts.results_csv).unwrap();
    let mut lines = results.lines();
    assert_eq!(
        lines.next().unwrap(),
        "mode,domain,seed,accuracy,iterations,wall_clock_s"
    );
    let domains: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(
        domains,
        vec!["source", "invert", "tint", "noise-bg", "contrast"]
    );
}

#[test]
fn rerun_is_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = run_experiment(&micro_cfg(dir_a.path(), Mode::Aba, 6)).unwrap();
    let b = run_experiment(&micro_cfg(dir_b.path(), Mode::Aba, 6)).unwrap();
    for (pa, pb) in [
        (&a.results_csv, &b.results_csv),
        (&a.metrics_csv, &b.metrics_csv),
        (&a.checkpoint, &b.checkpoint),
        (&a.config_snapshot, &b.config_snapshot),
    ] {
        let ba = std::fs::read(pa).unwrap();
        let bb = std::fs::read(pb).unwrap();
        assert_eq!(ba, bb, "artifact differs: {}", pa.display());
    }
}

#[test]
fn eval_checkpoint_matches_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_cfg(dir.path(), Mode::Erm, 10);
    let artifacts = run_experiment(&cfg).unwrap();
    let evals = harness::eval_checkpoint(&cfg, &artifacts.checkpoint).unwrap();
    let results = std::fs::read_to_string(&artifacts.results_csv).unwrap();
    for ((domain, acc), line) in evals.iter().zip(results.lines().skip(1)) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(domain, cols[1]);
        let recorded: f64 = cols[3].parse().unwrap();
        assert!((acc - recorded).abs() < 1e-6);
    }
}

#[test]
fn sweep_row_counts_match_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = micro_cfg(dir.path(), Mode::Aba, 4);
    base.targets = vec![
        aba::data::ShiftKind::Invert,
        aba::data::ShiftKind::Contrast,
    ];
    let spec = SweepSpec {
        parameter: SweepParam::AdvSteps,
        values: vec!["0".into(), "2".into(), "3".into()],
        seeds: 2,
    };
    let csv = sweep(&base, &spec).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut data_rows = 0;
    let mut agg_rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let seed = rec.get(2).unwrap();
        let acc = rec.get(4).unwrap();
        if seed == "mean" || seed == "std" {
            agg_rows += 1;
        } else {
            data_rows += 1;
            assert!(!acc.is_empty(), "cell failed: {:?}", rec);
            let v: f64 = acc.parse().unwrap();
            assert!(v.is_finite());
        }
    }
    // |values| * seeds * (1 + |targets|) data rows
    assert_eq!(
        data_rows,
        harness::sweep::expected_data_rows(&spec, base.targets.len())
    );
    assert_eq!(agg_rows, spec.values.len() * (1 + base.targets.len()) * 2);
}

#[test]
fn degenerate_sweep_matches_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let base = micro_cfg(dir.path(), Mode::Aba, 5);
    let spec = SweepSpec {
        parameter: SweepParam::Layers,
        values: vec!["1".into()],
        seeds: 1,
    };
    let csv = sweep(&base, &spec).unwrap();

    let run_dir = tempfile::tempdir().unwrap();
    let mut single = micro_cfg(run_dir.path(), Mode::Aba, 5);
    single.aug.layers = 1;
    let artifacts = run_experiment(&single).unwrap();
    let results = std::fs::read_to_string(&artifacts.results_csv).unwrap();
    let sweep_text = std::fs::read_to_string(&csv).unwrap();

    for line in results.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let needle = format!("layers,1,{},{},{}", cols[2], cols[1], cols[3]);
        assert!(
            sweep_text.contains(&needle),
            "sweep missing row equivalent to `{}` (wanted `{}`)\n{}",
            line,
            needle,
            sweep_text
        );
    }
}

#[test]
fn embedding_pipeline_produces_coords_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_cfg(dir.path(), Mode::Aba, 6);
    let artifacts = run_experiment(&cfg).unwrap();
    let embed = embed_features(&cfg, &artifacts.checkpoint, 16).unwrap();
    let coords = std::fs::read_to_string(&embed.coords_csv).unwrap();
    let svg = std::fs::read_to_string(&embed.svg).unwrap();
    for group in [
        "source",
        "invert",
        "aba-augmented",
        "randconv-augmented",
        "altlite-augmented",
    ] {
        assert!(coords.contains(group), "coords missing group {group}");
        assert!(svg.contains(group), "svg missing group {group}");
    }
    // 16 points per group, 5 domains (source + 4 targets) + 3 aug families
    let rows = coords.lines().count() - 1;
    assert_eq!(rows, 16 * (5 + 3));
    assert!(svg.starts_with("<svg"));
}

#[test]
fn pca_matches_jacobi_oracle() {
    let mut r = common::TestRand::new(12);
    for trial in 0..10 {
        let n = 100;
        let d = 8;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| r.uniform(-1.0, 1.0)).collect())
            .collect();
        let pca = harness::Pca2::fit(&rows).unwrap();

        // oracle: full eigendecomposition of the covariance matrix
        let mut mean = vec![0.0; d];
        for row in &rows {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = vec![0.0; d * d];
        for row in &rows {
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += (row[i] - mean[i]) * (row[j] - mean[j]);
                }
            }
        }
        for v in &mut cov {
            *v /= (n - 1) as f64;
        }
        let (evals, evecs) = common::jacobi_eigen(&cov, d);

        for c in 0..2 {
            let rel = (pca.eigenvalues[c] - evals[c]).abs() / evals[c];
            assert!(rel < 1e-8, "trial {trial}: eigenvalue {c} off by {rel}");
            // compare up to sign
            let dot: f64 = pca.components[c]
                .iter()
                .zip(evecs[c].iter())
                .map(|(a, b)| a * b)
                .sum();
            assert!(
                dot.abs() > 1.0 - 1e-8,
                "trial {trial}: eigenvector {c} misaligned (|dot| = {})",
                dot.abs()
            );
        }
    }
}

#[test]
fn config_error_paths() {
    // missing file
    assert!(ExperimentConfig::load(Path::new("/nonexistent/config")).is_err());
    // invalid field caught with key context
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.conf");
    std::fs::write(&p, "batch_size = zero").unwrap();
    let err = ExperimentConfig::load(&p).unwrap_err();
    assert!(err.to_string().contains("batch_size"));
}
