//! One config-driven run: build datasets, train, write artifacts.

use super::config::{ArchChoice, ExperimentConfig, SourceKind};
use crate::checkpoint;
use crate::classifier::Architecture;
use crate::data::{self, load_idx, make_domain, subset, DomainDataset};
use crate::error::{AbaError, Result};
use crate::rng::{stream, StreamKind};
use crate::tensor::{Dtype, Scalar};
use crate::trainer::{self, MetricsRow, Timing, TrainOutcome};
use std::path::{Path, PathBuf};

/// Seeds that pin the shared corpus: the same source split is used by every
/// run of an experiment family, so method comparisons see identical data.
const SYNTH_TRAIN_SEED: u64 = 1001;
const SYNTH_TEST_SEED: u64 = 2002;
const SUBSET_SEED: u64 = 3003;

pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub results_csv: PathBuf,
    pub metrics_csv: PathBuf,
    pub checkpoint: PathBuf,
    pub config_snapshot: PathBuf,
}

pub struct PreparedData<T> {
    pub train: DomainDataset<T>,
    pub eval_domains: Vec<DomainDataset<T>>,
}

/// Source + target construction: the source test split plus one shifted
/// domain per configured target kind, all built from the test split.
pub fn prepare_data<T: Scalar>(cfg: &ExperimentConfig) -> Result<PreparedData<T>> {
    let (train, mut test) = match cfg.source {
        SourceKind::Synth => (
            data::synth_digits::<T>(cfg.train_size, SYNTH_TRAIN_SEED)?,
            data::synth_digits::<T>(cfg.test_size, SYNTH_TEST_SEED)?,
        ),
        SourceKind::Fixture => (data::fixture_dataset::<T>(), data::fixture_dataset::<T>()),
        SourceKind::Mnist => {
            let dir = cfg.resolve_data_dir().ok_or_else(|| AbaError::Config {
                key: "data_dir".into(),
                msg: "source = mnist needs data_dir or ABA_DATA_DIR".into(),
            })?;
            let train_full = load_idx::<T>(
                &existing(&dir, &["train-images-idx3-ubyte", "train-images.idx3-ubyte"])?,
                &existing(&dir, &["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"])?,
            )?;
            let mut sub_rng = stream(SUBSET_SEED, StreamKind::Subset);
            let train = subset(&train_full, cfg.train_size.min(train_full.len()), &mut sub_rng)?;
            let test_full = load_idx::<T>(
                &existing(&dir, &["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"])?,
                &existing(&dir, &["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"])?,
            )?;
            let test = if cfg.test_size > 0 && cfg.test_size < test_full.len() {
                let mut rng = stream(SUBSET_SEED + 1, StreamKind::Subset);
                subset(&test_full, cfg.test_size, &mut rng)?
            } else {
                test_full
            };
            (train, test)
        }
    };
    test.name = "source".to_string();
    let mut eval_domains = vec![test];
    for &kind in &cfg.targets {
        eval_domains.push(make_domain(&eval_domains[0], kind, cfg.target_seed)?);
    }
    Ok(PreparedData {
        train,
        eval_domains,
    })
}

fn existing(dir: &Path, names: &[&str]) -> Result<PathBuf> {
    for n in names {
        let p = dir.join(n);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(AbaError::DataFormat(format!(
        "none of {:?} found in {}",
        names,
        dir.display()
    )))
}

pub fn build_arch(cfg: &ExperimentConfig, dims: (usize, usize, usize)) -> Architecture {
    match cfg.arch {
        ArchChoice::DeskNet => Architecture::desknet(dims, 10),
        ArchChoice::DigitNetLike => Architecture::digitnet_like(dims, 10),
    }
}

/// Train per the config and write metrics CSV, results CSV, checkpoint and a
/// resolved-config snapshot into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    match cfg.dtype {
        Dtype::F32 => run_typed::<f32>(cfg),
        Dtype::F64 => run_typed::<f64>(cfg),
    }
}

fn run_typed<T: Scalar>(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    crate::set_threads(cfg.threads);
    std::fs::create_dir_all(&cfg.out_dir)?;

    let prepared = prepare_data::<T>(cfg)?;
    let arch = build_arch(cfg, prepared.train.image_dims());
    let eval_refs: Vec<&DomainDataset<T>> = prepared.eval_domains.iter().collect();
    let started = std::time::Instant::now();
    let outcome = trainer::train(
        &cfg.train,
        &cfg.aug,
        &arch,
        &prepared.train,
        &eval_refs,
        cfg.timing,
    )?;
    let elapsed = started.elapsed().as_secs_f64();

    let artifacts = RunArtifacts {
        out_dir: cfg.out_dir.clone(),
        results_csv: cfg.out_dir.join("results.csv"),
        metrics_csv: cfg.out_dir.join("metrics.csv"),
        checkpoint: cfg.out_dir.join("classifier.ckpt"),
        config_snapshot: cfg.out_dir.join("config.resolved"),
    };
    write_metrics_csv(&artifacts.metrics_csv, &outcome)?;
    write_results_csv(&artifacts.results_csv, cfg, &outcome, elapsed)?;
    checkpoint::save(&artifacts.checkpoint, &outcome.params)?;
    std::fs::write(&artifacts.config_snapshot, cfg.resolved_snapshot())?;
    Ok(artifacts)
}

fn fmt_loss(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{:.6}", v)
    }
}

pub fn write_metrics_csv<T: Scalar>(path: &Path, outcome: &TrainOutcome<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "iteration".to_string(),
        "phase".to_string(),
        "loss_cls".to_string(),
        "loss_kl".to_string(),
        "loss_elbo_final".to_string(),
        "fallback".to_string(),
    ];
    for d in &outcome.eval_domains {
        header.push(format!("acc_{}", d));
    }
    header.push("wall_clock_s".to_string());
    w.write_record(&header)?;
    for row in &outcome.metrics {
        let mut rec = vec![
            row.iteration.to_string(),
            row.phase.name().to_string(),
            fmt_loss(row.loss_cls),
            fmt_loss(row.loss_kl),
            fmt_loss(row.loss_elbo_final),
            (row.fallback as u8).to_string(),
        ];
        match &row.accuracy {
            Some(accs) => rec.extend(accs.iter().map(|a| format!("{:.6}", a))),
            None => rec.extend(outcome.eval_domains.iter().map(|_| String::new())),
        }
        rec.push(format!("{:.3}", row.wall_clock_s));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Final accuracy of each eval domain, from the last metrics row.
pub fn final_accuracies(metrics: &[MetricsRow]) -> Option<&Vec<f64>> {
    metrics.last().and_then(|r| r.accuracy.as_ref())
}

fn write_results_csv<T: Scalar>(
    path: &Path,
    cfg: &ExperimentConfig,
    outcome: &TrainOutcome<T>,
    elapsed_s: f64,
) -> Result<()> {
    let accs = final_accuracies(&outcome.metrics);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["mode", "domain", "seed", "accuracy", "iterations", "wall_clock_s"])?;
    if let Some(accs) = accs {
        for (domain, acc) in outcome.eval_domains.iter().zip(accs.iter()) {
            let wall = match cfg.timing {
                Timing::Real => format!("{:.3}", elapsed_s),
                Timing::Deterministic => "0.000".to_string(),
            };
            w.write_record([
                cfg.train.mode.name(),
                domain,
                &cfg.train.seed.to_string(),
                &format!("{:.6}", acc),
                &cfg.train.iterations.to_string(),
                &wall,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Evaluate a checkpoint on the config's domains without training.
pub fn eval_checkpoint(cfg: &ExperimentConfig, ckpt: &Path) -> Result<Vec<(String, f64)>> {
    match cfg.dtype {
        Dtype::F32 => eval_typed::<f32>(cfg, ckpt),
        Dtype::F64 => eval_typed::<f64>(cfg, ckpt),
    }
}

fn eval_typed<T: Scalar>(cfg: &ExperimentConfig, ckpt: &Path) -> Result<Vec<(String, f64)>> {
    let params = checkpoint::load::<T>(ckpt)?;
    let prepared = prepare_data::<T>(cfg)?;
    let mut out = Vec::new();
    for d in &prepared.eval_domains {
        out.push((d.name.clone(), trainer::evaluate(&params, d)?));
    }
    Ok(out)
}
