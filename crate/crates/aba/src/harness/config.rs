//! Flat key-value experiment configs.
//!
//! One `key = value` pair per line, `#` comments, unknown keys rejected with
//! the offending key in the error. `resolved_snapshot` renders every knob
//! back out in sorted order so a run can be reproduced from its artifacts.

use crate::augment::{AugmenterSpec, KlSign};
use crate::data::ShiftKind;
use crate::error::{AbaError, Result};
use crate::tensor::Dtype;
use crate::trainer::{SecondSample, Timing, TrainConfig};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchChoice {
    DeskNet,
    DigitNetLike,
}

impl ArchChoice {
    pub fn name(self) -> &'static str {
        match self {
            ArchChoice::DeskNet => "desknet",
            ArchChoice::DigitNetLike => "digitnet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Synth,
    Fixture,
    Mnist,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::Synth => "synth",
            SourceKind::Fixture => "fixture",
            SourceKind::Mnist => "mnist",
        }
    }
}

/// Everything a run needs: training knobs, augmenter structure, architecture,
/// source dataset spec, target shift list and output location.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub aug: AugmenterSpec,
    pub arch: ArchChoice,
    pub source: SourceKind,
    pub data_dir: Option<PathBuf>,
    pub train_size: usize,
    pub test_size: usize,
    pub targets: Vec<ShiftKind>,
    pub target_seed: u64,
    pub dtype: Dtype,
    pub out_dir: PathBuf,
    pub threads: usize,
    pub timing: Timing,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::digits_defaults(),
            aug: AugmenterSpec::new(3, 3),
            arch: ArchChoice::DeskNet,
            source: SourceKind::Synth,
            data_dir: None,
            train_size: 2000,
            test_size: 1000,
            targets: ShiftKind::ALL.to_vec(),
            target_seed: 77,
            dtype: Dtype::F32,
            out_dir: PathBuf::from("runs/out"),
            threads: 0,
            timing: Timing::Deterministic,
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> AbaError {
    AbaError::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse_num<N: std::str::FromStr>(key: &str, v: &str) -> Result<N> {
    v.parse()
        .map_err(|_| bad(key, format!("cannot parse `{}`", v)))
}

fn parse_switch(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(bad(key, format!("expected on/off, got `{}`", v))),
    }
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                bad(
                    &format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{}`", line),
                )
            })?;
            cfg.apply(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            AbaError::Config {
                key: "config".into(),
                msg: format!("cannot read {}: {}", path.display(), e),
            }
        })?;
        Self::parse_str(&text)
    }

    pub fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "mode" => self.train.mode = v.parse()?,
            "seed" => self.train.seed = parse_num(key, v)?,
            "iterations" => self.train.iterations = parse_num(key, v)?,
            "warmup" => self.train.warmup = parse_num(key, v)?,
            "batch_size" => self.train.batch_size = parse_num(key, v)?,
            "classifier_lr" => self.train.classifier_lr = parse_num(key, v)?,
            "consistency_weight" => self.train.consistency_weight = parse_num(key, v)?,
            "adv_lr" => self.train.adv_lr = parse_num(key, v)?,
            "adv_steps" => self.train.adv_steps = parse_num(key, v)?,
            "elbo_beta" => self.train.elbo_beta = parse_num(key, v)?,
            "kl_sign" => {
                self.train.kl_sign = match v {
                    "negative" => KlSign::Negative,
                    "positive" => KlSign::Positive,
                    _ => return Err(bad(key, format!("expected negative/positive, got `{}`", v))),
                }
            }
            "num_bayes_samples" => self.train.num_bayes_samples = parse_num(key, v)?,
            "second_sample" => self.train.second_sample = v.parse()?,
            "clean_ce" => self.train.clean_ce = parse_switch(key, v)?,
            "eval_interval" => self.train.eval_interval = parse_num(key, v)?,
            "layers" => self.aug.layers = parse_num(key, v)?,
            "hidden_width" => self.aug.hidden_width = parse_num(key, v)?,
            "leaky_slope" => self.aug.leaky_slope = parse_num(key, v)?,
            "kernel_set" => {
                let parsed: Result<Vec<usize>> = v
                    .split(',')
                    .map(|s| parse_num::<usize>(key, s.trim()))
                    .collect();
                self.aug.kernel_choices = parsed?;
            }
            "arch" => {
                self.arch = match v {
                    "desknet" => ArchChoice::DeskNet,
                    "digitnet" => ArchChoice::DigitNetLike,
                    _ => return Err(bad(key, format!("expected desknet/digitnet, got `{}`", v))),
                }
            }
            "source" => {
                self.source = match v {
                    "synth" => SourceKind::Synth,
                    "fixture" => SourceKind::Fixture,
                    "mnist" => SourceKind::Mnist,
                    _ => {
                        return Err(bad(
                            key,
                            format!("expected synth/fixture/mnist, got `{}`", v),
                        ))
                    }
                }
            }
            "data_dir" => self.data_dir = Some(PathBuf::from(v)),
            "train_size" => self.train_size = parse_num(key, v)?,
            "test_size" => self.test_size = parse_num(key, v)?,
            "targets" => {
                let parsed: Result<Vec<ShiftKind>> =
                    v.split(',').map(|s| s.trim().parse()).collect();
                self.targets = parsed?;
            }
            "target_seed" => self.target_seed = parse_num(key, v)?,
            "dtype" => {
                self.dtype = match v {
                    "f32" => Dtype::F32,
                    "f64" => Dtype::F64,
                    _ => return Err(bad(key, format!("expected f32/f64, got `{}`", v))),
                }
            }
            "out_dir" => self.out_dir = PathBuf::from(v),
            "threads" => self.threads = parse_num(key, v)?,
            "timing" => {
                self.timing = match v {
                    "deterministic" => Timing::Deterministic,
                    "real" => Timing::Real,
                    _ => {
                        return Err(bad(
                            key,
                            format!("expected deterministic/real, got `{}`", v),
                        ))
                    }
                }
            }
            other => return Err(bad(other, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.aug.validate()?;
        if self.train_size == 0 {
            return Err(bad("train_size", "must be >= 1"));
        }
        if self.targets.is_empty() {
            return Err(bad("targets", "need at least one target shift"));
        }
        if self.source == SourceKind::Mnist && self.resolve_data_dir().is_none() {
            return Err(bad(
                "data_dir",
                "source = mnist needs data_dir or the ABA_DATA_DIR environment variable",
            ));
        }
        Ok(())
    }

    /// ABA_DATA_DIR overrides the config key when set.
    pub fn resolve_data_dir(&self) -> Option<PathBuf> {
        std::env::var_os("ABA_DATA_DIR")
            .map(PathBuf::from)
            .or_else(|| self.data_dir.clone())
    }

    /// Sorted `key = value` rendering of every resolved knob.
    pub fn resolved_snapshot(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("mode", self.train.mode.name().into());
        kv.insert("seed", self.train.seed.to_string());
        kv.insert("iterations", self.train.iterations.to_string());
        kv.insert("warmup", self.train.warmup.to_string());
        kv.insert("batch_size", self.train.batch_size.to_string());
        kv.insert("classifier_lr", format!("{e}", e = self.train.classifier_lr));
        kv.insert(
            "consistency_weight",
            format!("{e}", e = self.train.consistency_weight),
        );
        kv.insert("adv_lr", format!("{e}", e = self.train.adv_lr));
        kv.insert("adv_steps", self.train.adv_steps.to_string());
        kv.insert("elbo_beta", format!("{e}", e = self.train.elbo_beta));
        kv.insert(
            "kl_sign",
            match self.train.kl_sign {
                KlSign::Negative => "negative".into(),
                KlSign::Positive => "positive".into(),
            },
        );
        kv.insert(
            "num_bayes_samples",
            self.train.num_bayes_samples.to_string(),
        );
        kv.insert(
            "second_sample",
            match self.train.second_sample {
                SecondSample::Bayes => "bayes".into(),
                SecondSample::RandConv => "randconv".into(),
            },
        );
        kv.insert("clean_ce", if self.train.clean_ce { "on" } else { "off" }.into());
        kv.insert("eval_interval", self.train.eval_interval.to_string());
        kv.insert("layers", self.aug.layers.to_string());
        kv.insert("hidden_width", self.aug.hidden_width.to_string());
        kv.insert("leaky_slope", format!("{e}", e = self.aug.leaky_slope));
        kv.insert(
            "kernel_set",
            self.aug
                .kernel_choices
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.insert("arch", self.arch.name().into());
        kv.insert("source", self.source.name().into());
        if let Some(d) = &self.data_dir {
            kv.insert("data_dir", d.display().to_string());
        }
        kv.insert("train_size", self.train_size.to_string());
        kv.insert("test_size", self.test_size.to_string());
        kv.insert(
            "targets",
            self.targets
                .iter()
                .map(|t| t.name().to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.insert("target_seed", self.target_seed.to_string());
        kv.insert("dtype", self.dtype.name().into());
        // out_dir is deliberately omitted: the snapshot records the
        // experiment's identity, not where it happened to be written
        kv.insert("threads", self.threads.to_string());
        kv.insert(
            "timing",
            match self.timing {
                Timing::Deterministic => "deterministic".into(),
                Timing::Real => "real".into(),
            },
        );
        let mut out = String::new();
        for (k, v) in kv {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}
