//! Hyperparameter sweeps over the four ablation axes: adversarial steps,
//! adversarial learning rate, augmenter depth, and sample count.

use super::config::ExperimentConfig;
use super::experiment::run_experiment;
use crate::error::{AbaError, Result};
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    AdvSteps,
    AdvLr,
    Layers,
    NumBayesSamples,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::AdvSteps => "adv_steps",
            SweepParam::AdvLr => "adv_lr",
            SweepParam::Layers => "layers",
            SweepParam::NumBayesSamples => "num_bayes_samples",
        }
    }
}

impl FromStr for SweepParam {
    type Err = AbaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adv_steps" => Ok(SweepParam::AdvSteps),
            "adv_lr" => Ok(SweepParam::AdvLr),
            "layers" => Ok(SweepParam::Layers),
            "num_bayes_samples" => Ok(SweepParam::NumBayesSamples),
            other => Err(AbaError::invalid(format!(
                "unknown sweep parameter `{}` (expected adv_steps, adv_lr, layers or num_bayes_samples)",
                other
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<String>,
    pub seeds: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(AbaError::invalid("sweep needs at least one value"));
        }
        if self.seeds == 0 {
            return Err(AbaError::invalid("sweep needs at least one seed"));
        }
        for v in &self.values {
            self.apply_check(v)?;
        }
        Ok(())
    }

    fn apply_check(&self, value: &str) -> Result<()> {
        let mut probe = ExperimentConfig::default();
        apply_value(&mut probe, self.parameter, value)
    }
}

fn apply_value(cfg: &mut ExperimentConfig, param: SweepParam, value: &str) -> Result<()> {
    let key = param.name();
    match param {
        SweepParam::AdvSteps => cfg.apply(key, value),
        SweepParam::AdvLr => cfg.apply(key, value),
        SweepParam::Layers => cfg.apply(key, value),
        SweepParam::NumBayesSamples => cfg.apply(key, value),
    }
}

/// Run the grid and write `sweep.csv` under the base config's out_dir.
/// Columns: parameter, value, seed, domain, accuracy. Per-seed rows first,
/// then `mean`/`std` aggregation rows per (value, domain). A failed cell
/// keeps its rows with an empty accuracy and the sweep continues.
pub fn sweep(base: &ExperimentConfig, spec: &SweepSpec) -> Result<PathBuf> {
    spec.validate()?;
    base.validate()?;
    std::fs::create_dir_all(&base.out_dir)?;
    let csv_path = base.out_dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["parameter", "value", "seed", "domain", "accuracy"])?;

    // domain list is fixed by the base config
    let domain_names: Vec<String> = domain_names(base)?;

    let mut aggregates: Vec<(String, String, Vec<Option<f64>>)> = Vec::new();
    for value in &spec.values {
        // per domain, the per-seed accuracies of this value
        let mut by_domain: Vec<Vec<f64>> = vec![Vec::new(); domain_names.len()];
        for s in 0..spec.seeds {
            let mut cell = base.clone();
            apply_value(&mut cell, spec.parameter, value)?;
            cell.train.seed = base.train.seed + s;
            cell.out_dir = base
                .out_dir
                .join("cells")
                .join(format!("{}_{}_s{}", spec.parameter.name(), value, cell.train.seed));
            let result = run_experiment(&cell).and_then(|art| {
                read_final_accuracies(&art.results_csv, &domain_names)
            });
            match result {
                Ok(accs) => {
                    for (d, acc) in accs.iter().enumerate() {
                        w.write_record([
                            spec.parameter.name(),
                            value,
                            &cell.train.seed.to_string(),
                            &domain_names[d],
                            &format!("{:.6}", acc),
                        ])?;
                        by_domain[d].push(*acc);
                    }
                }
                Err(e) => {
                    eprintln!(
                        "sweep cell {}={} seed {} failed: {}",
                        spec.parameter.name(),
                        value,
                        cell.train.seed,
                        e
                    );
                    for name in &domain_names {
                        w.write_record([
                            spec.parameter.name(),
                            value,
                            &cell.train.seed.to_string(),
                            name,
                            "",
                        ])?;
                    }
                }
            }
        }
        for (d, name) in domain_names.iter().enumerate() {
            let accs = &by_domain[d];
            let (mean, std) = mean_std(accs);
            aggregates.push((value.clone(), name.clone(), vec![mean, std]));
        }
    }
    for (value, domain, stats) in &aggregates {
        for (label, stat) in ["mean", "std"].iter().zip(stats.iter()) {
            w.write_record([
                spec.parameter.name(),
                value,
                label,
                domain,
                &stat.map(|v| format!("{:.6}", v)).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(csv_path)
}

fn domain_names(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let mut names = vec!["source".to_string()];
    names.extend(cfg.targets.iter().map(|t| t.name().to_string()));
    Ok(names)
}

fn read_final_accuracies(results_csv: &std::path::Path, domains: &[String]) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(results_csv)?;
    let mut by_name = std::collections::BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let domain = rec.get(1).unwrap_or_default().to_string();
        let acc: f64 = rec
            .get(3)
            .unwrap_or_default()
            .parse()
            .map_err(|_| AbaError::Csv("bad accuracy field".into()))?;
        by_name.insert(domain, acc);
    }
    domains
        .iter()
        .map(|d| {
            by_name
                .get(d)
                .copied()
                .ok_or_else(|| AbaError::Csv(format!("missing domain {} in results", d)))
        })
        .collect()
}

/// Mean and sample standard deviation (n-1); std is None below two samples.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

/// Expected number of per-seed data rows for a spec (the counting invariant).
pub fn expected_data_rows(spec: &SweepSpec, n_targets: usize) -> usize {
    spec.values.len() * spec.seeds as usize * (1 + n_targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_hand_arithmetic() {
        let (mean, std) = mean_std(&[0.6, 0.8]);
        assert!((mean.unwrap() - 0.7).abs() < 1e-12);
        assert!((std.unwrap() - 0.1414).abs() < 1e-3);
    }

    #[test]
    fn unknown_parameter_rejected() {
        assert!("dropout".parse::<SweepParam>().is_err());
        assert_eq!("adv_lr".parse::<SweepParam>().unwrap(), SweepParam::AdvLr);
    }

    #[test]
    fn invalid_value_rejected_upfront() {
        let spec = SweepSpec {
            parameter: SweepParam::Layers,
            values: vec!["three".into()],
            seeds: 1,
        };
        assert!(spec.validate().is_err());
    }
}
