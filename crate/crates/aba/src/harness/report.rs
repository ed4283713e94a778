//! Comparison tables from results CSVs: rows are training modes, columns are
//! source + targets + target average; mean (std) over seeds.

use super::sweep::mean_std;
use crate::error::{AbaError, Result};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct ReportTable {
    /// column order: source first, then targets
    pub domains: Vec<String>,
    /// mode -> domain -> per-seed accuracies
    pub cells: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

pub fn read_results(paths: &[impl AsRef<Path>]) -> Result<ReportTable> {
    if paths.is_empty() {
        return Err(AbaError::invalid("report needs at least one results CSV"));
    }
    let mut domains: Option<Vec<String>> = None;
    let mut cells: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for p in paths {
        let p = p.as_ref();
        let mut rdr = csv::Reader::from_path(p)
            .map_err(|e| AbaError::Csv(format!("{}: {}", p.display(), e)))?;
        let mut file_domains: Vec<String> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let mode = rec.get(0).unwrap_or_default().to_string();
            let domain = rec.get(1).unwrap_or_default().to_string();
            let acc: f64 = rec
                .get(3)
                .unwrap_or_default()
                .parse()
                .map_err(|_| AbaError::Csv(format!("{}: bad accuracy", p.display())))?;
            if !file_domains.contains(&domain) {
                file_domains.push(domain.clone());
            }
            cells
                .entry(mode)
                .or_default()
                .entry(domain)
                .or_default()
                .push(acc);
        }
        match &domains {
            None => domains = Some(file_domains),
            Some(d) => {
                if *d != file_domains {
                    return Err(AbaError::invalid(format!(
                        "inconsistent domain sets across inputs: {:?} vs {:?}",
                        d, file_domains
                    )));
                }
            }
        }
    }
    Ok(ReportTable {
        domains: domains.unwrap_or_default(),
        cells,
    })
}

fn fmt_cell(values: &[f64]) -> String {
    match mean_std(values) {
        (Some(mean), Some(std)) => format!("{:.2} ({:.2})", mean * 100.0, std * 100.0),
        (Some(mean), None) => format!("{:.2}", mean * 100.0),
        _ => String::new(),
    }
}

/// Per-seed target averages for one mode (seed order as read).
fn target_averages(table: &ReportTable, mode: &str) -> Vec<f64> {
    let targets: Vec<&String> = table.domains.iter().skip(1).collect();
    let by_domain = &table.cells[mode];
    let n_seeds = targets
        .iter()
        .map(|d| by_domain.get(*d).map(|v| v.len()).unwrap_or(0))
        .min()
        .unwrap_or(0);
    (0..n_seeds)
        .map(|s| {
            targets
                .iter()
                .map(|d| by_domain[*d][s])
                .sum::<f64>()
                / targets.len() as f64
        })
        .collect()
}

/// Render the text table. Accuracies in percent, sample std over seeds when
/// two or more seeds are present (noted in the header line).
pub fn render_text(table: &ReportTable) -> String {
    let mut out = String::new();
    out.push_str("# accuracy % as mean (sample std over seeds)\n");
    let mut header: Vec<String> = vec!["mode".into()];
    header.extend(table.domains.iter().cloned());
    header.push("target-avg".into());
    let mut rows: Vec<Vec<String>> = vec![header];
    for (mode, by_domain) in &table.cells {
        let mut row = vec![mode.clone()];
        for d in &table.domains {
            row.push(fmt_cell(by_domain.get(d).map(|v| v.as_slice()).unwrap_or(&[])));
        }
        row.push(fmt_cell(&target_averages(table, mode)));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(widths.iter())
            .map(|(cell, w)| format!("{:<width$}", cell, width = w))
            .collect();
        out.push_str(&line.join("  "));
        out.push('\n');
    }
    out
}

/// Write the aggregated table as CSV: mode, one column per domain
/// (mean), matching std columns, and the target average pair.
pub fn write_csv(table: &ReportTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["mode".to_string()];
    for d in &table.domains {
        header.push(format!("{}_mean", d));
        header.push(format!("{}_std", d));
    }
    header.push("target_avg_mean".into());
    header.push("target_avg_std".into());
    w.write_record(&header)?;
    for (mode, by_domain) in &table.cells {
        let mut rec = vec![mode.clone()];
        for d in &table.domains {
            let vals = by_domain.get(d).map(|v| v.as_slice()).unwrap_or(&[]);
            let (mean, std) = mean_std(vals);
            rec.push(mean.map(|m| format!("{:.6}", m)).unwrap_or_default());
            rec.push(std.map(|s| format!("{:.6}", s)).unwrap_or_default());
        }
        let (mean, std) = mean_std(&target_averages(table, mode));
        rec.push(mean.map(|m| format!("{:.6}", m)).unwrap_or_default());
        rec.push(std.map(|s| format!("{:.6}", s)).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean accuracy over seeds for (mode, domain); test and gate helper.
pub fn mode_domain_mean(table: &ReportTable, mode: &str, domain: &str) -> Option<f64> {
    let vals = table.cells.get(mode)?.get(domain)?;
    mean_std(vals).0
}

/// Mean of per-seed target averages for a mode.
pub fn mode_target_avg(table: &ReportTable, mode: &str) -> Option<f64> {
    if !table.cells.contains_key(mode) {
        return None;
    }
    mean_std(&target_averages(table, mode)).0
}
