//! Feature-distribution analysis: project penultimate features of several
//! image groups onto their top-2 principal components and render a scatter.

use super::config::ExperimentConfig;
use super::experiment::{build_arch, prepare_data};
use crate::augment::{self, AugmenterSpec};
use crate::checkpoint;
use crate::classifier::{self, ClassifierParams};
use crate::data::DomainDataset;
use crate::error::{AbaError, Result};
use crate::rng::{stream, StreamKind};
use crate::tensor::{Dtype, Scalar, Tensor};
use std::path::{Path, PathBuf};

/// Top-2 principal directions of a pooled feature matrix.
///
/// Covariance eigendecomposition via power iteration with deflation;
/// components ordered by descending eigenvalue, sign fixed so the
/// largest-magnitude loading of each component is positive.
#[derive(Debug, Clone)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
}

impl Pca2 {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Pca2> {
        let n = rows.len();
        if n < 2 {
            return Err(AbaError::invalid("need at least two feature rows"));
        }
        let d = rows[0].len();
        if d < 2 {
            return Err(AbaError::invalid("need at least two feature dimensions"));
        }
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        // covariance, upper triangle mirrored
        let mut cov = vec![0.0; d * d];
        for r in rows {
            for i in 0..d {
                let xi = r[i] - mean[i];
                for j in i..d {
                    cov[i * d + j] += xi * (r[j] - mean[j]);
                }
            }
        }
        let denom = (n - 1) as f64;
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] /= denom;
                cov[j * d + i] = cov[i * d + j];
            }
        }

        let (l1, v1) = dominant_eigenpair(&cov, d)
            .ok_or_else(|| AbaError::invalid("degenerate covariance: no dominant eigenpair"))?;
        // deflate and repeat
        let mut deflated = cov.clone();
        for i in 0..d {
            for j in 0..d {
                deflated[i * d + j] -= l1 * v1[i] * v1[j];
            }
        }
        let (l2, v2) = dominant_eigenpair(&deflated, d)
            .ok_or_else(|| AbaError::invalid("degenerate covariance: rank < 2"))?;
        if l2 <= 1e-12 * l1.max(1.0) {
            return Err(AbaError::invalid("degenerate covariance: rank < 2"));
        }
        Ok(Pca2 {
            mean,
            components: [fix_sign(v1), fix_sign(v2)],
            eigenvalues: [l1, l2],
        })
    }

    pub fn project(&self, row: &[f64]) -> (f64, f64) {
        let mut x = 0.0;
        let mut y = 0.0;
        for i in 0..row.len() {
            let c = row[i] - self.mean[i];
            x += c * self.components[0][i];
            y += c * self.components[1][i];
        }
        (x, y)
    }
}

fn fix_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    v
}

fn dominant_eigenpair(m: &[f64], d: usize) -> Option<(f64, Vec<f64>)> {
    // deterministic start: normalized, slightly graded so it cannot be
    // orthogonal to the dominant eigenvector for generic inputs
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.01 * (i as f64 + 1.0)).collect();
    normalize(&mut v)?;
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let mut next = vec![0.0; d];
        for i in 0..d {
            let row = &m[i * d..(i + 1) * d];
            next[i] = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
        let new_lambda: f64 = next.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        normalize(&mut next)?;
        let delta: f64 = next
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // eigenvector may flip sign each step for negative eigenvalues
        let delta_neg: f64 = next
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a + b).abs())
            .fold(0.0, f64::max);
        v = next;
        lambda = new_lambda;
        if delta.min(delta_neg) < 1e-15 {
            break;
        }
    }
    if lambda <= 0.0 {
        return None;
    }
    Some((lambda, v))
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 0.0 || !norm.is_finite() {
        return None;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Some(())
}

pub struct EmbedArtifacts {
    pub coords_csv: PathBuf,
    pub svg: PathBuf,
}

/// Feature groups: the source test split, every target domain, and each
/// augmentation family applied to source images under the checkpoint's
/// classifier. Projected together onto the pooled top-2 components.
pub fn embed_features(cfg: &ExperimentConfig, ckpt: &Path, sample_count: usize) -> Result<EmbedArtifacts> {
    match cfg.dtype {
        Dtype::F32 => embed_typed::<f32>(cfg, ckpt, sample_count),
        Dtype::F64 => embed_typed::<f64>(cfg, ckpt, sample_count),
    }
}

fn take_images<T: Scalar>(ds: &DomainDataset<T>, n: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let count = n.min(ds.len());
    let idx: Vec<usize> = (0..count).collect();
    ds.batch(&idx)
}

fn features_of<T: Scalar>(params: &ClassifierParams<T>, images: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
    let f = classifier::features(params, images)?;
    let d = f.shape()[1];
    Ok(f
        .data()
        .chunks(d)
        .map(|row| row.iter().map(|v| v.as_f64()).collect())
        .collect())
}

fn embed_typed<T: Scalar>(cfg: &ExperimentConfig, ckpt: &Path, sample_count: usize) -> Result<EmbedArtifacts> {
    if sample_count == 0 {
        return Err(AbaError::invalid("sample count must be >= 1"));
    }
    let params = checkpoint::load::<T>(ckpt)?;
    let prepared = prepare_data::<T>(cfg)?;
    let arch = build_arch(cfg, prepared.train.image_dims());
    if arch != params.arch {
        eprintln!("note: checkpoint architecture differs from config; using the checkpoint's");
    }

    let mut groups: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for ds in &prepared.eval_domains {
        let (images, _) = take_images(ds, sample_count)?;
        groups.push((ds.name.clone(), features_of(&params, &images)?));
    }

    // augmentation families applied to source images
    let (src_images, src_labels) = take_images(&prepared.eval_domains[0], sample_count)?;
    let spec: &AugmenterSpec = &cfg.aug;
    let seed = cfg.train.seed;

    let mut episode_rng = stream(seed, StreamKind::Episode);
    let mut state = augment::init_episode::<T>(spec, &mut episode_rng)?;
    if cfg.train.adv_steps > 0 {
        augment::adversarial_fit(
            &mut state,
            &params,
            &src_images,
            &src_labels,
            cfg.train.adv_lr,
            cfg.train.adv_steps,
            cfg.train.elbo_beta,
            cfg.train.kl_sign,
            &mut episode_rng,
        )?;
    }
    let w = augment::sample_weights(&state, &mut episode_rng);
    let mut aba_images = augment::augment(&state, &w, &src_images)?;
    aba_images.clamp01();
    groups.push(("aba-augmented".to_string(), features_of(&params, &aba_images)?));

    let mut rc_rng = stream(seed, StreamKind::RandConv);
    let rc_images = augment::randconv_augment(&src_images, &spec.kernel_choices, &mut rc_rng)?;
    groups.push(("randconv-augmented".to_string(), features_of(&params, &rc_images)?));

    let mut alt_rng = stream(seed, StreamKind::AltLite);
    let mut alt = augment::init_altlite::<T>(spec, &mut alt_rng)?;
    if cfg.train.adv_steps > 0 {
        augment::altlite_fit(
            &mut alt,
            &params,
            &src_images,
            &src_labels,
            cfg.train.adv_lr,
            cfg.train.adv_steps,
        )?;
    }
    let mut alt_images = alt.apply(&src_images)?;
    alt_images.clamp01();
    groups.push(("altlite-augmented".to_string(), features_of(&params, &alt_images)?));

    // pooled PCA
    let pooled: Vec<Vec<f64>> = groups.iter().flat_map(|(_, f)| f.iter().cloned()).collect();
    let pca = Pca2::fit(&pooled)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    let coords_csv = cfg.out_dir.join("embedding.csv");
    let svg = cfg.out_dir.join("embedding.svg");

    let mut w = csv::Writer::from_path(&coords_csv)?;
    w.write_record(["group", "index", "x", "y"])?;
    let mut scatter: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (name, feats) in &groups {
        let pts: Vec<(f64, f64)> = feats.iter().map(|r| pca.project(r)).collect();
        for (i, (x, y)) in pts.iter().enumerate() {
            w.write_record([
                name.as_str(),
                &i.to_string(),
                &format!("{:.6}", x),
                &format!("{:.6}", y),
            ])?;
        }
        scatter.push((name.clone(), pts));
    }
    w.flush()?;
    std::fs::write(&svg, render_scatter_svg(&scatter))?;
    Ok(EmbedArtifacts { coords_csv, svg })
}

/// Render rows of images (one row per labeled group) as an SVG pixel grid.
/// Channel 0 is shown for 3-replicated grayscale; color images average
/// channels into gray.
pub fn image_grid_svg<T: Scalar>(rows: &[(String, &Tensor<T>)], max_cols: usize) -> String {
    let cell = 34.0;
    let label_w = 140.0;
    let mut height = 10.0;
    let mut body = String::new();
    let mut width: f64 = 300.0;
    for (label, images) in rows {
        let s = images.shape();
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let cols = n.min(max_cols);
        width = width.max(label_w + cols as f64 * cell + 10.0);
        body.push_str(&format!(
            "<text x=\"6\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            height + cell / 2.0,
            label
        ));
        for i in 0..cols {
            let x0 = label_w + i as f64 * cell;
            let px = (cell - 4.0) / w as f64;
            for yy in 0..h {
                for xx in 0..w {
                    let mut v = 0.0;
                    for ch in 0..c {
                        v += images.data()[i * c * h * w + ch * h * w + yy * w + xx].as_f64();
                    }
                    v /= c as f64;
                    let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                    body.push_str(&format!(
                        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({g},{g},{g})\"/>\n",
                        x0 + xx as f64 * px,
                        height + yy as f64 * px,
                        px + 0.05,
                        px + 0.05,
                    ));
                }
            }
        }
        height += cell;
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{body}</svg>\n",
        w = width,
        h = height + 10.0,
    )
}

const PALETTE: [&str; 9] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#17becf",
];

/// Minimal self-contained scatter plot.
pub fn render_scatter_svg(groups: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, margin) = (640.0, 480.0, 40.0);
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for (_, pts) in groups {
        for &(x, y) in pts {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
    }
    if !min_x.is_finite() {
        min_x = 0.0;
        max_x = 1.0;
        min_y = 0.0;
        max_y = 1.0;
    }
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    let sx = |x: f64| margin + (x - min_x) / span_x * (w - 2.0 * margin);
    let sy = |y: f64| h - margin - (y - min_y) / span_y * (h - 2.0 * margin);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">feature embedding (top-2 principal components)</text>\n",
        margin
    ));
    for (gi, (name, pts)) in groups.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        for &(x, y) in pts {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.6\"/>\n",
                sx(x),
                sy(y),
                color
            ));
        }
        let ly = 36.0 + 16.0 * gi as f64;
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\"/>\n",
            w - 180.0,
            ly,
            color
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            w - 170.0,
            ly + 4.0,
            name
        ));
    }
    out.push_str("</svg>\n");
    out
}
