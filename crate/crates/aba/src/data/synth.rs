//! Procedurally rendered digit images.
//!
//! A seeded stand-in source corpus for machines without the real IDX files:
//! each class is a fixed stroke glyph rasterized under random affine jitter,
//! stroke width, and intensity. Pixels are quantized to the 1/255 grid so the
//! images behave exactly like byte-derived data.

use super::{write_idx_images, write_idx_labels, DomainDataset, Provenance};
use crate::error::Result;
use crate::rng::{self, StreamKind};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;
use std::path::{Path, PathBuf};

pub const IMAGE_SIDE: usize = 28;
pub const FIXTURE_SIZE: usize = 64;
const FIXTURE_SEED: u64 = 0x0f17;

type Polyline = Vec<(f64, f64)>;

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, points: usize) -> Polyline {
    let mut p: Polyline = (0..points)
        .map(|i| {
            let a = i as f64 / points as f64 * std::f64::consts::TAU;
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect();
    p.push(p[0]);
    p
}

fn glyph(class: usize, variant: bool) -> Vec<Polyline> {
    if variant {
        return glyph_variant(class);
    }
    match class {
        0 => vec![ellipse(0.5, 0.5, 0.26, 0.36, 14)],
        1 => vec![vec![(0.38, 0.28), (0.56, 0.14), (0.56, 0.86)]],
        2 => vec![
            vec![
                (0.28, 0.32),
                (0.33, 0.17),
                (0.52, 0.12),
                (0.68, 0.18),
                (0.72, 0.33),
                (0.62, 0.50),
                (0.28, 0.86),
                (0.76, 0.86),
            ],
        ],
        3 => vec![
            vec![(0.28, 0.18), (0.48, 0.12), (0.68, 0.20), (0.68, 0.36), (0.50, 0.47)],
            vec![(0.50, 0.47), (0.70, 0.56), (0.72, 0.74), (0.52, 0.88), (0.30, 0.80)],
        ],
        4 => vec![
            vec![(0.66, 0.12), (0.66, 0.88)],
            vec![(0.66, 0.12), (0.30, 0.60), (0.82, 0.60)],
        ],
        5 => vec![vec![
            (0.70, 0.14),
            (0.32, 0.14),
            (0.30, 0.45),
            (0.55, 0.40),
            (0.72, 0.52),
            (0.72, 0.72),
            (0.52, 0.87),
            (0.30, 0.80),
        ]],
        6 => vec![vec![
            (0.62, 0.12),
            (0.42, 0.30),
            (0.32, 0.55),
            (0.33, 0.74),
            (0.48, 0.87),
            (0.65, 0.80),
            (0.68, 0.62),
            (0.52, 0.52),
            (0.35, 0.62),
        ]],
        7 => vec![
            vec![(0.26, 0.14), (0.74, 0.14), (0.46, 0.86)],
            vec![(0.38, 0.50), (0.62, 0.50)],
        ],
        8 => vec![
            ellipse(0.5, 0.30, 0.17, 0.17, 10),
            ellipse(0.5, 0.66, 0.21, 0.21, 10),
        ],
        9 => vec![
            ellipse(0.5, 0.33, 0.18, 0.19, 10),
            vec![(0.67, 0.38), (0.64, 0.88)],
        ],
        _ => unreachable!("classes are 0..=9"),
    }
}

/// Second handwriting style per class; roughly MNIST-like intra-class spread.
fn glyph_variant(class: usize) -> Vec<Polyline> {
    match class {
        // narrow zero
        0 => vec![ellipse(0.5, 0.5, 0.18, 0.37, 14)],
        // bare stroke, no flag
        1 => vec![vec![(0.5, 0.12), (0.5, 0.88)]],
        // flat-topped two with a curled base
        2 => vec![vec![
            (0.3, 0.22),
            (0.5, 0.14),
            (0.7, 0.24),
            (0.66, 0.42),
            (0.4, 0.62),
            (0.26, 0.84),
            (0.5, 0.78),
            (0.76, 0.84),
        ]],
        // rounder three
        3 => vec![
            vec![(0.3, 0.14), (0.62, 0.16), (0.6, 0.42), (0.44, 0.48)],
            vec![(0.44, 0.48), (0.66, 0.52), (0.68, 0.78), (0.4, 0.88), (0.26, 0.76)],
        ],
        // open four
        4 => vec![
            vec![(0.34, 0.14), (0.3, 0.56), (0.74, 0.56)],
            vec![(0.64, 0.3), (0.64, 0.88)],
        ],
        // squared five
        5 => vec![vec![
            (0.74, 0.16),
            (0.34, 0.16),
            (0.34, 0.5),
            (0.62, 0.46),
            (0.74, 0.62),
            (0.66, 0.82),
            (0.34, 0.86),
        ]],
        // straighter six
        6 => vec![
            vec![(0.56, 0.12), (0.38, 0.45), (0.34, 0.7)],
            ellipse(0.5, 0.68, 0.17, 0.19, 10),
        ],
        // crossed seven
        7 => vec![
            vec![(0.28, 0.16), (0.72, 0.16), (0.5, 0.86)],
            vec![(0.34, 0.52), (0.64, 0.52)],
        ],
        // slim eight
        8 => vec![
            ellipse(0.5, 0.31, 0.14, 0.16, 10),
            ellipse(0.5, 0.66, 0.17, 0.2, 10),
        ],
        // nine with a straight tail
        9 => vec![
            ellipse(0.48, 0.3, 0.16, 0.17, 10),
            vec![(0.64, 0.32), (0.64, 0.88)],
        ],
        _ => unreachable!("classes are 0..=9"),
    }
}

fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    (dx * dx + dy * dy).sqrt()
}

/// Rasterize one digit into a 28x28 grayscale plane of byte-grid values.
/// Per-sample variation: two glyph styles per class, affine jitter, stroke
/// width and ink intensity, a soft per-image vignette of the stroke
/// brightness, and sparse ink speckle.
fn render_digit(class: usize, rng: &mut impl Rng) -> [f64; IMAGE_SIDE * IMAGE_SIDE] {
    let variant = rng.gen_range(0.0..1.0f64) < 0.5;
    let theta = rng.gen_range(-0.30..0.30f64);
    let sx = rng.gen_range(0.70..1.15f64);
    let sy = rng.gen_range(0.70..1.15f64);
    let shear = rng.gen_range(-0.28..0.28f64);
    let tx = rng.gen_range(-0.09..0.09f64);
    let ty = rng.gen_range(-0.09..0.09f64);
    let width = rng.gen_range(0.030..0.075f64);
    let intensity = rng.gen_range(0.55..1.0f64);
    // brightness gradient across the stroke, like uneven ink
    let grad_dir = rng.gen_range(0.0..std::f64::consts::TAU);
    let grad_amp = rng.gen_range(0.0..0.35f64);
    let speckles = rng.gen_range(0..6usize);

    let (cos_t, sin_t) = (theta.cos(), theta.sin());
    let transform = |(x, y): (f64, f64)| -> (f64, f64) {
        let (x, y) = (x - 0.5, y - 0.5);
        let (x, y) = (sx * (x + shear * y), sy * y);
        let (x, y) = (cos_t * x - sin_t * y, sin_t * x + cos_t * y);
        (x + 0.5 + tx, y + 0.5 + ty)
    };

    let strokes: Vec<Polyline> = glyph(class, variant)
        .into_iter()
        .map(|line| line.into_iter().map(transform).collect())
        .collect();

    let aa = 0.75 / IMAGE_SIDE as f64;
    let (gx, gy) = (grad_dir.cos(), grad_dir.sin());
    let mut img = [0.0f64; IMAGE_SIDE * IMAGE_SIDE];
    for i in 0..IMAGE_SIDE {
        for j in 0..IMAGE_SIDE {
            let p = (
                (j as f64 + 0.5) / IMAGE_SIDE as f64,
                (i as f64 + 0.5) / IMAGE_SIDE as f64,
            );
            let mut d = f64::INFINITY;
            for line in &strokes {
                for seg in line.windows(2) {
                    d = d.min(dist_to_segment(p, seg[0], seg[1]));
                }
            }
            let shade = 1.0 - grad_amp * (0.5 + (p.0 - 0.5) * gx + (p.1 - 0.5) * gy);
            let v = ((width - d) / aa + 0.5).clamp(0.0, 1.0) * intensity * shade.clamp(0.0, 1.0);
            // byte-grid quantization, like a loader would produce
            img[i * IMAGE_SIDE + j] = (v * 255.0).round() / 255.0;
        }
    }
    for _ in 0..speckles {
        let ci = rng.gen_range(1..IMAGE_SIDE - 1);
        let cj = rng.gen_range(1..IMAGE_SIDE - 1);
        let ink = rng.gen_range(0.2..0.8f64);
        img[ci * IMAGE_SIDE + cj] = ((img[ci * IMAGE_SIDE + cj] + ink).min(1.0) * 255.0).round() / 255.0;
    }
    img
}

/// `n` labeled digit images, balanced over classes (round-robin), replicated
/// to 3 channels, deterministic per seed.
pub fn synth_digits<T: Scalar>(n: usize, seed: u64) -> Result<DomainDataset<T>> {
    let hw = IMAGE_SIDE * IMAGE_SIDE;
    let mut data: Vec<T> = Vec::with_capacity(n * 3 * hw);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 10;
        let mut rng = rng::substream(seed, StreamKind::Data, i as u64);
        let plane = render_digit(class, &mut rng);
        for _ in 0..3 {
            data.extend(plane.iter().map(|&v| T::from_f64(v)));
        }
        labels.push(class);
    }
    let images = Tensor::from_vec(&[n, 3, IMAGE_SIDE, IMAGE_SIDE], data)?;
    DomainDataset::new(
        format!("synthdigits-{}", seed),
        images,
        labels,
        10,
        Provenance {
            base: format!("synthdigits(seed={})", seed),
            shift: None,
            shift_seed: seed,
        },
    )
}

/// The bundled 64-image offline fixture.
pub fn fixture_dataset<T: Scalar>() -> DomainDataset<T> {
    let mut ds = synth_digits(FIXTURE_SIZE, FIXTURE_SEED).expect("fixture generation");
    ds.name = "fixture".to_string();
    ds
}

/// Materialize the fixture as an IDX pair in `dir`; returns (images, labels)
/// paths. Used by IO tests and the quickstart config.
pub fn write_fixture_idx(dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let ds: DomainDataset<f64> = fixture_dataset();
    let hw = IMAGE_SIDE * IMAGE_SIDE;
    let mut bytes = Vec::with_capacity(ds.len() * hw);
    for i in 0..ds.len() {
        // channel 0 of the replicated image
        let start = i * 3 * hw;
        for &v in &ds.images.data()[start..start + hw] {
            bytes.push((v * 255.0).round() as u8);
        }
    }
    let labels: Vec<u8> = ds.labels.iter().map(|&l| l as u8).collect();
    let ip = dir.join("fixture-images-idx3-ubyte");
    let lp = dir.join("fixture-labels-idx1-ubyte");
    write_idx_images(&ip, &bytes, ds.len(), IMAGE_SIDE, IMAGE_SIDE)?;
    write_idx_labels(&lp, &labels)?;
    Ok((ip, lp))
}
