//! Seeded synthetic shifted domains standing in for external target corpora.
//!
//! Four shift axes: color inversion, chromatic style (tint), background
//! clutter (noise-bg), and photometric distortion (contrast). Each is a pure
//! function of (base, kind, seed); labels pass through untouched.

use super::{DomainDataset, Provenance};
use crate::error::{AbaError, Result};
use crate::rng::{self, StreamKind};
use crate::tensor::Scalar;
use rand::Rng;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ShiftKind {
    Invert,
    Tint,
    NoiseBg,
    Contrast,
}

impl ShiftKind {
    pub const ALL: [ShiftKind; 4] = [
        ShiftKind::Invert,
        ShiftKind::Tint,
        ShiftKind::NoiseBg,
        ShiftKind::Contrast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShiftKind::Invert => "invert",
            ShiftKind::Tint => "tint",
            ShiftKind::NoiseBg => "noise-bg",
            ShiftKind::Contrast => "contrast",
        }
    }
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShiftKind {
    type Err = AbaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "invert" => Ok(ShiftKind::Invert),
            "tint" => Ok(ShiftKind::Tint),
            "noise-bg" => Ok(ShiftKind::NoiseBg),
            "contrast" => Ok(ShiftKind::Contrast),
            other => Err(AbaError::invalid(format!("unknown shift kind `{}`", other))),
        }
    }
}

/// Pixel inversion on the 1/255 grid. For byte-derived images this is the
/// correctly rounded value of 1 - x and is an exact involution, which naive
/// float subtraction is not.
pub fn invert_pixel<T: Scalar>(v: T) -> T {
    let byte = (v.as_f64() * 255.0).round().clamp(0.0, 255.0);
    T::from_f64((255.0 - byte) / 255.0)
}

/// Per-image, per-channel affine a*x + b with a in [0.5, 1.5], b in
/// [-0.3, 0.3], clamped back to [0, 1].
pub fn tint_image<T: Scalar>(img: &mut [T], channels: usize, a: &[f64], b: &[f64]) {
    let hw = img.len() / channels;
    for c in 0..channels {
        let (ac, bc) = (T::from_f64(a[c]), T::from_f64(b[c]));
        for v in &mut img[c * hw..(c + 1) * hw] {
            *v = (ac * *v + bc).max(T::zero()).min(T::one());
        }
    }
}

/// Smooth per-channel noise field: a coarse uniform grid bilinearly
/// upsampled to the image extent.
fn noise_field(h: usize, w: usize, rng: &mut impl Rng) -> Vec<f64> {
    const GRID: usize = 7;
    let mut coarse = [0.0f64; GRID * GRID];
    for v in coarse.iter_mut() {
        *v = rng.gen_range(0.0..1.0);
    }
    let mut field = vec![0.0f64; h * w];
    for i in 0..h {
        let fy = i as f64 / (h - 1).max(1) as f64 * (GRID - 1) as f64;
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(GRID - 1);
        let ty = fy - y0 as f64;
        for j in 0..w {
            let fx = j as f64 / (w - 1).max(1) as f64 * (GRID - 1) as f64;
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(GRID - 1);
            let tx = fx - x0 as f64;
            let top = coarse[y0 * GRID + x0] * (1.0 - tx) + coarse[y0 * GRID + x1] * tx;
            let bot = coarse[y1 * GRID + x0] * (1.0 - tx) + coarse[y1 * GRID + x1] * tx;
            field[i * w + j] = top * (1.0 - ty) + bot * ty;
        }
    }
    field
}

/// Apply a shift to every image of `base`, deterministic per (kind, seed).
pub fn make_domain<T: Scalar>(
    base: &DomainDataset<T>,
    kind: ShiftKind,
    seed: u64,
) -> Result<DomainDataset<T>> {
    let (c, h, w) = base.image_dims();
    let chw = c * h * w;
    let mut images = base.images.clone();
    let data = images.data_mut();
    for (i, img) in data.chunks_mut(chw).enumerate() {
        // One stream per (seed, image); repeated calls are bit-identical and
        // independent of iteration order.
        let mut rng = rng::substream(seed.wrapping_add(kind as u64), StreamKind::DomainShift, i as u64);
        match kind {
            ShiftKind::Invert => {
                for v in img.iter_mut() {
                    *v = invert_pixel(*v);
                }
            }
            ShiftKind::Tint => {
                let a: Vec<f64> = (0..c).map(|_| rng.gen_range(0.5..1.5)).collect();
                let b: Vec<f64> = (0..c).map(|_| rng.gen_range(-0.3..0.3)).collect();
                tint_image(img, c, &a, &b);
            }
            ShiftKind::NoiseBg => {
                for ch in 0..c {
                    let field = noise_field(h, w, &mut rng);
                    for (v, &nv) in img[ch * h * w..(ch + 1) * h * w].iter_mut().zip(field.iter()) {
                        let blended = 0.7 * v.as_f64() + 0.3 * nv;
                        *v = T::from_f64(blended.clamp(0.0, 1.0));
                    }
                }
            }
            ShiftKind::Contrast => {
                let gamma = rng.gen_range(0.4..2.5);
                for v in img.iter_mut() {
                    *v = T::from_f64(v.as_f64().powf(gamma).clamp(0.0, 1.0));
                }
            }
        }
    }
    let mut out = DomainDataset::new(
        kind.name(),
        images,
        base.labels.clone(),
        base.classes,
        Provenance {
            base: base.name.clone(),
            shift: Some(kind),
            shift_seed: seed,
        },
    )?;
    out.name = kind.name().to_string();
    Ok(out)
}
