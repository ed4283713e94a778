//! Seeded, stream-separated random number generation.
//!
//! Each consumer (data shuffling, episode initialization, evaluation, ...)
//! gets its own ChaCha stream derived from the master seed, so changing how
//! one consumer draws does not perturb the others.

use crate::tensor::{Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub enum StreamKind {
    Data = 1,
    ClassifierInit = 2,
    Episode = 3,
    RandConv = 4,
    AltLite = 5,
    DomainShift = 6,
    Subset = 7,
}

pub fn stream(master_seed: u64, kind: StreamKind) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(kind as u64);
    rng
}

/// A stream further split by an index (per-image shift parameters, per-cell
/// sweep seeds, ...).
pub fn substream(master_seed: u64, kind: StreamKind, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((kind as u64) << 32 | (index & 0xffff_ffff));
    rng
}

pub fn normal<T: Scalar>(rng: &mut impl Rng) -> T {
    let v: f64 = rng.sample(StandardNormal);
    T::from_f64(v)
}

pub fn normal_tensor<T: Scalar>(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            T::from_f64(v * std)
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape/data length by construction")
}

pub fn uniform<T: Scalar>(lo: f64, hi: f64, rng: &mut impl Rng) -> T {
    T::from_f64(rng.gen_range(lo..hi))
}

/// Fisher-Yates shuffle of indices, deterministic under the stream.
pub fn shuffled_indices(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
