//! Training lab for adversarial Bayesian augmentation (ABA) in single-source
//! domain generalization.
//!
//! The crate trains a small CNN classifier on one source digit dataset while
//! an adversarially fitted Bayesian convolutional augmenter synthesizes
//! shifted training views, and evaluates the result on held-out synthetic
//! target domains. Everything is built on an in-crate reverse-mode autodiff
//! engine so the whole min-max procedure is self-contained and reproducible.
//!
//! Start with the runnable examples (`cargo run --release --example ...`) or
//! the `aba` binary (`train`, `eval`, `sweep`, `embed`, `report`).

pub mod augment;
pub mod checkpoint;
pub mod classifier;
pub mod data;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{AbaError, Result};
pub use tensor::{Dtype, Scalar, Tensor};

/// Cap rayon's worker count. Call once, before any parallel work; later calls
/// are ignored by rayon. Kernels are bit-reproducible at any thread count, so
/// this only matters for resource control.
pub fn set_threads(n: usize) {
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}
