//! Datasets: IDX ingestion, seeded synthetic shifted domains, subsets and
//! batching.

mod idx;
mod shifts;
mod synth;

pub use idx::{load_idx, write_idx_images, write_idx_labels};
pub use shifts::{make_domain, ShiftKind};
pub use synth::{fixture_dataset, synth_digits, write_fixture_idx, FIXTURE_SIZE};

use crate::error::{AbaError, Result};
use crate::rng::{self, Stream};
use crate::tensor::{Scalar, Tensor};

/// Where a dataset came from: its base corpus plus any shift applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub base: String,
    pub shift: Option<ShiftKind>,
    pub shift_seed: u64,
}

/// A labeled image set tagged with a domain identity. Images are
/// N x C x H x W in [0, 1]; immutable once built.
#[derive(Debug, Clone)]
pub struct DomainDataset<T> {
    pub name: String,
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub provenance: Provenance,
}

impl<T: Scalar> DomainDataset<T> {
    pub fn new(
        name: impl Into<String>,
        images: Tensor<T>,
        labels: Vec<usize>,
        classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(AbaError::shape(
                "DomainDataset",
                "N x C x H x W",
                format!("{:?}", images.shape()),
            ));
        }
        if images.shape()[0] != labels.len() {
            return Err(AbaError::DataFormat(format!(
                "image/label count mismatch: {} images, {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(AbaError::DataFormat(format!(
                "label {} out of range for {} classes",
                bad, classes
            )));
        }
        Ok(DomainDataset {
            name: name.into(),
            images,
            labels,
            classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_dims(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let images = self.images.gather_rows(idx)?;
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Ok((images, labels))
    }
}

/// Stratified sample of `n` examples without replacement: per-class counts
/// proportional to the source composition, order shuffled, deterministic
/// under the stream.
pub fn subset<T: Scalar>(ds: &DomainDataset<T>, n: usize, rng: &mut Stream) -> Result<DomainDataset<T>> {
    if n > ds.len() {
        return Err(AbaError::invalid(format!(
            "subset of {} from dataset of {}",
            n,
            ds.len()
        )));
    }
    // indices grouped per class, shuffled within the class
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        per_class[l].push(i);
    }
    for group in per_class.iter_mut() {
        let order = rng::shuffled_indices(group.len(), rng);
        *group = order.iter().map(|&j| group[j]).collect();
    }
    // proportional counts, largest-remainder rounding to hit n exactly
    let total = ds.len() as f64;
    let mut take: Vec<usize> = per_class
        .iter()
        .map(|g| ((g.len() as f64 / total) * n as f64).floor() as usize)
        .collect();
    let mut assigned: usize = take.iter().sum();
    let mut remainders: Vec<(f64, usize)> = per_class
        .iter()
        .enumerate()
        .map(|(c, g)| {
            let exact = (g.len() as f64 / total) * n as f64;
            (exact - exact.floor(), c)
        })
        .collect();
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, c) in remainders.iter() {
        if assigned == n {
            break;
        }
        if take[c] < per_class[c].len() {
            take[c] += 1;
            assigned += 1;
        }
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    for (c, group) in per_class.iter().enumerate() {
        chosen.extend_from_slice(&group[..take[c]]);
    }
    let order = rng::shuffled_indices(chosen.len(), rng);
    let chosen: Vec<usize> = order.iter().map(|&j| chosen[j]).collect();

    let (images, labels) = ds.batch(&chosen)?;
    DomainDataset::new(
        format!("{}-subset{}", ds.name, n),
        images,
        labels,
        ds.classes,
        ds.provenance.clone(),
    )
}

/// Epoch-reshuffling batch index source; the final short batch is kept.
pub struct Batcher {
    n: usize,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl Batcher {
    pub fn new(n: usize, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(AbaError::invalid("batch size must be >= 1"));
        }
        if n == 0 {
            return Err(AbaError::invalid("empty dataset"));
        }
        Ok(Batcher {
            n,
            batch_size,
            order: Vec::new(),
            cursor: 0,
        })
    }

    /// Next batch of indices, reshuffling at each epoch boundary.
    pub fn next(&mut self, rng: &mut Stream) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.order = rng::shuffled_indices(self.n, rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }
}
