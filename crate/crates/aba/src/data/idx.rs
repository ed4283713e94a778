//! IDX file ingestion (the MNIST container format).
//!
//! Big-endian throughout: images carry magic 0x00000803 then count, rows,
//! cols and row-major unsigned bytes; labels carry magic 0x00000801 then
//! count and label bytes. Grayscale is replicated to 3 channels at load time
//! so every downstream component sees C = 3.

use super::{DomainDataset, Provenance};
use crate::error::{AbaError, Result};
use crate::tensor::{Scalar, Tensor};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| AbaError::DataFormat("truncated IDX header".into()))?;
    Ok(u32::from_be_bytes(buf))
}

/// Load an image/label IDX pair into a 3-channel dataset scaled to [0, 1].
pub fn load_idx<T: Scalar>(images_path: &Path, labels_path: &Path) -> Result<DomainDataset<T>> {
    let mut ir = BufReader::new(File::open(images_path)?);
    let magic = read_u32_be(&mut ir)?;
    if magic != IMAGES_MAGIC {
        return Err(AbaError::DataFormat(format!(
            "bad images magic 0x{:08x} in {}",
            magic,
            images_path.display()
        )));
    }
    let n = read_u32_be(&mut ir)? as usize;
    let rows = read_u32_be(&mut ir)? as usize;
    let cols = read_u32_be(&mut ir)? as usize;
    let mut raw = vec![0u8; n * rows * cols];
    ir.read_exact(&mut raw)
        .map_err(|_| AbaError::DataFormat("truncated IDX image payload".into()))?;

    let mut lr = BufReader::new(File::open(labels_path)?);
    let magic = read_u32_be(&mut lr)?;
    if magic != LABELS_MAGIC {
        return Err(AbaError::DataFormat(format!(
            "bad labels magic 0x{:08x} in {}",
            magic,
            labels_path.display()
        )));
    }
    let ln = read_u32_be(&mut lr)? as usize;
    if ln != n {
        return Err(AbaError::DataFormat(format!(
            "image/label count mismatch: {} images, {} labels",
            n, ln
        )));
    }
    let mut label_bytes = vec![0u8; ln];
    lr.read_exact(&mut label_bytes)
        .map_err(|_| AbaError::DataFormat("truncated IDX label payload".into()))?;

    let hw = rows * cols;
    let mut data = Vec::with_capacity(n * 3 * hw);
    for img in raw.chunks(hw) {
        let plane: Vec<T> = img
            .iter()
            .map(|&b| T::from_f64(b as f64 / 255.0))
            .collect();
        for _ in 0..3 {
            data.extend_from_slice(&plane);
        }
    }
    let images = Tensor::from_vec(&[n, 3, rows, cols], data)?;
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    DomainDataset::new(
        "idx",
        images,
        labels,
        classes.max(10),
        Provenance {
            base: images_path.display().to_string(),
            shift: None,
            shift_seed: 0,
        },
    )
}

pub fn write_idx_images(path: &Path, images: &[u8], n: usize, rows: usize, cols: usize) -> Result<()> {
    if images.len() != n * rows * cols {
        return Err(AbaError::invalid("image byte count mismatch"));
    }
    let mut f = File::create(path)?;
    f.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    f.write_all(&(n as u32).to_be_bytes())?;
    f.write_all(&(rows as u32).to_be_bytes())?;
    f.write_all(&(cols as u32).to_be_bytes())?;
    f.write_all(images)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(&LABELS_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)?;
    Ok(())
}
