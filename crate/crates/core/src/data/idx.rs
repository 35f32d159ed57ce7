//! IDX image/label files (big-endian dims, standard magics).

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor4;
use crate::scalar::{real, Real};

use super::Dataset;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Load an IDX image file plus its IDX label file. Pixel bytes are scaled
/// to `[0, 1]`; images come out as `(N, 1, H, W)`.
pub fn load_idx<T: Real>(images_path: &Path, labels_path: &Path) -> Result<Dataset<T>> {
    let images = std::fs::read(images_path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", images_path.display())))?;
    let labels = std::fs::read(labels_path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", labels_path.display())))?;
    load_idx_bytes(&images, &labels)
}

/// Same as [`load_idx`] but from in-memory bytes.
pub fn load_idx_bytes<T: Real>(images: &[u8], labels: &[u8]) -> Result<Dataset<T>> {
    let (n, h, w, pixels) = parse_images(images)?;
    let label_values = parse_labels(labels)?;
    if label_values.len() != n {
        return Err(Error::Data(format!(
            "image/label count mismatch: {n} images vs {} labels",
            label_values.len()
        )));
    }
    let data: Vec<T> = pixels.iter().map(|&b| real(b as f64 / 255.0)).collect();
    let images = Tensor4::from_vec([n, 1, h, w], data)?;
    let class_count = label_values.iter().copied().max().unwrap_or(0) as usize + 1;
    Dataset::new(images, label_values.iter().map(|&l| l as usize).collect(), class_count)
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|s| u32::from_be_bytes(s.try_into().unwrap()))
        .ok_or_else(|| Error::Data(format!("truncated IDX file while reading {what}")))
}

fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = read_u32_be(bytes, 0, "image magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Data(format!(
            "bad IDX image magic: expected {IMAGES_MAGIC:#010x}, got {magic:#010x}"
        )));
    }
    let n = read_u32_be(bytes, 4, "image count")? as usize;
    let h = read_u32_be(bytes, 8, "image rows")? as usize;
    let w = read_u32_be(bytes, 12, "image cols")? as usize;
    let need = 16 + n * h * w;
    if bytes.len() < need {
        return Err(Error::Data(format!(
            "truncated IDX image payload: need {need} bytes, have {}",
            bytes.len()
        )));
    }
    Ok((n, h, w, &bytes[16..need]))
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32_be(bytes, 0, "label magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Data(format!(
            "bad IDX label magic: expected {LABELS_MAGIC:#010x}, got {magic:#010x}"
        )));
    }
    let n = read_u32_be(bytes, 4, "label count")? as usize;
    let need = 8 + n;
    if bytes.len() < need {
        return Err(Error::Data(format!(
            "truncated IDX label payload: need {need} bytes, have {}",
            bytes.len()
        )));
    }
    Ok(bytes[8..need].to_vec())
}

/// Build IDX bytes (image file, label file) from raw pixels and labels.
pub fn encode_idx(n: usize, h: usize, w: usize, pixels: &[u8], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    assert_eq!(pixels.len(), n * h * w);
    assert_eq!(labels.len(), n);
    let mut img = Vec::with_capacity(16 + pixels.len());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(n as u32).to_be_bytes());
    img.extend_from_slice(&(h as u32).to_be_bytes());
    img.extend_from_slice(&(w as u32).to_be_bytes());
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}
