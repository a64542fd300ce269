//! IDX files as distributed with MNIST: big-endian `u32` magic, then one
//! big-endian `u32` per dimension, then raw `u8` payload.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Loads an image/label file pair. Features are flattened to
/// `N × (rows·cols)` with pixels scaled to `[0, 1]` by dividing by 255; use
/// [`Dataset::features_as_images`] for the `N × 1 × rows × cols` view.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (n_img, rows, cols, pixels) = read_idx_images(images_path.as_ref())?;
    let labels = read_idx_labels(labels_path.as_ref())?;
    if n_img != labels.len() {
        return Err(Error::CountMismatch {
            images: n_img,
            labels: labels.len(),
        });
    }
    let features: Vec<f64> = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let name = images_path
        .as_ref()
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    let labels = labels.into_iter().map(i32::from).collect();
    Dataset::new(name, Tensor::matrix(n_img, rows * cols, features)?, labels)
}

/// Returns `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let header = read_header(path, &bytes, IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (header[0], header[1], header[2]);
    let payload = &bytes[16..];
    let expected = n * rows * cols;
    if payload.len() < expected {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            detail: format!("header promises {expected} pixels, found {}", payload.len()),
        });
    }
    Ok((n, rows, cols, payload[..expected].to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let n = read_header(path, &bytes, LABELS_MAGIC, 1)?[0];
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            detail: format!("header promises {n} labels, found {}", payload.len()),
        });
    }
    Ok(payload[..n].to_vec())
}

fn read_header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    let need = 4 * (1 + dims);
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            detail: "missing magic number".into(),
        });
    }
    let found = be_u32(&bytes[0..4]);
    if found != magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: format!("{magic:#010x}"),
            found: format!("{found:#010x}"),
        });
    }
    if bytes.len() < need {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            detail: "header is incomplete".into(),
        });
    }
    Ok((0..dims)
        .map(|i| be_u32(&bytes[4 + 4 * i..8 + 4 * i]) as usize)
        .collect())
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}
