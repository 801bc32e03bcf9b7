//! IDX reader for the MNIST image and label files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

/// Images as `[N × rows × cols]` in `[0, 1]`, with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct MnistSplit {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl MnistSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Images flattened to `[N × rows·cols]`.
    pub fn flat(&self) -> Tensor {
        let n = self.images.shape()[0];
        let f = self.images.numel().checked_div(n).unwrap_or(0);
        self.images.clone().reshape(vec![n, f]).expect("same numel")
    }

    pub fn take(&self, n: usize) -> MnistSplit {
        let n = n.min(self.len());
        let s = self.images.shape();
        let per: usize = s[1..].iter().product();
        let mut shape = s.to_vec();
        shape[0] = n;
        MnistSplit {
            images: Tensor::new(shape, self.images.data()[..n * per].to_vec()).expect("prefix"),
            labels: self.labels[..n].to_vec(),
        }
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    let word = bytes.get(at..at + 4).ok_or_else(|| Error::Length {
        path: path.to_path_buf(),
        needed: at + 4,
        actual: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(word.try_into().expect("4 bytes")))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn body<'a>(bytes: &'a [u8], offset: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    bytes.get(offset..offset + len).ok_or_else(|| Error::Length {
        path: path.to_path_buf(),
        needed: offset + len,
        actual: bytes.len(),
    })
}

pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Tensor> {
    check_magic(bytes, IMAGES_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let pixels = body(bytes, 16, n * rows * cols, path)?;
    let data = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(vec![n, rows, cols], data)
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    check_magic(bytes, LABELS_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    Ok(body(bytes, 8, n, path)?.iter().map(|&b| b as usize).collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<MnistSplit> {
    let images = parse_idx_images(&read(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read(labels_path)?, labels_path)?;
    if images.shape()[0] != labels.len() {
        return Err(Error::Data(format!(
            "{} has {} images but {} has {} labels",
            images_path.display(),
            images.shape()[0],
            labels_path.display(),
            labels.len()
        )));
    }
    Ok(MnistSplit { images, labels })
}

/// Paths of the standard file names (`train-*` or `t10k-*`) in `dir`.
pub fn split_paths(dir: &Path, split: &str) -> (PathBuf, PathBuf) {
    let prefix = if split == "test" { "t10k" } else { "train" };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(magic: u32, n: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for w in [magic, n, 2, 2] {
            b.extend_from_slice(&w.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn parses_header_and_scales_pixels() {
        let p = Path::new("mem");
        let bytes = idx_images(2051, 2, &[0, 0, 0, 0, 128, 255, 1, 0]);
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        let t = parse_idx_images(&bytes, p).unwrap();
        assert_eq!(t.shape(), &[2, 2, 2]);
        assert!(t.data()[..4].iter().all(|&v| v == 0.0));
        assert_eq!(t.data()[4], 128.0 / 255.0);
        assert!((t.data()[4] - 0.50196).abs() < 1e-5);
        assert_eq!(t.data()[5], 1.0);
    }

    #[test]
    fn wrong_magic_reports_observed_value() {
        let bytes = idx_images(2049, 1, &[0; 4]);
        assert_eq!(&bytes[..4], &[0, 0, 8, 1]);
        match parse_idx_images(&bytes, Path::new("x")) {
            Err(Error::Format { expected, found, .. }) => assert_eq!((expected, found), (2051, 2049)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_a_length_error() {
        let bytes = idx_images(2051, 3, &[0; 5]);
        assert!(matches!(parse_idx_images(&bytes, Path::new("x")), Err(Error::Length { needed: 28, .. })));
        assert!(matches!(parse_idx_labels(&[0, 0, 8], Path::new("x")), Err(Error::Length { .. })));
        let mut labels = 2049u32.to_be_bytes().to_vec();
        labels.extend_from_slice(&4u32.to_be_bytes());
        labels.extend_from_slice(&[1, 2]);
        assert!(matches!(parse_idx_labels(&labels, Path::new("x")), Err(Error::Length { .. })));
    }
}
