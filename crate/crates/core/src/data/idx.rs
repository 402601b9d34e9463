use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::topology::InputShape;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: wrong magic 0x{found:08x}, expected 0x{expected:08x}")]
    WrongMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("{path}: {detail}")]
    Dimension { path: PathBuf, detail: String },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: file ends after {got} bytes, header promises {expected}")]
    ShortRead { path: PathBuf, expected: usize, got: usize },
}

/// Normalized images (`pixel / 255`) with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    pub shape: InputShape,
    pub pixels: Vec<f32>,
    pub labels: Vec<u8>,
}

impl ImageBatch {
    pub fn new(shape: InputShape, pixels: Vec<f32>, labels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), shape.len() * labels.len(), "pixel buffer does not match label count");
        Self { shape, pixels, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, index: usize) -> &[f32] {
        let n = self.shape.len();
        &self.pixels[index * n..(index + 1) * n]
    }

    /// The first `n` examples (all of them if `n` is larger).
    pub fn take(&self, n: usize) -> ImageBatch {
        let n = n.min(self.len());
        ImageBatch {
            shape: self.shape,
            pixels: self.pixels[..n * self.shape.len()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, IdxError> {
    fs::read(path).map_err(|source| IdxError::Io { path: path.to_path_buf(), source })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| IdxError::ShortRead { path: path.to_path_buf(), expected: offset + 4, got: bytes.len() })
}

fn check_payload(path: &Path, bytes: &[u8], header: usize, payload: usize) -> Result<(), IdxError> {
    let expected = header + payload;
    if bytes.len() < expected {
        return Err(IdxError::ShortRead { path: path.to_path_buf(), expected, got: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(IdxError::Dimension {
            path: path.to_path_buf(),
            detail: format!("{} trailing bytes after the declared data", bytes.len() - expected),
        });
    }
    Ok(())
}

/// Parses an IDX3 image file into `(count, rows, cols, raw bytes)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>), IdxError> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(IdxError::WrongMagic { path: path.to_path_buf(), expected: IMAGES_MAGIC, found: magic });
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    if rows == 0 || cols == 0 {
        return Err(IdxError::Dimension { path: path.to_path_buf(), detail: format!("image size {rows}x{cols}") });
    }
    check_payload(path, &bytes, 16, n * rows * cols)?;
    Ok((n, rows, cols, bytes[16..].to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, IdxError> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::WrongMagic { path: path.to_path_buf(), expected: LABELS_MAGIC, found: magic });
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    check_payload(path, &bytes, 8, n)?;
    Ok(bytes[8..].to_vec())
}

/// Loads an MNIST image/label pair (28x28, one channel).
pub fn load_idx(images: &Path, labels: &Path) -> Result<ImageBatch, IdxError> {
    load_idx_shaped(images, labels, 28, 28)
}

/// Loads an IDX image/label pair whose images must be `h x w`.
pub fn load_idx_shaped(images: &Path, labels: &Path, h: usize, w: usize) -> Result<ImageBatch, IdxError> {
    let (n, rows, cols, raw) = read_idx_images(images)?;
    if (rows, cols) != (h, w) {
        return Err(IdxError::Dimension {
            path: images.to_path_buf(),
            detail: format!("images are {rows}x{cols}, expected {h}x{w}"),
        });
    }
    let labels = read_idx_labels(labels)?;
    if labels.len() != n {
        return Err(IdxError::CountMismatch { images: n, labels: labels.len() });
    }
    let pixels = raw.iter().map(|&b| f32::from(b) / 255.0).collect();
    Ok(ImageBatch::new(InputShape { h, w, ch: 1 }, pixels, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let path = dir.join(name);
        fs::File::create(&path).unwrap().write_all(bytes).unwrap();
        path
    }

    fn images_file(n: u32, rows: u32, cols: u32, fill: u8) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        b.extend_from_slice(&n.to_be_bytes());
        b.extend_from_slice(&rows.to_be_bytes());
        b.extend_from_slice(&cols.to_be_bytes());
        b.extend(std::iter::repeat_n(fill, (n * rows * cols) as usize));
        b
    }

    fn labels_file(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn loads_and_normalizes() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = images_file(2, 28, 28, 0);
        img[16] = 255;
        img[17] = 51;
        let i = write(dir.path(), "i", &img);
        let l = write(dir.path(), "l", &labels_file(&[3, 9]));
        let batch = load_idx(&i, &l).unwrap();
        assert_eq!(batch.len(), 2);
        assert_eq!(batch.image(0)[0], 1.0);
        assert_eq!(batch.image(0)[1], 0.2);
        assert_eq!(batch.image(1)[0], 0.0);
        assert_eq!(batch.labels, vec![3, 9]);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "i", &labels_file(&[1]));
        let l = write(dir.path(), "l", &labels_file(&[1]));
        let err = load_idx(&i, &l).unwrap_err();
        assert!(matches!(err, IdxError::WrongMagic { found: 0x801, .. }), "{err}");
    }

    #[test]
    fn rejects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "i", &images_file(2, 28, 28, 0));
        let l = write(dir.path(), "l", &labels_file(&[1, 2, 3]));
        assert!(matches!(load_idx(&i, &l).unwrap_err(), IdxError::CountMismatch { images: 2, labels: 3 }));
    }

    #[test]
    fn rejects_short_read_and_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = images_file(2, 28, 28, 0);
        img.truncate(100);
        let i = write(dir.path(), "i", &img);
        let l = write(dir.path(), "l", &labels_file(&[1, 2]));
        assert!(matches!(load_idx(&i, &l).unwrap_err(), IdxError::ShortRead { .. }));

        let i = write(dir.path(), "i2", &images_file(2, 20, 20, 0));
        assert!(matches!(load_idx(&i, &l).unwrap_err(), IdxError::Dimension { .. }));

        let i = write(dir.path(), "i3", &[0, 0]);
        assert!(matches!(load_idx(&i, &l).unwrap_err(), IdxError::ShortRead { .. }));

        assert!(matches!(load_idx(&dir.path().join("missing"), &l).unwrap_err(), IdxError::Io { .. }));
    }
}
