use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Labelled images `(N, C, H, W)` with pixel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::Dataset(format!(
                "images must be (N, C, H, W), got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::CountMismatch {
                images: images.shape()[0],
                labels: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::Dataset("dataset has no examples".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Dataset(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    /// `(C, H, W)` of one image.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    pub fn image_len(&self) -> usize {
        let (c, h, w) = self.image_shape();
        c * h * w
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let n = self.image_len();
        &self.images.values()[i * n..(i + 1) * n]
    }

    /// Copies the listed examples into `buf` (images) and `labels`.
    pub fn gather(&self, indices: &[usize], buf: &mut Vec<f64>, labels: &mut Vec<usize>) {
        buf.clear();
        labels.clear();
        for &i in indices {
            buf.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
    }

    /// The first `n` examples (or all of them when `n >= len`).
    pub fn truncated(&self, n: usize) -> Dataset {
        if n >= self.len() {
            return self.clone();
        }
        let (c, h, w) = self.image_shape();
        let images = Tensor::new(
            vec![n, c, h, w],
            self.images.values()[..n * self.image_len()].to_vec(),
        )
        .expect("prefix of a valid tensor");
        Dataset {
            images,
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }

    /// Examples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("header ends at byte {}", bytes.len()),
        })
}

/// Parses an IDX3 image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let n = read_u32(bytes, 4, path)? as usize;
    let rows = read_u32(bytes, 8, path)? as usize;
    let cols = read_u32(bytes, 12, path)? as usize;
    let body = &bytes[16..];
    let need = n * rows * cols;
    if body.len() < need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!(
                "header declares {n} images of {rows}x{cols} ({need} bytes), file holds {}",
                body.len()
            ),
        });
    }
    Ok((n, rows, cols, body[..need].to_vec()))
}

/// Parses an IDX1 label file. The header count is not trusted beyond the
/// bytes actually present, so a short file surfaces as a count mismatch
/// against the image file.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<(usize, Vec<u8>)> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let declared = read_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    Ok((declared, body[..declared.min(body.len())].to_vec()))
}

/// Loads an IDX image/label pair (e.g. MNIST). Pixels are scaled by 1/255.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let image_bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let label_bytes = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (n, rows, cols, pixels) = parse_idx_images(&image_bytes, images_path)?;
    let (_, labels) = parse_idx_labels(&label_bytes, labels_path)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    let values = pixels.into_iter().map(|p| f64::from(p) / 255.0).collect();
    let images = Tensor::new(vec![n, 1, rows, cols], values)?;
    Dataset::new(images, labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [IDX_IMAGES_MAGIC, n, rows, cols] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(pixels);
        out
    }

    fn idx_labels(n: u32, labels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [IDX_LABELS_MAGIC, n] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(labels);
        out
    }

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let path = dir.join(name);
        fs::File::create(&path).unwrap().write_all(bytes).unwrap();
        path
    }

    #[test]
    fn loads_and_scales() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(
            dir.path(),
            "img",
            &idx_images(2, 2, 2, &[0, 255, 51, 0, 255, 255, 0, 0]),
        );
        let lab = write(dir.path(), "lab", &idx_labels(2, &[3, 7]));
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.images().shape(), [2, 1, 2, 2]);
        assert_eq!(ds.num_classes(), 10);
        assert_eq!(ds.image(0), [0.0, 1.0, 0.2, 0.0]);
        assert_eq!(ds.labels(), [3, 7]);
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &idx_labels(1, &[0]));
        let lab = write(dir.path(), "lab", &idx_labels(1, &[0]));
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(matches!(err, Error::BadMagic { found: 0x801, .. }), "{err}");
    }

    #[test]
    fn truncated_images() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &idx_images(2, 2, 2, &[0; 5]));
        let lab = write(dir.path(), "lab", &idx_labels(2, &[0, 1]));
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(matches!(err, Error::Truncated { .. }), "{err}");
        let short_header = write(dir.path(), "hdr", &IDX_IMAGES_MAGIC.to_be_bytes());
        assert!(matches!(
            load_idx(&short_header, &lab).unwrap_err(),
            Error::Truncated { .. }
        ));
    }

    #[test]
    fn truncated_labels_report_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &idx_images(3, 1, 1, &[1, 2, 3]));
        let lab = write(dir.path(), "lab", &idx_labels(3, &[0, 1]));
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(err.to_string().contains("count mismatch"), "{err}");
    }
}
