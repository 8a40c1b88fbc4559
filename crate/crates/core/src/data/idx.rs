use std::fs;
use std::io::{self, ErrorKind};
use std::path::Path;

use super::Dataset;
use crate::error::{domain_err, Error, Result};
use crate::linalg::Matrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn truncated(path: &Path, what: &str) -> Error {
    Error::io(path, io::Error::new(ErrorKind::UnexpectedEof, format!("truncated {what}")))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| truncated(path, "header"))
}

/// Reads an IDX image/label pair. Pixels are scaled by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read(images_path)?;
    let labels = read(labels_path)?;
    load_idx_bytes(&images, images_path, &labels, labels_path)
}

/// Parses IDX bytes; the paths are only used in error messages.
pub fn load_idx_bytes(
    images: &[u8],
    images_path: &Path,
    labels: &[u8],
    labels_path: &Path,
) -> Result<Dataset> {
    let magic = be_u32(images, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let magic = be_u32(labels, 0, labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let count = be_u32(images, 4, images_path)? as usize;
    let rows = be_u32(images, 8, images_path)? as usize;
    let cols = be_u32(images, 12, images_path)? as usize;
    let label_count = be_u32(labels, 4, labels_path)? as usize;
    let pixels = rows * cols;
    let body = &images[16..];
    if body.len() < count * pixels {
        return Err(truncated(images_path, "image payload"));
    }
    let lbody = &labels[8..];
    if lbody.len() < label_count {
        return Err(truncated(labels_path, "label payload"));
    }
    if count != label_count {
        return Err(Error::Consistency(format!(
            "{} holds {count} images but {} holds {label_count} labels",
            images_path.display(),
            labels_path.display()
        )));
    }
    let features: Vec<f64> = body[..count * pixels]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    let labels: Vec<usize> = lbody[..count].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Matrix::from_vec(count, pixels, features)?, labels, num_classes)
}

/// Writes a dataset of `rows×cols` images with features in [0, 1] as an IDX pair.
pub fn write_idx(
    data: &Dataset,
    rows: usize,
    cols: usize,
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    if data.dim() != rows * cols {
        return Err(domain_err!("features have width {}, not {rows}x{cols}", data.dim()));
    }
    let mut img = Vec::with_capacity(16 + data.features.len());
    for v in [IMAGES_MAGIC, data.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for &v in data.features.as_slice() {
        if !(0.0..=1.0).contains(&v) {
            return Err(domain_err!("pixel value {v} outside [0, 1]"));
        }
        img.push((v * 255.0).round() as u8);
    }
    let mut lab = Vec::with_capacity(8 + data.len());
    for v in [LABELS_MAGIC, data.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    for &l in &data.labels {
        let b = u8::try_from(l).map_err(|_| domain_err!("label {l} does not fit in a byte"))?;
        lab.push(b);
    }
    fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, lab).map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn tiny_fixture() {
        let mut img = header(0x803, &[1, 2, 2]);
        img.extend_from_slice(&[0, 255, 0, 255]);
        let mut lab = header(0x801, &[1]);
        lab.push(7);
        let p = Path::new("fixture");
        let d = load_idx_bytes(&img, p, &lab, p).unwrap();
        assert_eq!(d.features.as_slice(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(d.labels, vec![7]);
        assert_eq!(d.num_classes, 8);
    }

    #[test]
    fn error_kinds() {
        let p = Path::new("f");
        let mut img = header(0x803, &[2, 1, 1]);
        img.extend_from_slice(&[1, 2]);
        let mut lab = header(0x801, &[2]);
        lab.extend_from_slice(&[0, 1]);
        let wrong = header(0x803, &[2, 0, 1]);
        assert!(matches!(load_idx_bytes(&img, p, &wrong, p), Err(Error::Format(_))));
        assert!(matches!(load_idx_bytes(&img[..17], p, &lab, p), Err(Error::Io { .. })));
        let mut short = header(0x801, &[1]);
        short.push(0);
        assert!(matches!(load_idx_bytes(&img, p, &short, p), Err(Error::Consistency(_))));
        assert!(matches!(load_idx_bytes(&img[..6], p, &lab, p), Err(Error::Io { .. })));
    }
}
