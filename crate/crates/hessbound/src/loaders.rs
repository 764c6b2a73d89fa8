//! Real-data loaders: Iris CSV and MNIST IDX subsets.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hessbound_core::LabeledDataset;

use crate::error::{Error, Result};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const SIDE: usize = 28;

/// Reads an Iris-style CSV: four numeric columns and a class column. Class
/// names become indices in order of first appearance. A first line that does
/// not parse as numbers is treated as a header.
pub fn load_iris(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut classes: Vec<String> = Vec::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(Error::WrongColumnCount {
                path: path.into(),
                line: line_no,
                expected: 5,
                got: cols.len(),
            });
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            cols[..4].iter().map(|c| c.parse::<f64>()).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: line_no,
                    message: e.to_string(),
                })
            }
        };
        let class = match classes.iter().position(|c| c == cols[4]) {
            Some(k) => k,
            None => {
                classes.push(cols[4].to_string());
                classes.len() - 1
            }
        };
        features.extend(row);
        labels.push(class);
    }
    if classes.len() != 3 {
        return Err(Error::Parse {
            path: path.into(),
            line: text.lines().count(),
            message: format!("expected 3 classes, found {}", classes.len()),
        });
    }
    Ok(LabeledDataset::new("iris", 4, 3, features, labels)?)
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn read_idx(path: &Path, magic: u32, header_len: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let got = read_u32(&bytes, 0).ok_or_else(|| Error::TruncatedFile {
        path: path.into(),
        what: "missing header".into(),
    })?;
    if got != magic {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: magic,
            got,
        });
    }
    if bytes.len() < header_len {
        return Err(Error::TruncatedFile {
            path: path.into(),
            what: "missing header".into(),
        });
    }
    Ok(bytes)
}

/// Raw MNIST images (`n × 784`, 0..=255) and digit labels from an IDX pair.
pub fn read_mnist(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_idx(ip, IDX_IMAGES, 16)?;
    let n = read_u32(&images, 4).unwrap_or(0) as usize;
    let (rows, cols) = (
        read_u32(&images, 8).unwrap_or(0) as usize,
        read_u32(&images, 12).unwrap_or(0) as usize,
    );
    if rows != SIDE || cols != SIDE {
        return Err(Error::Parse {
            path: ip.into(),
            line: 0,
            message: format!("expected {SIDE}x{SIDE} images, header says {rows}x{cols}"),
        });
    }
    if images.len() < 16 + n * SIDE * SIDE {
        return Err(Error::TruncatedFile {
            path: ip.into(),
            what: format!("{n} images declared, {} bytes of pixels", images.len() - 16),
        });
    }
    let labels = read_idx(lp, IDX_LABELS, 8)?;
    let m = read_u32(&labels, 4).unwrap_or(0) as usize;
    if labels.len() < 8 + m {
        return Err(Error::TruncatedFile {
            path: lp.into(),
            what: format!("{m} labels declared, {} present", labels.len() - 8),
        });
    }
    if m != n {
        return Err(Error::Parse {
            path: lp.into(),
            line: 0,
            message: format!("{m} labels for {n} images"),
        });
    }
    Ok((
        images[16..16 + n * SIDE * SIDE].to_vec(),
        labels[8..8 + n].to_vec(),
    ))
}

/// Keeps the requested digits, draws `per_class` images of each without
/// replacement (seeded), relabels to `0..C` in the given order and scales
/// pixels to `[0, 1]`. Samples are grouped by class.
pub fn load_mnist_subset(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    digits: &[u8],
    per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if digits.is_empty() || digits.iter().any(|&d| d > 9) {
        return Err(Error::Config(format!(
            "digits must be a non-empty subset of 0..=9, got {digits:?}"
        )));
    }
    let (pixels, labels) = read_mnist(images_path, labels_path)?;
    let mut by_digit: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &d) in labels.iter().enumerate() {
        by_digit.entry(d).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(digits.len() * per_class * SIDE * SIDE);
    let mut out_labels = Vec::with_capacity(digits.len() * per_class);
    for (class, &digit) in digits.iter().enumerate() {
        let pool = by_digit.get(&digit).map(Vec::as_slice).unwrap_or(&[]);
        if pool.len() < per_class {
            return Err(Error::NotEnoughSamples {
                digit,
                wanted: per_class,
                available: pool.len(),
            });
        }
        for k in index::sample(&mut rng, pool.len(), per_class) {
            let img = &pixels[pool[k] * SIDE * SIDE..][..SIDE * SIDE];
            features.extend(img.iter().map(|&v| f64::from(v) / 255.0));
            out_labels.push(class);
        }
    }
    let name: String = digits.iter().map(|d| d.to_string()).collect();
    Ok(LabeledDataset::new(
        format!("mnist-{name}"),
        SIDE * SIDE,
        digits.len(),
        features,
        out_labels,
    )?)
}
