//! CIFAR-10 binary batches: 3073-byte records, one label byte followed by 1024 red,
//! 1024 green and 1024 blue bytes, each plane row-major.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, IMAGE_DIMS};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Real};

pub const CIFAR_RECORD_BYTES: usize = 1 + IMAGE_DIMS;
const CIFAR_CLASSES: usize = 10;

/// Reads and concatenates batch files. Pixels are scaled to `[0, 1]`.
pub fn load_cifar10<T: Real, P: AsRef<Path>>(paths: &[P]) -> Result<Dataset<T>> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let whole = bytes.len() / CIFAR_RECORD_BYTES * CIFAR_RECORD_BYTES;
        if whole != bytes.len() {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                offset: whole as u64,
            });
        }
        features.reserve(bytes.len() / CIFAR_RECORD_BYTES * IMAGE_DIMS);
        for (r, record) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
            let label = record[0] as usize;
            if label >= CIFAR_CLASSES {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: r,
                    msg: format!(
                        "record {r} (byte offset {}) has label {label} > 9",
                        r * CIFAR_RECORD_BYTES
                    ),
                });
            }
            labels.push(label);
            features.extend(record[1..].iter().map(|&b| T::from_f64(b as f64 / 255.0)));
        }
    }
    let rows = labels.len();
    Dataset::new(
        Matrix::from_vec(rows, IMAGE_DIMS, features)?,
        labels,
        CIFAR_CLASSES,
    )
}

/// Writes `data` in the batch layout, quantising features in `[0, 1]` to bytes.
pub fn write_cifar10<T: Real>(path: &Path, data: &Dataset<T>) -> Result<()> {
    if data.dims() != IMAGE_DIMS || data.classes > CIFAR_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "CIFAR records need {IMAGE_DIMS} dims and <= 10 classes, got {} dims, {} classes",
            data.dims(),
            data.classes
        )));
    }
    let mut out = Vec::with_capacity(data.len() * CIFAR_RECORD_BYTES);
    for (row, &label) in data.features.row_iter().zip(&data.labels) {
        out.push(label as u8);
        out.extend(
            row.iter()
                .map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    fs::write(path, out).map_err(|e| Error::io(PathBuf::from(path), e))
}
