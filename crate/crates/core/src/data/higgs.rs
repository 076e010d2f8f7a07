//! HIGGS CSV: label (0.0 or 1.0) followed by 28 features per line.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Real};

pub const HIGGS_FEATURES: usize = 28;

pub fn load_higgs<T: Real>(path: &Path, limit: Option<usize>) -> Result<Dataset<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        if limit.is_some_and(|l| labels.len() >= l) {
            break;
        }
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label: f64 = fields
            .next()
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|e| parse_err(line_no, format!("bad label: {e}")))?;
        let label = if label == 0.0 {
            0
        } else if label == 1.0 {
            1
        } else {
            return Err(parse_err(line_no, format!("label {label} is not 0 or 1")));
        };
        let before = features.len();
        for (j, f) in fields.enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|e| parse_err(line_no, format!("feature {j}: {e}")))?;
            features.push(T::from_f64(v));
        }
        let got = features.len() - before;
        if got != HIGGS_FEATURES {
            return Err(parse_err(
                line_no,
                format!("expected {HIGGS_FEATURES} features, found {got}"),
            ));
        }
        labels.push(label);
    }
    let rows = labels.len();
    Dataset::new(Matrix::from_vec(rows, HIGGS_FEATURES, features)?, labels, 2)
}
