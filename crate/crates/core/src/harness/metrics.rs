//! `metrics.csv`: one row per (epoch, split), flushed as it is written.
//!
//! Columns: `epoch,split,loss,accuracy,lr,sparsity_l1..sparsity_lK,seconds`, where `K` is the
//! number of hidden parametric layers and `seconds` is wall-clock time since the run started.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f64,
    /// Zero fraction of each hidden parametric layer, bottom-up.
    pub sparsity: Vec<f64>,
    pub seconds: f64,
}

pub fn metrics_header(layers: usize) -> String {
    let mut h = String::from("epoch,split,loss,accuracy,lr");
    for k in 1..=layers {
        h.push_str(&format!(",sparsity_l{k}"));
    }
    h.push_str(",seconds");
    h
}

impl MetricsRow {
    pub fn csv(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{}",
            self.epoch, self.split, self.loss, self.accuracy, self.lr
        );
        for v in &self.sparsity {
            s.push_str(&format!(",{v}"));
        }
        s.push_str(&format!(",{:.3}", self.seconds));
        s
    }
}

/// Append-only writer. Rows must have the header's sparsity width, accuracy in `[0, 1]`,
/// and non-decreasing epochs per split.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
    layers: usize,
    last_epoch: [Option<usize>; 2],
}

impl MetricsWriter {
    pub fn create(path: &Path, layers: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = MetricsWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            layers,
            last_epoch: [None; 2],
        };
        w.line(&metrics_header(layers))?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        if row.sparsity.len() != self.layers {
            return Err(Error::InvalidArgument(format!(
                "{} sparsity values for {} columns",
                row.sparsity.len(),
                self.layers
            )));
        }
        if !(0.0..=1.0).contains(&row.accuracy) {
            return Err(Error::InvalidArgument(format!(
                "accuracy {} outside [0, 1]",
                row.accuracy
            )));
        }
        let slot = &mut self.last_epoch[row.split as usize];
        if slot.is_some_and(|e| row.epoch < e) {
            return Err(Error::InvalidArgument(format!(
                "{} epoch {} after epoch {}",
                row.split,
                row.epoch,
                slot.unwrap()
            )));
        }
        *slot = Some(row.epoch);
        self.line(&row.csv())
    }
}
