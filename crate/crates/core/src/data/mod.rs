//! Datasets, preprocessing and augmentation.

mod augment;
mod cifar;
mod higgs;
mod synth;
mod whiten;

pub use augment::{
    augment, augment_indexed, flip_h, rotate, shift, AugmentOps, IMAGE_CHANNELS, IMAGE_DIMS,
    IMAGE_SIDE,
};
pub use cifar::{load_cifar10, write_cifar10, CIFAR_RECORD_BYTES};
pub use higgs::{load_higgs, HIGGS_FEATURES};
pub use synth::{synth_dataset, SynthKind};
pub use whiten::{contrast_normalize, covariance, preprocess_fit, Whitener, WHITEN_EPSILON};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Real, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    /// One example per row.
    pub features: Matrix<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(features: Matrix<T>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside [0, {classes})"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// First `n` examples (or all of them).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Shuffled split into `(first, rest)` with `first_len` examples in the first part.
    pub fn split(&self, first_len: usize, rng: &mut Rng) -> (Self, Self) {
        let perm = rng.permutation(self.len());
        let cut = first_len.min(self.len());
        (self.select(&perm[..cut]), self.select(&perm[cut..]))
    }

    pub fn with_features(&self, features: Matrix<T>) -> Self {
        Dataset {
            features,
            labels: self.labels.clone(),
            classes: self.classes,
        }
    }

    pub fn cast<U: Real>(&self) -> Dataset<U> {
        Dataset {
            features: self.features.cast(),
            labels: self.labels.clone(),
            classes: self.classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}
