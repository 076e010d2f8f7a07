//! Fully connected networks with linear bottleneck layers and zero-bias ReLU units.
//!
//! The crate is organised bottom-up:
//!
//! - [`numcore`]: dense matrices, a deterministic RNG, symmetric eigendecomposition and
//!   the statistics used by the probes (normal CDF, Kolmogorov-Smirnov distance).
//! - [`layers`]: layer kinds, forward/backward propagation, absorption of a linear layer
//!   into the nonlinear layer above it and the equivalent dense update of the absorbed layer.
//! - [`optim`]: SGD with heavy-ball momentum, step learning-rate decay and nonlinear
//!   conjugate gradients (Polak-Ribiere+) for the softmax head.
//! - [`pretrain`]: greedy layer-wise pretraining with zero-bias and linear autoencoders,
//!   followed by per-layer standardization.
//! - [`data`]: CIFAR-10 binary and HIGGS CSV loaders, contrast normalization + PCA whitening,
//!   image augmentation and synthetic datasets.
//! - [`probes`]: sparsity, update density, CLT reshaping, ReLU spike mass, activation
//!   histograms and the finite-difference gradient oracle.
//! - [`harness`]: architecture strings, experiment configs, checkpoints, metrics and the
//!   commands behind the `zlin` binary.
//!
//! Everything is rank <= 2. Batches are stored with one example per row.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::field_reassign_with_default)]

pub mod data;
pub mod error;
pub mod harness;
pub mod layers;
pub mod numcore;
pub mod optim;
pub mod pretrain;
pub mod probes;

pub use error::{Error, Result};
pub use layers::{Layer, LayerKind, Mode, Network};
pub use numcore::{Matrix, Precision, Real, Rng};
