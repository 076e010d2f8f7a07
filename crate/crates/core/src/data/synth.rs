//! Seeded synthetic datasets for tests and for runs without the real corpora.

use std::f64::consts::PI;

use super::{Dataset, IMAGE_CHANNELS, IMAGE_DIMS, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Real, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthKind {
    /// Unit-variance Gaussian blobs centred on `(separation / sqrt 2) e_c`, so every pair
    /// of class means is `separation` standard deviations apart.
    GaussMixture { separation: f64 },
    /// Points `sum_j z_j u_j` on a random `rank`-dimensional subspace with orthonormal
    /// basis `u`, coordinates `z_j` uniform in `[2, 4]`. The label is the index of the
    /// largest coordinate modulo the class count.
    Subspace { rank: usize },
    /// 32x32 RGB images in `[0, 1]` built from smooth random fields: a class prototype
    /// scaled by `class_signal` with a random polarity per example, per-example variation
    /// along shared smooth directions, brightness and contrast jitter and a little pixel
    /// noise. The random polarity gives every class the same mean image, so the classes
    /// are not linearly separable. `dims` must be 3072.
    Images { class_signal: f64 },
}

pub fn synth_dataset<T: Real>(
    kind: SynthKind,
    n: usize,
    dims: usize,
    classes: usize,
    rng: &mut Rng,
) -> Result<Dataset<T>> {
    if dims == 0 || classes == 0 {
        return Err(Error::InvalidArgument(
            "synthetic data needs dims >= 1 and classes >= 1".into(),
        ));
    }
    match kind {
        SynthKind::GaussMixture { separation } => gauss_mixture(separation, n, dims, classes, rng),
        SynthKind::Subspace { rank } => subspace(rank, n, dims, classes, rng),
        SynthKind::Images { class_signal } => images(class_signal, n, dims, classes, rng),
    }
}

fn gauss_mixture<T: Real>(
    separation: f64,
    n: usize,
    dims: usize,
    classes: usize,
    rng: &mut Rng,
) -> Result<Dataset<T>> {
    if classes > dims {
        return Err(Error::InvalidArgument(format!(
            "{classes} mixture classes need at least {classes} dims, got {dims}"
        )));
    }
    let offset = separation / 2f64.sqrt();
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dims);
    for _ in 0..n {
        let y = rng.below(classes);
        labels.push(y);
        for j in 0..dims {
            let mean = if j == y { offset } else { 0.0 };
            data.push(T::from_f64(mean + rng.gaussian()));
        }
    }
    Dataset::new(Matrix::from_vec(n, dims, data)?, labels, classes)
}

/// `rank` orthonormal rows of length `dims` (Gram-Schmidt on Gaussian vectors).
fn orthonormal_rows(rank: usize, dims: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rank);
    while basis.len() < rank {
        let mut v: Vec<f64> = (0..dims).map(|_| rng.gaussian()).collect();
        for u in &basis {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    basis
}

fn subspace<T: Real>(
    rank: usize,
    n: usize,
    dims: usize,
    classes: usize,
    rng: &mut Rng,
) -> Result<Dataset<T>> {
    if rank == 0 || rank > dims {
        return Err(Error::InvalidArgument(format!(
            "subspace rank {rank} must be in [1, {dims}]"
        )));
    }
    let basis = orthonormal_rows(rank, dims, rng);
    let mut labels = Vec::with_capacity(n);
    let mut data = vec![0.0; n * dims];
    for i in 0..n {
        let z: Vec<f64> = (0..rank).map(|_| rng.uniform_range(2.0, 4.0)).collect();
        let top = (0..rank)
            .max_by(|&a, &b| z[a].total_cmp(&z[b]))
            .expect("rank >= 1");
        labels.push(top % classes);
        let row = &mut data[i * dims..(i + 1) * dims];
        for (zj, u) in z.iter().zip(&basis) {
            row.iter_mut().zip(u).for_each(|(x, b)| *x += zj * b);
        }
    }
    let data = data.into_iter().map(T::from_f64).collect();
    Dataset::new(Matrix::from_vec(n, dims, data)?, labels, classes)
}

/// A smooth colour field: a few low-frequency plane waves with random per-channel gains,
/// normalised to unit RMS.
fn smooth_field(rng: &mut Rng) -> Vec<f64> {
    let mut field = vec![0.0; IMAGE_DIMS];
    for _ in 0..3 {
        let fx = rng.uniform_range(0.0, 3.0);
        let fy = rng.uniform_range(0.0, 3.0);
        let phase = rng.uniform_range(0.0, 2.0 * PI);
        let gains: Vec<f64> = (0..IMAGE_CHANNELS).map(|_| rng.gaussian()).collect();
        for (c, g) in gains.iter().enumerate() {
            for r in 0..IMAGE_SIDE {
                for col in 0..IMAGE_SIDE {
                    let (x, y) = (col as f64 / IMAGE_SIDE as f64, r as f64 / IMAGE_SIDE as f64);
                    let idx = c * IMAGE_SIDE * IMAGE_SIDE + r * IMAGE_SIDE + col;
                    field[idx] += g * (2.0 * PI * (fx * x + fy * y) + phase).cos();
                }
            }
        }
    }
    let rms = (field.iter().map(|v| v * v).sum::<f64>() / IMAGE_DIMS as f64).sqrt();
    field.iter_mut().for_each(|v| *v /= rms.max(1e-12));
    field
}

const IMAGE_VARIATION_FIELDS: usize = 48;

fn images<T: Real>(
    class_signal: f64,
    n: usize,
    dims: usize,
    classes: usize,
    rng: &mut Rng,
) -> Result<Dataset<T>> {
    if dims != IMAGE_DIMS {
        return Err(Error::InvalidArgument(format!(
            "synthetic images have {IMAGE_DIMS} dims, requested {dims}"
        )));
    }
    let prototypes: Vec<Vec<f64>> = (0..classes).map(|_| smooth_field(rng)).collect();
    let variation: Vec<Vec<f64>> = (0..IMAGE_VARIATION_FIELDS)
        .map(|_| smooth_field(rng))
        .collect();
    // decaying spectrum over the shared directions, like natural images
    let weights: Vec<f64> = (0..IMAGE_VARIATION_FIELDS)
        .map(|k| 1.0 / (1.0 + k as f64).sqrt())
        .collect();
    let wnorm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();

    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * IMAGE_DIMS);
    let mut img = vec![0.0; IMAGE_DIMS];
    for _ in 0..n {
        let y = rng.below(classes);
        labels.push(y);
        img.copy_from_slice(&prototypes[y]);
        let polarity = if rng.bernoulli(0.5) {
            class_signal
        } else {
            -class_signal
        };
        img.iter_mut().for_each(|v| *v *= polarity);
        for (f, w) in variation.iter().zip(&weights) {
            let a = rng.gaussian() * w / wnorm;
            img.iter_mut().zip(f).for_each(|(v, fv)| *v += a * fv);
        }
        let contrast = 0.12 * rng.uniform_range(0.7, 1.3);
        let brightness = 0.5 + 0.08 * rng.gaussian();
        for v in img.iter() {
            let px = brightness + contrast * v + 0.01 * rng.gaussian();
            data.push(T::from_f64(px.clamp(0.0, 1.0)));
        }
    }
    Dataset::new(Matrix::from_vec(n, IMAGE_DIMS, data)?, labels, classes)
}
