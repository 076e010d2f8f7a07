//! Contrast normalization, centering and PCA whitening.

use crate::error::{Error, Result};
use crate::numcore::{symmetric_eig, Matrix, Real};

/// Added to every eigenvalue before taking `1 / sqrt`.
pub const WHITEN_EPSILON: f64 = 1e-5;
const STD_FLOOR: f64 = 1e-8;

/// Per row: subtract the row mean, divide by the row standard deviation (population,
/// floored at `1e-8`).
pub fn contrast_normalize<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    let mut out = x.clone();
    let d = x.cols();
    if d == 0 {
        return out;
    }
    for row in out.data_mut().chunks_exact_mut(d) {
        let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / d as f64;
        let std = var.sqrt().max(STD_FLOOR);
        for v in row.iter_mut() {
            *v = T::from_f64((v.as_f64() - mean) / std);
        }
    }
    out
}

/// Sample covariance (n - 1 denominator) of the rows of `x`, with its column means.
pub fn covariance<T: Real>(x: &Matrix<T>) -> Result<(Matrix<f64>, Vec<f64>)> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance needs at least 2 examples, got {n}"
        )));
    }
    let mean: Vec<f64> = x
        .column_sums()
        .iter()
        .map(|s| s.as_f64() / n as f64)
        .collect();
    let mut centered = x.cast::<f64>();
    let neg: Vec<f64> = mean.iter().map(|m| -m).collect();
    centered.add_row_vector(&neg)?;
    let cov = centered.gram().scale(1.0 / (n - 1) as f64);
    Ok((cov, mean))
}

/// Fitted preprocessing transform.
///
/// Applying it maps a raw row `x` to `diag(scale) * basis^T * (cn(x) - mean)`, where `cn`
/// is contrast normalization when enabled. It must be applied exactly once per example.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    pub contrast_normalize: bool,
    pub mean: Vec<f64>,
    /// `dims x retained`, columns are principal directions.
    pub basis: Matrix<f64>,
    /// `1 / sqrt(lambda + eps)` per retained component.
    pub scale: Vec<f64>,
    /// Eigenvalues of every component, descending.
    pub eigenvalues: Vec<f64>,
    pub retained: usize,
    pub variance_fraction: f64,
}

/// Smallest `k` whose leading eigenvalues hold at least `fraction` of the total mass.
fn components_for(eigenvalues: &[f64], fraction: f64) -> usize {
    let positive: Vec<f64> = eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = positive.iter().sum();
    let mut acc = 0.0;
    for (k, l) in positive.iter().enumerate() {
        acc += l;
        // relative slack absorbs round-off when the mass sits exactly on the boundary
        if acc >= fraction * total * (1.0 - 1e-12) {
            return k + 1;
        }
    }
    positive.len()
}

/// Fits the pipeline on training features only.
pub fn preprocess_fit<T: Real>(
    train: &Matrix<T>,
    variance_fraction: f64,
    contrast: bool,
) -> Result<Whitener> {
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "variance fraction {variance_fraction} outside (0, 1]"
        )));
    }
    let x = if contrast {
        contrast_normalize(train)
    } else {
        train.clone()
    };
    let (cov, mean) = covariance(&x)?;
    let eig = symmetric_eig(&cov)?;
    let total: f64 = eig.values.iter().map(|&l| l.max(0.0)).sum();
    if !(total > 1e-12 * cov.rows().max(1) as f64) {
        return Err(Error::InvalidArgument(
            "training features have zero variance".into(),
        ));
    }
    let retained = components_for(&eig.values, variance_fraction);
    let d = cov.rows();
    let basis = Matrix::from_fn(d, retained, |i, j| eig.vectors.get(i, j));
    let scale = eig.values[..retained]
        .iter()
        .map(|&l| 1.0 / (l.max(0.0) + WHITEN_EPSILON).sqrt())
        .collect();
    Ok(Whitener {
        contrast_normalize: contrast,
        mean,
        basis,
        scale,
        eigenvalues: eig.values,
        retained,
        variance_fraction,
    })
}

impl Whitener {
    pub fn input_dims(&self) -> usize {
        self.mean.len()
    }

    pub fn apply<T: Real>(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.input_dims() {
            return Err(Error::shape(
                "whiten",
                x.shape(),
                (x.rows(), self.input_dims()),
            ));
        }
        let x = if self.contrast_normalize {
            contrast_normalize(x)
        } else {
            x.clone()
        };
        let mut centered = x.cast::<f64>();
        let neg: Vec<f64> = self.mean.iter().map(|m| -m).collect();
        centered.add_row_vector(&neg)?;
        let mut z = centered.matmul(&self.basis)?;
        if self.retained > 0 {
            for row in z.data_mut().chunks_exact_mut(self.retained) {
                for (v, s) in row.iter_mut().zip(&self.scale) {
                    *v *= s;
                }
            }
        }
        Ok(z.cast())
    }

    const MAGIC: &'static [u8; 4] = b"ZLWH";

    /// Little-endian binary form used to cache fitted transforms between commands.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(Self::MAGIC);
        out.push(self.contrast_normalize as u8);
        out.extend_from_slice(&(self.input_dims() as u32).to_le_bytes());
        out.extend_from_slice(&(self.retained as u32).to_le_bytes());
        out.extend_from_slice(&(self.eigenvalues.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.variance_fraction.to_le_bytes());
        for v in self
            .mean
            .iter()
            .chain(self.basis.data())
            .chain(&self.scale)
            .chain(&self.eigenvalues)
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(format!("whitener: {m}"));
        if bytes.len() < 25 || &bytes[..4] != Self::MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let contrast = bytes[4] != 0;
        let (d, k, ne) = (u32_at(5), u32_at(9), u32_at(13));
        let fraction = f64::from_le_bytes(bytes[17..25].try_into().unwrap());
        let count = d + d * k + k + ne;
        if bytes.len() != 25 + 8 * count {
            return Err(bad("truncated"));
        }
        let vals: Vec<f64> = bytes[25..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (mean, rest) = vals.split_at(d);
        let (basis, rest) = rest.split_at(d * k);
        let (scale, eigenvalues) = rest.split_at(k);
        Ok(Whitener {
            contrast_normalize: contrast,
            mean: mean.to_vec(),
            basis: Matrix::from_vec(d, k, basis.to_vec())?,
            scale: scale.to_vec(),
            eigenvalues: eigenvalues.to_vec(),
            retained: k,
            variance_fraction: fraction,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn correlated(n: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = Rng::new(seed);
        let mix = Matrix::from_fn(
            d,
            d,
            |i, j| if i == j { 1.0 } else { 0.0 } + 0.4 * rng.gaussian(),
        );
        let z = Matrix::from_fn(n, d, |_, j| (j as f64 + 1.0).sqrt() * rng.gaussian() + 3.0);
        z.matmul(&mix).unwrap()
    }

    #[test]
    fn whitened_training_covariance_is_identity() {
        let x = correlated(5000, 12, 1);
        let w = preprocess_fit(&x, 1.0, false).unwrap();
        assert_eq!(w.retained, 12);
        let z = w.apply(&x).unwrap();
        let (cov, mean) = covariance(&z).unwrap();
        assert!(mean.iter().all(|m| m.abs() < 1e-6));
        for i in 0..12 {
            for j in 0..12 {
                let v = cov.get(i, j);
                if i == j {
                    assert!((v - 1.0).abs() < 1e-3, "diag {v}");
                } else {
                    assert!(v.abs() < 1e-3, "off {v}");
                }
            }
        }
    }

    #[test]
    fn subspace_data_retains_at_most_rank() {
        let mut rng = Rng::new(2);
        let z = Matrix::<f64>::from_fn(400, 3, |_, _| rng.gaussian());
        let lift = Matrix::from_fn(3, 20, |_, _| rng.gaussian());
        let x = z.matmul(&lift).unwrap();
        let w = preprocess_fit(&x, 0.99, false).unwrap();
        assert!(w.retained <= 3, "{}", w.retained);
    }

    #[test]
    fn contrast_normalized_rows() {
        let x = correlated(50, 30, 3);
        let cn = contrast_normalize(&x);
        for row in cn.row_iter() {
            let m = row.iter().sum::<f64>() / 30.0;
            let v = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 30.0;
            assert!(m.abs() < 1e-6 && (v.sqrt() - 1.0).abs() < 1e-6);
        }
        let flat = Matrix::<f64>::filled(1, 4, 0.3);
        assert!(contrast_normalize(&flat)
            .data()
            .iter()
            .all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn double_application_is_not_idempotent() {
        // the contract allows exactly one application
        let x = correlated(300, 6, 4);
        let w = preprocess_fit(&x, 1.0, false).unwrap();
        let once = w.apply(&x).unwrap();
        let twice = w.apply(&once).unwrap();
        assert!(twice.sub(&once).unwrap().max_abs() > 1e-3);
    }

    #[test]
    fn fit_is_reproducible_and_serialisable() {
        let x = correlated(200, 8, 5);
        let a = preprocess_fit(&x, 0.9, true).unwrap();
        let b = preprocess_fit(&x, 0.9, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(Whitener::from_bytes(&a.to_bytes()).unwrap(), a);
        assert!(Whitener::from_bytes(&a.to_bytes()[..40]).is_err());
    }

    #[test]
    fn errors() {
        assert!(preprocess_fit(&Matrix::<f64>::zeros(1, 3), 0.99, false).is_err());
        assert!(preprocess_fit(&Matrix::<f64>::filled(10, 3, 2.0), 0.99, false).is_err());
        let w = preprocess_fit(&correlated(20, 4, 6), 0.99, false).unwrap();
        assert!(w.apply(&Matrix::<f64>::zeros(2, 5)).is_err());
    }

    #[test]
    fn fitted_on_train_only() {
        // a test set with a different mean does not move the fitted statistics
        let train = correlated(500, 5, 7);
        let test = correlated(500, 5, 8).map(|v| v + 100.0);
        let w = preprocess_fit(&train, 0.99, false).unwrap();
        let z = w.apply(&test).unwrap();
        let (_, mean) = covariance(&z).unwrap();
        assert!(mean.iter().any(|m| m.abs() > 1.0));
    }
}
