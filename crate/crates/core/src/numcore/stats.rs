use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Minimum sample count accepted by the KS helpers.
pub const KS_MIN_SAMPLES: usize = 100;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn inverse_normal_cdf(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn ks_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d.clamp(0.0, 1.0)
}

fn sorted_copy(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "KS distance needs at least {KS_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// `sup_x |F_n(x) - Phi((x - m) / s)|` with `m`, `s` fitted from the samples.
pub fn ks_gaussian(samples: &[f64]) -> Result<f64> {
    let sorted = sorted_copy(samples)?;
    let m = mean(&sorted);
    let s = std_dev(&sorted);
    if s <= 0.0 {
        return Err(Error::InvalidArgument(
            "KS distance undefined for zero-variance samples".into(),
        ));
    }
    Ok(ks_sorted(&sorted, |x| normal_cdf((x - m) / s)))
}

/// `sup_x |F_n(x) - Phi(x)|` against the standard normal, no fitting.
pub fn ks_standard_normal(samples: &[f64]) -> Result<f64> {
    let sorted = sorted_copy(samples)?;
    Ok(ks_sorted(&sorted, normal_cdf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{rng_gaussian, Rng};

    #[test]
    fn cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        let got = normal_cdf(1.0);
        assert!((got - 0.841_344_746_068_542_9).abs() < 1e-10, "{got:.17}");
        assert!((inverse_normal_cdf(0.8) - 0.841_621_233_572_914_2).abs() < 1e-9);
    }

    #[test]
    fn gaussian_samples_are_close() {
        let s = rng_gaussian(&mut Rng::new(42), 100_000, 0.0, 1.0);
        let d = ks_gaussian(&s).unwrap();
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn uniform_samples_are_far() {
        let mut rng = Rng::new(1);
        let s: Vec<f64> = (0..100_000).map(|_| rng.uniform()).collect();
        let d = ks_gaussian(&s).unwrap();
        // the fitted-normal distance of U(0,1) is about 0.057
        assert!(d > 0.05, "{d}");
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(ks_gaussian(&[1.0; 500]).is_err());
        assert!(ks_gaussian(&[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn two_point_mass_distance() {
        // +-1 with equal mass: the gap at x = 1 is Phi(1) - 1/2
        let s: Vec<f64> = (0..1000)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let d = ks_standard_normal(&s).unwrap();
        assert!((d - (normal_cdf(1.0) - 0.5)).abs() < 1e-12, "{d}");
    }
}
