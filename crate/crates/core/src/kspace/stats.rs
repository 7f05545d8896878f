//! Moments and normal Q-Q pairs of reconstruction residuals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::image::ComplexImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// `(standard normal quantile, empirical standardized quantile)`,
    /// ascending in the theoretical quantile.
    pub qq_pairs: Vec<(f64, f64)>,
    /// Set when the residuals have zero spread; shape statistics are then 0.
    pub degenerate: bool,
}

/// Statistics of the pooled real and imaginary residual components of
/// `x_approx − x0`.
pub fn residual_stats(
    x_approx: &ComplexImage,
    x0: &ComplexImage,
    n_quantiles: usize,
) -> Result<ResidualStats> {
    let diff = x_approx.sub(x0)?;
    let samples: Vec<f64> = diff.values().iter().flat_map(|c| [c.re, c.im]).collect();
    let scale = (x0.norm_sqr() / (2 * x0.len()) as f64).sqrt();
    ResidualStats::with_scale(&samples, scale, n_quantiles)
}

impl ResidualStats {
    pub fn from_samples(samples: &[f64], n_quantiles: usize) -> Result<Self> {
        Self::with_scale(samples, 0.0, n_quantiles)
    }

    /// As [`from_samples`](Self::from_samples), also treating a spread below
    /// `1e-12 · scale` as degenerate. `scale` is the reference signal RMS.
    pub fn with_scale(samples: &[f64], scale: f64, n_quantiles: usize) -> Result<Self> {
        if n_quantiles < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_quantiles must be >= 2, got {n_quantiles}"
            )));
        }
        if samples.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: samples.len(),
            });
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in samples {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        let std = m2.sqrt();
        let standard_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let theoretical = |j: usize| {
            standard_normal.inverse_cdf((j as f64 + 0.5) / n_quantiles as f64)
        };

        // relative spread below this is treated as zero
        let degenerate = !(std > 1e-300 && std > 1e-12 * mean.abs().max(scale));
        if degenerate {
            return Ok(Self {
                count: samples.len(),
                mean,
                std,
                skewness: 0.0,
                excess_kurtosis: 0.0,
                qq_pairs: (0..n_quantiles).map(|j| (theoretical(j), 0.0)).collect(),
                degenerate: true,
            });
        }

        let mut standardized: Vec<f64> = samples.iter().map(|x| (x - mean) / std).collect();
        standardized.sort_by(f64::total_cmp);
        let qq_pairs = (0..n_quantiles)
            .map(|j| {
                let p = (j as f64 + 0.5) / n_quantiles as f64;
                let idx = ((p * n) as usize).min(standardized.len() - 1);
                (theoretical(j), standardized[idx])
            })
            .collect();

        Ok(Self {
            count: samples.len(),
            mean,
            std,
            skewness: m3 / (m2 * std),
            excess_kurtosis: m4 / (m2 * m2) - 3.0,
            qq_pairs,
            degenerate: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use num_complex::Complex64;

    #[test]
    fn identical_images_are_degenerate() {
        let x = ComplexImage::from_fn(4, 4, |r, c| Complex64::new(r as f64, c as f64)).unwrap();
        let s = residual_stats(&x, &x, 8).unwrap();
        assert!(s.degenerate);
        assert_eq!((s.mean, s.std), (0.0, 0.0));
    }

    #[test]
    fn round_off_residuals_are_degenerate_against_the_signal() {
        let samples = [1e-17, -2e-17, 3e-17, 0.0];
        assert!(!ResidualStats::from_samples(&samples, 4).unwrap().degenerate);
        assert!(ResidualStats::with_scale(&samples, 1.0, 4).unwrap().degenerate);
    }

    #[test]
    fn two_point_residuals() {
        let s = ResidualStats::from_samples(&[-1.0, 1.0, -1.0, 1.0], 4).unwrap();
        assert!(s.skewness.abs() < 1e-15);
        assert!((s.excess_kurtosis + 2.0).abs() < 1e-12);
        assert!((s.std - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_residuals_have_small_excess_kurtosis() {
        let mut r = rng::seeded(17);
        let samples = rng::normal_vec(&mut r, 100_000);
        let s = ResidualStats::from_samples(&samples, 50).unwrap();
        assert!(s.excess_kurtosis.abs() < 0.2, "{}", s.excess_kurtosis);
        assert!(s.skewness.abs() < 0.05);
        for &(t, e) in &s.qq_pairs {
            assert!((t - e).abs() < 0.05, "qq ({t}, {e})");
        }
    }

    #[test]
    fn qq_pairs_sorted() {
        let samples: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64).collect();
        let s = ResidualStats::from_samples(&samples, 20).unwrap();
        assert_eq!(s.qq_pairs.len(), 20);
        assert!(s.qq_pairs.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn rejects_too_few_quantiles() {
        assert!(ResidualStats::from_samples(&[1.0, 2.0], 1).is_err());
    }
}
