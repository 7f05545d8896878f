//! Stein's unbiased risk estimate for a black-box reconstructor.
//!
//! Normalization: `rss` is summed over pixels; `sure`, `sure_full` and
//! [`mse`] are per pixel. `dof` uses the complex-pixel convention of
//! [`super::trace`].

use serde::{Deserialize, Serialize};

use super::trace::jacobian_trace_mc;
use crate::error::{Error, Result};
use crate::image::{ComplexImage, KSpace};
use crate::kspace::{density_compensate, zero_fill, SamplingDensity, SamplingMask};
use crate::recon::{Reconstructor, SNR_CAP_DB};

pub const DEFAULT_N_PROBES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SureReport {
    /// Noise variance per complex pixel.
    pub sigma2: f64,
    pub rss: f64,
    pub dof: f64,
    /// `σ² · dof / n`
    pub sure: f64,
    /// `(−nσ² + rss + 2σ² · dof) / n`
    pub sure_full: f64,
    /// `10 log₁₀(‖x̂‖² / (n · sure))`, capped like SNR.
    pub sure_db: f64,
    pub n: usize,
    pub epsilon: f64,
    pub n_probes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SureOptions {
    pub n_probes: usize,
    /// Probe perturbation; largest input magnitude over 1000 when unset.
    pub epsilon: Option<f64>,
    /// Known noise variance per complex pixel. When unset it is estimated as
    /// `rss / n`, which cancels the first two terms of `sure_full`.
    pub sigma2: Option<f64>,
    pub seed: u64,
}

impl Default for SureOptions {
    fn default() -> Self {
        Self {
            n_probes: DEFAULT_N_PROBES,
            epsilon: None,
            sigma2: None,
            seed: 0,
        }
    }
}

/// `‖x̂ − x_zf‖² / n`
pub fn estimate_sigma2(x_hat: &ComplexImage, x_zf: &ComplexImage) -> Result<f64> {
    Ok(x_hat.distance_sqr(x_zf)? / x_zf.len() as f64)
}

/// `‖x̂ − x₀‖² / n`
pub fn mse(x_hat: &ComplexImage, x0: &ComplexImage) -> Result<f64> {
    Ok(x_hat.distance_sqr(x0)? / x0.len() as f64)
}

/// Risk of `h` at input `x_zf`. Returns the report and `x̂ = h(x_zf)`.
pub fn sure_at(
    h: &dyn Reconstructor,
    x_zf: &ComplexImage,
    options: &SureOptions,
) -> Result<(SureReport, ComplexImage)> {
    if let Some(s) = options.sigma2 {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma2 must be finite and >= 0, got {s}"
            )));
        }
    }
    let x_hat = h.apply(x_zf)?;
    if x_hat.shape() != x_zf.shape() {
        return Err(Error::Contract(format!(
            "reconstructor changed shape {:?} -> {:?}",
            x_zf.shape(),
            x_hat.shape()
        )));
    }
    let n = x_zf.len();
    let nf = n as f64;
    let rss = x_hat.distance_sqr(x_zf)?;
    let sigma2 = options.sigma2.unwrap_or(rss / nf);
    let trace = jacobian_trace_mc(h, x_zf, options.epsilon, options.n_probes, options.seed)?;
    let dof = trace.mean;
    let sure = sigma2 * dof / nf;
    let sure_full = (-nf * sigma2 + rss + 2.0 * sigma2 * dof) / nf;
    let report = SureReport {
        sigma2,
        rss,
        dof,
        sure,
        sure_full,
        sure_db: risk_db(x_hat.norm_sqr(), nf * sure),
        n,
        epsilon: trace.epsilon,
        n_probes: options.n_probes,
    };
    Ok((report, x_hat))
}

/// Risk estimate from a measurement: the input is the density-compensated
/// zero-filled image when `density` is given, the plain zero-filled image
/// otherwise.
pub fn sure(
    h: &dyn Reconstructor,
    y: &KSpace,
    mask: &SamplingMask,
    density: Option<&SamplingDensity>,
    options: &SureOptions,
) -> Result<SureReport> {
    let x_in = match density {
        Some(d) => density_compensate(y, mask, d)?,
        None => zero_fill(y, mask)?,
    };
    Ok(sure_at(h, &x_in, options)?.0)
}

fn risk_db(signal: f64, risk: f64) -> f64 {
    if risk <= 0.0 {
        SNR_CAP_DB
    } else if signal == 0.0 {
        -SNR_CAP_DB
    } else {
        (10.0 * (signal / risk).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// `(sure_full, mse)` per case.
    pub pairs: Vec<(f64, f64)>,
    pub r_squared: f64,
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares fit of `mse` on `sure_full`. A constant response or
/// constant predictor gives `R² = 0`.
pub fn sure_mse_correlation(cases: &[(SureReport, f64)]) -> Result<CorrelationReport> {
    if cases.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: cases.len(),
        });
    }
    let pairs: Vec<(f64, f64)> = cases.iter().map(|(r, m)| (r.sure_full, *m)).collect();
    let k = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Ok(CorrelationReport {
            pairs,
            r_squared: 0.0,
            slope: 0.0,
            intercept: my,
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pairs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(CorrelationReport {
        pairs,
        r_squared: (1.0 - ss_res / syy).clamp(0.0, 1.0),
        slope,
        intercept,
    })
}
