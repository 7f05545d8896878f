//! Jacobian trace of a black-box reconstructor.
//!
//! Reconstructors act on `2n` real coordinates (split real/imaginary). All
//! traces reported here are halved to the complex-pixel convention, so the
//! identity map has trace `n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ComplexImage;
use crate::recon::Reconstructor;
use crate::rng;

/// Largest real-coordinate count accepted by [`jacobian_trace_exact`].
pub const EXACT_TRACE_MAX_COORDS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub mean: f64,
    pub per_probe: Vec<f64>,
    /// Sample standard deviation of `per_probe` over `√n_probes`; zero for a
    /// single probe.
    pub std_error: f64,
    pub epsilon: f64,
}

/// Largest pixel magnitude of `x` over 1000.
pub fn default_epsilon(x: &ComplexImage) -> Result<f64> {
    let eps = x.max_magnitude() / 1000.0;
    if eps > 0.0 && eps.is_finite() {
        Ok(eps)
    } else {
        Err(Error::InvalidParameter(
            "cannot derive a perturbation scale from an all-zero image".into(),
        ))
    }
}

fn apply_checked(h: &dyn Reconstructor, x: &ComplexImage) -> Result<Vec<f64>> {
    let out = h.apply(x)?;
    if out.shape() != x.shape() {
        return Err(Error::Contract(format!(
            "reconstructor changed shape {:?} -> {:?}",
            x.shape(),
            out.shape()
        )));
    }
    Ok(out.to_real_vec())
}

/// Hutchinson estimate `bᵀ(h(x + εb) − h(x))/ε` averaged over `n_probes`
/// standard-normal probes. Probe `i` is drawn from stream `(seed, i)`.
pub fn jacobian_trace_mc(
    h: &dyn Reconstructor,
    x: &ComplexImage,
    epsilon: Option<f64>,
    n_probes: usize,
    seed: u64,
) -> Result<TraceEstimate> {
    if n_probes == 0 {
        return Err(Error::InvalidParameter("n_probes must be >= 1".into()));
    }
    let epsilon = match epsilon {
        Some(e) if e > 0.0 && e.is_finite() => e,
        Some(e) => {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {e}"
            )))
        }
        None => default_epsilon(x)?,
    };
    let (w, ht) = x.shape();
    let base = apply_checked(h, x)?;
    let coords = x.to_real_vec();
    let per_probe = (0..n_probes)
        .into_par_iter()
        .map(|i| {
            let b = rng::normal_vec(&mut rng::stream(seed, i as u64), coords.len());
            let shifted: Vec<f64> = coords.iter().zip(&b).map(|(c, b)| c + epsilon * b).collect();
            let out = apply_checked(h, &ComplexImage::from_real_vec(w, ht, &shifted)?)?;
            let dot: f64 = b.iter().zip(out.iter().zip(&base)).map(|(b, (o, f))| b * (o - f)).sum();
            Ok(0.5 * dot / epsilon)
        })
        .collect::<Result<Vec<f64>>>()?;
    let p = per_probe.len() as f64;
    let mean = per_probe.iter().sum::<f64>() / p;
    let std_error = if per_probe.len() > 1 {
        let var = per_probe.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (p - 1.0);
        (var / p).sqrt()
    } else {
        0.0
    };
    Ok(TraceEstimate {
        mean,
        per_probe,
        std_error,
        epsilon,
    })
}

/// `½ Σᵢ [h(x + δeᵢ) − h(x − δeᵢ)]ᵢ / 2δ` over every real coordinate.
pub fn jacobian_trace_exact(h: &dyn Reconstructor, x: &ComplexImage, fd_step: f64) -> Result<f64> {
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "fd_step must be positive and finite, got {fd_step}"
        )));
    }
    let coords = x.to_real_vec();
    if coords.len() > EXACT_TRACE_MAX_COORDS {
        return Err(Error::InvalidParameter(format!(
            "exact trace needs {} real coordinates, limit is {EXACT_TRACE_MAX_COORDS}",
            coords.len()
        )));
    }
    let (w, ht) = x.shape();
    let eval = |i: usize, step: f64| -> Result<f64> {
        let mut c = coords.clone();
        c[i] += step;
        Ok(apply_checked(h, &ComplexImage::from_real_vec(w, ht, &c)?)?[i])
    };
    let diag = (0..coords.len())
        .into_par_iter()
        .map(|i| Ok((eval(i, fd_step)? - eval(i, -fd_step)?) / (2.0 * fd_step)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(0.5 * diag.iter().sum::<f64>())
}
