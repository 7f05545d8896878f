//! Measurement model `y = Ω ⊙ (F x₀ + v)` and its adjoint-side operators.

use num_complex::Complex64;

use super::fft::{fft2_centered, ifft2_centered};
use super::mask::{SamplingDensity, SamplingMask};
use crate::error::{Error, Result};
use crate::image::{ensure_shape, ComplexImage, KSpace, Shaped};
use crate::rng;

/// Simulates undersampled, noisy k-space. `noise_std` is the standard
/// deviation of each of the real and imaginary noise components.
pub fn undersample(
    x0: &ComplexImage,
    mask: &SamplingMask,
    noise_std: f64,
    seed: u64,
) -> Result<KSpace> {
    ensure_shape(x0.shape(), mask.shape())?;
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise_std must be finite and >= 0, got {noise_std}"
        )));
    }
    let mut k = fft2_centered(x0);
    let mut rng = rng::seeded(seed);
    for (i, v) in k.values_mut().iter_mut().enumerate() {
        if mask.is_sampled(i) {
            if noise_std > 0.0 {
                let re = rng::standard_normal(&mut rng);
                let im = rng::standard_normal(&mut rng);
                *v += Complex64::new(re, im) * noise_std;
            }
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(k)
}

/// `Ω ⊙ k`
pub fn apply_mask(k: &KSpace, mask: &SamplingMask) -> Result<KSpace> {
    ensure_shape(k.shape(), mask.shape())?;
    let mut out = k.clone();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        if !mask.is_sampled(i) {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(out)
}

/// `x_zf = F⁻¹(Ω ⊙ y)`
pub fn zero_fill(y: &KSpace, mask: &SamplingMask) -> Result<ComplexImage> {
    Ok(ifft2_centered(&apply_mask(y, mask)?))
}

/// `x̃_zf = F⁻¹(D⁻¹ ⊙ Ω ⊙ y)`
pub fn density_compensate(
    y: &KSpace,
    mask: &SamplingMask,
    density: &SamplingDensity,
) -> Result<ComplexImage> {
    ensure_shape(y.shape(), mask.shape())?;
    ensure_shape(y.shape(), density.shape())?;
    if let Some(p) = density.probabilities().iter().find(|p| !(**p > 0.0)) {
        return Err(Error::InvalidDensity(format!(
            "density entries must be positive, found {p}"
        )));
    }
    let mut k = y.clone();
    for (i, v) in k.values_mut().iter_mut().enumerate() {
        if mask.is_sampled(i) {
            *v /= density.probabilities()[i];
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(ifft2_centered(&k))
}

/// Expected noiseless aliasing energy `E‖x̃_zf − x₀‖²` of the
/// density-compensated input under independent Bernoulli sampling with the
/// probabilities of `density`: `Σₖ |(F x₀)ₖ|² (1/pₖ − 1)`. Needs the ground
/// truth, so it only serves as a check on synthetic data.
pub fn compensated_aliasing_energy(x0: &ComplexImage, density: &SamplingDensity) -> Result<f64> {
    ensure_shape(x0.shape(), density.shape())?;
    let k = fft2_centered(x0);
    Ok(k.values()
        .iter()
        .zip(density.probabilities())
        .map(|(c, p)| c.norm_sqr() * (1.0 / p - 1.0))
        .sum())
}
