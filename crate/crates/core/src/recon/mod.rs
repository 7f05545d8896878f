//! Reconstructors `h: image → image`, hard data consistency and
//! weight-shared cascades.

pub(crate) mod dc;
mod reference;
mod vae;

use crate::error::{Error, Result};
use crate::image::{ComplexImage, KSpace, Shaped};
use crate::kspace::SamplingMask;

pub use dc::data_consistency;
pub use reference::{linear_reconstructor, soft_threshold_reconstructor, LinearReconstructor, SoftThreshold};
pub use vae::{MeasurementSource, VaeBlock, VaeReconstructor};

/// Deterministic single-input reconstruction map.
pub trait Reconstructor: Send + Sync {
    fn apply(&self, x: &ComplexImage) -> Result<ComplexImage>;
}

impl<R: Reconstructor + ?Sized> Reconstructor for &R {
    fn apply(&self, x: &ComplexImage) -> Result<ComplexImage> {
        (**self).apply(x)
    }
}

impl<R: Reconstructor + ?Sized> Reconstructor for Box<R> {
    fn apply(&self, x: &ComplexImage) -> Result<ComplexImage> {
        (**self).apply(x)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Reconstructor for Identity {
    fn apply(&self, x: &ComplexImage) -> Result<ComplexImage> {
        Ok(x.clone())
    }
}

#[derive(Debug, Clone)]
pub struct CascadeConfig {
    pub n_recurrent_blocks: usize,
    pub measurement: KSpace,
    pub mask: SamplingMask,
}

impl CascadeConfig {
    pub fn new(n_recurrent_blocks: usize, measurement: KSpace, mask: SamplingMask) -> Result<Self> {
        if n_recurrent_blocks == 0 {
            return Err(Error::InvalidParameter("n_recurrent_blocks must be >= 1".into()));
        }
        crate::image::ensure_shape(measurement.shape(), mask.shape())?;
        Ok(Self {
            n_recurrent_blocks,
            measurement,
            mask,
        })
    }
}

/// `x̂ = (DC ∘ h)^n (x_input)` with the same `h` in every block.
pub fn reconstruct(
    h: &dyn Reconstructor,
    x_input: &ComplexImage,
    cascade: &CascadeConfig,
) -> Result<ComplexImage> {
    if cascade.n_recurrent_blocks == 0 {
        return Err(Error::InvalidParameter("n_recurrent_blocks must be >= 1".into()));
    }
    let mut x = x_input.clone();
    for _ in 0..cascade.n_recurrent_blocks {
        let out = h.apply(&x)?;
        if out.shape() != x.shape() {
            return Err(Error::Contract(format!(
                "reconstructor changed shape {:?} -> {:?}",
                x.shape(),
                out.shape()
            )));
        }
        x = data_consistency(&out, &cascade.measurement, &cascade.mask)?;
    }
    Ok(x)
}

/// Reported in place of `+∞` for exact reconstructions.
pub const SNR_CAP_DB: f64 = 300.0;

/// `20 log₁₀(‖x₀‖ / ‖x̂ − x₀‖)`, capped at [`SNR_CAP_DB`].
pub fn snr_db(x_hat: &ComplexImage, x0: &ComplexImage) -> Result<f64> {
    let err = x_hat.distance_sqr(x0)?.sqrt();
    let signal = x0.norm();
    if signal == 0.0 {
        return Err(Error::InvalidParameter("reference image is zero".into()));
    }
    if err == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((20.0 * (signal / err).log10()).min(SNR_CAP_DB))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{fft2_centered, undersample, VdMaskSpec};
    use crate::rng;
    use num_complex::Complex64;

    fn random_image(w: usize, seed: u64) -> ComplexImage {
        let mut r = rng::seeded(seed);
        ComplexImage::from_fn(w, w, |_, _| {
            Complex64::new(rng::standard_normal(&mut r), rng::standard_normal(&mut r))
        })
        .unwrap()
    }

    fn cascade(n: usize) -> CascadeConfig {
        let mask = VdMaskSpec::new(16, 16, 4.0).draw(5).unwrap();
        let y = undersample(&random_image(16, 1), &mask, 0.1, 2).unwrap();
        CascadeConfig::new(n, y, mask).unwrap()
    }

    #[test]
    fn identity_cascade_is_dc() {
        let x = random_image(16, 3);
        let c = cascade(1);
        let a = reconstruct(&Identity, &x, &c).unwrap();
        let b = data_consistency(&x, &c.measurement, &c.mask).unwrap();
        assert_eq!(a, b);
        let two = reconstruct(&Identity, &x, &cascade(2)).unwrap();
        assert!(two.distance_sqr(&a).unwrap().sqrt() < 1e-12 * a.norm());
    }

    #[test]
    fn cascade_output_is_consistent() {
        let h = SoftThreshold::new(0.5).unwrap();
        let c = cascade(3);
        let out = reconstruct(&h, &random_image(16, 4), &c).unwrap();
        let k = fft2_centered(&out);
        let scale = c.measurement.max_magnitude();
        for i in 0..k.len() {
            if c.mask.is_sampled(i) {
                assert!((k.values()[i] - c.measurement.values()[i]).norm() < 1e-8 * scale);
            }
        }
    }

    #[test]
    fn zero_blocks_rejected() {
        let c = cascade(1);
        assert!(CascadeConfig::new(0, c.measurement, c.mask).is_err());
    }

    #[test]
    fn snr_reference_values() {
        let x0 = random_image(8, 1);
        assert_eq!(snr_db(&x0, &x0).unwrap(), SNR_CAP_DB);
        let zero = ComplexImage::zeros(8, 8).unwrap();
        assert!(snr_db(&zero, &x0).unwrap().abs() < 1e-12);
        let noise = random_image(8, 2);
        let scaled = noise.scaled(0.1 * x0.norm() / noise.norm());
        let x_hat = x0.add(&scaled).unwrap();
        assert!((snr_db(&x_hat, &x0).unwrap() - 20.0).abs() < 1e-10);
        assert!(snr_db(&x0, &zero).is_err());
    }
}
