//! Fourier forward model: centered unitary transforms, variable-density
//! masks, undersampling, zero-filling, density compensation and residual
//! statistics.

mod fft;
mod mask;
mod ops;
mod stats;

pub use fft::{fft2_centered, ifft2_centered};
#[allow(unused_imports)]
pub(crate) use fft::centered_in_place;
pub use mask::{
    estimate_density, make_vd_mask, SamplingDensity, SamplingMask, VdMaskSpec,
    ACCELERATION_TOLERANCE,
};
pub use ops::{apply_mask, compensated_aliasing_energy, density_compensate, undersample, zero_fill};
pub use stats::{residual_stats, ResidualStats};
