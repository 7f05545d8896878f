//! Hard data-consistency projection.

use num_complex::Complex64;

use crate::error::Result;
use crate::image::{ensure_shape, ComplexImage, KSpace, Shaped};
use crate::kspace::{centered_in_place, SamplingMask};

/// `F⁻¹(Ω ⊙ y + (1 − Ω) ⊙ F x)`: sampled coefficients replaced by the
/// measurement, the rest kept from `x`.
pub fn data_consistency(x: &ComplexImage, y: &KSpace, mask: &SamplingMask) -> Result<ComplexImage> {
    ensure_shape(x.shape(), y.shape())?;
    ensure_shape(x.shape(), mask.shape())?;
    let (w, h) = x.shape();
    let mut k = x.values().to_vec();
    centered_in_place(&mut k, w, h, true);
    for (i, (v, m)) in k.iter_mut().zip(y.values()).enumerate() {
        if mask.is_sampled(i) {
            *v = *m;
        }
    }
    centered_in_place(&mut k, w, h, false);
    Ok(ComplexImage::from_raw(w, h, k))
}

/// [`data_consistency`] on split real/imaginary coordinates. Shapes are
/// checked by the caller.
pub(crate) fn dc_coords(coords: &[f64], y: &KSpace, mask: &SamplingMask) -> Vec<f64> {
    let (w, h) = y.shape();
    let mut k = to_complex(coords);
    centered_in_place(&mut k, w, h, true);
    for (i, (v, m)) in k.iter_mut().zip(y.values()).enumerate() {
        if mask.is_sampled(i) {
            *v = *m;
        }
    }
    centered_in_place(&mut k, w, h, false);
    to_coords(&k)
}

/// `F⁻¹ (1 − Ω) F g`, the Jacobian of the projection. It is symmetric in real
/// coordinates, so it also maps output gradients to input gradients.
pub(crate) fn project_unsampled_coords(g: &[f64], mask: &SamplingMask) -> Vec<f64> {
    let (w, h) = mask.shape();
    let mut k = to_complex(g);
    centered_in_place(&mut k, w, h, true);
    for (i, v) in k.iter_mut().enumerate() {
        if mask.is_sampled(i) {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    centered_in_place(&mut k, w, h, false);
    to_coords(&k)
}

fn to_complex(coords: &[f64]) -> Vec<Complex64> {
    let (re, im) = coords.split_at(coords.len() / 2);
    re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect()
}

fn to_coords(values: &[Complex64]) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; 2 * n];
    for (i, c) in values.iter().enumerate() {
        out[i] = c.re;
        out[n + i] = c.im;
    }
    out
}
