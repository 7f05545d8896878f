//! Reconstructors with closed-form Jacobian traces, used to check the
//! stochastic trace and risk estimators.

use num_complex::Complex64;

use super::Reconstructor;
use crate::error::{Error, Result};
use crate::image::{check_shape, ensure_shape, ComplexImage};
use crate::kspace::{fft2_centered, ifft2_centered};
use crate::model::dense::dot;

/// `h(x) = A · coords(x)` for a `2n × 2n` real matrix acting on split
/// real/imaginary coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearReconstructor {
    width: usize,
    height: usize,
    matrix: Vec<f64>,
}

pub fn linear_reconstructor(width: usize, height: usize, matrix: Vec<f64>) -> Result<LinearReconstructor> {
    LinearReconstructor::new(width, height, matrix)
}

impl LinearReconstructor {
    /// `matrix` is row-major with side `2 · width · height`.
    pub fn new(width: usize, height: usize, matrix: Vec<f64>) -> Result<Self> {
        check_shape(width, height)?;
        let dim = 2 * width * height;
        if matrix.len() != dim * dim {
            return Err(Error::InvalidShape(format!(
                "matrix must be {dim}x{dim} ({} entries), got {}",
                dim * dim,
                matrix.len()
            )));
        }
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("linear reconstructor matrix"));
        }
        Ok(Self {
            width,
            height,
            matrix,
        })
    }

    /// `c · I`
    pub fn scaled_identity(width: usize, height: usize, c: f64) -> Result<Self> {
        let dim = 2 * width * height;
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = c;
        }
        Self::new(width, height, m)
    }

    pub fn dim(&self) -> usize {
        2 * self.width * self.height
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// `tr(A)` over real coordinates.
    pub fn real_trace(&self) -> f64 {
        let d = self.dim();
        (0..d).map(|i| self.matrix[i * d + i]).sum()
    }

    /// `tr(A) / 2`, the complex-pixel convention.
    pub fn exact_trace(&self) -> f64 {
        0.5 * self.real_trace()
    }

    /// `‖A‖_F²`
    pub fn frobenius_sqr(&self) -> f64 {
        self.matrix.iter().map(|v| v * v).sum()
    }
}

impl Reconstructor for LinearReconstructor {
    fn apply(&self, x: &ComplexImage) -> Result<ComplexImage> {
        ensure_shape((self.width, self.height), (x.width(), x.height()))?;
        let v = x.to_real_vec();
        let out: Vec<f64> = self.matrix.chunks_exact(v.len()).map(|row| dot(row, &v)).collect();
        ComplexImage::from_real_vec(self.width, self.height, &out)
    }
}

/// Complex soft-thresholding of centered Fourier coefficients:
/// `c ↦ max(|c| − τ, 0) · c/|c|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftThreshold {
    tau: f64,
}

pub fn soft_threshold_reconstructor(tau: f64) -> Result<SoftThreshold> {
    SoftThreshold::new(tau)
}

impl SoftThreshold {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidParameter(format!("threshold must be >= 0, got {tau}")));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn shrink(&self, c: Complex64) -> Complex64 {
        let r = c.norm();
        if r <= self.tau {
            Complex64::new(0.0, 0.0)
        } else {
            c * ((r - self.tau) / r)
        }
    }

    /// Divergence at `x` in the complex-pixel convention. Each surviving
    /// coefficient contributes `1 − τ/(2|c|)`: the radial direction passes
    /// with slope 1, the tangential one with `1 − τ/|c|`.
    pub fn divergence(&self, x: &ComplexImage) -> f64 {
        fft2_centered(x)
            .values()
            .iter()
            .map(|c| c.norm())
            .filter(|&r| r > self.tau)
            .map(|r| 1.0 - self.tau / (2.0 * r))
            .sum()
    }

    /// Number of coefficients above the threshold.
    pub fn active_count(&self, x: &ComplexImage) -> usize {
        fft2_centered(x)
            .values()
            .iter()
            .filter(|c| c.norm() > self.tau)
            .count()
    }
}

impl Reconstructor for SoftThreshold {
    fn apply(&self, x: &ComplexImage) -> Result<ComplexImage> {
        let mut k = fft2_centered(x);
        for c in k.values_mut() {
            *c = self.shrink(*c);
        }
        Ok(ifft2_centered(&k))
    }
}
