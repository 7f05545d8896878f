//! Complex-valued grids: images and their (DC-centered) spectra.
//!
//! Both types store row-major `Complex64` values. Network-facing code views
//! an image as `2n` real coordinates in split layout: all real parts first,
//! then all imaginary parts.

use num_complex::Complex64;

use crate::error::{Error, Result};

macro_rules! complex_grid {
    ($name:ident, $what:literal) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            width: usize,
            height: usize,
            values: Vec<Complex64>,
        }

        impl $name {
            /// Validated constructor: nonzero shape, matching length, finite values.
            pub fn new(width: usize, height: usize, values: Vec<Complex64>) -> Result<Self> {
                check_shape(width, height)?;
                if values.len() != width * height {
                    return Err(Error::InvalidShape(format!(
                        "{}x{} {} needs {} values, got {}",
                        width,
                        height,
                        $what,
                        width * height,
                        values.len()
                    )));
                }
                if !values.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
                    return Err(Error::NonFinite($what));
                }
                Ok(Self {
                    width,
                    height,
                    values,
                })
            }

            pub fn zeros(width: usize, height: usize) -> Result<Self> {
                check_shape(width, height)?;
                Ok(Self {
                    width,
                    height,
                    values: vec![Complex64::new(0.0, 0.0); width * height],
                })
            }

            /// Skips the finiteness scan; callers guarantee the shape.
            pub(crate) fn from_raw(width: usize, height: usize, values: Vec<Complex64>) -> Self {
                debug_assert_eq!(values.len(), width * height);
                Self {
                    width,
                    height,
                    values,
                }
            }

            pub fn from_fn(
                width: usize,
                height: usize,
                mut f: impl FnMut(usize, usize) -> Complex64,
            ) -> Result<Self> {
                check_shape(width, height)?;
                let mut values = Vec::with_capacity(width * height);
                for row in 0..height {
                    for col in 0..width {
                        values.push(f(row, col));
                    }
                }
                Self::new(width, height, values)
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn shape(&self) -> (usize, usize) {
                (self.width, self.height)
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn values(&self) -> &[Complex64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [Complex64] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<Complex64> {
                self.values
            }

            pub fn get(&self, row: usize, col: usize) -> Complex64 {
                self.values[row * self.width + col]
            }

            pub fn norm_sqr(&self) -> f64 {
                self.values.iter().map(|c| c.norm_sqr()).sum()
            }

            pub fn norm(&self) -> f64 {
                self.norm_sqr().sqrt()
            }

            pub fn max_magnitude(&self) -> f64 {
                self.values.iter().map(|c| c.norm()).fold(0.0, f64::max)
            }

            pub fn is_finite(&self) -> bool {
                self.values
                    .iter()
                    .all(|c| c.re.is_finite() && c.im.is_finite())
            }

            /// `⟨self, other⟩ = Σ conj(self_i)·other_i`.
            pub fn inner(&self, other: &Self) -> Complex64 {
                self.values
                    .iter()
                    .zip(&other.values)
                    .map(|(a, b)| a.conj() * b)
                    .sum()
            }

            pub fn ensure_same_shape<T: Shaped>(&self, other: &T) -> Result<()> {
                ensure_shape(self.shape(), other.shape())
            }

            pub fn scaled(&self, factor: f64) -> Self {
                Self::from_raw(
                    self.width,
                    self.height,
                    self.values.iter().map(|c| c * factor).collect(),
                )
            }
        }

        impl Shaped for $name {
            fn shape(&self) -> (usize, usize) {
                (self.width, self.height)
            }
        }
    };
}

complex_grid!(ComplexImage, "image");
complex_grid!(KSpace, "k-space");

/// Anything laid out on a `(width, height)` grid.
pub trait Shaped {
    fn shape(&self) -> (usize, usize);
}

pub(crate) fn check_shape(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidShape(format!(
            "dimensions must be nonzero, got {width}x{height}"
        )));
    }
    Ok(())
}

pub(crate) fn ensure_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

impl ComplexImage {
    /// Split real/imaginary coordinates, length `2n`.
    pub fn to_real_vec(&self) -> Vec<f64> {
        let n = self.values.len();
        let mut out = vec![0.0; 2 * n];
        let (re, im) = out.split_at_mut(n);
        for (i, c) in self.values.iter().enumerate() {
            re[i] = c.re;
            im[i] = c.im;
        }
        out
    }

    pub fn from_real_vec(width: usize, height: usize, coords: &[f64]) -> Result<Self> {
        let n = width * height;
        if coords.len() != 2 * n {
            return Err(Error::InvalidShape(format!(
                "expected {} real coordinates for {width}x{height}, got {}",
                2 * n,
                coords.len()
            )));
        }
        let (re, im) = coords.split_at(n);
        Self::new(
            width,
            height,
            re.iter()
                .zip(im)
                .map(|(&r, &i)| Complex64::new(r, i))
                .collect(),
        )
    }

    pub fn from_real(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        Self::new(
            width,
            height,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm()).collect()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Self::from_raw(
            self.width,
            self.height,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Self::from_raw(
            self.width,
            self.height,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    /// `‖self − other‖²`.
    pub fn distance_sqr(&self, other: &Self) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum())
    }

    /// Root-mean-square magnitude.
    pub fn rms(&self) -> f64 {
        (self.norm_sqr() / self.len() as f64).sqrt()
    }
}
