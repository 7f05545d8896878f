//! Random-ellipse phantoms with optional smooth phase.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{check_shape, ComplexImage};
use crate::rng::{self, Rng};
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseMode {
    Zero,
    SmoothRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub n_ellipses: usize,
    pub intensity_range: (f64, f64),
    pub phase_mode: PhaseMode,
    pub seed: u64,
}

impl PhantomSpec {
    /// 32×32, six ellipses, amplitudes in [0, 1], smooth random phase.
    pub fn standard(seed: u64) -> Self {
        Self {
            width: 32,
            height: 32,
            n_ellipses: 6,
            intensity_range: (0.0, 1.0),
            phase_mode: PhaseMode::SmoothRandom,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_shape(self.width, self.height)?;
        if self.n_ellipses == 0 {
            return Err(Error::InvalidParameter("n_ellipses must be >= 1".into()));
        }
        let (lo, hi) = self.intensity_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter(format!(
                "intensity range must satisfy low <= high, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Ellipse in normalized coordinates: the grid spans `[-1, 1]` along each
/// axis, `x` to the right, `y` downward, angle in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub axes: (f64, f64),
    pub angle: f64,
    pub intensity: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.angle.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.axes.0).powi(2) + (v / self.axes.1).powi(2) <= 1.0
    }
}

/// Normalized coordinate of pixel centers.
pub fn pixel_coords(row: usize, col: usize, width: usize, height: usize) -> (f64, f64) {
    (
        2.0 * (col as f64 + 0.5) / width as f64 - 1.0,
        2.0 * (row as f64 + 0.5) / height as f64 - 1.0,
    )
}

/// Sum of ellipse intensities clipped to `range`.
pub fn render_ellipses(width: usize, height: usize, ellipses: &[Ellipse], range: (f64, f64)) -> Result<Vec<f64>> {
    check_shape(width, height)?;
    let mut out = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let (x, y) = pixel_coords(row, col, width, height);
            let v: f64 = ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum();
            out.push(v.clamp(range.0, range.1));
        }
    }
    Ok(out)
}

/// A body ellipse near the center followed by smaller interior features.
pub fn random_ellipses(n: usize, range: (f64, f64), rng: &mut Rng) -> Vec<Ellipse> {
    let span = range.1 - range.0;
    let mut out = Vec::with_capacity(n);
    out.push(Ellipse {
        center: (rng.random_range(-0.05..=0.05), rng.random_range(-0.05..=0.05)),
        axes: (rng.random_range(0.6..=0.85), rng.random_range(0.6..=0.85)),
        angle: rng.random_range(0.0..PI),
        intensity: range.0 + span * rng.random_range(0.35..=0.6),
    });
    for _ in 1..n {
        let radius = rng.random_range(0.0..=0.45);
        let theta = rng.random_range(0.0..2.0 * PI);
        out.push(Ellipse {
            center: (radius * theta.cos(), radius * theta.sin()),
            axes: (rng.random_range(0.06..=0.3), rng.random_range(0.06..=0.3)),
            angle: rng.random_range(0.0..PI),
            intensity: span * rng.random_range(-0.3..=0.45),
        });
    }
    out
}

/// Low-order Fourier phase field, frequencies up to 2 cycles per field of
/// view, coefficient scale decaying with frequency.
pub fn smooth_phase(width: usize, height: usize, rng: &mut Rng) -> Vec<f64> {
    let mut terms = Vec::new();
    for kx in -2i32..=2 {
        for ky in 0i32..=2 {
            if ky == 0 && kx <= 0 {
                continue;
            }
            let scale = 0.6 / (1.0 + (kx * kx + ky * ky) as f64);
            terms.push((kx as f64, ky as f64, scale * rng::standard_normal(rng), rng.random_range(0.0..2.0 * PI)));
        }
    }
    let mut out = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let (x, y) = pixel_coords(row, col, width, height);
            let phi: f64 = terms
                .iter()
                .map(|&(kx, ky, a, p)| a * (PI * 0.5 * (kx * x + ky * y) + p).cos())
                .sum();
            out.push(phi);
        }
    }
    out
}

pub(crate) fn compose(magnitude: &[f64], phase: Option<&[f64]>, width: usize, height: usize) -> ComplexImage {
    let values = match phase {
        Some(p) => magnitude
            .iter()
            .zip(p)
            .map(|(&m, &ph)| Complex64::from_polar(m, ph))
            .collect(),
        None => magnitude.iter().map(|&m| Complex64::new(m, 0.0)).collect(),
    };
    ComplexImage::from_raw(width, height, values)
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<ComplexImage> {
    spec.validate()?;
    let mut r = rng::seeded(spec.seed);
    let ellipses = random_ellipses(spec.n_ellipses, spec.intensity_range, &mut r);
    let mag = render_ellipses(spec.width, spec.height, &ellipses, spec.intensity_range)?;
    let phase = match spec.phase_mode {
        PhaseMode::Zero => None,
        PhaseMode::SmoothRandom => Some(smooth_phase(spec.width, spec.height, &mut r)),
    };
    Ok(compose(&mag, phase.as_deref(), spec.width, spec.height))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_circle_is_symmetric() {
        let e = Ellipse {
            center: (0.0, 0.0),
            axes: (0.6, 0.6),
            angle: 0.3,
            intensity: 1.0,
        };
        let n = 24;
        let m = render_ellipses(n, n, &[e], (0.0, 1.0)).unwrap();
        let at = |r: usize, c: usize| m[r * n + c];
        for r in 0..n {
            for c in 0..n {
                assert_eq!(at(r, c), at(c, r));
                assert_eq!(at(r, c), at(n - 1 - r, c));
                assert_eq!(at(r, c), at(r, n - 1 - c));
            }
        }
    }

    #[test]
    fn zero_phase_is_real() {
        let spec = PhantomSpec {
            phase_mode: PhaseMode::Zero,
            ..PhantomSpec::standard(3)
        };
        let img = generate_phantom(&spec).unwrap();
        assert!(img.values().iter().all(|c| c.im == 0.0));
        assert!(img.values().iter().any(|c| c.re > 0.0));
    }

    /// Center (0.25, −0.25), axes (0.5, 0.25), no rotation on a 16×16 grid.
    /// A pixel (row, col) has center x = (col + 0.5)/8 − 1, y = (row + 0.5)/8 − 1
    /// and lies inside iff ((x − 0.25)/0.5)² + ((y + 0.25)/0.25)² ≤ 1.
    #[test]
    fn hand_specified_ellipse_membership() {
        let e = Ellipse {
            center: (0.25, -0.25),
            axes: (0.5, 0.25),
            angle: 0.0,
            intensity: 1.0,
        };
        let m = render_ellipses(16, 16, &[e], (0.0, 1.0)).unwrap();
        let mut inside = Vec::new();
        for row in 0..16 {
            for col in 0..16 {
                if m[row * 16 + col] == 1.0 {
                    inside.push((row, col));
                }
            }
        }
        // row 4: y = −0.4375, |x − 0.25| ≤ 0.5·√0.4375 ≈ 0.331 → cols 7..=12
        // row 5: y = −0.3125, |x − 0.25| ≤ 0.5·√0.9375 ≈ 0.484 → cols 6..=13
        // rows 6, 7 mirror rows 5, 4
        let mut expected = Vec::new();
        for (row, cols) in [(4, 7..=12), (5, 6..=13), (6, 6..=13), (7, 7..=12)] {
            for col in cols {
                expected.push((row, col));
            }
        }
        assert_eq!(inside, expected);
    }

    #[test]
    fn intensities_clipped() {
        let spec = PhantomSpec {
            n_ellipses: 12,
            intensity_range: (0.1, 0.7),
            ..PhantomSpec::standard(9)
        };
        let img = generate_phantom(&spec).unwrap();
        for c in img.values() {
            let m = c.norm();
            assert!((0.1 - 1e-12..=0.7 + 1e-12).contains(&m));
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_phantom(&PhantomSpec::standard(5)).unwrap();
        let b = generate_phantom(&PhantomSpec::standard(5)).unwrap();
        let c = generate_phantom(&PhantomSpec::standard(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = PhantomSpec::standard(0);
        s.n_ellipses = 0;
        assert!(generate_phantom(&s).is_err());
        let mut s = PhantomSpec::standard(0);
        s.intensity_range = (1.0, 0.0);
        assert!(generate_phantom(&s).is_err());
    }
}
