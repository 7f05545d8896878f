//! Variable-density Bernoulli sampling masks and their inclusion densities.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{check_shape, Shaped};
use crate::rng;

/// Largest allowed relative deviation of the realized acceleration from nominal.
pub const ACCELERATION_TOLERANCE: f64 = 0.15;

const MAX_DRAW_ATTEMPTS: u64 = 256;

/// Binary sampling pattern over a DC-centered k-space grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    width: usize,
    height: usize,
    pattern: Vec<bool>,
    acceleration: f64,
    seed: u64,
}

impl SamplingMask {
    pub fn new(
        width: usize,
        height: usize,
        pattern: Vec<bool>,
        acceleration: f64,
        seed: u64,
    ) -> Result<Self> {
        check_shape(width, height)?;
        if pattern.len() != width * height {
            return Err(Error::InvalidShape(format!(
                "mask pattern length {} does not match {width}x{height}",
                pattern.len()
            )));
        }
        if !pattern.iter().any(|&s| s) {
            return Err(Error::InvalidParameter(
                "mask must sample at least one location".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            pattern,
            acceleration,
            seed,
        })
    }

    /// Every location sampled.
    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![true; width * height], 1.0, 0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pattern(&self) -> &[bool] {
        &self.pattern
    }

    pub fn is_sampled(&self, index: usize) -> bool {
        self.pattern[index]
    }

    /// Nominal acceleration requested at generation time.
    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sampled_count(&self) -> usize {
        self.pattern.iter().filter(|&&s| s).count()
    }

    pub fn realized_acceleration(&self) -> f64 {
        self.pattern.len() as f64 / self.sampled_count() as f64
    }
}

impl Shaped for SamplingMask {
    fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Per-location inclusion probability `D` with `E[Ω] = D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDensity {
    width: usize,
    height: usize,
    probabilities: Vec<f64>,
    n_masks_averaged: usize,
}

impl SamplingDensity {
    pub fn new(
        width: usize,
        height: usize,
        probabilities: Vec<f64>,
        n_masks_averaged: usize,
    ) -> Result<Self> {
        check_shape(width, height)?;
        if probabilities.len() != width * height {
            return Err(Error::InvalidShape(format!(
                "density length {} does not match {width}x{height}",
                probabilities.len()
            )));
        }
        if let Some(bad) = probabilities
            .iter()
            .find(|p| !(p.is_finite() && **p > 0.0 && **p <= 1.0))
        {
            return Err(Error::InvalidDensity(format!(
                "entries must lie in (0, 1], found {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            probabilities,
            n_masks_averaged,
        })
    }

    /// `D ≡ 1`.
    pub fn ones(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![1.0; width * height], 1)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Zero for an analytic density.
    pub fn n_masks_averaged(&self) -> usize {
        self.n_masks_averaged
    }
}

impl Shaped for SamplingDensity {
    fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Isotropic polynomial variable-density design with a fully sampled
/// calibration block at the k-space center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VdMaskSpec {
    pub width: usize,
    pub height: usize,
    pub acceleration: f64,
    /// Side of the calibration square as a fraction of each dimension.
    pub calib_fraction: f64,
    pub density_power: f64,
}

impl VdMaskSpec {
    pub const DEFAULT_CALIB_FRACTION: f64 = 0.0625;
    pub const DEFAULT_DENSITY_POWER: f64 = 3.0;

    pub fn new(width: usize, height: usize, acceleration: f64) -> Self {
        Self {
            width,
            height,
            acceleration,
            calib_fraction: Self::DEFAULT_CALIB_FRACTION,
            density_power: Self::DEFAULT_DENSITY_POWER,
        }
    }

    fn validate(&self) -> Result<()> {
        check_shape(self.width, self.height)?;
        if !(self.acceleration.is_finite() && self.acceleration >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "acceleration must be >= 1, got {}",
                self.acceleration
            )));
        }
        if !(0.0..0.5).contains(&self.calib_fraction) {
            return Err(Error::InvalidParameter(format!(
                "calib_fraction must lie in [0, 0.5), got {}",
                self.calib_fraction
            )));
        }
        if !(self.density_power.is_finite() && self.density_power >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "density_power must be >= 0, got {}",
                self.density_power
            )));
        }
        Ok(())
    }

    /// Row and column ranges of the calibration block.
    pub fn calibration_block(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let side = |n: usize| (self.calib_fraction * n as f64).ceil() as usize;
        let (ch, cw) = (side(self.height), side(self.width));
        let r0 = self.height / 2 - ch / 2;
        let c0 = self.width / 2 - cw / 2;
        (r0..r0 + ch, c0..c0 + cw)
    }

    pub fn in_calibration(&self, index: usize) -> bool {
        let (rows, cols) = self.calibration_block();
        rows.contains(&(index / self.width)) && cols.contains(&(index % self.width))
    }

    /// Unnormalized profile `(1 − r/r_max)^p`, strictly positive everywhere.
    fn profile(&self) -> Vec<f64> {
        let (cr, cc) = ((self.height / 2) as f64, (self.width / 2) as f64);
        let (hr, hc) = (
            (self.height as f64 / 2.0).max(0.5),
            (self.width as f64 / 2.0).max(0.5),
        );
        let radius = |r: usize, c: usize| {
            let dr = (r as f64 - cr) / hr;
            let dc = (c as f64 - cc) / hc;
            (dr * dr + dc * dc).sqrt()
        };
        let mut max_r: f64 = 0.0;
        for r in 0..self.height {
            for c in 0..self.width {
                max_r = max_r.max(radius(r, c));
            }
        }
        // one grid step past the farthest location keeps the corner weight positive
        let r_max = max_r + 2.0 / self.width.min(self.height) as f64;
        let mut out = Vec::with_capacity(self.width * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                out.push((1.0 - radius(r, c) / r_max).powf(self.density_power));
            }
        }
        out
    }

    /// Analytic inclusion probabilities `p(k)`: one inside the calibration
    /// block, `min(1, s·profile)` elsewhere with `s` chosen so the expected
    /// sample count is `N / acceleration`.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let total = self.width * self.height;
        let target = total as f64 / self.acceleration;
        let calib: Vec<bool> = (0..total).map(|i| self.in_calibration(i)).collect();
        let n_calib = calib.iter().filter(|&&c| c).count();

        if self.acceleration == 1.0 {
            return Ok(vec![1.0; total]);
        }
        if target < n_calib as f64 {
            return Err(Error::InfeasibleAcceleration {
                acceleration: self.acceleration,
                expected_samples: target,
                calibration: n_calib,
            });
        }

        let profile = self.profile();
        let expected = |s: f64| -> f64 {
            n_calib as f64
                + profile
                    .iter()
                    .zip(&calib)
                    .filter(|(_, &c)| !c)
                    .map(|(&w, _)| (s * w).min(1.0))
                    .sum::<f64>()
        };
        let min_w = profile
            .iter()
            .zip(&calib)
            .filter(|(_, &c)| !c)
            .map(|(&w, _)| w)
            .fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi) = (0.0, if min_w.is_finite() { 1.0 / min_w } else { 1.0 });
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if expected(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        Ok(profile
            .iter()
            .zip(&calib)
            .map(|(&w, &c)| if c { 1.0 } else { (s * w).min(1.0) })
            .collect())
    }

    /// Independent Bernoulli draw per location. Draws whose realized
    /// acceleration falls outside the tolerance band are redrawn from a
    /// derived stream.
    pub fn draw(&self, seed: u64) -> Result<SamplingMask> {
        let probs = self.probabilities()?;
        self.draw_with(&probs, seed)
    }

    fn draw_with(&self, probs: &[f64], seed: u64) -> Result<SamplingMask> {
        let total = probs.len();
        for attempt in 0..MAX_DRAW_ATTEMPTS {
            let mut rng = rng::stream(seed, attempt);
            let pattern: Vec<bool> = probs
                .iter()
                .map(|&p| p >= 1.0 || rng.random::<f64>() < p)
                .collect();
            let sampled = pattern.iter().filter(|&&s| s).count();
            if sampled == 0 {
                continue;
            }
            let realized = total as f64 / sampled as f64;
            if (realized / self.acceleration - 1.0).abs() <= ACCELERATION_TOLERANCE {
                return SamplingMask::new(self.width, self.height, pattern, self.acceleration, seed);
            }
        }
        Err(Error::InvalidParameter(format!(
            "could not realize acceleration {} within ±{:.0}% on a {}x{} grid",
            self.acceleration,
            ACCELERATION_TOLERANCE * 100.0,
            self.width,
            self.height
        )))
    }

    /// Element-wise mean of `n_masks` independent draws, floored at `1/n_masks`.
    pub fn estimate_density(&self, n_masks: usize, seed: u64) -> Result<SamplingDensity> {
        if n_masks == 0 {
            return Err(Error::InvalidParameter("n_masks must be >= 1".into()));
        }
        let probs = self.probabilities()?;
        let mut counts = vec![0usize; probs.len()];
        for m in 0..n_masks {
            let mask = self.draw_with(&probs, rng::derive_seed(seed, m as u64))?;
            for (c, &s) in counts.iter_mut().zip(mask.pattern()) {
                *c += s as usize;
            }
        }
        let floor = 1.0 / n_masks as f64;
        let probabilities = counts
            .iter()
            .map(|&c| (c as f64 / n_masks as f64).max(floor))
            .collect();
        SamplingDensity::new(self.width, self.height, probabilities, n_masks)
    }

    /// The analytic `p(k)` as a density.
    pub fn analytic_density(&self) -> Result<SamplingDensity> {
        SamplingDensity::new(self.width, self.height, self.probabilities()?, 0)
    }
}

pub fn make_vd_mask(
    width: usize,
    height: usize,
    acceleration: f64,
    calib_fraction: f64,
    density_power: f64,
    seed: u64,
) -> Result<SamplingMask> {
    VdMaskSpec {
        width,
        height,
        acceleration,
        calib_fraction,
        density_power,
    }
    .draw(seed)
}

pub fn estimate_density(
    width: usize,
    height: usize,
    acceleration: f64,
    calib_fraction: f64,
    density_power: f64,
    n_masks: usize,
    seed: u64,
) -> Result<SamplingDensity> {
    VdMaskSpec {
        width,
        height,
        acceleration,
        calib_fraction,
        density_power,
    }
    .estimate_density(n_masks, seed)
}
