//! Acquisition setup shared by training, reconstruction and risk
//! estimation: one fixed mask, its estimated density, and the network input
//! formed from each measurement.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::{ComplexImage, KSpace};
use crate::kspace::{density_compensate, undersample, zero_fill, SamplingDensity, SamplingMask, VdMaskSpec};
use crate::model::{TrainingExample, VaeParams};
use crate::recon::{MeasurementSource, VaeReconstructor};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    /// `F⁻¹(Ω y)`
    ZeroFilled,
    /// `F⁻¹(D⁻¹ Ω y)`
    DensityCompensated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub acceleration: f64,
    pub calib_fraction: f64,
    pub density_power: f64,
    /// Per-component standard deviation of the k-space noise.
    pub noise_std: f64,
    pub mask_seed: u64,
    /// Masks averaged for the sampling density.
    pub density_masks: usize,
    pub input_mode: InputMode,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            acceleration: 4.0,
            calib_fraction: 0.0625,
            density_power: 3.0,
            noise_std: 0.01,
            mask_seed: 0,
            density_masks: 100,
            input_mode: InputMode::DensityCompensated,
        }
    }
}

/// One measured case.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub y: KSpace,
    pub zero_filled: ComplexImage,
    pub compensated: ComplexImage,
}

#[derive(Debug, Clone)]
pub struct Acquisition {
    config: AcquisitionConfig,
    mask: Arc<SamplingMask>,
    density: Arc<SamplingDensity>,
}

impl Acquisition {
    pub fn new(config: AcquisitionConfig, width: usize, height: usize) -> Result<Self> {
        let spec = VdMaskSpec {
            width,
            height,
            acceleration: config.acceleration,
            calib_fraction: config.calib_fraction,
            density_power: config.density_power,
        };
        let mask = spec.draw(config.mask_seed)?;
        let density = spec.estimate_density(
            config.density_masks,
            rng::derive_seed(config.mask_seed, 0xde45),
        )?;
        Ok(Self {
            config,
            mask: Arc::new(mask),
            density: Arc::new(density),
        })
    }

    pub fn config(&self) -> &AcquisitionConfig {
        &self.config
    }

    pub fn mask(&self) -> &Arc<SamplingMask> {
        &self.mask
    }

    pub fn density(&self) -> &Arc<SamplingDensity> {
        &self.density
    }

    pub fn measure(&self, x0: &ComplexImage, noise_seed: u64) -> Result<Measurement> {
        let y = undersample(x0, &self.mask, self.config.noise_std, noise_seed)?;
        Ok(Measurement {
            zero_filled: zero_fill(&y, &self.mask)?,
            compensated: density_compensate(&y, &self.mask, &self.density)?,
            y,
        })
    }

    /// Network input for `m` under the configured mode.
    pub fn input<'a>(&self, m: &'a Measurement) -> &'a ComplexImage {
        match self.config.input_mode {
            InputMode::ZeroFilled => &m.zero_filled,
            InputMode::DensityCompensated => &m.compensated,
        }
    }

    /// Measurement for image `i` uses noise seed `derive_seed(seed, i)`.
    pub fn measure_all(&self, images: &[ComplexImage], seed: u64) -> Result<Vec<Measurement>> {
        images
            .iter()
            .enumerate()
            .map(|(i, x)| self.measure(x, rng::derive_seed(seed, i as u64)))
            .collect()
    }

    pub fn training_examples(&self, images: &[ComplexImage], seed: u64) -> Result<Vec<TrainingExample>> {
        images
            .iter()
            .zip(self.measure_all(images, seed)?)
            .map(|(x0, m)| {
                TrainingExample::new(self.input(&m).clone(), x0.clone(), m.y, self.mask.clone())
            })
            .collect()
    }

    /// Posterior-mean cascade whose data consistency recovers `y` from its
    /// input, so it is a function of the input alone.
    pub fn reconstructor(&self, params: Arc<VaeParams>, n_recurrent_blocks: usize) -> Result<VaeReconstructor> {
        let density = match self.config.input_mode {
            InputMode::ZeroFilled => None,
            InputMode::DensityCompensated => Some(self.density.clone()),
        };
        VaeReconstructor::new(
            params,
            n_recurrent_blocks,
            self.mask.clone(),
            MeasurementSource::FromInput(density),
        )
    }
}
