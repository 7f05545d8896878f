//! Resolved run configuration: flags override the JSON file, which overrides
//! defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use mri_uq::data::{DatasetConfig, SplitRatios};
use mri_uq::model::TrainingConfig;
use mri_uq::pipeline::{AcquisitionConfig, InputMode};
use mri_uq::uq::DEFAULT_N_PROBES;
use serde::{Deserialize, Serialize};

use crate::exit::Failure;

pub const CONFIG_ECHO: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub accel: f64,
    pub lambda: f64,
    pub eta: f64,
    pub rb: usize,
    /// Monte Carlo samples per map.
    pub k: usize,
    pub probes: usize,
    pub epsilon: Option<f64>,
    pub noise_std: f64,
    pub input_mode: InputMode,
    pub n_images: usize,
    pub image_size: usize,
    pub split_ratios: SplitRatios,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Test cases evaluated; all when absent.
    pub cases: Option<usize>,
    /// Test image used by `map`.
    pub index: usize,
    /// Accelerations swept by `qq`, and by `sure` when `sweep` is set.
    pub accelerations: Vec<f64>,
    pub sweep: bool,
    /// Replace the trained model with the identity map.
    pub identity: bool,
    /// Collapse the latent posterior to its mean in `map`.
    pub sigma_zero: bool,
    pub quantiles: usize,
    pub histogram_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let acq = AcquisitionConfig::default();
        let train = TrainingConfig::default();
        let data = DatasetConfig::standard(0);
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            manifest: None,
            checkpoint: None,
            accel: acq.acceleration,
            lambda: train.lambda,
            eta: train.eta,
            rb: train.n_recurrent_blocks,
            k: 1000,
            probes: DEFAULT_N_PROBES,
            epsilon: None,
            noise_std: acq.noise_std,
            input_mode: acq.input_mode,
            n_images: data.n_images,
            image_size: data.phantom.width,
            split_ratios: data.split_ratios,
            iterations: train.n_iterations,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            cases: None,
            index: 0,
            accelerations: vec![2.0, 4.0, 8.0, 16.0],
            sweep: false,
            identity: false,
            sigma_zero: false,
            quantiles: 41,
            histogram_bins: 41,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON file with any subset of the run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dataset manifest.json.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// VAE checkpoint written by `train`.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub accel: Option<f64>,
    /// Adversarial weight.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// KL weight.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Recurrent blocks.
    #[arg(long, global = true)]
    pub rb: Option<usize>,
    /// Monte Carlo samples per map.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Trace probes per SURE evaluation.
    #[arg(long, global = true)]
    pub probes: Option<usize>,
    /// Finite-difference step for the trace probes.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub n_images: Option<usize>,
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Number of test cases to evaluate.
    #[arg(long, global = true)]
    pub cases: Option<usize>,
    /// Test image for `map`.
    #[arg(long, global = true)]
    pub index: Option<usize>,
    /// Train/val/test ratios, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    /// Evaluate `sure` at every configured acceleration.
    #[arg(long, global = true)]
    pub sweep: bool,
    /// Use the identity map instead of a trained model.
    #[arg(long, global = true)]
    pub identity: bool,
    /// Draw map samples at the posterior mean.
    #[arg(long, global = true)]
    pub sigma_zero: bool,
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> Result<Self, Failure> {
        let mut c = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &flags.$field {
                    c.$field = v.clone().into();
                })*
            };
        }
        take!(seed, out, manifest, checkpoint, accel, lambda, eta, rb, k, probes, epsilon, n_images, iterations, cases, index);
        if let Some(r) = &flags.ratios {
            if r.len() != 3 {
                return Err(Failure::usage(format!("--ratios takes 3 values, got {}", r.len())));
            }
            c.split_ratios = SplitRatios {
                train: r[0],
                val: r[1],
                test: r[2],
            };
        }
        c.sweep |= flags.sweep;
        c.identity |= flags.identity;
        c.sigma_zero |= flags.sigma_zero;
        Ok(c)
    }

    pub fn dataset(&self) -> DatasetConfig {
        let mut d = DatasetConfig::standard(self.seed);
        d.n_images = self.n_images;
        d.phantom.width = self.image_size;
        d.phantom.height = self.image_size;
        d.split_ratios = self.split_ratios;
        d
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            eta: self.eta,
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            n_iterations: self.iterations,
            n_recurrent_blocks: self.rb,
            seed: self.seed,
            ..Default::default()
        }
    }

    pub fn acquisition(&self, accel: f64) -> AcquisitionConfig {
        AcquisitionConfig {
            acceleration: accel,
            noise_std: self.noise_std,
            input_mode: self.input_mode,
            ..Default::default()
        }
    }

    pub fn require_manifest(&self) -> Result<&Path, Failure> {
        require_file(self.manifest.as_deref(), "--manifest")
    }

    pub fn require_checkpoint(&self) -> Result<Option<&Path>, Failure> {
        if self.identity {
            return Ok(None);
        }
        require_file(self.checkpoint.as_deref(), "--checkpoint").map(Some)
    }

    /// Checks the numeric preconditions shared by the subcommands.
    pub fn validate(&self) -> Result<(), Failure> {
        let mut bad = Vec::new();
        if !(self.accel >= 1.0 && self.accel.is_finite()) {
            bad.push(format!("accel must be >= 1, got {}", self.accel));
        }
        if self.accelerations.iter().any(|a| !(*a >= 1.0 && a.is_finite())) {
            bad.push("accelerations must all be >= 1".into());
        }
        if self.rb == 0 {
            bad.push("rb must be >= 1".into());
        }
        if self.probes == 0 {
            bad.push("probes must be >= 1".into());
        }
        if self.epsilon.is_some_and(|e| !(e > 0.0 && e.is_finite())) {
            bad.push("epsilon must be positive".into());
        }
        if !(self.lambda >= 0.0 && self.eta >= 0.0) {
            bad.push("lambda and eta must be non-negative".into());
        }
        if self.cases == Some(0) {
            bad.push("cases must be >= 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Failure::usage(bad.join("; ")))
        }
    }
}

fn require_file<'a>(path: Option<&'a Path>, flag: &str) -> Result<&'a Path, Failure> {
    let path = path.ok_or_else(|| Failure::usage(format!("{flag} is required")))?;
    if !path.is_file() {
        return Err(Failure::usage(format!("{flag} {} does not exist", path.display())));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"seed": 5, "k": 20, "rb": 3}"#).unwrap();
        let flags = Flags {
            config: Some(file),
            k: Some(7),
            ..Default::default()
        };
        let c = RunConfig::resolve(&flags).unwrap();
        assert_eq!((c.seed, c.k, c.rb), (5, 7, 3));
        assert_eq!(c.probes, DEFAULT_N_PROBES);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"sede": 5}"#).unwrap();
        let flags = Flags {
            config: Some(file),
            ..Default::default()
        };
        assert_eq!(RunConfig::resolve(&flags).unwrap_err().code, 2);
    }

    #[test]
    fn config_round_trips() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
