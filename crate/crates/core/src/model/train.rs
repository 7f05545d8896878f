//! Deterministic mini-batch training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::discriminator::{DiscriminatorArch, DiscriminatorParams};
use super::objective::{discriminator_gradients_coords, evaluate, LatentNoise, Objective, TrainingExample};
use super::vae::{VaeArch, VaeParams};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub eta: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub n_iterations: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub n_recurrent_blocks: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            eta: 1e-5,
            lambda: 0.0,
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 16,
            n_iterations: 2000,
            latent_dim: 64,
            encoder_hidden: vec![256, 128],
            decoder_hidden: vec![128, 256],
            discriminator_hidden: vec![64, 32],
            n_recurrent_blocks: 1,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn objective(&self) -> Objective {
        Objective {
            eta: self.eta,
            lambda: self.lambda,
            n_recurrent_blocks: self.n_recurrent_blocks,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn vae_arch(&self, width: usize, height: usize) -> Result<VaeArch> {
        VaeArch::new(
            width,
            height,
            self.encoder_hidden.clone(),
            self.latent_dim,
            self.decoder_hidden.clone(),
        )
    }

    pub fn discriminator_arch(&self, width: usize, height: usize) -> DiscriminatorArch {
        DiscriminatorArch {
            width,
            height,
            hidden: self.discriminator_hidden.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective().validate()?;
        self.adam().validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidParameter("latent_dim must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub pixel: f64,
    pub kl: f64,
    pub adversarial: f64,
    pub total: f64,
    /// Discriminator objective before its update; absent when λ = 0.
    pub discriminator: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub vae: VaeParams,
    pub discriminator: Option<DiscriminatorParams>,
    pub curve: Vec<IterationLog>,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Invalid(#[from] Error),
    /// Training hit a non-finite loss or update; `last_finite` holds the
    /// parameters from before the failing iteration.
    #[error("training diverged at iteration {iteration}: {message}")]
    Diverged {
        iteration: usize,
        message: String,
        last_finite: Box<Trained>,
    },
}

pub fn train(examples: &[TrainingExample], config: &TrainingConfig) -> std::result::Result<Trained, TrainError> {
    train_with_progress(examples, config, |_| {})
}

/// [`train`] with a callback after every iteration.
pub fn train_with_progress(
    examples: &[TrainingExample],
    config: &TrainingConfig,
    mut on_iteration: impl FnMut(&IterationLog),
) -> std::result::Result<Trained, TrainError> {
    config.validate()?;
    let first = examples
        .first()
        .ok_or_else(|| Error::InvalidParameter("training set is empty".into()))?;
    let (w, h) = first.input.shape();
    let mut vae = VaeParams::init(config.vae_arch(w, h)?, rng::derive_seed(config.seed, 1))?;
    let mut disc = if config.lambda > 0.0 {
        Some(DiscriminatorParams::init(
            config.discriminator_arch(w, h),
            rng::derive_seed(config.seed, 2),
        )?)
    } else {
        None
    };
    let objective = config.objective();
    let adam = config.adam();
    let mut vae_state = AdamState::new(vae.len());
    let mut disc_state = disc.as_ref().map(|d| AdamState::new(d.len()));
    let mut order_rng = rng::seeded(rng::derive_seed(config.seed, 3));
    let mut order: Vec<usize> = Vec::new();
    let mut curve = Vec::with_capacity(config.n_iterations);
    let mut grads = vec![0.0; vae.len()];
    let mut previous = vae.values().to_vec();

    let snapshot = |vae: &VaeParams, disc: &Option<DiscriminatorParams>, curve: &Vec<IterationLog>| {
        Box::new(Trained {
            vae: vae.clone(),
            discriminator: disc.clone(),
            curve: curve.clone(),
        })
    };

    for iteration in 0..config.n_iterations {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size {
            if order.is_empty() {
                order = (0..examples.len()).collect();
                order.shuffle(&mut order_rng);
            }
            batch.push(examples[order.pop().unwrap()].clone());
        }
        let noise = LatentNoise::sample(
            rng::derive_seed(rng::derive_seed(config.seed, 4), iteration as u64),
            batch.len(),
            config.n_recurrent_blocks,
            config.latent_dim,
        );
        let ev = match evaluate(&vae, disc.as_ref(), &batch, &objective, &noise, Some(&mut grads)) {
            Ok(ev) => ev,
            Err(Error::NonFiniteLoss(message)) => {
                return Err(TrainError::Diverged {
                    iteration,
                    message,
                    last_finite: snapshot(&vae, &disc, &curve),
                })
            }
            Err(e) => return Err(e.into()),
        };
        previous.copy_from_slice(vae.values());
        adam_step(vae.values_mut(), &grads, &mut vae_state, &adam)?;
        if vae.values().iter().any(|v| !v.is_finite()) {
            vae.values_mut().copy_from_slice(&previous);
            return Err(TrainError::Diverged {
                iteration,
                message: "parameter update produced non-finite values".into(),
                last_finite: snapshot(&vae, &disc, &curve),
            });
        }
        let mut disc_loss = None;
        if let (Some(d), Some(state)) = (disc.as_mut(), disc_state.as_mut()) {
            let real: Vec<Vec<f64>> = batch.iter().map(|e| e.target.to_real_vec()).collect();
            match discriminator_gradients_coords(d, &real, &ev.outputs) {
                Ok((losses, g)) => {
                    adam_step(d.values_mut(), &g, state, &adam)?;
                    disc_loss = Some(losses.discriminator);
                }
                Err(Error::NonFiniteLoss(message)) => {
                    vae.values_mut().copy_from_slice(&previous);
                    return Err(TrainError::Diverged {
                        iteration,
                        message,
                        last_finite: snapshot(&vae, &disc, &curve),
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
        let log = IterationLog {
            iteration,
            pixel: ev.loss.pixel,
            kl: ev.loss.kl,
            adversarial: ev.loss.adversarial,
            total: ev.loss.total,
            discriminator: disc_loss,
        };
        on_iteration(&log);
        curve.push(log);
    }
    Ok(Trained {
        vae,
        discriminator: disc,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ComplexImage;
    use crate::kspace::{undersample, zero_fill, VdMaskSpec};
    use num_complex::Complex64;
    use std::sync::Arc;

    fn toy_set(n: usize) -> Vec<TrainingExample> {
        let mask = Arc::new(VdMaskSpec::new(8, 8, 2.0).draw(1).unwrap());
        (0..n)
            .map(|i| {
                let x0 = ComplexImage::from_fn(8, 8, |r, c| {
                    let d = (r as f64 - 3.5).hypot(c as f64 - 3.5);
                    Complex64::new(if d < 2.5 + i as f64 * 0.3 { 1.0 } else { 0.1 }, 0.0)
                })
                .unwrap();
                let y = undersample(&x0, &mask, 0.0, 0).unwrap();
                TrainingExample::new(zero_fill(&y, &mask).unwrap(), x0, y, mask.clone()).unwrap()
            })
            .collect()
    }

    fn toy_config() -> TrainingConfig {
        TrainingConfig {
            eta: 0.0,
            learning_rate: 1e-3,
            batch_size: 1,
            n_iterations: 500,
            latent_dim: 4,
            encoder_hidden: vec![32],
            decoder_hidden: vec![32],
            discriminator_hidden: vec![16, 8],
            seed: 7,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn single_image_loss_halves() {
        let t = train(&toy_set(1), &toy_config()).unwrap();
        let first = t.curve[0].total;
        let last = t.curve.last().unwrap().total;
        assert!(last <= 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn same_seed_same_curve() {
        let cfg = TrainingConfig {
            n_iterations: 40,
            lambda: 0.1,
            eta: 0.01,
            batch_size: 2,
            ..toy_config()
        };
        let a = train(&toy_set(3), &cfg).unwrap();
        let b = train(&toy_set(3), &cfg).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.vae, b.vae);
        assert!(a.curve.iter().all(|l| l.discriminator.is_some()));
    }

    #[test]
    fn large_eta_trades_reconstruction_for_kl() {
        let data = toy_set(4);
        let run = |eta| {
            let cfg = TrainingConfig {
                eta,
                n_iterations: 400,
                batch_size: 2,
                ..toy_config()
            };
            let t = train(&data, &cfg).unwrap();
            let tail = &t.curve[t.curve.len() - 50..];
            let mean = |f: fn(&IterationLog) -> f64| tail.iter().map(f).sum::<f64>() / 50.0;
            (mean(|l| l.kl), mean(|l| l.pixel))
        };
        let (kl_big, pixel_big) = run(1e3);
        let (kl_small, pixel_small) = run(0.0);
        assert!(kl_big < 1e-2, "kl {kl_big}");
        assert!(kl_big < kl_small);
        assert!(pixel_big > pixel_small, "{pixel_big} vs {pixel_small}");
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = TrainingConfig {
            lambda: 1.0,
            ..toy_config()
        };
        assert!(matches!(train(&toy_set(1), &cfg), Err(TrainError::Invalid(_))));
        assert!(matches!(train(&[], &toy_config()), Err(TrainError::Invalid(_))));
    }

    #[test]
    fn divergence_returns_last_finite_state() {
        let cfg = TrainingConfig {
            learning_rate: 1e150,
            n_iterations: 50,
            eta: 1.0,
            ..toy_config()
        };
        match train(&toy_set(2), &cfg) {
            Err(TrainError::Diverged { last_finite, .. }) => {
                assert!(last_finite.vae.values().iter().all(|v| v.is_finite()));
            }
            other => panic!("expected divergence, got {:?}", other.map(|t| t.curve.len())),
        }
    }
}
