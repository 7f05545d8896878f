//! Compact variational autoencoder, least-squares discriminator, exact
//! gradients of the composite objective, and training.

mod adam;
pub mod checkpoint;
pub(crate) mod dense;
mod discriminator;
pub(crate) mod objective;
mod train;
mod vae;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::DenseShape;
pub use discriminator::{discriminate, lsgan_terms, DiscriminatorArch, DiscriminatorParams, GanLosses};
pub use objective::{
    discriminator_gradients, gan_losses, gradients, vae_loss, LatentNoise, LossBreakdown, Objective,
    TrainingExample,
};
pub use train::{train, train_with_progress, IterationLog, TrainError, Trained, TrainingConfig};
pub use vae::{decode, encode, kl_gaussian, sample_latent, LatentStats, VaeArch, VaeParams};
