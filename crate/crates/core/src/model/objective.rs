//! Composite training objective over the weight-shared cascade
//! `x_b = DC(g(z_b))`, `z_b = μ(x_{b−1}) + σ(x_{b−1}) ⊙ ε_b`, and its exact
//! reverse-mode gradient.
//!
//! Per example the loss is
//! `‖x̂ − x₀‖²/n + η · mean_b KL_b + λ · (1 − 𝒟(x̂))²`, averaged over the batch.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dense::Batch;
use super::discriminator::{lsgan_terms, DiscriminatorParams, GanLosses};
use super::vae::{kl_terms, EncoderTrace, VaeParams};
use crate::error::{Error, Result};
use crate::image::{ensure_shape, ComplexImage, KSpace, Shaped};
use crate::kspace::SamplingMask;
use crate::recon::dc::{dc_coords, project_unsampled_coords};
use crate::rng;

/// One supervised pair plus the measurement used for data consistency.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub input: ComplexImage,
    pub target: ComplexImage,
    pub measurement: KSpace,
    pub mask: Arc<SamplingMask>,
}

impl TrainingExample {
    pub fn new(
        input: ComplexImage,
        target: ComplexImage,
        measurement: KSpace,
        mask: Arc<SamplingMask>,
    ) -> Result<Self> {
        ensure_shape(input.shape(), target.shape())?;
        ensure_shape(input.shape(), measurement.shape())?;
        ensure_shape(input.shape(), mask.shape())?;
        Ok(Self {
            input,
            target,
            measurement,
            mask,
        })
    }
}

/// Loss weights and cascade depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub eta: f64,
    pub lambda: f64,
    pub n_recurrent_blocks: usize,
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be >= 0, got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!(
                "lambda must lie in [0, 1), got {}",
                self.lambda
            )));
        }
        if self.n_recurrent_blocks == 0 {
            return Err(Error::InvalidParameter("n_recurrent_blocks must be >= 1".into()));
        }
        Ok(())
    }
}

/// Batch-averaged loss terms. `kl` and `adversarial` are unweighted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pixel: f64,
    pub kl: f64,
    pub adversarial: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(pixel: f64, kl: f64, adversarial: f64, objective: &Objective) -> Self {
        Self {
            pixel,
            kl,
            adversarial,
            total: pixel + objective.eta * kl + objective.lambda * adversarial,
        }
    }
}

/// Reparameterization noise `ε`, indexed `[example][block][latent]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentNoise(Vec<Vec<Vec<f64>>>);

impl LatentNoise {
    pub fn sample(seed: u64, batch: usize, n_blocks: usize, latent_dim: usize) -> Self {
        let mut r = rng::seeded(seed);
        Self(
            (0..batch)
                .map(|_| (0..n_blocks).map(|_| rng::normal_vec(&mut r, latent_dim)).collect())
                .collect(),
        )
    }

    /// `ε = 0`: every block uses its posterior mean.
    pub fn zeros(batch: usize, n_blocks: usize, latent_dim: usize) -> Self {
        Self(vec![vec![vec![0.0; latent_dim]; n_blocks]; batch])
    }

    pub fn example(&self, index: usize) -> &[Vec<f64>] {
        &self.0[index]
    }

    fn check(&self, batch: usize, n_blocks: usize, latent_dim: usize) -> Result<()> {
        let ok = self.0.len() == batch
            && self
                .0
                .iter()
                .all(|e| e.len() == n_blocks && e.iter().all(|v| v.len() == latent_dim));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidShape(format!(
                "latent noise must be {batch} x {n_blocks} x {latent_dim}"
            )))
        }
    }
}

struct BlockTrace {
    encoder: EncoderTrace,
    decoder: Vec<Batch>,
}

pub(crate) struct CascadeTrace {
    blocks: Vec<BlockTrace>,
    pub output: Batch,
}

impl CascadeTrace {
    /// KL of example `e` averaged over blocks.
    pub(crate) fn kl_mean(&self, e: usize) -> f64 {
        let total: f64 = self
            .blocks
            .iter()
            .map(|b| kl_terms(&b.encoder.mu[e], &b.encoder.logvar[e]))
            .sum();
        total / self.blocks.len() as f64
    }
}

/// Measurement and mask used by data consistency for one example.
pub(crate) type Consistency<'a> = (&'a KSpace, &'a SamplingMask);

/// Runs the cascade on a batch of split coordinates. `eps[e][b]` is the
/// noise of example `e` in block `b`; without `dc` decoder outputs pass on
/// unchanged.
pub(crate) fn cascade_forward(
    params: &VaeParams,
    inputs: Batch,
    dc: Option<&[Consistency<'_>]>,
    eps: &[&[Vec<f64>]],
) -> CascadeTrace {
    let n_blocks = eps.first().map_or(0, |e| e.len());
    let mut x = inputs;
    let mut blocks = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let encoder = params.encode_coords(&x);
        let zs: Batch = (0..x.len())
            .map(|e| reparameterize(&encoder.mu[e], &encoder.logvar[e], &eps[e][b]))
            .collect();
        let decoder = params.decode_coords(&zs);
        let out = decoder.last().unwrap();
        x = match dc {
            Some(dc) => out
                .iter()
                .zip(dc)
                .map(|(o, (y, mask))| dc_coords(o, y, mask))
                .collect(),
            None => out.clone(),
        };
        blocks.push(BlockTrace { encoder, decoder });
    }
    CascadeTrace { blocks, output: x }
}

fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(logvar)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

/// Backward through the cascade for output gradients `g`; `kl_weight`
/// multiplies every block's KL of every example.
fn cascade_backward(
    params: &VaeParams,
    trace: &CascadeTrace,
    masks: Option<&[&SamplingMask]>,
    eps: &[&[Vec<f64>]],
    mut g: Batch,
    kl_weight: f64,
    grads: &mut [f64],
) {
    for (b, block) in trace.blocks.iter().enumerate().rev() {
        let gd: Batch = match masks {
            Some(m) => g.iter().zip(m).map(|(g, m)| project_unsampled_coords(g, m)).collect(),
            None => g,
        };
        let gz = params.decode_backward(&block.decoder, gd, grads);
        let enc = &block.encoder;
        let mut dmu = Vec::with_capacity(gz.len());
        let mut dlv = Vec::with_capacity(gz.len());
        for (e, gz) in gz.iter().enumerate() {
            let (mu, lv, eps) = (&enc.mu[e], &enc.logvar[e], &eps[e][b]);
            dmu.push((0..gz.len()).map(|j| gz[j] + kl_weight * mu[j]).collect::<Vec<_>>());
            dlv.push(
                (0..gz.len())
                    .map(|j| {
                        let s = (0.5 * lv[j]).exp();
                        gz[j] * eps[j] * 0.5 * s + kl_weight * 0.5 * (lv[j].exp() - 1.0)
                    })
                    .collect::<Vec<_>>(),
            );
        }
        match params.encode_backward(enc, &dmu, &dlv, grads, b > 0) {
            Some(gx) => g = gx,
            None => return,
        }
    }
}

/// Loss and the reconstructions `x̂` as split coordinates.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub loss: LossBreakdown,
    pub outputs: Batch,
}

fn check_batch(params: &VaeParams, batch: &[TrainingExample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    for ex in batch {
        params.check_image(&ex.input)?;
    }
    Ok(())
}

pub(crate) fn evaluate(
    params: &VaeParams,
    disc: Option<&DiscriminatorParams>,
    batch: &[TrainingExample],
    objective: &Objective,
    noise: &LatentNoise,
    grads: Option<&mut [f64]>,
) -> Result<Evaluation> {
    let want_gradient = grads.is_some();
    objective.validate()?;
    check_batch(params, batch)?;
    let n_rb = objective.n_recurrent_blocks;
    noise.check(batch.len(), n_rb, params.arch().latent_dim)?;
    if objective.lambda > 0.0 && disc.is_none() {
        return Err(Error::InvalidParameter(
            "lambda > 0 requires a discriminator".into(),
        ));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let eps: Vec<&[Vec<f64>]> = (0..batch.len()).map(|e| noise.example(e)).collect();
    let dc: Vec<Consistency<'_>> = batch.iter().map(|ex| (&ex.measurement, &*ex.mask)).collect();
    let inputs: Batch = batch.iter().map(|ex| ex.input.to_real_vec()).collect();
    let trace = cascade_forward(params, inputs, Some(&dc), &eps);

    let mut pixel = 0.0;
    let mut g: Batch = Vec::with_capacity(batch.len());
    for (ex, out) in batch.iter().zip(&trace.output) {
        let n = ex.target.len() as f64;
        let diff: Vec<f64> = out.iter().zip(ex.target.to_real_vec()).map(|(a, b)| a - b).collect();
        pixel += diff.iter().map(|d| d * d).sum::<f64>() / n;
        g.push(diff.iter().map(|d| 2.0 * d / n * inv_b).collect());
    }
    let kl: f64 = (0..batch.len()).map(|e| trace.kl_mean(e)).sum();
    let mut adversarial = 0.0;
    if let Some(d) = disc {
        let acts = d.forward_coords(&trace.output);
        let scores = DiscriminatorParams::scores(&acts);
        adversarial = scores.iter().map(|s| (1.0 - s).powi(2)).sum();
        if want_gradient && objective.lambda > 0.0 {
            let scales: Vec<f64> = scores
                .iter()
                .map(|s| -2.0 * objective.lambda * (1.0 - s) * inv_b)
                .collect();
            let mut scratch = vec![0.0; d.len()];
            let gx = d
                .backward_coords(&acts, &scales, &mut scratch, true)
                .expect("discriminator input gradient");
            for (ge, gxe) in g.iter_mut().zip(gx) {
                for (a, b) in ge.iter_mut().zip(gxe) {
                    *a += b;
                }
            }
        }
    }
    let loss = LossBreakdown::new(pixel * inv_b, kl * inv_b, adversarial * inv_b, objective);
    if !loss.total.is_finite() {
        return Err(Error::NonFiniteLoss(format!(
            "pixel {}, kl {}, adversarial {}",
            loss.pixel, loss.kl, loss.adversarial
        )));
    }
    if let Some(grads) = grads {
        if grads.len() != params.len() {
            return Err(Error::InvalidShape(format!(
                "gradient buffer has {} entries, model {}",
                grads.len(),
                params.len()
            )));
        }
        grads.fill(0.0);
        let masks: Vec<&SamplingMask> = batch.iter().map(|ex| &*ex.mask).collect();
        let kl_weight = objective.eta * inv_b / n_rb as f64;
        cascade_backward(params, &trace, Some(&masks), &eps, g, kl_weight, grads);
        if let Some(i) = grads.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss(format!(
                "gradient entry {i} is not finite at loss {}",
                loss.total
            )));
        }
    }
    Ok(Evaluation {
        loss,
        outputs: trace.output,
    })
}

/// Batch loss with its per-term breakdown.
pub fn vae_loss(
    params: &VaeParams,
    disc: Option<&DiscriminatorParams>,
    batch: &[TrainingExample],
    objective: &Objective,
    noise: &LatentNoise,
) -> Result<LossBreakdown> {
    Ok(evaluate(params, disc, batch, objective, noise, None)?.loss)
}

/// Exact gradient of [`vae_loss`] with respect to every VAE parameter.
pub fn gradients(
    params: &VaeParams,
    disc: Option<&DiscriminatorParams>,
    batch: &[TrainingExample],
    objective: &Objective,
    noise: &LatentNoise,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let mut grads = vec![0.0; params.len()];
    let ev = evaluate(params, disc, batch, objective, noise, Some(&mut grads))?;
    Ok((ev.loss, grads))
}

/// Adversarial terms for the reconstructions of `batch`.
pub fn gan_losses(
    params: &VaeParams,
    disc: &DiscriminatorParams,
    batch: &[TrainingExample],
    objective: &Objective,
    noise: &LatentNoise,
) -> Result<GanLosses> {
    let ev = evaluate(params, Some(disc), batch, objective, noise, None)?;
    let real: Batch = batch.iter().map(|ex| ex.target.to_real_vec()).collect();
    let d_real = DiscriminatorParams::scores(&disc.forward_coords(&real));
    let d_fake = DiscriminatorParams::scores(&disc.forward_coords(&ev.outputs));
    lsgan_terms(&d_real, &d_fake)
}

/// Discriminator objective on the reconstructions of `batch` and its
/// gradient with respect to every discriminator parameter.
pub fn discriminator_gradients(
    params: &VaeParams,
    disc: &DiscriminatorParams,
    batch: &[TrainingExample],
    objective: &Objective,
    noise: &LatentNoise,
) -> Result<(GanLosses, Vec<f64>)> {
    let ev = evaluate(params, Some(disc), batch, objective, noise, None)?;
    let real: Batch = batch.iter().map(|ex| ex.target.to_real_vec()).collect();
    discriminator_gradients_coords(disc, &real, &ev.outputs)
}

/// Discriminator objective `mean (1 − 𝒟(x₀))² + mean 𝒟(x̂)²` and its
/// gradient; inputs are split coordinates.
pub(crate) fn discriminator_gradients_coords(
    disc: &DiscriminatorParams,
    real: &[Vec<f64>],
    fake: &[Vec<f64>],
) -> Result<(GanLosses, Vec<f64>)> {
    let mut grads = vec![0.0; disc.len()];
    let real_acts = disc.forward_coords(real);
    let d_real = DiscriminatorParams::scores(&real_acts);
    let scales: Vec<f64> = d_real.iter().map(|s| -2.0 * (1.0 - s) / real.len() as f64).collect();
    disc.backward_coords(&real_acts, &scales, &mut grads, false);
    let fake_acts = disc.forward_coords(fake);
    let d_fake = DiscriminatorParams::scores(&fake_acts);
    let scales: Vec<f64> = d_fake.iter().map(|s| 2.0 * s / fake.len() as f64).collect();
    disc.backward_coords(&fake_acts, &scales, &mut grads, false);
    let losses = lsgan_terms(&d_real, &d_fake)?;
    if !losses.discriminator.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss(format!(
            "discriminator loss {}",
            losses.discriminator
        )));
    }
    Ok((losses, grads))
}
