//! Dense variational autoencoder: encoder `f` (trunk plus μ and log σ² heads)
//! and decoder `g` mapping a latent code back to a complex image.

use serde::{Deserialize, Serialize};

use super::dense::{self, Batch, DenseShape, Layout};
use crate::error::{Error, Result};
use crate::image::ComplexImage;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaeArch {
    pub width: usize,
    pub height: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub decoder_hidden: Vec<usize>,
}

impl VaeArch {
    pub fn new(
        width: usize,
        height: usize,
        encoder_hidden: Vec<usize>,
        latent_dim: usize,
        decoder_hidden: Vec<usize>,
    ) -> Result<Self> {
        let arch = Self {
            width,
            height,
            encoder_hidden,
            latent_dim,
            decoder_hidden,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// 256/128 encoder, mirrored decoder, 64-dimensional latent.
    pub fn standard(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            encoder_hidden: vec![256, 128],
            latent_dim: 64,
            decoder_hidden: vec![128, 256],
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::image::check_shape(self.width, self.height)?;
        if self.latent_dim == 0 {
            return Err(Error::InvalidParameter("latent_dim must be >= 1".into()));
        }
        if self
            .encoder_hidden
            .iter()
            .chain(&self.decoder_hidden)
            .any(|&w| w == 0)
        {
            return Err(Error::InvalidParameter("hidden widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Real coordinates per image (split real/imaginary).
    pub fn io_dim(&self) -> usize {
        2 * self.width * self.height
    }

    /// Layer shapes in declaration order: encoder trunk, μ head, log σ² head,
    /// decoder.
    pub fn layer_shapes(&self) -> Vec<DenseShape> {
        let mut shapes = Vec::new();
        let mut prev = self.io_dim();
        for &h in &self.encoder_hidden {
            shapes.push(DenseShape::new(prev, h));
            prev = h;
        }
        shapes.push(DenseShape::new(prev, self.latent_dim));
        shapes.push(DenseShape::new(prev, self.latent_dim));
        let mut prev = self.latent_dim;
        for &h in &self.decoder_hidden {
            shapes.push(DenseShape::new(prev, h));
            prev = h;
        }
        shapes.push(DenseShape::new(prev, self.io_dim()));
        shapes
    }

    pub(crate) fn trunk(&self) -> std::ops::Range<usize> {
        0..self.encoder_hidden.len()
    }

    pub(crate) fn mu_head(&self) -> usize {
        self.encoder_hidden.len()
    }

    pub(crate) fn logvar_head(&self) -> usize {
        self.encoder_hidden.len() + 1
    }

    pub(crate) fn decoder(&self) -> std::ops::Range<usize> {
        let start = self.encoder_hidden.len() + 2;
        start..start + self.decoder_hidden.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    arch: VaeArch,
    layout: Layout,
    values: Vec<f64>,
}

const OUTPUT_GAIN: f64 = 1e-4;

impl VaeParams {
    /// He-initialized hidden layers and unit-gain heads. The output layer
    /// starts near zero so the first cascade output is close to the
    /// zero-filled image after data consistency.
    pub fn init(arch: VaeArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch.layer_shapes());
        let gains: Vec<f64> = (0..layout.shapes.len())
            .map(|l| {
                let is_hidden = arch.trunk().contains(&l)
                    || (arch.decoder().contains(&l) && l + 1 != arch.decoder().end);
                if is_hidden {
                    2.0
                } else if l + 1 == arch.decoder().end {
                    OUTPUT_GAIN
                } else {
                    1.0
                }
            })
            .collect();
        let values = layout.init(&mut rng::seeded(seed), &gains);
        Ok(Self {
            arch,
            layout,
            values,
        })
    }

    pub fn zeros(arch: VaeArch) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch.layer_shapes());
        let values = vec![0.0; layout.total];
        Ok(Self {
            arch,
            layout,
            values,
        })
    }

    pub fn from_values(arch: VaeArch, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch.layer_shapes());
        if values.len() != layout.total {
            return Err(Error::InvalidShape(format!(
                "architecture needs {} parameters, got {}",
                layout.total,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("VAE parameters"));
        }
        Ok(Self {
            arch,
            layout,
            values,
        })
    }

    pub fn arch(&self) -> &VaeArch {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layer_shapes(&self) -> &[DenseShape] {
        &self.layout.shapes
    }

    /// `(weights, biases)` of layer `index` in declaration order.
    pub fn layer(&self, index: usize) -> (&[f64], &[f64]) {
        self.layout.split(&self.values, index)
    }

    pub fn layer_mut(&mut self, index: usize) -> (&mut [f64], &mut [f64]) {
        self.layout.split_mut(&mut self.values, index)
    }

    pub(crate) fn check_image(&self, x: &ComplexImage) -> Result<()> {
        crate::image::ensure_shape((self.arch.width, self.arch.height), x.shape())
    }

    pub(crate) fn encode_coords(&self, xs: &[Vec<f64>]) -> EncoderTrace {
        let arch = &self.arch;
        let trunk = dense::mlp_forward(&self.layout, arch.trunk(), &self.values, xs, true);
        let h = trunk.last().unwrap();
        let (wm, bm) = self.layout.split(&self.values, arch.mu_head());
        let (wl, bl) = self.layout.split(&self.values, arch.logvar_head());
        let mu = dense::forward(self.layout.shapes[arch.mu_head()], wm, bm, h);
        let logvar = dense::forward(self.layout.shapes[arch.logvar_head()], wl, bl, h);
        EncoderTrace { trunk, mu, logvar }
    }

    pub(crate) fn decode_coords(&self, zs: &[Vec<f64>]) -> Vec<Batch> {
        dense::mlp_forward(&self.layout, self.arch.decoder(), &self.values, zs, false)
    }

    /// Accumulates encoder gradients for upstream `(∂L/∂μ, ∂L/∂log σ²)`;
    /// returns `∂L/∂input` when requested.
    pub(crate) fn encode_backward(
        &self,
        trace: &EncoderTrace,
        dmu: &[Vec<f64>],
        dlogvar: &[Vec<f64>],
        grads: &mut [f64],
        want_dx: bool,
    ) -> Option<Batch> {
        let arch = &self.arch;
        let h = trace.trunk.last().unwrap();
        let mut dh: Batch = h.iter().map(|v| vec![0.0; v.len()]).collect();
        for (head, d) in [(arch.mu_head(), dmu), (arch.logvar_head(), dlogvar)] {
            let (w, _) = self.layout.split(&self.values, head);
            let (gw, gb) = self.layout.split_mut(grads, head);
            let dx = dense::backward(self.layout.shapes[head], w, h, d, gw, gb, true).unwrap();
            for (acc, part) in dh.iter_mut().zip(dx) {
                for (a, b) in acc.iter_mut().zip(part) {
                    *a += b;
                }
            }
        }
        if arch.trunk().is_empty() {
            return want_dx.then_some(dh);
        }
        for (g, a) in dh.iter_mut().zip(h) {
            dense::relu_backward(a, g);
        }
        dense::mlp_backward(
            &self.layout,
            arch.trunk(),
            &self.values,
            &trace.trunk,
            dh,
            grads,
            want_dx,
        )
    }

    pub(crate) fn decode_backward(&self, acts: &[Batch], dout: Batch, grads: &mut [f64]) -> Batch {
        dense::mlp_backward(
            &self.layout,
            self.arch.decoder(),
            &self.values,
            acts,
            dout,
            grads,
            true,
        )
        .expect("decoder input gradient")
    }
}

/// Encoder activations for a batch, indexed `[layer][example]` and
/// `[example][latent]`.
pub(crate) struct EncoderTrace {
    pub trunk: Vec<Batch>,
    pub mu: Batch,
    pub logvar: Batch,
}

/// Diagonal Gaussian posterior `N(μ, σ²)`, stored as `(μ, log σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentStats {
    mu: Vec<f64>,
    logvar: Vec<f64>,
}

impl LatentStats {
    pub fn from_logvar(mu: Vec<f64>, logvar: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || mu.len() != logvar.len() {
            return Err(Error::InvalidShape(format!(
                "latent mean has {} entries, log-variance {}",
                mu.len(),
                logvar.len()
            )));
        }
        if !mu.iter().all(|v| v.is_finite()) || logvar.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("latent statistics"));
        }
        Ok(Self { mu, logvar })
    }

    /// `sigma = 0` is accepted and describes a point mass.
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be finite and >= 0, got {s}"
            )));
        }
        let logvar = sigma.iter().map(|s| 2.0 * s.ln()).collect();
        Self::from_logvar(mu, logvar)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn logvar(&self) -> &[f64] {
        &self.logvar
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.logvar.iter().map(|lv| (0.5 * lv).exp()).collect()
    }

    /// `z = μ + σ ⊙ ε`
    pub fn reparameterize(&self, eps: &[f64]) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.logvar)
            .zip(eps)
            .map(|((m, lv), e)| {
                let s = (0.5 * lv).exp();
                if s == 0.0 {
                    *m
                } else {
                    m + s * e
                }
            })
            .collect()
    }
}

/// Posterior statistics `(μ, σ) = f(x)`.
pub fn encode(params: &VaeParams, x: &ComplexImage) -> Result<LatentStats> {
    params.check_image(x)?;
    let mut trace = params.encode_coords(&[x.to_real_vec()]);
    LatentStats::from_logvar(trace.mu.remove(0), trace.logvar.remove(0))
}

/// `z ~ N(μ, σ²)` from a seeded stream.
pub fn sample_latent(stats: &LatentStats, seed: u64) -> Vec<f64> {
    let eps = rng::normal_vec(&mut rng::seeded(seed), stats.dim());
    stats.reparameterize(&eps)
}

/// `x̂ = g(z)`, output channels read as real then imaginary parts.
pub fn decode(params: &VaeParams, z: &[f64]) -> Result<ComplexImage> {
    if z.len() != params.arch.latent_dim {
        return Err(Error::InvalidShape(format!(
            "latent code has {} entries, architecture expects {}",
            z.len(),
            params.arch.latent_dim
        )));
    }
    let acts = params.decode_coords(&[z.to_vec()]);
    let out = &acts.last().unwrap()[0];
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("decoder output"));
    }
    ComplexImage::from_real_vec(params.arch.width, params.arch.height, out)
}

/// `KL(N(μ, σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − log σ² − 1)`
pub fn kl_gaussian(stats: &LatentStats) -> f64 {
    kl_terms(&stats.mu, &stats.logvar)
}

pub(crate) fn kl_terms(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}
