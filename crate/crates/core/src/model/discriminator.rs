//! Dense least-squares discriminator `𝒟: image → ℝ`.

use serde::{Deserialize, Serialize};

use super::dense::{self, Batch, DenseShape, Layout};
use crate::error::{Error, Result};
use crate::image::ComplexImage;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorArch {
    pub width: usize,
    pub height: usize,
    pub hidden: Vec<usize>,
}

impl DiscriminatorArch {
    /// Three dense layers: 64 and 32 hidden units, scalar output.
    pub fn standard(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            hidden: vec![64, 32],
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::image::check_shape(self.width, self.height)?;
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidParameter("hidden widths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn layer_shapes(&self) -> Vec<DenseShape> {
        let mut shapes = Vec::new();
        let mut prev = 2 * self.width * self.height;
        for &h in &self.hidden {
            shapes.push(DenseShape::new(prev, h));
            prev = h;
        }
        shapes.push(DenseShape::new(prev, 1));
        shapes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    arch: DiscriminatorArch,
    layout: Layout,
    values: Vec<f64>,
}

impl DiscriminatorParams {
    pub fn init(arch: DiscriminatorArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch.layer_shapes());
        let mut gains = vec![2.0; layout.shapes.len()];
        *gains.last_mut().unwrap() = 1.0;
        let values = layout.init(&mut rng::seeded(seed), &gains);
        Ok(Self {
            arch,
            layout,
            values,
        })
    }

    pub fn from_values(arch: DiscriminatorArch, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch.layer_shapes());
        if values.len() != layout.total {
            return Err(Error::InvalidShape(format!(
                "discriminator needs {} parameters, got {}",
                layout.total,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("discriminator parameters"));
        }
        Ok(Self {
            arch,
            layout,
            values,
        })
    }

    pub fn arch(&self) -> &DiscriminatorArch {
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

    pub fn layer_mut(&mut self, index: usize) -> (&mut [f64], &mut [f64]) {
        self.layout.split_mut(&mut self.values, index)
    }

    fn layers(&self) -> std::ops::Range<usize> {
        0..self.layout.shapes.len()
    }

    pub(crate) fn forward_coords(&self, xs: &[Vec<f64>]) -> Vec<Batch> {
        dense::mlp_forward(&self.layout, self.layers(), &self.values, xs, false)
    }

    /// Scores `𝒟(x_e)` from a forward trace.
    pub(crate) fn scores(acts: &[Batch]) -> Vec<f64> {
        acts.last().unwrap().iter().map(|o| o[0]).collect()
    }

    /// Accumulates `∂/∂θ` of `Σ_e scale_e · 𝒟(x_e)` into `grads`; returns
    /// `∂/∂x_e` when requested.
    pub(crate) fn backward_coords(
        &self,
        acts: &[Batch],
        scales: &[f64],
        grads: &mut [f64],
        want_dx: bool,
    ) -> Option<Batch> {
        dense::mlp_backward(
            &self.layout,
            self.layers(),
            &self.values,
            acts,
            scales.iter().map(|&s| vec![s]).collect(),
            grads,
            want_dx,
        )
    }
}

pub fn discriminate(params: &DiscriminatorParams, x: &ComplexImage) -> Result<f64> {
    crate::image::ensure_shape((params.arch.width, params.arch.height), x.shape())?;
    Ok(DiscriminatorParams::scores(&params.forward_coords(&[x.to_real_vec()]))[0])
}

/// Least-squares adversarial terms from discriminator outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanLosses {
    /// `mean (1 − 𝒟(x̂))²`, weighted by λ in the generator objective.
    pub generator: f64,
    /// `mean (1 − 𝒟(x₀))² + mean 𝒟(x̂)²`
    pub discriminator: f64,
}

pub fn lsgan_terms(d_real: &[f64], d_fake: &[f64]) -> Result<GanLosses> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::InvalidParameter("empty discriminator batch".into()));
    }
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&d| f(d)).sum::<f64>() / v.len() as f64;
    let generator = mean(d_fake, &|d| (1.0 - d).powi(2));
    let discriminator = mean(d_real, &|d| (1.0 - d).powi(2)) + mean(d_fake, &|d| d * d);
    Ok(GanLosses {
        generator,
        discriminator,
    })
}
