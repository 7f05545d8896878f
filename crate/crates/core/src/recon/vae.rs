//! Trained VAE as a deterministic reconstructor (posterior mean `z = μ`).

use std::sync::Arc;

use super::Reconstructor;
use crate::error::Result;
use crate::image::{ensure_shape, ComplexImage, KSpace, Shaped};
use crate::kspace::{fft2_centered, SamplingDensity, SamplingMask};
use crate::model::objective::cascade_forward;
use crate::model::VaeParams;

/// One block without data consistency: `x ↦ g(μ(x))`.
#[derive(Debug, Clone)]
pub struct VaeBlock {
    params: Arc<VaeParams>,
}

impl VaeBlock {
    pub fn new(params: Arc<VaeParams>) -> Self {
        Self { params }
    }
}

impl Reconstructor for VaeBlock {
    fn apply(&self, x: &ComplexImage) -> Result<ComplexImage> {
        let stats = crate::model::encode(&self.params, x)?;
        crate::model::decode(&self.params, stats.mu())
    }
}

/// Where data consistency takes its measurement from.
#[derive(Debug, Clone)]
pub enum MeasurementSource {
    /// A fixed acquisition `y`.
    Fixed(KSpace),
    /// Recovered from the input as `D ⊙ Ω ⊙ F x` (`D = 1` when absent), which
    /// equals `y` for a zero-filled or density-compensated input. This makes
    /// the full map a function of its input alone, so its Jacobian includes
    /// the measured coefficients.
    FromInput(Option<Arc<SamplingDensity>>),
}

/// Full weight-shared cascade with data consistency.
#[derive(Debug, Clone)]
pub struct VaeReconstructor {
    params: Arc<VaeParams>,
    n_recurrent_blocks: usize,
    mask: Arc<SamplingMask>,
    source: MeasurementSource,
}

impl VaeReconstructor {
    pub fn new(
        params: Arc<VaeParams>,
        n_recurrent_blocks: usize,
        mask: Arc<SamplingMask>,
        source: MeasurementSource,
    ) -> Result<Self> {
        if n_recurrent_blocks == 0 {
            return Err(crate::Error::InvalidParameter(
                "n_recurrent_blocks must be >= 1".into(),
            ));
        }
        let shape = (params.arch().width, params.arch().height);
        ensure_shape(shape, mask.shape())?;
        match &source {
            MeasurementSource::Fixed(y) => ensure_shape(shape, y.shape())?,
            MeasurementSource::FromInput(Some(d)) => ensure_shape(shape, d.shape())?,
            MeasurementSource::FromInput(None) => {}
        }
        Ok(Self {
            params,
            n_recurrent_blocks,
            mask,
            source,
        })
    }

    pub fn params(&self) -> &Arc<VaeParams> {
        &self.params
    }

    pub fn n_recurrent_blocks(&self) -> usize {
        self.n_recurrent_blocks
    }

    pub fn mask(&self) -> &Arc<SamplingMask> {
        &self.mask
    }

    pub fn measurement_for(&self, x: &ComplexImage) -> KSpace {
        match &self.source {
            MeasurementSource::Fixed(y) => y.clone(),
            MeasurementSource::FromInput(density) => {
                let mut k = fft2_centered(x);
                for (i, v) in k.values_mut().iter_mut().enumerate() {
                    if !self.mask.is_sampled(i) {
                        *v = num_complex::Complex64::new(0.0, 0.0);
                    } else if let Some(d) = density {
                        *v *= d.probabilities()[i];
                    }
                }
                k
            }
        }
    }
}

impl Reconstructor for VaeReconstructor {
    fn apply(&self, x: &ComplexImage) -> Result<ComplexImage> {
        self.params.check_image(x)?;
        let y = self.measurement_for(x);
        let eps = vec![vec![0.0; self.params.arch().latent_dim]; self.n_recurrent_blocks];
        let trace = cascade_forward(
            &self.params,
            vec![x.to_real_vec()],
            Some(&[(&y, &*self.mask)]),
            &[&eps],
        );
        ComplexImage::from_real_vec(x.width(), x.height(), &trace.output[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{density_compensate, undersample, zero_fill, VdMaskSpec};
    use crate::model::VaeArch;
    use crate::recon::{data_consistency, reconstruct, CascadeConfig};
    use crate::rng;
    use num_complex::Complex64;

    fn setup() -> (Arc<VaeParams>, SamplingMask, KSpace, ComplexImage) {
        let arch = VaeArch::new(8, 8, vec![12], 3, vec![12]).unwrap();
        let p = Arc::new(VaeParams::init(arch, 4).unwrap());
        let mask = VdMaskSpec::new(8, 8, 2.0).draw(1).unwrap();
        let mut r = rng::seeded(2);
        let x0 = ComplexImage::from_fn(8, 8, |_, _| {
            Complex64::new(rng::standard_normal(&mut r), rng::standard_normal(&mut r))
        })
        .unwrap();
        let y = undersample(&x0, &mask, 0.1, 3).unwrap();
        (p, mask, y, x0)
    }

    #[test]
    fn two_blocks_equal_manual_composition() {
        let (p, mask, y, _) = setup();
        let x = zero_fill(&y, &mask).unwrap();
        let step = |x: &ComplexImage| {
            let s = crate::model::encode(&p, x).unwrap();
            let d = crate::model::decode(&p, s.mu()).unwrap();
            data_consistency(&d, &y, &mask).unwrap()
        };
        let manual = step(&step(&x));
        let h = VaeReconstructor::new(p.clone(), 2, Arc::new(mask.clone()), MeasurementSource::Fixed(y.clone()))
            .unwrap();
        let got = h.apply(&x).unwrap();
        assert!(got.distance_sqr(&manual).unwrap().sqrt() < 1e-12 * manual.norm());
        let generic = reconstruct(
            &VaeBlock::new(p),
            &x,
            &CascadeConfig::new(2, y, mask).unwrap(),
        )
        .unwrap();
        assert!(generic.distance_sqr(&manual).unwrap().sqrt() < 1e-12 * manual.norm());
    }

    #[test]
    fn measurement_recovered_from_inputs() {
        let (p, mask, y, _) = setup();
        let density = VdMaskSpec::new(8, 8, 2.0).estimate_density(50, 9).unwrap();
        let mask = Arc::new(mask);
        let zf = zero_fill(&y, &mask).unwrap();
        let h = VaeReconstructor::new(p.clone(), 1, mask.clone(), MeasurementSource::FromInput(None)).unwrap();
        let k = h.measurement_for(&zf);
        let dc = density_compensate(&y, &mask, &density).unwrap();
        let h2 = VaeReconstructor::new(p, 1, mask, MeasurementSource::FromInput(Some(Arc::new(density)))).unwrap();
        let k2 = h2.measurement_for(&dc);
        for i in 0..y.len() {
            assert!((k.values()[i] - y.values()[i]).norm() < 1e-12);
            assert!((k2.values()[i] - y.values()[i]).norm() < 1e-12);
        }
    }
}
