//! Monte Carlo uncertainty maps and the pixel-wise bias/variance/error
//! decomposition.
//!
//! Variance, bias and error are computed on magnitudes; the mean image stays
//! complex.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{ComplexImage, KSpace};
use crate::kspace::SamplingMask;
use crate::model::objective::cascade_forward;
use crate::model::VaeParams;
use crate::rng;
use crate::Complex64;

/// Samples pushed through the cascade together.
const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub mean: ComplexImage,
    /// Population variance of sample magnitudes.
    pub variance: Vec<f64>,
    /// `(mean magnitude − |x₀|)²`; present when a reference was supplied.
    pub bias_sq: Option<Vec<f64>>,
    /// Mean of `(|sample| − |x₀|)²`; present when a reference was supplied.
    pub error: Option<Vec<f64>>,
    pub k: usize,
}

impl UncertaintyMap {
    pub fn width(&self) -> usize {
        self.mean.width()
    }

    pub fn height(&self) -> usize {
        self.mean.height()
    }

    pub fn summary(&self) -> MapSummary {
        MapSummary {
            k: self.k,
            width: self.width(),
            height: self.height(),
            mean_magnitude: MapStats::of(&self.mean.magnitudes()),
            variance: MapStats::of(&self.variance),
            bias_sq: self.bias_sq.as_deref().map(MapStats::of),
            error: self.error.as_deref().map(MapStats::of),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl MapStats {
    pub fn of(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Self { min, max, mean }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapSummary {
    pub k: usize,
    pub width: usize,
    pub height: usize,
    pub mean_magnitude: MapStats,
    pub variance: MapStats,
    pub bias_sq: Option<MapStats>,
    pub error: Option<MapStats>,
}

/// Map plus the reconstructions it was computed from.
#[derive(Debug, Clone)]
pub struct MonteCarloDraws {
    pub map: UncertaintyMap,
    pub samples: Vec<ComplexImage>,
}

/// Draws `k` reconstructions with `z ~ N(μ, σ²)` sampled afresh in every
/// block, applying data consistency against `dc` when given. Sample `i` uses
/// the noise stream `(seed, i)`, so results do not depend on thread count.
pub fn monte_carlo_map(
    params: &VaeParams,
    x_input: &ComplexImage,
    n_recurrent_blocks: usize,
    k: usize,
    seed: u64,
    dc: Option<(&KSpace, &SamplingMask)>,
) -> Result<MonteCarloDraws> {
    if k < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: k });
    }
    if n_recurrent_blocks == 0 {
        return Err(Error::InvalidParameter("n_recurrent_blocks must be >= 1".into()));
    }
    params.check_image(x_input)?;
    if let Some((y, mask)) = dc {
        x_input.ensure_same_shape(y)?;
        x_input.ensure_same_shape(mask)?;
    }
    let (w, h) = x_input.shape();
    let dz = params.arch().latent_dim;
    let coords = x_input.to_real_vec();
    let starts: Vec<usize> = (0..k).step_by(CHUNK).collect();
    let chunks = starts
        .par_iter()
        .map(|&start| {
            let end = (start + CHUNK).min(k);
            let eps: Vec<Vec<Vec<f64>>> = (start..end)
                .map(|i| {
                    let mut r = rng::stream(seed, i as u64);
                    (0..n_recurrent_blocks).map(|_| rng::normal_vec(&mut r, dz)).collect()
                })
                .collect();
            let eps_refs: Vec<&[Vec<f64>]> = eps.iter().map(Vec::as_slice).collect();
            let consistency = dc.map(|c| vec![c; end - start]);
            let trace = cascade_forward(
                params,
                vec![coords.clone(); end - start],
                consistency.as_deref(),
                &eps_refs,
            );
            trace
                .output
                .iter()
                .map(|o| ComplexImage::from_real_vec(w, h, o))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<ComplexImage> = chunks.into_iter().flatten().collect();
    let map = moments(&samples, None)?;
    Ok(MonteCarloDraws { map, samples })
}

/// Mean, variance and, against `x0`, squared bias and error of a sample
/// set. Error is accumulated directly from the samples; it equals
/// `bias_sq + variance` pixel-wise up to rounding.
pub fn bias_error_maps(samples: &[ComplexImage], x0: &ComplexImage) -> Result<UncertaintyMap> {
    moments(samples, Some(x0))
}

fn moments(samples: &[ComplexImage], x0: Option<&ComplexImage>) -> Result<UncertaintyMap> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let first = &samples[0];
    for s in &samples[1..] {
        first.ensure_same_shape(s)?;
    }
    if let Some(x0) = x0 {
        first.ensure_same_shape(x0)?;
    }
    let n = first.len();
    let k = samples.len() as f64;
    let mut mean = vec![Complex64::new(0.0, 0.0); n];
    let mut mag_mean = vec![0.0; n];
    for s in samples {
        for ((m, a), v) in mean.iter_mut().zip(&mut mag_mean).zip(s.values()) {
            *m += v;
            *a += v.norm();
        }
    }
    mean.iter_mut().for_each(|m| *m /= k);
    mag_mean.iter_mut().for_each(|a| *a /= k);

    let mut variance = vec![0.0; n];
    for s in samples {
        for ((acc, a), v) in variance.iter_mut().zip(&mag_mean).zip(s.values()) {
            let d = v.norm() - a;
            *acc += d * d;
        }
    }
    variance.iter_mut().for_each(|v| *v /= k);

    let (bias_sq, error) = match x0 {
        Some(x0) => {
            let truth = x0.magnitudes();
            let bias_sq = mag_mean.iter().zip(&truth).map(|(a, t)| (a - t).powi(2)).collect();
            (Some(bias_sq), Some(mean_sq_error(samples, &truth)))
        }
        None => (None, None),
    };
    Ok(UncertaintyMap {
        mean: ComplexImage::new(first.width(), first.height(), mean)?,
        variance,
        bias_sq,
        error,
        k: samples.len(),
    })
}

fn mean_sq_error(samples: &[ComplexImage], truth: &[f64]) -> Vec<f64> {
    let mut error = vec![0.0; truth.len()];
    for s in samples {
        for ((e, t), v) in error.iter_mut().zip(truth).zip(s.values()) {
            *e += (v.norm() - t).powi(2);
        }
    }
    error.iter_mut().for_each(|e| *e /= samples.len() as f64);
    error
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VaeArch;

    fn image(values: &[f64]) -> ComplexImage {
        ComplexImage::from_real(values.len(), 1, values).unwrap()
    }

    #[test]
    fn samples_at_truth_give_zero_maps() {
        let x0 = image(&[1.0, 2.0, 3.0]);
        let m = bias_error_maps(&[x0.clone(), x0.clone()], &x0).unwrap();
        assert_eq!(m.variance, vec![0.0; 3]);
        assert_eq!(m.bias_sq.unwrap(), vec![0.0; 3]);
        assert_eq!(m.error.unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn symmetric_pair_has_no_bias() {
        let (x0, d) = (2.0, 0.25);
        let m = bias_error_maps(&[image(&[x0 + d]), image(&[x0 - d])], &image(&[x0])).unwrap();
        assert!(m.bias_sq.unwrap()[0].abs() < 1e-15);
        assert!((m.variance[0] - d * d).abs() < 1e-15);
        assert!((m.error.unwrap()[0] - d * d).abs() < 1e-15);
    }

    #[test]
    fn error_is_bias_plus_variance() {
        let mut r = rng::seeded(5);
        let mut draw = || {
            ComplexImage::from_fn(4, 3, |_, _| {
                Complex64::new(rng::standard_normal(&mut r), rng::standard_normal(&mut r))
            })
            .unwrap()
        };
        let x0 = draw();
        let samples: Vec<_> = (0..5).map(|_| draw()).collect();
        let m = bias_error_maps(&samples, &x0).unwrap();
        let (bias_sq, error) = (m.bias_sq.unwrap(), m.error.unwrap());
        for ((e, b), v) in error.iter().zip(&bias_sq).zip(&m.variance) {
            assert!((e - (b + v)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_sample_is_rejected() {
        let x = image(&[1.0]);
        assert!(matches!(
            bias_error_maps(&[x.clone()], &x),
            Err(Error::InsufficientSamples { needed: 2, got: 1 })
        ));
    }

    fn toy(decoder_hidden: Vec<usize>) -> VaeParams {
        VaeParams::init(VaeArch::new(4, 4, vec![6], 2, decoder_hidden).unwrap(), 3).unwrap()
    }

    #[test]
    fn decoder_without_latent_path_has_zero_variance() {
        let mut p = toy(vec![5]);
        let first = p.arch().decoder().start;
        let (w, _) = p.layer_mut(first);
        w.fill(0.0);
        let x = ComplexImage::from_real(4, 4, &[0.5; 16]).unwrap();
        let draws = monte_carlo_map(&p, &x, 1, 8, 1, None).unwrap();
        assert!(draws.map.variance.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_sigma_collapses_to_posterior_mean() {
        let mut p = toy(vec![5]);
        let lv = p.arch().logvar_head();
        let (w, b) = p.layer_mut(lv);
        w.fill(0.0);
        b.fill(-1e4);
        let x = ComplexImage::from_real(4, 4, &[0.3; 16]).unwrap();
        let draws = monte_carlo_map(&p, &x, 1, 2, 9, None).unwrap();
        assert!(draws.map.variance.iter().all(|&v| v == 0.0));
        let stats = crate::model::encode(&p, &x).unwrap();
        let decoded = crate::model::decode(&p, stats.mu()).unwrap();
        assert!(draws.map.mean.distance_sqr(&decoded).unwrap() < 1e-24);
    }

    #[test]
    fn mean_is_sample_average_and_seed_deterministic() {
        let p = toy(vec![]);
        let x = ComplexImage::from_real(4, 4, &[0.1; 16]).unwrap();
        let a = monte_carlo_map(&p, &x, 2, 37, 4, None).unwrap();
        let b = monte_carlo_map(&p, &x, 2, 37, 4, None).unwrap();
        assert_eq!(a.samples, b.samples);
        let mut sum = vec![Complex64::new(0.0, 0.0); 16];
        for s in &a.samples {
            for (acc, v) in sum.iter_mut().zip(s.values()) {
                *acc += v;
            }
        }
        for (m, s) in a.map.mean.values().iter().zip(&sum) {
            assert!((m - s / 37.0).norm() < 1e-15);
        }
        assert!(a.map.variance.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn consistency_pins_sampled_coefficients() {
        let p = toy(vec![5]);
        let mask = crate::kspace::VdMaskSpec::new(4, 4, 2.0).draw(2).unwrap();
        let x0 = ComplexImage::from_real(4, 4, &[1.0; 16]).unwrap();
        let y = crate::kspace::undersample(&x0, &mask, 0.0, 0).unwrap();
        let draws = monte_carlo_map(&p, &x0, 1, 4, 3, Some((&y, &mask))).unwrap();
        for s in &draws.samples {
            let k = crate::kspace::fft2_centered(s);
            for (i, (a, b)) in k.values().iter().zip(y.values()).enumerate() {
                if mask.is_sampled(i) {
                    assert!((a - b).norm() < 1e-12);
                }
            }
        }
    }
}
