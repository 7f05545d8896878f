use std::path::{Path, PathBuf};
use std::sync::Arc;

use mri_uq::data::{generate_dataset, DatasetManifest, Split};
use mri_uq::io::{write_atomic, write_image, write_json, write_magnitude_pgm};
use mri_uq::kspace::ResidualStats;
use mri_uq::model::checkpoint::{read_vae, write_discriminator, write_vae};
use mri_uq::model::{train_with_progress, IterationLog, TrainError, Trained, VaeParams};
use mri_uq::pipeline::{Acquisition, Measurement};
use mri_uq::recon::{snr_db, Identity, Reconstructor};
use mri_uq::rng::derive_seed;
use mri_uq::uq::{
    bias_error_maps, monte_carlo_map, mse, sure_at, sure_mse_correlation, write_map, write_sure_csv, SureOptions,
    SureRow,
};
use mri_uq::ComplexImage;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, CONFIG_ECHO};
use crate::exit::{Failure, NUMERICAL};

/// Seed stream for test-set measurement noise, shared by `recon`, `map` and
/// `sure` so the same case sees the same acquisition.
const NOISE_STREAM: u64 = 2;
const TRAIN_NOISE_STREAM: u64 = 1;
const PROBE_STREAM: u64 = 3;
/// Log-variance bias used by `--sigma-zero`.
const COLLAPSED_LOGVAR: f64 = -200.0;

pub const CHECKPOINT_NAME: &str = "vae.vaep";

fn prepare_out(cfg: &RunConfig) -> Result<(), Failure> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Failure::io(e).context(format!("creating {}", cfg.out.display())))?;
    write_json(cfg.out.join(CONFIG_ECHO), cfg)?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(Failure::io)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::io(e.into_error()))?;
    write_atomic(path, &bytes)?;
    Ok(())
}

struct TestSet {
    ids: Vec<String>,
    images: Vec<ComplexImage>,
}

fn load_split(cfg: &RunConfig, split: Split) -> Result<TestSet, Failure> {
    let path = cfg.require_manifest()?;
    let manifest = DatasetManifest::load(path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    let ids: Vec<String> = manifest
        .entries(split)
        .map(|e| {
            Path::new(&e.path)
                .file_stem()
                .map_or_else(|| e.path.clone(), |s| s.to_string_lossy().into_owned())
        })
        .collect();
    let images = manifest.load_split(root, split)?;
    if images.is_empty() {
        return Err(Failure::usage(format!("manifest has no {split:?} images")));
    }
    let n = cfg.cases.unwrap_or(images.len()).min(images.len());
    Ok(TestSet {
        ids: ids[..n].to_vec(),
        images: images[..n].to_vec(),
    })
}

fn acquisition(cfg: &RunConfig, accel: f64, images: &[ComplexImage]) -> Result<Acquisition, Failure> {
    let (w, h) = images[0].shape();
    Ok(Acquisition::new(cfg.acquisition(accel), w, h)?)
}

fn load_params(cfg: &RunConfig) -> Result<Option<Arc<VaeParams>>, Failure> {
    match cfg.require_checkpoint()? {
        Some(path) => Ok(Some(Arc::new(read_vae(path)?))),
        None => Ok(None),
    }
}

fn reconstructor(
    acq: &Acquisition,
    params: &Option<Arc<VaeParams>>,
    rb: usize,
) -> Result<Box<dyn Reconstructor>, Failure> {
    Ok(match params {
        Some(p) => Box::new(acq.reconstructor(p.clone(), rb)?),
        None => Box::new(Identity),
    })
}

fn measure(cfg: &RunConfig, acq: &Acquisition, images: &[ComplexImage]) -> Result<Vec<Measurement>, Failure> {
    Ok(acq.measure_all(images, derive_seed(cfg.seed, NOISE_STREAM))?)
}

pub fn gen(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dataset = cfg.dataset();
    dataset.validate()?;
    prepare_out(cfg)?;
    let (path, manifest) = generate_dataset(&dataset, &cfg.out)?;
    eprintln!(
        "generated {} images ({} train / {} val / {} test)",
        manifest.images.len(),
        manifest.count(Split::Train),
        manifest.count(Split::Val),
        manifest.count(Split::Test)
    );
    Ok(path)
}

fn write_trained(out: &Path, trained: &Trained) -> Result<PathBuf, Failure> {
    let checkpoint = out.join(CHECKPOINT_NAME);
    write_vae(&checkpoint, &trained.vae)?;
    if let Some(d) = &trained.discriminator {
        write_discriminator(out.join("discriminator.disc"), d)?;
    }
    write_csv(&out.join("loss.csv"), &trained.curve)?;
    Ok(checkpoint)
}

pub fn train(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let config = cfg.training();
    config.validate()?;
    let mut train_cfg = cfg.clone();
    train_cfg.cases = None;
    let set = load_split(&train_cfg, Split::Train)?;
    let acq = acquisition(cfg, cfg.accel, &set.images)?;
    prepare_out(cfg)?;
    let examples = acq.training_examples(&set.images, derive_seed(cfg.seed, TRAIN_NOISE_STREAM))?;
    let every = (config.n_iterations / 20).max(1);
    let progress = |log: &IterationLog| {
        if (log.iteration + 1) % every == 0 {
            eprintln!("iteration {:>6}  loss {:.6}  pixel {:.6}", log.iteration + 1, log.total, log.pixel);
        }
    };
    match train_with_progress(&examples, &config, progress) {
        Ok(trained) => write_trained(&cfg.out, &trained),
        Err(TrainError::Diverged {
            iteration,
            message,
            last_finite,
        }) => {
            write_trained(&cfg.out, &last_finite)?;
            Err(Failure {
                code: NUMERICAL,
                error: anyhow::anyhow!(
                    "training diverged at iteration {iteration}: {message}; last finite parameters saved"
                ),
            })
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Serialize)]
struct ReconRow {
    case_id: String,
    snr_db: f64,
    mse: f64,
    zero_filled_snr_db: f64,
}

pub fn recon(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let params = load_params(cfg)?;
    let set = load_split(cfg, Split::Test)?;
    let acq = acquisition(cfg, cfg.accel, &set.images)?;
    let h = reconstructor(&acq, &params, cfg.rb)?;
    prepare_out(cfg)?;
    let measured = measure(cfg, &acq, &set.images)?;
    let dir = cfg.out.join("recon");
    let rows = (0..set.images.len())
        .into_par_iter()
        .map(|i| -> Result<ReconRow, Failure> {
            let (x0, m, id) = (&set.images[i], &measured[i], &set.ids[i]);
            let x_hat = h.apply(acq.input(m))?;
            write_image(dir.join(format!("{id}.cimg")), &x_hat)?;
            write_magnitude_pgm(dir.join(format!("{id}.pgm")), &x_hat)?;
            Ok(ReconRow {
                case_id: id.clone(),
                snr_db: snr_db(&x_hat, x0)?,
                mse: mse(&x_hat, x0)?,
                zero_filled_snr_db: snr_db(&m.zero_filled, x0)?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let path = cfg.out.join("recon.csv");
    write_csv(&path, &rows)?;
    let median = |f: fn(&ReconRow) -> f64| {
        let mut v: Vec<f64> = rows.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    eprintln!(
        "median SNR {:.2} dB, zero-filled {:.2} dB over {} cases",
        median(|r| r.snr_db),
        median(|r| r.zero_filled_snr_db),
        rows.len()
    );
    Ok(path)
}

/// Zeroes the log-variance head and pins its bias far below zero, so every
/// latent draw equals the posterior mean.
fn collapse_posterior(params: &mut VaeParams) {
    let head = params.layer_shapes().len() - 2;
    let (w, b) = params.layer_mut(head);
    w.fill(0.0);
    b.fill(COLLAPSED_LOGVAR);
}

pub fn map(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    if cfg.identity {
        return Err(Failure::usage("map needs a trained model; --identity is not supported"));
    }
    if cfg.k < 2 {
        return Err(Failure::usage(format!("k must be >= 2, got {}", cfg.k)));
    }
    let params = load_params(cfg)?.expect("checkpoint required without --identity");
    let mut set_cfg = cfg.clone();
    set_cfg.cases = None;
    let set = load_split(&set_cfg, Split::Test)?;
    let i = cfg.index;
    if i >= set.images.len() {
        return Err(Failure::usage(format!(
            "index {i} out of range for {} test images",
            set.images.len()
        )));
    }
    let acq = acquisition(cfg, cfg.accel, &set.images)?;
    let mut params = Arc::unwrap_or_clone(params);
    if cfg.sigma_zero {
        collapse_posterior(&mut params);
    }
    prepare_out(cfg)?;
    let x0 = &set.images[i];
    let m = acq.measure(x0, derive_seed(derive_seed(cfg.seed, NOISE_STREAM), i as u64))?;
    let draws = monte_carlo_map(
        &params,
        acq.input(&m),
        cfg.rb,
        cfg.k,
        cfg.seed,
        Some((&m.y, acq.mask().as_ref())),
    )?;
    let map = bias_error_maps(&draws.samples, x0)?;
    let stem = &set.ids[i];
    write_image(cfg.out.join(format!("{stem}_mean.cimg")), &map.mean)?;
    write_map(&cfg.out, stem, &map)?;
    Ok(cfg.out.join(format!("{stem}_summary.json")))
}

#[derive(Debug, Serialize)]
struct CorrelationRow {
    accel: f64,
    n_cases: usize,
    r_squared: f64,
    slope: f64,
    intercept: f64,
}

pub fn sure(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let params = load_params(cfg)?;
    let set = load_split(cfg, Split::Test)?;
    let accels = if cfg.sweep {
        cfg.accelerations.clone()
    } else {
        vec![cfg.accel]
    };
    let acqs = accels
        .iter()
        .map(|&a| acquisition(cfg, a, &set.images))
        .collect::<Result<Vec<_>, _>>()?;
    prepare_out(cfg)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (&accel, acq) in accels.iter().zip(&acqs) {
        let h = reconstructor(acq, &params, cfg.rb)?;
        let measured = measure(cfg, acq, &set.images)?;
        let cases = (0..set.images.len())
            .into_par_iter()
            .map(|i| -> Result<_, Failure> {
                let opts = SureOptions {
                    n_probes: cfg.probes,
                    epsilon: cfg.epsilon,
                    sigma2: None,
                    seed: derive_seed(derive_seed(cfg.seed, PROBE_STREAM), i as u64),
                };
                let (report, x_hat) = sure_at(&h, acq.input(&measured[i]), &opts)?;
                let x0 = &set.images[i];
                Ok((report, mse(&x_hat, x0)?, snr_db(&x_hat, x0)?))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (id, (report, mse, snr)) in set.ids.iter().zip(&cases) {
            rows.push(SureRow::new(id.clone(), accel, cfg.lambda, cfg.rb, report).with_reference(*mse, *snr));
        }
        let pairs: Vec<_> = cases.into_iter().map(|(r, m, _)| (r, m)).collect();
        let c = if pairs.len() >= 2 {
            sure_mse_correlation(&pairs)?
        } else {
            return Err(Failure::usage("correlation needs at least 2 test cases"));
        };
        eprintln!("accel {accel:>5}: R² {:.3}, slope {:.3} over {} cases", c.r_squared, c.slope, pairs.len());
        summary.push(CorrelationRow {
            accel,
            n_cases: pairs.len(),
            r_squared: c.r_squared,
            slope: c.slope,
            intercept: c.intercept,
        });
    }
    let path = cfg.out.join("sure.csv");
    write_sure_csv(&path, &rows)?;
    write_json(cfg.out.join("correlation.json"), &summary)?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct StatsRow {
    accel: f64,
    input: &'static str,
    count: usize,
    mean: f64,
    std: f64,
    skewness: f64,
    excess_kurtosis: f64,
    degenerate: bool,
}

#[derive(Debug, Serialize)]
struct QqRow {
    accel: f64,
    input: &'static str,
    theoretical: f64,
    empirical: f64,
}

#[derive(Debug, Serialize)]
struct HistogramRow {
    accel: f64,
    input: &'static str,
    bin_low: f64,
    bin_high: f64,
    count: usize,
}

fn histogram(samples: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![(lo, hi, samples.len())];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in samples {
        counts[(((s - lo) / width) as usize).min(bins - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect()
}

pub fn qq(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    if cfg.quantiles < 2 || cfg.histogram_bins == 0 {
        return Err(Failure::usage("quantiles must be >= 2 and histogram_bins >= 1"));
    }
    let set = load_split(cfg, Split::Test)?;
    let acqs = cfg
        .accelerations
        .iter()
        .map(|&a| acquisition(cfg, a, &set.images))
        .collect::<Result<Vec<_>, _>>()?;
    prepare_out(cfg)?;
    let (mut stats, mut pairs, mut hist) = (Vec::new(), Vec::new(), Vec::new());
    for (&accel, acq) in cfg.accelerations.iter().zip(&acqs) {
        let measured = measure(cfg, acq, &set.images)?;
        let coords = set.images.iter().map(|x| 2 * x.len()).sum::<usize>() as f64;
        let scale = (set.images.iter().map(|x| x.norm_sqr()).sum::<f64>() / coords).sqrt();
        let pooled = |pick: fn(&Measurement) -> &ComplexImage| -> Vec<f64> {
            set.images
                .iter()
                .zip(&measured)
                .flat_map(|(x0, m)| {
                    pick(m)
                        .values()
                        .iter()
                        .zip(x0.values())
                        .flat_map(|(a, b)| [a.re - b.re, a.im - b.im])
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        let inputs: [(&'static str, Vec<f64>); 2] = [
            ("zero_filled", pooled(|m| &m.zero_filled)),
            ("compensated", pooled(|m| &m.compensated)),
        ];
        for (input, samples) in inputs {
            let s = ResidualStats::with_scale(&samples, scale, cfg.quantiles)?;
            pairs.extend(s.qq_pairs.iter().map(|&(theoretical, empirical)| QqRow {
                accel,
                input,
                theoretical,
                empirical,
            }));
            hist.extend(
                histogram(&samples, cfg.histogram_bins)
                    .into_iter()
                    .map(|(bin_low, bin_high, count)| HistogramRow {
                        accel,
                        input,
                        bin_low,
                        bin_high,
                        count,
                    }),
            );
            stats.push(StatsRow {
                accel,
                input,
                count: s.count,
                mean: s.mean,
                std: s.std,
                skewness: s.skewness,
                excess_kurtosis: s.excess_kurtosis,
                degenerate: s.degenerate,
            });
        }
    }
    let path = cfg.out.join("residual_stats.csv");
    write_csv(&path, &stats)?;
    write_csv(&cfg.out.join("qq.csv"), &pairs)?;
    write_csv(&cfg.out.join("histogram.csv"), &hist)?;
    Ok(path)
}
