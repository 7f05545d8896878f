//! On-disk phantom datasets with family-stratified splits.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phantom::{compose, random_ellipses, render_ellipses, smooth_phase, Ellipse, PhaseMode, PhantomSpec};
use crate::error::{Error, Result};
use crate::image::ComplexImage;
use crate::io;
use crate::rng;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidParameter(format!("split ratios must be >= 0, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("split ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }

    fn get(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    /// Largest-remainder image counts; ties go to the earlier split.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let exact = Split::ALL.map(|s| self.get(s) * n as f64);
        let mut counts = exact.map(|e| e.floor() as usize);
        let mut left = n - counts.iter().sum::<usize>();
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| {
            let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Geometry, ellipse count, intensity range and phase mode; its seed is
    /// unused, per-image seeds derive from `seed`.
    pub phantom: PhantomSpec,
    pub n_images: usize,
    pub split_ratios: SplitRatios,
    /// Images per family; members share a base layout and a split.
    pub family_size: usize,
    pub seed: u64,
}

impl DatasetConfig {
    /// 600 phantoms of 32×32, 70/15/15.
    pub fn standard(seed: u64) -> Self {
        Self {
            phantom: PhantomSpec::standard(seed),
            n_images: 600,
            split_ratios: SplitRatios::default(),
            family_size: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.split_ratios.validate()?;
        if self.n_images < 3 {
            return Err(Error::InvalidParameter(format!(
                "n_images must be >= 3, got {}",
                self.n_images
            )));
        }
        if self.family_size == 0 {
            return Err(Error::InvalidParameter("family_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub split: Split,
    pub family_id: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub images: Vec<ManifestEntry>,
    pub split_ratios: SplitRatios,
    pub family_size: usize,
    pub seed: u64,
    pub spec: PhantomSpec,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = io::read_json(path.as_ref())?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::format(
                path.as_ref(),
                format!("unsupported schema_version {}", m.schema_version),
            ));
        }
        Ok(m)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.images.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries(split).count()
    }

    /// Loads every image of `split`; `root` is the manifest's directory.
    pub fn load_split(&self, root: impl AsRef<Path>, split: Split) -> Result<Vec<ComplexImage>> {
        self.entries(split)
            .map(|e| io::read_image(root.as_ref().join(&e.path)))
            .collect()
    }
}

/// Jittered copy of a family's base layout.
fn family_member(base: &[Ellipse], span: f64, member_seed: u64) -> Vec<Ellipse> {
    let mut r = rng::seeded(member_seed);
    base.iter()
        .map(|e| {
            let mut n = || rng::standard_normal(&mut r);
            Ellipse {
                center: (e.center.0 + 0.02 * n(), e.center.1 + 0.02 * n()),
                axes: (e.axes.0 * (1.0 + 0.05 * n()).max(0.5), e.axes.1 * (1.0 + 0.05 * n()).max(0.5)),
                angle: e.angle + 0.05 * n(),
                intensity: e.intensity + 0.03 * span * n(),
            }
        })
        .collect()
}

fn render_image(config: &DatasetConfig, family: usize, member: usize) -> Result<(ComplexImage, u64)> {
    let spec = &config.phantom;
    let family_seed = rng::derive_seed(config.seed, family as u64);
    let mut fr = rng::seeded(family_seed);
    let base = random_ellipses(spec.n_ellipses, spec.intensity_range, &mut fr);
    let (ellipses, image_seed) = if config.family_size == 1 {
        (base, family_seed)
    } else {
        let s = rng::derive_seed(family_seed, member as u64 + 1);
        let span = spec.intensity_range.1 - spec.intensity_range.0;
        (family_member(&base, span, s), s)
    };
    let mag = render_ellipses(spec.width, spec.height, &ellipses, spec.intensity_range)?;
    let phase = match spec.phase_mode {
        PhaseMode::Zero => None,
        PhaseMode::SmoothRandom => {
            let mut pr = rng::seeded(rng::derive_seed(image_seed, 0x9a5e));
            Some(smooth_phase(spec.width, spec.height, &mut pr))
        }
    };
    Ok((compose(&mag, phase.as_deref(), spec.width, spec.height), image_seed))
}

/// Generates the images in memory with their manifest entries (paths set
/// as they would be on disk).
pub fn generate_images(config: &DatasetConfig) -> Result<(Vec<ComplexImage>, DatasetManifest)> {
    config.validate()?;
    let n = config.n_images;
    let n_families = n.div_ceil(config.family_size);
    let family_len = |f: usize| (n - f * config.family_size).min(config.family_size);

    let mut families: Vec<usize> = (0..n_families).collect();
    families.shuffle(&mut rng::seeded(rng::derive_seed(config.seed, u64::MAX)));
    let targets = config.split_ratios.counts(n);
    let mut assigned = [0usize; 3];
    let mut family_split = vec![Split::Train; n_families];
    for &f in &families {
        let best = (0..3)
            .max_by(|&a, &b| {
                let da = targets[a] as i64 - assigned[a] as i64;
                let db = targets[b] as i64 - assigned[b] as i64;
                da.cmp(&db).then(b.cmp(&a))
            })
            .unwrap();
        assigned[best] += family_len(f);
        family_split[f] = Split::ALL[best];
    }

    let rendered: Vec<(ComplexImage, u64)> = (0..n)
        .into_par_iter()
        .map(|i| render_image(config, i / config.family_size, i % config.family_size))
        .collect::<Result<_>>()?;
    let mut images = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    for (i, (img, seed)) in rendered.into_iter().enumerate() {
        let family_id = i / config.family_size;
        entries.push(ManifestEntry {
            path: format!("images/img_{i:05}.cimg"),
            split: family_split[family_id],
            family_id,
            seed,
        });
        images.push(img);
    }
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        images: entries,
        split_ratios: config.split_ratios,
        family_size: config.family_size,
        seed: config.seed,
        spec: config.phantom.clone(),
    };
    Ok((images, manifest))
}

/// Writes every image plus `manifest.json` under `out_dir`; returns the
/// manifest path alongside the manifest.
pub fn generate_dataset(config: &DatasetConfig, out_dir: impl AsRef<Path>) -> Result<(PathBuf, DatasetManifest)> {
    let out_dir = out_dir.as_ref();
    let (images, manifest) = generate_images(config)?;
    std::fs::create_dir_all(out_dir.join("images")).map_err(|e| Error::io(out_dir, e))?;
    images
        .par_iter()
        .zip(&manifest.images)
        .try_for_each(|(img, e)| io::write_image(out_dir.join(&e.path), img))?;
    let path = out_dir.join(MANIFEST_NAME);
    io::write_json(&path, &manifest)?;
    Ok((path, manifest))
}
