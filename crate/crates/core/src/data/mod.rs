//! Synthetic phantom datasets.

mod dataset;
mod phantom;

pub use dataset::{
    generate_dataset, generate_images, DatasetConfig, DatasetManifest, ManifestEntry, Split,
    SplitRatios, MANIFEST_NAME, SCHEMA_VERSION,
};
pub use phantom::{
    generate_phantom, pixel_coords, random_ellipses, render_ellipses, smooth_phase, Ellipse,
    PhaseMode, PhantomSpec,
};
