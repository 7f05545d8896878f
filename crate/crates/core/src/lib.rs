pub mod data;
pub mod error;
pub mod image;
pub mod io;
pub mod kspace;
pub mod model;
pub mod pipeline;
pub mod recon;
pub mod rng;
pub mod uq;

pub use error::{Error, Result};
pub use image::{ComplexImage, KSpace, Shaped};
pub use num_complex::Complex64;
