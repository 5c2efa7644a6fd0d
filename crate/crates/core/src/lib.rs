//! Simulation of a rosette-scan single-detector imager.
//!
//! A rosette scanner sweeps one detector over the scene along a closed
//! flower-shaped locus. Each detector sample integrates the scene over a disc
//! (the probe), so one frame is a linear measurement `y = M x`. The image is
//! recovered with a precomputed pseudoinverse `x ≈ P y`.
//!
//! Modules, in pipeline order:
//!
//! * [`scan`] rosette loci and their discretization onto a pixel grid
//! * [`sense`] probe rasterization and the sparse measurement matrix
//! * [`recon`] truncated-SVD and frequency-weighted reconstruction operators
//! * [`leaves`] dead-leaves test images and image-folder corpora
//! * [`quality`] PSNR, DCT sparsification, Gaussian blur and focal-plane-array simulation
//! * [`search`] probe-radius scans and `(n, m)` pattern coverage search
//! * [`infer`] Bayesian two-group comparison of PSNR populations
//! * [`cli`] the `rosette` command-line tool
//!
//! The `examples/` directory has one runnable program per capability.
//!
//! ```
//! use rosette::scan::{discretize_pattern, rosette_locus, RosettePattern};
//!
//! let pattern = RosettePattern::new(8, 99, 0.04, 510_000.0).unwrap();
//! assert_eq!((pattern.f1, pattern.f2), (2475.0, 2275.0));
//! let samples = discretize_pattern(&rosette_locus(&pattern), 256).unwrap();
//! assert!(samples.in_bounds_count > 11_800);
//! ```

pub mod cli;
pub mod error;
pub mod infer;
pub mod leaves;
pub mod quality;
pub mod raster;
pub mod recon;
pub mod scan;
pub mod search;
pub mod sense;

pub use error::{Error, Result};
pub use raster::ImageGrid;
