//! Dense point-to-point correspondence and smooth deformation between pairs
//! of triangle meshes.
//!
//! The pipeline hierarchically aligns coarse-to-fine spectral smoothings of
//! the two shapes inside a joint intrinsic-extrinsic embedding, initialized
//! by a surrogate-scored Monte Carlo search over coarse deformations. See
//! the `pipeline` and `mcmc` modules for the orchestration and the README
//! for the command-line front end.

pub mod alignment;
pub mod descriptors;
pub mod embedding;
pub mod driver;
pub mod error;
pub mod evaluation;
pub mod mcmc;
pub mod mesh;
pub mod parallel;
pub mod pipeline;
pub mod sparse;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
