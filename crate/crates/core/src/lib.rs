//! Neural point-cloud rendering toolkit.
//!
//! The pipeline turns a colored point cloud and a camera into a multi-plane
//! feature volume ([`voxelisation`]), feeds it to a small 3-D U-Net generator
//! ([`nn`]) and supervises the generator with a perceptual loss plus three
//! patch discriminators operating on RGB, Fourier-magnitude and Haar-DWT
//! inputs ([`adversarial`], [`training`]).
//!
//! Data-parallel kernels run on rayon when the `parallel` feature is enabled
//! (the default); see [`par`] for the sequential fallback and the runtime
//! switch used by the benchmarks.

pub mod adversarial;
pub mod config;
pub mod error;
mod fsutil;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod spectral;
pub mod training;
pub mod voxelisation;

pub use error::{Error, Result};
