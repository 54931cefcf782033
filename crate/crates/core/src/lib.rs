//! Blind optical aberration correction.
//!
//! A single image is split into overlapping patches. Each patch gets a local
//! RGB Gaussian blur estimate (one orientation, two standard deviations per
//! channel), is sharpened with a polynomial approximate inverse filter, and
//! then has its red and blue planes realigned to green by a small residual
//! CNN. Patches are fused back with Hamming weights.

pub mod baselines;
pub mod blur;
pub mod deblur;
pub mod degrade;
pub mod error;
pub mod fringe;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod psf;
pub mod scene;
pub mod warp;

pub use error::{Error, Result};
