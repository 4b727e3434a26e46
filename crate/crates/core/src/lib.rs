//! Single-image rain streak removal.
//!
//! The pipeline has two steps:
//!
//! 1. [`detect`]: mark rain pixels with a five-window local-mean test, then
//!    drop chromatic false positives in an eigen-color space.
//! 2. [`approx`] + [`model`]: estimate each rain pixel's background color from
//!    its non-rain neighbors, fit the per-pixel linear imaging model
//!
//!    ```text
//!    p = alpha * s + beta
//!    ```
//!
//!    by closed-form ridge least squares over a large window of rain pixels,
//!    and invert it to recover the rain-free intensity `s`.
//!
//! [`synth`] renders screen-blended rain with exact ground truth, and
//! [`metrics`] scores results with PSNR and SSIM.

pub mod approx;
pub mod config;
pub mod detect;
pub mod error;
pub mod imagebuf;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use imagebuf::{ColorImage, GrayImage, RainMask};
pub use pipeline::{run, PipelineConfig, PipelineResult};
