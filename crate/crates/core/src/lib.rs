//! Retinal image quality grading with salient-structure priors.
//!
//! The pipeline detects large bright structures (optic disc, exudates) with a
//! frequency-tuned Lab contrast map and tiny dark structures (vessels) with a
//! multi-scale line detector, stacks the resulting binary masks onto the RGB
//! image and grades it as Good / Usable / Reject with a small convolutional
//! classifier in a single- or dual-branch configuration.
//!
//! Modules, bottom-up:
//!
//! * [`raster`] – pixel containers, colour conversion, filtering, resampling.
//! * [`fov`] – circular field-of-view detection and the crop/pad/rescale front end.
//! * [`salient_large`] – Lab contrast map, max-normalisation and `M_LS`.
//! * [`salient_tiny`] – line response, enhancement, z-score and `M_TS`.
//! * [`dataset`] – manifests, channel stacks, augmentation, synthetic fundus fixtures.
//! * [`nn`] – layers with hand-written backward passes, models, SGD, Grad-CAM.
//! * [`eval`] – confusion matrices, P/R/F, `|M_TS|` distributions and reports.

pub mod dataset;
pub mod eval;
pub mod fov;
pub mod nn;
pub mod raster;
pub mod salient_large;
pub mod salient_tiny;

mod mask;

pub use mask::{BinaryMask, FovMask};
