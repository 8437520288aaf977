#![no_std]
//! Core algorithms for turning curb-ramp location lists into pixel labels on
//! equirectangular street-level panoramas, and for benchmarking point
//! detectors against ground truth.
//!
//! The crate is `no_std` + `alloc`. All floating-point transcendental
//! functions go through [`libm`], so results are identical across platforms.
//! File formats, image codecs and the command-line driver live in the
//! companion `curbscape` crate.
//!
//! Module map:
//!
//! - [`geo`] – geodesic primitives and the ramp / panorama record types.
//! - [`catalog`] – ramp datasets, panorama catalogs and the image-provider boundary.
//! - [`index`] – exact radius queries over geographic points.
//! - [`selection`] – which panoramas to process and which ramps to label in each.
//! - [`projection`] – perspective crops from equirectangular panoramas and the
//!   point mappings between the two.
//! - [`heatmap`] – Gaussian heatmap encoding, peak decoding and horizontal flips.
//! - [`localize`] – the crop-localizer boundary and per-panorama aggregation.
//! - [`split`] – leakage-free train/val/test splits and dataset statistics.
//! - [`eval`] – proximity matching, precision/recall and average precision.
//! - [`synth`] – deterministic synthetic worlds with exact ground truth.

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod catalog;
mod error;
pub mod eval;
pub mod geo;
pub mod heatmap;
pub mod image;
pub mod index;
pub mod localize;
pub(crate) mod math;
pub mod projection;
pub mod selection;
pub mod split;
pub mod synth;

pub use chrono::NaiveDate;
pub use error::{Error, Result};
