//! File formats, image IO, pipeline stages and the command-line driver for
//! the `curbscape-core` algorithms.
//!
//! - [`ingest`] – ramp tables (CSV / GeoJSON) and panorama catalogs.
//! - [`store`] – the JSON-lines label store.
//! - [`imageio`] – PNG/JPEG decoding, the directory image provider, heatmap PNGs.
//! - [`report`] – evaluation outputs.
//! - [`process`] – a crop localizer that talks to an external process.
//! - [`config`] – the run configuration shared by every stage.
//! - [`pipeline`] – the stages and their on-disk layout.

pub mod config;
pub mod fsutil;
pub mod imageio;
pub mod ingest;
pub mod pipeline;
pub mod process;
pub mod report;
pub mod store;

pub use curbscape_core as core;
