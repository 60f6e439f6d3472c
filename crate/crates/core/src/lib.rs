//! Allocation-only building blocks for county-scale soil-health analytics.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It covers the
//! pixel side of the system: single-band and complex rasters, interferometric
//! coherence, bare-soil gating and tillage classification, SOC raster
//! aggregation, a seeded synthetic-scene generator for end-to-end checks, and
//! the lexical retrieval index used to ground agent answers in literature.
//!
//! File formats, the county store, the agent loop and the CLI live in the
//! `soilcopilot` crate.
#![no_std]

extern crate alloc;

pub mod coherence;
pub mod knowledge;
pub mod pipeline;
pub mod raster;
pub mod soc;
pub mod synth;
pub mod tillage;
pub mod time;

pub use coherence::{AcquisitionPair, CoherenceMap, Window};
pub use raster::{BandRaster, Mask, Nodata, RasterError, SlcImage};
pub use tillage::{CrossTab, TillageLabel, TillageMap};
pub use time::Timestamp;
