//! Tillage detection from coherence loss during bare-soil windows.
//!
//! The flow is: per-date Bare Soil Index → bare masks; per-pair coherence →
//! change flags; the two are joined per pixel into a [`ChangeSeries`], which
//! [`classify_tillage`] turns into a [`TillageMap`]. Thin till components are
//! then treated as roads and dropped, and the map can be summarized per crop
//! or per county.

mod bsi;
mod classify;
mod events;
mod regions;
mod summary;

pub use bsi::{bare_soil_mask, compute_bsi, BareObservation, BsiRaster, BSI_DENOMINATOR_EPS, DEFAULT_BSI_THRESHOLD};
pub use classify::{classify_tillage, TillageLabel, TillageMap};
pub use events::{detect_change_events, ChangeSeries, PairInfo, PairObservation};
pub use regions::{remove_thin_regions, DEFAULT_MIN_REGION_DIM};
pub use summary::{county_tillage_scale, crop_crosstab, CrossTab, CrossTabRow};

use thiserror::Error;

use crate::raster::RasterError;
use crate::time::SECONDS_PER_DAY;

/// Coherence magnitude below which a pair counts as changed.
pub const DEFAULT_CHANGE_THRESHOLD: f64 = 0.3;

/// How far back from a pair's repeat time an optical acquisition may be used.
pub const DEFAULT_BARE_LOOKBACK_S: i64 = 20 * SECONDS_PER_DAY;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TillageError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("no coherence pairs to analyse")]
    EmptyTimeline,
    #[error("timeline misaligned: {0}")]
    TimelineMisaligned(&'static str),
    #[error("county and cropland masks do not intersect")]
    EmptyCountyCropland,
    #[error("no classified pixels inside county cropland")]
    NoClassifiedCropland,
}

/// Thresholds used by the detection pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionParams {
    pub bsi_threshold: f64,
    pub change_threshold: f64,
    pub max_baseline_m: f64,
    pub min_region_dim: usize,
    pub bare_lookback_s: i64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            bsi_threshold: DEFAULT_BSI_THRESHOLD,
            change_threshold: DEFAULT_CHANGE_THRESHOLD,
            max_baseline_m: crate::coherence::DEFAULT_MAX_BASELINE_M,
            min_region_dim: DEFAULT_MIN_REGION_DIM,
            bare_lookback_s: DEFAULT_BARE_LOOKBACK_S,
        }
    }
}
