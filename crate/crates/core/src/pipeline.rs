//! End-to-end tillage detection over one season of acquisitions.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::coherence::{
    consecutive_pairs, estimate_coherence, gate_pairs, Acquisition, CoherenceError, CoherenceMap, Window,
};
use crate::raster::{check_dims, BandRaster, RasterError};
use crate::tillage::{
    classify_tillage, compute_bsi, detect_change_events, remove_thin_regions, BareObservation, ChangeSeries,
    DetectionParams, TillageError, TillageMap,
};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Coherence(#[from] CoherenceError),
    #[error(transparent)]
    Tillage(#[from] TillageError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("no acquisition pair passed the {0} m baseline gate")]
    NoPairsAfterGating(f64),
}

/// Cloud-screened optical bands on the coherence-cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalBands {
    pub time: Timestamp,
    pub swir1: BandRaster,
    pub blue: BandRaster,
    pub red: BandRaster,
    pub nir: BandRaster,
}

#[derive(Debug, Clone)]
pub struct DetectionOutput {
    pub pairs_total: usize,
    pub gated_out: Vec<String>,
    pub coherence: Vec<CoherenceMap>,
    pub events: ChangeSeries,
    /// Labels before road removal.
    pub raw: TillageMap,
    pub map: TillageMap,
}

/// Pairs consecutive acquisitions, gates them by baseline, estimates
/// coherence, joins it with bare-soil status and classifies every cell.
pub fn detect_tillage(
    acquisitions: &[Acquisition],
    optical: &[OpticalBands],
    window: Window,
    params: &DetectionParams,
    year: i32,
) -> Result<DetectionOutput, PipelineError> {
    let pairs = consecutive_pairs(acquisitions)?;
    let pairs_total = pairs.len();
    let gated_out =
        pairs.iter().filter(|p| p.baseline_m() > params.max_baseline_m).map(|p| String::from(p.pair_id())).collect();
    let pairs = gate_pairs(pairs, params.max_baseline_m);
    if pairs.is_empty() {
        return Err(PipelineError::NoPairsAfterGating(params.max_baseline_m));
    }
    let coherence = pairs.iter().map(|p| estimate_coherence(p, window)).collect::<Result<Vec<_>, _>>()?;

    let grid = coherence[0].dims();
    let bare = optical
        .iter()
        .map(|o| {
            check_dims(grid, o.swir1.dims())?;
            let bsi = compute_bsi(&o.swir1, &o.blue, &o.red, &o.nir)?;
            Ok(BareObservation::from_bsi(o.time, &bsi, params.bsi_threshold))
        })
        .collect::<Result<Vec<_>, RasterError>>()?;

    let events = detect_change_events(&coherence, params.change_threshold, &bare, params.bare_lookback_s)?;
    let raw = classify_tillage(&events, year);
    let map = remove_thin_regions(&raw, params.min_region_dim);
    Ok(DetectionOutput { pairs_total, gated_out, coherence, events, raw, map })
}
