use alloc::string::String;
use alloc::vec::Vec;

use super::bsi::BareObservation;
use super::TillageError;
use crate::coherence::CoherenceMap;
use crate::raster::check_dims;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairInfo {
    pub pair_id: String,
    pub primary_time: Timestamp,
    pub repeat_time: Timestamp,
}

/// One pixel's status for one acquisition pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairObservation {
    /// Coherence was defined for this pixel and pair.
    pub valid: bool,
    pub changed: bool,
    pub bare: bool,
}

impl PairObservation {
    pub fn is_event(self) -> bool {
        self.changed && self.bare
    }
}

/// Per-pixel change and bare-soil flags along a shared pair timeline.
///
/// Observations are stored pair-major: all pixels of pair 0, then pair 1, ...
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeSeries {
    width: usize,
    height: usize,
    pixel_size_m: f64,
    pairs: Vec<PairInfo>,
    observations: Vec<PairObservation>,
}

impl ChangeSeries {
    /// Builds a series from raw flags, mostly for tests and replays.
    ///
    /// Panics if `observations.len() != pairs.len() * width * height`.
    pub fn from_parts(
        width: usize,
        height: usize,
        pixel_size_m: f64,
        pairs: Vec<PairInfo>,
        observations: Vec<PairObservation>,
    ) -> Self {
        assert_eq!(observations.len(), pairs.len() * width * height);
        Self { width, height, pixel_size_m, pairs, observations }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_size_m(&self) -> f64 {
        self.pixel_size_m
    }

    pub fn pairs(&self) -> &[PairInfo] {
        &self.pairs
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn observation(&self, pair: usize, pixel: usize) -> PairObservation {
        self.observations[pair * self.pixel_count() + pixel]
    }

    pub fn observation_mut(&mut self, pair: usize, pixel: usize) -> &mut PairObservation {
        let n = self.pixel_count();
        &mut self.observations[pair * n + pixel]
    }

    /// The pixel's observations in pair order.
    pub fn pixel_history(&self, pixel: usize) -> impl Iterator<Item = PairObservation> + '_ {
        (0..self.pairs.len()).map(move |p| self.observation(p, pixel))
    }
}

/// Joins coherence loss with bare-soil status per pixel and pair.
///
/// A pair is `changed` where its coherence magnitude is below
/// `change_threshold`; nodata coherence is never a change. Its `bare` flag
/// comes from the most recent optical observation, at or before the pair's
/// repeat time and at most `lookback_s` older, in which the pixel was observed.
/// Without such an observation the pixel is not bare for that pair.
///
/// Coherence maps must share one grid and be ordered by repeat time.
pub fn detect_change_events(
    coherence: &[CoherenceMap],
    change_threshold: f64,
    bare_series: &[BareObservation],
    lookback_s: i64,
) -> Result<ChangeSeries, TillageError> {
    let first = coherence.first().ok_or(TillageError::EmptyTimeline)?;
    let dims = first.dims();
    for (i, map) in coherence.iter().enumerate() {
        check_dims(dims, map.dims())?;
        if map.primary_time >= map.repeat_time {
            return Err(TillageError::TimelineMisaligned("pair primary time not before repeat time"));
        }
        if i > 0 && coherence[i - 1].repeat_time >= map.repeat_time {
            return Err(TillageError::TimelineMisaligned("coherence pairs not ordered by repeat time"));
        }
    }
    for obs in bare_series {
        check_dims(dims, obs.bare.dims())?;
        check_dims(dims, obs.valid.dims())?;
    }

    let mut optical: Vec<&BareObservation> = bare_series.iter().collect();
    optical.sort_by_key(|o| o.time);

    let n = dims.0 * dims.1;
    let mut observations = Vec::with_capacity(coherence.len() * n);
    for map in coherence {
        let horizon = map.repeat_time - lookback_s;
        // newest first among observations inside [repeat - lookback, repeat]
        let candidates: Vec<&BareObservation> =
            optical.iter().rev().filter(|o| o.time <= map.repeat_time && o.time >= horizon).copied().collect();
        for px in 0..n {
            let coh = map.magnitude.value_at(px);
            let valid = coh.is_some();
            let changed = coh.is_some_and(|c| c < change_threshold);
            let bare = candidates.iter().find(|o| o.valid.at(px)).is_some_and(|o| o.bare.at(px));
            observations.push(PairObservation { valid, changed, bare });
        }
    }

    let pairs = coherence
        .iter()
        .map(|m| PairInfo { pair_id: m.pair_id.clone(), primary_time: m.primary_time, repeat_time: m.repeat_time })
        .collect();
    Ok(ChangeSeries {
        width: dims.0,
        height: dims.1,
        pixel_size_m: first.magnitude.pixel_size_m(),
        pairs,
        observations,
    })
}
