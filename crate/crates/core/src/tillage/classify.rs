use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::events::ChangeSeries;
use crate::raster::{BandRaster, RasterError};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TillageLabel {
    NoTill,
    Till,
    Nodata,
}

impl TillageLabel {
    /// Raster code: 0 no-till, 1 till, NaN nodata.
    pub fn code(self) -> f64 {
        match self {
            TillageLabel::NoTill => 0.0,
            TillageLabel::Till => 1.0,
            TillageLabel::Nodata => f64::NAN,
        }
    }
}

/// Per-pixel tillage labels for one season.
#[derive(Debug, Clone, PartialEq)]
pub struct TillageMap {
    width: usize,
    height: usize,
    pixel_size_m: f64,
    year: i32,
    labels: Vec<TillageLabel>,
    event_times: Vec<Option<Timestamp>>,
}

impl TillageMap {
    pub fn new(
        width: usize,
        height: usize,
        pixel_size_m: f64,
        year: i32,
        labels: Vec<TillageLabel>,
    ) -> Result<Self, RasterError> {
        let n = width * height;
        if labels.len() != n {
            return Err(RasterError::SizeMismatch { width, height, expected: n, actual: labels.len() });
        }
        if !(pixel_size_m.is_finite() && pixel_size_m > 0.0) {
            return Err(RasterError::InvalidPixelSize(pixel_size_m));
        }
        Ok(Self { width, height, pixel_size_m, year, labels, event_times: alloc::vec![None; n] })
    }

    /// Reads a code raster (0 no-till, 1 till, nodata). Other codes are rejected.
    pub fn from_codes(codes: &BandRaster, year: i32) -> Result<Self, RasterError> {
        let labels = (0..codes.len())
            .map(|i| match codes.value_at(i) {
                None => Ok(TillageLabel::Nodata),
                Some(0.0) => Ok(TillageLabel::NoTill),
                Some(1.0) => Ok(TillageLabel::Till),
                Some(value) => Err(RasterError::InvalidCode { index: i, value }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(codes.width(), codes.height(), codes.pixel_size_m(), year, labels)
    }

    pub fn to_codes(&self) -> BandRaster {
        let values = self.labels.iter().map(|l| l.code()).collect();
        BandRaster::new(self.width, self.height, self.pixel_size_m, values).expect("label grid is consistent")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_size_m(&self) -> f64 {
        self.pixel_size_m
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn labels(&self) -> &[TillageLabel] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> TillageLabel {
        self.labels[y * self.width + x]
    }

    pub fn event_times(&self) -> &[Option<Timestamp>] {
        &self.event_times
    }

    pub fn set(&mut self, index: usize, label: TillageLabel, event: Option<Timestamp>) {
        self.labels[index] = label;
        self.event_times[index] = if label == TillageLabel::Till { event } else { None };
    }

    pub fn count(&self, label: TillageLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Labels each pixel from its change history.
///
/// A pixel is till when some pair is both changed and bare, unless every
/// valid pair is changed: persistent decorrelation (water, growing canopy,
/// unstable scatterers) is treated as a false positive and labelled no-till.
/// Pixels without a single valid pair are nodata. The event time of a till
/// pixel is the repeat time of its first changed-and-bare pair.
pub fn classify_tillage(events: &ChangeSeries, year: i32) -> TillageMap {
    let n = events.pixel_count();
    let mut map = TillageMap::new(
        events.width(),
        events.height(),
        events.pixel_size_m(),
        year,
        alloc::vec![TillageLabel::Nodata; n],
    )
    .expect("series grid is consistent");
    if events.pairs().is_empty() {
        return map;
    }
    for px in 0..n {
        let mut valid = 0usize;
        let mut changed = 0usize;
        let mut first_event = None;
        for (p, obs) in events.pixel_history(px).enumerate() {
            if !obs.valid {
                continue;
            }
            valid += 1;
            if obs.changed {
                changed += 1;
            }
            if obs.is_event() && first_event.is_none() {
                first_event = Some(events.pairs()[p].repeat_time);
            }
        }
        let label = if valid == 0 {
            TillageLabel::Nodata
        } else if changed == valid {
            TillageLabel::NoTill
        } else if first_event.is_some() {
            TillageLabel::Till
        } else {
            TillageLabel::NoTill
        };
        map.set(px, label, first_event);
    }
    map
}
