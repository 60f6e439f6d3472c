use alloc::vec::Vec;

use crate::raster::{check_dims, BandRaster, Mask, RasterError};
use crate::time::Timestamp;

/// Conservative bare-soil cut-off on the Bare Soil Index.
pub const DEFAULT_BSI_THRESHOLD: f64 = 0.06;

/// Reflectance sums at or below this are too dark to classify.
pub const BSI_DENOMINATOR_EPS: f64 = 1e-6;

/// Bare Soil Index raster, `(SWIR1 + blue - (red + NIR)) / (SWIR1 + blue + red + NIR)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BsiRaster(pub BandRaster);

impl BsiRaster {
    pub fn raster(&self) -> &BandRaster {
        &self.0
    }

    pub fn into_raster(self) -> BandRaster {
        self.0
    }
}

pub fn compute_bsi(
    swir1: &BandRaster,
    blue: &BandRaster,
    red: &BandRaster,
    nir: &BandRaster,
) -> Result<BsiRaster, RasterError> {
    for band in [blue, red, nir] {
        check_dims(swir1.dims(), band.dims())?;
    }
    let values: Vec<f64> = (0..swir1.len())
        .map(|i| {
            let (Some(s), Some(b), Some(r), Some(n)) =
                (swir1.value_at(i), blue.value_at(i), red.value_at(i), nir.value_at(i))
            else {
                return f64::NAN;
            };
            let denom = s + b + r + n;
            if denom <= BSI_DENOMINATOR_EPS {
                f64::NAN
            } else {
                ((s + b) - (r + n)) / denom
            }
        })
        .collect();
    let (w, h) = swir1.dims();
    Ok(BsiRaster(BandRaster::new(w, h, swir1.pixel_size_m(), values)?))
}

/// True exactly where the BSI is valid and strictly above `threshold`.
pub fn bare_soil_mask(bsi: &BsiRaster, threshold: f64) -> Mask {
    let r = bsi.raster();
    let bits = (0..r.len()).map(|i| r.value_at(i).is_some_and(|v| v > threshold)).collect();
    Mask::new(r.width(), r.height(), bits).expect("mask matches raster dims")
}

/// Bare-soil status from one optical acquisition.
///
/// `valid` marks pixels that were observed (not cloud-masked, not dark).
#[derive(Debug, Clone, PartialEq)]
pub struct BareObservation {
    pub time: Timestamp,
    pub bare: Mask,
    pub valid: Mask,
}

impl BareObservation {
    pub fn from_bsi(time: Timestamp, bsi: &BsiRaster, threshold: f64) -> Self {
        let r = bsi.raster();
        let valid = (0..r.len()).map(|i| r.is_valid_index(i)).collect();
        Self {
            time,
            bare: bare_soil_mask(bsi, threshold),
            valid: Mask::new(r.width(), r.height(), valid).expect("mask matches raster dims"),
        }
    }

    /// Every pixel observed and equal to `bare`.
    pub fn uniform(time: Timestamp, width: usize, height: usize, bare: bool) -> Self {
        Self { time, bare: Mask::filled(width, height, bare), valid: Mask::filled(width, height, true) }
    }
}
