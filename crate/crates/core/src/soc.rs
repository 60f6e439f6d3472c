//! County SOC from per-image prediction rasters.
//!
//! Predictions for each cloud-screened image are first averaged per pixel
//! into a yearly map, then averaged over the county's valid pixels. The
//! order matters when nodata differs between images.

use alloc::vec::Vec;

use thiserror::Error;

use crate::raster::{apply_scl_mask, check_dims, BandRaster, Mask, RasterError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SocError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("at least one prediction raster is required")]
    NoRasters,
    #[error("no valid prediction pixels inside the county")]
    NoValidPixels,
    #[error("predictor failed: {0}")]
    Predictor(alloc::string::String),
}

/// Per-pixel mean over the valid predictions of every image.
///
/// Values are summed in sorted order so the result does not depend on the
/// order of `predictions`.
pub fn yearly_mean(predictions: &[BandRaster]) -> Result<BandRaster, SocError> {
    let first = predictions.first().ok_or(SocError::NoRasters)?;
    for p in predictions {
        check_dims(first.dims(), p.dims())?;
    }
    let mut buf = Vec::with_capacity(predictions.len());
    let values = (0..first.len())
        .map(|i| {
            buf.clear();
            buf.extend(predictions.iter().filter_map(|p| p.value_at(i)));
            if buf.is_empty() {
                return f64::NAN;
            }
            buf.sort_by(f64::total_cmp);
            buf.iter().sum::<f64>() / buf.len() as f64
        })
        .collect();
    Ok(BandRaster::new(first.width(), first.height(), first.pixel_size_m(), values)?)
}

/// County SOC percentage from per-image prediction rasters.
pub fn aggregate_soc_rasters(predictions: &[BandRaster], county_mask: &Mask) -> Result<f64, SocError> {
    let yearly = yearly_mean(predictions)?;
    check_dims(yearly.dims(), county_mask.dims())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..yearly.len() {
        if !county_mask.at(i) {
            continue;
        }
        if let Some(v) = yearly.value_at(i) {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(SocError::NoValidPixels);
    }
    Ok(sum / n as f64)
}

/// An external SOC model run on one optical image.
///
/// Implementations receive the image's bands with cloud-affected pixels
/// already set to nodata and return a prediction raster on the county grid.
pub trait SocPredictor {
    fn predict(&self, bands: &[BandRaster]) -> Result<BandRaster, SocError>;
}

/// One optical acquisition: its bands and scene-classification layer.
#[derive(Debug, Clone)]
pub struct OpticalImage {
    pub bands: Vec<BandRaster>,
    pub scl: BandRaster,
}

/// Screens every image with its SCL layer, runs the predictor, and aggregates.
pub fn county_soc_from_images(
    images: &[OpticalImage],
    predictor: &dyn SocPredictor,
    excluded_scl: &[u16],
    county_mask: &Mask,
) -> Result<f64, SocError> {
    let predictions = images
        .iter()
        .map(|img| {
            let bands =
                img.bands.iter().map(|b| apply_scl_mask(b, &img.scl, excluded_scl)).collect::<Result<Vec<_>, _>>()?;
            predictor.predict(&bands)
        })
        .collect::<Result<Vec<_>, _>>()?;
    aggregate_soc_rasters(&predictions, county_mask)
}
