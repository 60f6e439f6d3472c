use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::classify::{TillageLabel, TillageMap};
use super::TillageError;
use crate::raster::{check_dims, BandRaster, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTabRow {
    pub code: i64,
    pub crop_name: String,
    pub till_pixels: u64,
    pub no_till_pixels: u64,
    pub till_pct: f64,
    pub no_till_pct: f64,
}

impl CrossTabRow {
    pub fn pixels(&self) -> u64 {
        self.till_pixels + self.no_till_pixels
    }
}

/// Till / no-till split per crop class.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CrossTab {
    pub rows: Vec<CrossTabRow>,
}

impl CrossTab {
    /// Till fraction over every classified pixel that carries a crop code.
    pub fn till_fraction(&self) -> Option<f64> {
        let till: u64 = self.rows.iter().map(|r| r.till_pixels).sum();
        let total: u64 = self.rows.iter().map(CrossTabRow::pixels).sum();
        (total > 0).then(|| till as f64 / total as f64)
    }

    pub fn row(&self, crop_name: &str) -> Option<&CrossTabRow> {
        self.rows.iter().find(|r| r.crop_name == crop_name)
    }
}

/// Crosstabulates tillage labels against a crop-code layer.
///
/// Pixels that are nodata in either grid are skipped. Codes missing from
/// `code_names` are reported as `"code <n>"`. Rows are ordered by descending
/// pixel count, then ascending code.
pub fn crop_crosstab(
    map: &TillageMap,
    crop_layer: &BandRaster,
    code_names: &BTreeMap<i64, String>,
) -> Result<CrossTab, TillageError> {
    check_dims(map.dims(), crop_layer.dims())?;
    let mut counts: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    for (i, label) in map.labels().iter().enumerate() {
        let Some(code) = crop_layer.value_at(i) else { continue };
        let code = libm::round(code) as i64;
        let entry = counts.entry(code).or_default();
        match label {
            TillageLabel::Till => entry.0 += 1,
            TillageLabel::NoTill => entry.1 += 1,
            TillageLabel::Nodata => {}
        }
    }
    let mut rows: Vec<CrossTabRow> = counts
        .into_iter()
        .filter(|(_, (t, n))| t + n > 0)
        .map(|(code, (till, no_till))| {
            let total = (till + no_till) as f64;
            let till_pct = 100.0 * till as f64 / total;
            CrossTabRow {
                code,
                crop_name: code_names.get(&code).cloned().unwrap_or_else(|| format!("code {code}")),
                till_pixels: till,
                no_till_pixels: no_till,
                till_pct,
                no_till_pct: 100.0 * no_till as f64 / total,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.pixels().cmp(&a.pixels()).then(a.code.cmp(&b.code)));
    Ok(CrossTab { rows })
}

/// Fraction of classified cropland pixels inside the county that are till.
///
/// 0 means no tillage detected anywhere, 1 means every cropland pixel was tilled.
pub fn county_tillage_scale(map: &TillageMap, county_mask: &Mask, cropland_mask: &Mask) -> Result<f64, TillageError> {
    check_dims(map.dims(), county_mask.dims())?;
    check_dims(map.dims(), cropland_mask.dims())?;
    let mut inside = 0u64;
    let mut till = 0u64;
    let mut classified = 0u64;
    for (i, label) in map.labels().iter().enumerate() {
        if !(county_mask.at(i) && cropland_mask.at(i)) {
            continue;
        }
        inside += 1;
        match label {
            TillageLabel::Till => {
                till += 1;
                classified += 1;
            }
            TillageLabel::NoTill => classified += 1,
            TillageLabel::Nodata => {}
        }
    }
    if inside == 0 {
        return Err(TillageError::EmptyCountyCropland);
    }
    if classified == 0 {
        return Err(TillageError::NoClassifiedCropland);
    }
    Ok(till as f64 / classified as f64)
}
