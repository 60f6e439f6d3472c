//! Scene configs for the synthetic generator and on-disk scene manifests.
//!
//! A scene config describes fields on a coherence-cell grid:
//!
//! ```json
//! {"grid": {"width": 40, "height": 24}, "window": {"width": 10, "height": 20},
//!  "acquisition_dates": ["2019-08-28", "2019-09-09"], "noise_coherence": 0.9,
//!  "tilled_coherence": 0.1, "seed": 7,
//!  "fields": [{"name": "field 2", "bbox": [12, 2, 20, 10], "till_date": "2019-09-15"}]}
//! ```
//!
//! `synth-scene` renders it into SLC and optical rasters plus a
//! `manifest.json` that `detect-till` reads back.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use soilcopilot_core::coherence::{Acquisition, Window};
use soilcopilot_core::pipeline::OpticalBands;
use soilcopilot_core::synth::{generate_scene, CellBox, FieldSpec, SceneError, SceneSpec, SyntheticScene};
use soilcopilot_core::{Mask, TillageLabel, TillageMap, Timestamp};
use thiserror::Error;

use crate::formats::{self, format_date, parse_time, Dtype, FormatError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum SceneFileError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub name: String,
    /// `[x0, y0, x1, y1)` in cells.
    pub bbox: [usize; 4],
    #[serde(default)]
    pub till_date: Option<String>,
    #[serde(default)]
    pub persistent_change: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub grid: Dims,
    #[serde(default = "default_window")]
    pub window: Dims,
    #[serde(default = "default_pixel_size")]
    pub pixel_size_m: f64,
    #[serde(default = "default_noise")]
    pub noise_coherence: f64,
    #[serde(default = "default_tilled")]
    pub tilled_coherence: f64,
    pub acquisition_dates: Vec<String>,
    /// Perpendicular offset of each acquisition; zeros when omitted.
    #[serde(default)]
    pub baselines_m: Vec<f64>,
    /// Optical dates; the acquisition dates when omitted.
    #[serde(default)]
    pub optical_dates: Option<Vec<String>>,
    pub fields: Vec<FieldConfig>,
    #[serde(default)]
    pub background_bare: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub year: Option<i32>,
}

fn default_window() -> Dims {
    let w = Window::default();
    Dims { width: w.width, height: w.height }
}

fn default_pixel_size() -> f64 {
    5.0
}

fn default_noise() -> f64 {
    0.9
}

fn default_tilled() -> f64 {
    0.1
}

impl SceneConfig {
    pub fn from_file(path: &Path) -> Result<Self, SceneFileError> {
        let text =
            fs::read_to_string(path).map_err(|source| SceneFileError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text)
            .map_err(|e| SceneFileError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn window(&self) -> Window {
        Window::new(self.window.width, self.window.height)
    }

    pub fn to_spec(&self) -> Result<SceneSpec, SceneFileError> {
        let acq_times = self.acquisition_dates.iter().map(|d| parse_time(d)).collect::<Result<Vec<_>, _>>()?;
        let baselines = if self.baselines_m.is_empty() {
            vec![0.0; acq_times.len()]
        } else if self.baselines_m.len() == acq_times.len() {
            self.baselines_m.clone()
        } else {
            return Err(SceneFileError::Invalid(format!(
                "{} baselines for {} acquisition dates",
                self.baselines_m.len(),
                acq_times.len()
            )));
        };
        let optical_times = match &self.optical_dates {
            Some(d) => d.iter().map(|d| parse_time(d)).collect::<Result<Vec<_>, _>>()?,
            None => acq_times.clone(),
        };
        let fields = self
            .fields
            .iter()
            .map(|f| {
                let [x0, y0, x1, y1] = f.bbox;
                Ok(FieldSpec {
                    name: f.name.clone(),
                    bbox: CellBox { x0, y0, x1, y1 },
                    till_time: f.till_date.as_deref().map(parse_time).transpose()?,
                    persistent_change: f.persistent_change,
                })
            })
            .collect::<Result<Vec<_>, FormatError>>()?;
        Ok(SceneSpec {
            grid_width: self.grid.width,
            grid_height: self.grid.height,
            window: self.window(),
            pixel_size_m: self.pixel_size_m,
            noise_coherence: self.noise_coherence,
            tilled_coherence: self.tilled_coherence,
            acquisitions: acq_times.into_iter().zip(baselines).collect(),
            optical_times,
            fields,
            background_bare: self.background_bare,
            seed: self.seed,
        })
    }

    /// Detection year: explicit, or the year of the first acquisition.
    pub fn year(&self) -> i32 {
        self.year.unwrap_or_else(|| {
            self.acquisition_dates.first().and_then(|d| d.get(..4)).and_then(|y| y.parse().ok()).unwrap_or(0)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestAcquisition {
    pub slc: String,
    pub time: String,
    pub baseline_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestOptical {
    pub time: String,
    pub swir1: String,
    pub blue: String,
    pub red: String,
    pub nir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestField {
    pub name: String,
    pub bbox: [usize; 4],
}

/// Raster paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub year: i32,
    pub window: Dims,
    pub acquisitions: Vec<ManifestAcquisition>,
    pub optical: Vec<ManifestOptical>,
    #[serde(default)]
    pub fields: Vec<ManifestField>,
}

/// What the generator injected, written next to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub width: usize,
    pub height: usize,
    pub fields: Vec<TruthField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthField {
    pub name: String,
    pub bbox: [usize; 4],
    pub till_date: Option<String>,
    /// Index of the pair spanning the till date.
    pub event_pair: Option<usize>,
    pub persistent_change: bool,
}

pub struct LoadedScene {
    pub manifest: SceneManifest,
    pub acquisitions: Vec<Acquisition>,
    pub optical: Vec<OpticalBands>,
}

/// Renders `config` into `out_dir`.
pub fn write_scene(config: &SceneConfig, out_dir: &Path) -> Result<(SceneManifest, SyntheticScene), SceneFileError> {
    let spec = config.to_spec()?;
    let scene = generate_scene(&spec)?;
    fs::create_dir_all(out_dir).map_err(|source| SceneFileError::Io { path: out_dir.to_path_buf(), source })?;

    let mut acquisitions = Vec::new();
    for (k, a) in scene.acquisitions.iter().enumerate() {
        let name = format!("slc_{k:02}");
        formats::write_slc(&out_dir.join(&name), &a.image, Some(a.baseline_m), Dtype::C64le)?;
        acquisitions.push(ManifestAcquisition {
            slc: name,
            time: formats::format_time(a.image.acquisition_time()),
            baseline_m: a.baseline_m,
        });
    }
    let mut optical = Vec::new();
    for (k, o) in scene.optical.iter().enumerate() {
        let mut names = BTreeMap::new();
        for (band, r) in [("swir1", &o.swir1), ("blue", &o.blue), ("red", &o.red), ("nir", &o.nir)] {
            let name = format!("optical_{k:02}_{band}");
            let mut meta = BTreeMap::new();
            meta.insert("acquisition_time".to_string(), formats::format_time(o.time));
            formats::write_band(&out_dir.join(&name), r, Dtype::F32le, meta)?;
            names.insert(band, name);
        }
        optical.push(ManifestOptical {
            time: formats::format_time(o.time),
            swir1: names["swir1"].clone(),
            blue: names["blue"].clone(),
            red: names["red"].clone(),
            nir: names["nir"].clone(),
        });
    }
    let manifest = SceneManifest {
        year: config.year(),
        window: config.window,
        acquisitions,
        optical,
        fields: config.fields.iter().map(|f| ManifestField { name: f.name.clone(), bbox: f.bbox }).collect(),
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;

    let times: Vec<Timestamp> = spec.acquisitions.iter().map(|a| a.0).collect();
    let mut sorted = times.clone();
    sorted.sort();
    let truth = TruthFile {
        width: spec.grid_width,
        height: spec.grid_height,
        fields: config
            .fields
            .iter()
            .zip(&spec.fields)
            .map(|(c, s)| TruthField {
                name: c.name.clone(),
                bbox: c.bbox,
                till_date: s.till_time.map(format_date),
                event_pair: s.till_time.and_then(|t| soilcopilot_core::synth::pair_index_for(&sorted, t)),
                persistent_change: c.persistent_change,
            })
            .collect(),
    };
    write_json(&out_dir.join("truth.json"), &truth)?;
    Ok((manifest, scene))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SceneFileError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|source| SceneFileError::Io { path: path.to_path_buf(), source })
}

pub fn load_manifest(path: &Path) -> Result<LoadedScene, SceneFileError> {
    let text = fs::read_to_string(path).map_err(|source| SceneFileError::Io { path: path.to_path_buf(), source })?;
    let manifest: SceneManifest = serde_json::from_str(&text)
        .map_err(|e| SceneFileError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let acquisitions = manifest
        .acquisitions
        .iter()
        .map(|a| {
            let (image, _) = formats::read_slc(&dir.join(&a.slc))?;
            Ok(Acquisition { image: Arc::new(image), baseline_m: a.baseline_m })
        })
        .collect::<Result<Vec<_>, SceneFileError>>()?;
    let optical = manifest
        .optical
        .iter()
        .map(|o| {
            let band = |name: &str| formats::read_band(&dir.join(name)).map(|(r, _)| r);
            Ok(OpticalBands {
                time: parse_time(&o.time)?,
                swir1: band(&o.swir1)?,
                blue: band(&o.blue)?,
                red: band(&o.red)?,
                nir: band(&o.nir)?,
            })
        })
        .collect::<Result<Vec<_>, SceneFileError>>()?;
    Ok(LoadedScene { manifest, acquisitions, optical })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub name: String,
    pub label: TillageLabel,
    pub till_cells: usize,
    pub cells: usize,
    /// Earliest event date among till cells.
    pub event_date: Option<String>,
}

/// Majority label per field box: till when at least half its cells are till.
pub fn summarize_fields(map: &TillageMap, fields: &[ManifestField]) -> Vec<FieldSummary> {
    fields
        .iter()
        .map(|f| {
            let [x0, y0, x1, y1] = f.bbox;
            let mut till = 0;
            let mut cells = 0;
            let mut first: Option<Timestamp> = None;
            let x1 = x1.min(map.width());
            let y1 = y1.min(map.height());
            for y in y0..y1 {
                for x in x0..x1 {
                    cells += 1;
                    let i = y * map.width() + x;
                    if map.labels()[i] == TillageLabel::Till {
                        till += 1;
                        if let Some(t) = map.event_times()[i] {
                            first = Some(first.map_or(t, |f| f.min(t)));
                        }
                    }
                }
            }
            let label = if cells > 0 && 2 * till >= cells {
                TillageLabel::Till
            } else if cells == 0 {
                TillageLabel::Nodata
            } else {
                TillageLabel::NoTill
            };
            FieldSummary { name: f.name.clone(), label, till_cells: till, cells, event_date: first.map(format_date) }
        })
        .collect()
}

/// Cells covered by any field box.
pub fn field_mask(width: usize, height: usize, fields: &[ManifestField]) -> Mask {
    let mut m = Mask::filled(width, height, false);
    for f in fields {
        let [x0, y0, x1, y1] = f.bbox;
        for y in y0..y1.min(height) {
            for x in x0..x1.min(width) {
                m.set(x, y, true);
            }
        }
    }
    m
}
