//! Raster files: a JSON header next to a little-endian binary payload.
//!
//! `field.json` describes the grid and `field.bin` holds `width * height`
//! samples in row-major order:
//!
//! ```json
//! {"width": 4, "height": 2, "dtype": "f64le", "pixel_size_m": 10.0,
//!  "nodata": "nan", "metadata": {"acquisition_time": "2019-09-09T00:00:00Z"}}
//! ```
//!
//! Band dtypes are `f32le` and `f64le`; complex SLC samples use `c64le`
//! (two `f32`) or `c128le` (two `f64`). Invalid SLC samples are stored as NaN.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use soilcopilot_core::tillage::{BsiRaster, TillageMap};
use soilcopilot_core::{BandRaster, Mask, Nodata, RasterError, SlcImage, Timestamp};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: bad header: {source}")]
    Header { path: PathBuf, source: serde_json::Error },
    #[error("{path}: payload has {actual} bytes, header implies {expected}")]
    PayloadSize { path: PathBuf, expected: usize, actual: usize },
    #[error("{path}: dtype {dtype} cannot hold {wanted}")]
    WrongDtype { path: PathBuf, dtype: &'static str, wanted: &'static str },
    #[error("{path}: metadata {key}: {message}")]
    Metadata { path: PathBuf, key: String, message: String },
    #[error("{path}: {source}")]
    Raster { path: PathBuf, source: RasterError },
    #[error("invalid time {0:?}; expected RFC 3339 or YYYY-MM-DD")]
    Time(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32le,
    F64le,
    C64le,
    C128le,
}

impl Dtype {
    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32le => "f32le",
            Dtype::F64le => "f64le",
            Dtype::C64le => "c64le",
            Dtype::C128le => "c128le",
        }
    }

    pub fn sample_bytes(self) -> usize {
        match self {
            Dtype::F32le => 4,
            Dtype::F64le | Dtype::C64le => 8,
            Dtype::C128le => 16,
        }
    }

    fn is_complex(self) -> bool {
        matches!(self, Dtype::C64le | Dtype::C128le)
    }
}

/// `"nan"` or a numeric sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodataSpec {
    Value(f64),
    Named(NanTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NanTag {
    Nan,
}

impl From<Nodata> for NodataSpec {
    fn from(n: Nodata) -> Self {
        match n {
            Nodata::Nan => NodataSpec::Named(NanTag::Nan),
            Nodata::Value(v) => NodataSpec::Value(v),
        }
    }
}

impl From<NodataSpec> for Nodata {
    fn from(n: NodataSpec) -> Self {
        match n {
            NodataSpec::Named(NanTag::Nan) => Nodata::Nan,
            NodataSpec::Value(v) => Nodata::Value(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub width: usize,
    pub height: usize,
    pub dtype: Dtype,
    pub pixel_size_m: f64,
    #[serde(default = "default_nodata")]
    pub nodata: NodataSpec,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

fn default_nodata() -> NodataSpec {
    NodataSpec::Named(NanTag::Nan)
}

/// Header and payload paths for `path`, which may name either file or the bare stem.
pub fn raster_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut header = stem.clone().into_os_string();
    header.push(".json");
    let mut payload = stem.into_os_string();
    payload.push(".bin");
    (header.into(), payload.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_pair(path: &Path, header: &RasterHeader, payload: &[u8]) -> Result<(), FormatError> {
    let (hp, bp) = raster_paths(path);
    write_atomic(&bp, payload)?;
    let mut json = serde_json::to_vec_pretty(header).expect("header serializes");
    json.push(b'\n');
    write_atomic(&hp, &json)
}

pub fn read_header(path: &Path) -> Result<RasterHeader, FormatError> {
    let (hp, _) = raster_paths(path);
    let text = fs::read(&hp).map_err(io_err(&hp))?;
    serde_json::from_slice(&text).map_err(|source| FormatError::Header { path: hp, source })
}

fn read_payload(path: &Path, header: &RasterHeader) -> Result<Vec<u8>, FormatError> {
    let (_, bp) = raster_paths(path);
    let bytes = fs::read(&bp).map_err(io_err(&bp))?;
    let expected = header.width * header.height * header.dtype.sample_bytes();
    if bytes.len() != expected {
        return Err(FormatError::PayloadSize { path: bp, expected, actual: bytes.len() });
    }
    Ok(bytes)
}

fn decode_reals(bytes: &[u8], dtype: Dtype) -> Vec<f64> {
    match dtype {
        Dtype::F32le | Dtype::C64le => {
            bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect()
        }
        Dtype::F64le | Dtype::C128le => {
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
        }
    }
}

fn encode_reals(values: impl Iterator<Item = f64>, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        match dtype {
            Dtype::F32le | Dtype::C64le => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64le | Dtype::C128le => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

/// Writes a band raster. `dtype` must be `f32le` or `f64le`.
pub fn write_band(
    path: &Path,
    raster: &BandRaster,
    dtype: Dtype,
    metadata: BTreeMap<String, String>,
) -> Result<(), FormatError> {
    if dtype.is_complex() {
        return Err(FormatError::WrongDtype {
            path: path.to_path_buf(),
            dtype: dtype.as_str(),
            wanted: "real samples",
        });
    }
    let header = RasterHeader {
        width: raster.width(),
        height: raster.height(),
        dtype,
        pixel_size_m: raster.pixel_size_m(),
        nodata: raster.nodata().into(),
        metadata,
    };
    write_pair(path, &header, &encode_reals(raster.values().iter().copied(), dtype))
}

pub fn read_band(path: &Path) -> Result<(BandRaster, BTreeMap<String, String>), FormatError> {
    let header = read_header(path)?;
    if header.dtype.is_complex() {
        return Err(FormatError::WrongDtype {
            path: path.to_path_buf(),
            dtype: header.dtype.as_str(),
            wanted: "real samples",
        });
    }
    let values = decode_reals(&read_payload(path, &header)?, header.dtype);
    let raster =
        BandRaster::with_nodata(header.width, header.height, header.pixel_size_m, values, header.nodata.into())
            .map_err(|source| FormatError::Raster { path: path.to_path_buf(), source })?;
    Ok((raster, header.metadata))
}

pub const META_ACQUISITION_TIME: &str = "acquisition_time";
pub const META_BASELINE_M: &str = "baseline_m";

/// Writes an SLC image; `baseline_m` is recorded in the metadata when given.
pub fn write_slc(path: &Path, image: &SlcImage, baseline_m: Option<f64>, dtype: Dtype) -> Result<(), FormatError> {
    if !dtype.is_complex() {
        return Err(FormatError::WrongDtype {
            path: path.to_path_buf(),
            dtype: dtype.as_str(),
            wanted: "complex samples",
        });
    }
    let mut metadata = BTreeMap::new();
    metadata.insert(META_ACQUISITION_TIME.to_string(), format_time(image.acquisition_time()));
    if let Some(b) = baseline_m {
        metadata.insert(META_BASELINE_M.to_string(), b.to_string());
    }
    let header = RasterHeader {
        width: image.width(),
        height: image.height(),
        dtype,
        pixel_size_m: image.pixel_size_m(),
        nodata: NodataSpec::Named(NanTag::Nan),
        metadata,
    };
    let values = image.samples().iter().enumerate().flat_map(|(i, s)| {
        if image.is_valid_index(i) {
            [s.re, s.im]
        } else {
            [f64::NAN, f64::NAN]
        }
    });
    write_pair(path, &header, &encode_reals(values, dtype))
}

/// Reads an SLC image and its baseline offset (0 when not recorded).
pub fn read_slc(path: &Path) -> Result<(SlcImage, f64), FormatError> {
    let header = read_header(path)?;
    if !header.dtype.is_complex() {
        return Err(FormatError::WrongDtype {
            path: path.to_path_buf(),
            dtype: header.dtype.as_str(),
            wanted: "complex samples",
        });
    }
    let meta_err =
        |key: &str, message: String| FormatError::Metadata { path: path.to_path_buf(), key: key.to_string(), message };
    let time = header
        .metadata
        .get(META_ACQUISITION_TIME)
        .ok_or_else(|| meta_err(META_ACQUISITION_TIME, "missing".into()))
        .and_then(|t| parse_time(t).map_err(|e| meta_err(META_ACQUISITION_TIME, e.to_string())))?;
    let baseline = match header.metadata.get(META_BASELINE_M) {
        Some(b) => b.trim().parse::<f64>().map_err(|e| meta_err(META_BASELINE_M, e.to_string()))?,
        None => 0.0,
    };
    let reals = decode_reals(&read_payload(path, &header)?, header.dtype);
    let mut valid = Vec::with_capacity(reals.len() / 2);
    let samples: Vec<Complex64> = reals
        .chunks_exact(2)
        .map(|c| {
            let ok = c[0].is_finite() && c[1].is_finite();
            valid.push(ok);
            if ok {
                Complex64::new(c[0], c[1])
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let raster_err = |source| FormatError::Raster { path: path.to_path_buf(), source };
    let mut image =
        SlcImage::new(header.width, header.height, header.pixel_size_m, samples, time).map_err(raster_err)?;
    if valid.iter().any(|v| !v) {
        let mask = Mask::new(header.width, header.height, valid).map_err(raster_err)?;
        image = image.with_validity(mask).map_err(raster_err)?;
    }
    Ok((image, baseline))
}

pub const META_YEAR: &str = "year";
pub const META_KIND: &str = "kind";

/// Writes till (1) / no-till (0) / nodata (NaN) codes as `f32le`.
pub fn write_tillage(path: &Path, map: &TillageMap) -> Result<(), FormatError> {
    let mut metadata = BTreeMap::new();
    metadata.insert(META_KIND.to_string(), "tillage".to_string());
    metadata.insert(META_YEAR.to_string(), map.year().to_string());
    write_band(path, &map.to_codes(), Dtype::F32le, metadata)
}

pub fn read_tillage(path: &Path) -> Result<TillageMap, FormatError> {
    let (codes, meta) = read_band(path)?;
    let year = match meta.get(META_YEAR) {
        Some(y) => y.trim().parse::<i32>().map_err(|e| FormatError::Metadata {
            path: path.to_path_buf(),
            key: META_YEAR.to_string(),
            message: e.to_string(),
        })?,
        None => 0,
    };
    TillageMap::from_codes(&codes, year).map_err(|source| FormatError::Raster { path: path.to_path_buf(), source })
}

pub fn write_bsi(path: &Path, bsi: &BsiRaster) -> Result<(), FormatError> {
    let mut metadata = BTreeMap::new();
    metadata.insert(META_KIND.to_string(), "bsi".to_string());
    write_band(path, bsi.raster(), Dtype::F64le, metadata)
}

/// RFC 3339 timestamps, or a bare `YYYY-MM-DD` date at midnight UTC.
pub fn parse_time(s: &str) -> Result<Timestamp, FormatError> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(Timestamp(dt.timestamp()));
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(Timestamp(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp()));
    }
    Err(FormatError::Time(s.to_string()))
}

pub fn format_time(t: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(t.secs(), 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.secs().to_string())
}

pub fn format_date(t: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(t.secs(), 0)
        .map(|d| d.format("%Y-%m-%d").to_string())
        .unwrap_or_else(|| t.secs().to_string())
}
