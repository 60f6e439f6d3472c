//! Raster containers shared by every pixel stage.
//!
//! All grids are row-major. [`BandRaster`] holds real samples with a nodata
//! sentinel, [`SlcImage`] holds complex single-look samples with an optional
//! validity mask, and [`Mask`] is a plain boolean grid.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use thiserror::Error;

use crate::time::Timestamp;

/// Default Sentinel-2 scene classification codes treated as unusable:
/// cloud shadow (3), cloud medium/high probability (8, 9) and thin cirrus (10).
pub const DEFAULT_SCL_EXCLUDED: [u16; 4] = [3, 8, 9, 10];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RasterError {
    #[error("payload holds {actual} samples but {width}x{height} needs {expected}")]
    SizeMismatch { width: usize, height: usize, expected: usize, actual: usize },
    #[error("grid is {actual_w}x{actual_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch { expected_w: usize, expected_h: usize, actual_w: usize, actual_h: usize },
    #[error("pixel size must be a positive finite number of meters, got {0}")]
    InvalidPixelSize(f64),
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("sample {index} holds unexpected code {value}")]
    InvalidCode { index: usize, value: f64 },
    #[error("window dimensions must be at least 1x1")]
    ZeroWindow,
    #[error("window {window_w}x{window_h} exceeds raster {width}x{height}")]
    WindowTooLarge { window_w: usize, window_h: usize, width: usize, height: usize },
}

pub(crate) fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<(), RasterError> {
    if expected == actual {
        Ok(())
    } else {
        Err(RasterError::DimensionMismatch {
            expected_w: expected.0,
            expected_h: expected.1,
            actual_w: actual.0,
            actual_h: actual.1,
        })
    }
}

fn check_len(width: usize, height: usize, actual: usize) -> Result<(), RasterError> {
    let expected = width * height;
    if expected == actual {
        Ok(())
    } else {
        Err(RasterError::SizeMismatch { width, height, expected, actual })
    }
}

fn check_pixel_size(pixel_size_m: f64) -> Result<(), RasterError> {
    if pixel_size_m.is_finite() && pixel_size_m > 0.0 {
        Ok(())
    } else {
        Err(RasterError::InvalidPixelSize(pixel_size_m))
    }
}

/// How invalid pixels are encoded in a [`BandRaster`].
///
/// NaN is always treated as nodata. A numeric sentinel additionally flags
/// every sample equal to it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Nodata {
    #[default]
    Nan,
    Value(f64),
}

impl Nodata {
    pub fn sentinel(self) -> f64 {
        match self {
            Nodata::Nan => f64::NAN,
            Nodata::Value(v) => v,
        }
    }

    #[inline]
    pub fn is_nodata(self, v: f64) -> bool {
        match self {
            Nodata::Nan => v.is_nan(),
            Nodata::Value(s) => v.is_nan() || v == s,
        }
    }
}

/// Single-band real raster.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRaster {
    width: usize,
    height: usize,
    pixel_size_m: f64,
    values: Vec<f64>,
    nodata: Nodata,
}

impl BandRaster {
    /// Builds a raster with NaN as the nodata encoding.
    pub fn new(width: usize, height: usize, pixel_size_m: f64, values: Vec<f64>) -> Result<Self, RasterError> {
        Self::with_nodata(width, height, pixel_size_m, values, Nodata::Nan)
    }

    /// Every sample must be finite or nodata under `nodata`.
    pub fn with_nodata(
        width: usize,
        height: usize,
        pixel_size_m: f64,
        values: Vec<f64>,
        nodata: Nodata,
    ) -> Result<Self, RasterError> {
        check_len(width, height, values.len())?;
        check_pixel_size(pixel_size_m)?;
        if let Some(index) = values.iter().position(|&v| !v.is_finite() && !nodata.is_nodata(v)) {
            return Err(RasterError::NonFinite { index });
        }
        Ok(Self { width, height, pixel_size_m, values, nodata })
    }

    pub fn filled(width: usize, height: usize, pixel_size_m: f64, value: f64) -> Result<Self, RasterError> {
        Self::new(width, height, pixel_size_m, vec![value; width * height])
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pixel_size_m(&self) -> f64 {
        self.pixel_size_m
    }

    pub fn nodata(&self) -> Nodata {
        self.nodata
    }

    /// Raw samples, nodata encoded with the sentinel.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn is_valid_index(&self, index: usize) -> bool {
        !self.nodata.is_nodata(self.values[index])
    }

    /// Valid sample at a flat index, `None` for nodata.
    #[inline]
    pub fn value_at(&self, index: usize) -> Option<f64> {
        let v = self.values[index];
        (!self.nodata.is_nodata(v)).then_some(v)
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        if x >= self.width || y >= self.height {
            return None;
        }
        self.value_at(y * self.width + x)
    }

    pub fn valid_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_valid_index(i)).count()
    }

    /// Minimum and maximum over valid pixels.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.values.iter().copied().filter(|&v| !self.nodata.is_nodata(v)).fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    pub(crate) fn set_nodata_at(&mut self, index: usize) {
        self.values[index] = self.nodata.sentinel();
    }
}

/// Boolean grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        check_len(width, height, bits.len())?;
        Ok(Self { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, bits: vec![value; width * height] }
    }

    /// Mask set inside the half-open box `[x0, x1) × [y0, y1)`, clipped to the grid.
    pub fn from_box(width: usize, height: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        let mut mask = Self::filled(width, height, false);
        for y in y0.min(height)..y1.min(height) {
            for x in x0.min(width)..x1.min(width) {
                mask.bits[y * width + x] = true;
            }
        }
        mask
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn at(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        let w = self.width;
        self.bits[y * w + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask, RasterError> {
        check_dims(self.dims(), other.dims())?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect();
        Ok(Mask { width: self.width, height: self.height, bits })
    }

    pub fn or(&self, other: &Mask) -> Result<Mask, RasterError> {
        check_dims(self.dims(), other.dims())?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect();
        Ok(Mask { width: self.width, height: self.height, bits })
    }
}

/// Single-look complex SAR scene.
///
/// Samples are always finite. Pixels without a usable sample are flagged in
/// the optional validity mask instead (their stored sample is zero).
#[derive(Debug, Clone, PartialEq)]
pub struct SlcImage {
    width: usize,
    height: usize,
    pixel_size_m: f64,
    samples: Vec<Complex64>,
    valid: Option<Mask>,
    acquisition_time: Timestamp,
}

impl SlcImage {
    pub fn new(
        width: usize,
        height: usize,
        pixel_size_m: f64,
        samples: Vec<Complex64>,
        acquisition_time: Timestamp,
    ) -> Result<Self, RasterError> {
        check_len(width, height, samples.len())?;
        check_pixel_size(pixel_size_m)?;
        if let Some(index) = samples.iter().position(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(RasterError::NonFinite { index });
        }
        Ok(Self { width, height, pixel_size_m, samples, valid: None, acquisition_time })
    }

    /// Attaches a validity mask. Samples outside it are zeroed.
    pub fn with_validity(mut self, valid: Mask) -> Result<Self, RasterError> {
        check_dims(self.dims(), valid.dims())?;
        for (s, &ok) in self.samples.iter_mut().zip(valid.bits()) {
            if !ok {
                *s = Complex64::new(0.0, 0.0);
            }
        }
        self.valid = Some(valid);
        Ok(self)
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

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn validity(&self) -> Option<&Mask> {
        self.valid.as_ref()
    }

    #[inline]
    pub fn is_valid_index(&self, index: usize) -> bool {
        self.valid.as_ref().is_none_or(|m| m.at(index))
    }

    pub fn acquisition_time(&self) -> Timestamp {
        self.acquisition_time
    }

    /// Copy with every sample multiplied by `factor`.
    pub fn scaled(&self, factor: Complex64) -> SlcImage {
        let mut out = self.clone();
        for s in &mut out.samples {
            *s *= factor;
        }
        out
    }
}

/// Marks pixels whose scene-classification code is in `excluded_classes` as nodata.
///
/// SCL pixels that are themselves nodata or not integral leave the raster untouched.
pub fn apply_scl_mask(
    raster: &BandRaster,
    scl: &BandRaster,
    excluded_classes: &[u16],
) -> Result<BandRaster, RasterError> {
    check_dims(raster.dims(), scl.dims())?;
    let mut out = raster.clone();
    if excluded_classes.is_empty() {
        return Ok(out);
    }
    for i in 0..out.len() {
        let Some(code) = scl.value_at(i) else { continue };
        if code < 0.0 || code > f64::from(u16::MAX) || code != libm::trunc(code) {
            continue;
        }
        if excluded_classes.contains(&(code as u16)) {
            out.set_nodata_at(i);
        }
    }
    Ok(out)
}

/// Block mean over non-overlapping `window_w × window_h` blocks.
///
/// Edge blocks that run past the raster are averaged over the pixels they do
/// cover. Blocks with no valid pixel become nodata. The output pixel size is
/// the area-equivalent side `pixel_size_m * sqrt(window_w * window_h)`.
pub fn window_mean(raster: &BandRaster, window_w: usize, window_h: usize) -> Result<BandRaster, RasterError> {
    if window_w == 0 || window_h == 0 {
        return Err(RasterError::ZeroWindow);
    }
    let (w, h) = raster.dims();
    if window_w > w || window_h > h {
        return Err(RasterError::WindowTooLarge { window_w, window_h, width: w, height: h });
    }
    let out_w = w.div_ceil(window_w);
    let out_h = h.div_ceil(window_h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for by in 0..out_h {
        let y_end = ((by + 1) * window_h).min(h);
        for bx in 0..out_w {
            let x_end = ((bx + 1) * window_w).min(w);
            let mut sum = 0.0;
            let mut n = 0usize;
            for y in by * window_h..y_end {
                let row = y * w;
                for x in bx * window_w..x_end {
                    if let Some(v) = raster.value_at(row + x) {
                        sum += v;
                        n += 1;
                    }
                }
            }
            out.push(if n == 0 { f64::NAN } else { sum / n as f64 });
        }
    }
    let pixel = raster.pixel_size_m() * libm::sqrt((window_w * window_h) as f64);
    BandRaster::new(out_w, out_h, pixel, out)
}
