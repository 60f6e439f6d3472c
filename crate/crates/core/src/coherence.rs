//! Interferometric coherence between two co-registered SLC acquisitions.
//!
//! For each averaging window the expectations of the normalized
//! cross-correlation are replaced by block means:
//!
//! ```text
//! gamma = mean(s1 * conj(s2)) / sqrt(mean(|s1|^2) * mean(|s2|^2))
//! ```
//!
//! The coherence magnitude is `|gamma|` and the interferometric phase is
//! `arg(gamma)`. The primary image is the unconjugated factor, so a repeat
//! image equal to `c * primary` yields phase `-arg(c)`.
//!
//! Only samples valid in *both* images contribute to a window, which keeps the
//! estimator bounded by one (Cauchy-Schwarz on the common sample set).

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::raster::{check_dims, BandRaster, RasterError, SlcImage};
use crate::time::Timestamp;

/// Pair baseline limit above which geometric decorrelation dominates.
pub const DEFAULT_MAX_BASELINE_M: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoherenceError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("baseline must be a finite non-negative distance, got {0}")]
    InvalidBaseline(f64),
    #[error("primary acquisition ({primary}) must precede repeat acquisition ({repeat})")]
    TimeOrder { primary: Timestamp, repeat: Timestamp },
}

/// Averaging window in SLC pixels.
///
/// The default 10 x 20 window pools 200 looks. At 5 m x 20 m SLC spacing a
/// 50 m x 50 m ground region is 10 x 2.5 pixels; use [`Window::for_ground_extent`]
/// to derive a window from a ground footprint instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub width: usize,
    pub height: usize,
}

impl Default for Window {
    fn default() -> Self {
        Self { width: 10, height: 20 }
    }
}

impl Window {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    /// Smallest window covering `extent_m` on both axes for the given pixel spacing.
    pub fn for_ground_extent(extent_m: f64, pixel_w_m: f64, pixel_h_m: f64) -> Self {
        let w = libm::ceil(extent_m / pixel_w_m).max(1.0) as usize;
        let h = libm::ceil(extent_m / pixel_h_m).max(1.0) as usize;
        Self { width: w, height: h }
    }

    pub fn samples(&self) -> usize {
        self.width * self.height
    }
}

/// Two acquisitions of the same footprint plus their baseline.
#[derive(Debug, Clone)]
pub struct AcquisitionPair {
    primary: Arc<SlcImage>,
    repeat: Arc<SlcImage>,
    baseline_m: f64,
    pair_id: String,
}

impl AcquisitionPair {
    pub fn new(
        primary: Arc<SlcImage>,
        repeat: Arc<SlcImage>,
        baseline_m: f64,
        pair_id: impl Into<String>,
    ) -> Result<Self, CoherenceError> {
        check_dims(primary.dims(), repeat.dims())?;
        if !baseline_m.is_finite() || baseline_m < 0.0 {
            return Err(CoherenceError::InvalidBaseline(baseline_m));
        }
        if primary.acquisition_time() >= repeat.acquisition_time() {
            return Err(CoherenceError::TimeOrder {
                primary: primary.acquisition_time(),
                repeat: repeat.acquisition_time(),
            });
        }
        Ok(Self { primary, repeat, baseline_m, pair_id: pair_id.into() })
    }

    pub fn primary(&self) -> &SlcImage {
        &self.primary
    }

    pub fn repeat(&self) -> &SlcImage {
        &self.repeat
    }

    pub fn baseline_m(&self) -> f64 {
        self.baseline_m
    }

    pub fn pair_id(&self) -> &str {
        &self.pair_id
    }
}

/// An acquisition placed on the orbit-baseline axis.
///
/// `baseline_m` is the acquisition's perpendicular offset from a common
/// reference orbit; a pair's baseline is the difference of the two offsets.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub image: Arc<SlcImage>,
    pub baseline_m: f64,
}

/// Pairs each acquisition with the next one in time.
///
/// Pair ids are `"<primary secs>_<repeat secs>"`.
pub fn consecutive_pairs(acquisitions: &[Acquisition]) -> Result<Vec<AcquisitionPair>, CoherenceError> {
    let mut ordered: Vec<&Acquisition> = acquisitions.iter().collect();
    ordered.sort_by_key(|a| a.image.acquisition_time());
    ordered
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let id = format!("{}_{}", a.image.acquisition_time().secs(), b.image.acquisition_time().secs());
            AcquisitionPair::new(a.image.clone(), b.image.clone(), libm::fabs(b.baseline_m - a.baseline_m), id)
        })
        .collect()
}

/// Keeps the pairs whose baseline is at most `max_baseline_m`, preserving order.
pub fn gate_pairs(pairs: impl IntoIterator<Item = AcquisitionPair>, max_baseline_m: f64) -> Vec<AcquisitionPair> {
    pairs.into_iter().filter(|p| p.baseline_m <= max_baseline_m).collect()
}

/// Coherence magnitude and phase per averaging cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceMap {
    pub magnitude: BandRaster,
    pub phase: BandRaster,
    pub window: Window,
    pub pair_id: String,
    pub primary_time: Timestamp,
    pub repeat_time: Timestamp,
}

impl CoherenceMap {
    pub fn dims(&self) -> (usize, usize) {
        self.magnitude.dims()
    }
}

/// Wraps an angle from `atan2` into `(-pi, pi]`.
#[inline]
fn wrap_phase(phase: f64) -> f64 {
    if phase <= -PI {
        phase + 2.0 * PI
    } else {
        phase
    }
}

/// Estimates coherence over non-overlapping windows.
///
/// Partial windows at the right and bottom edges are kept. A window with no
/// jointly valid sample, or with zero power in either image, is nodata.
pub fn estimate_coherence(pair: &AcquisitionPair, window: Window) -> Result<CoherenceMap, CoherenceError> {
    if window.width == 0 || window.height == 0 {
        return Err(RasterError::ZeroWindow.into());
    }
    let a = pair.primary();
    let b = pair.repeat();
    check_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    let out_w = w.div_ceil(window.width);
    let out_h = h.div_ceil(window.height);

    let mut magnitude = Vec::with_capacity(out_w * out_h);
    let mut phase = Vec::with_capacity(out_w * out_h);
    let sa = a.samples();
    let sb = b.samples();
    let joint_mask = a.validity().is_some() || b.validity().is_some();

    for by in 0..out_h {
        let y_end = ((by + 1) * window.height).min(h);
        for bx in 0..out_w {
            let x_end = ((bx + 1) * window.width).min(w);
            let mut cross = Complex64::new(0.0, 0.0);
            let mut pa = 0.0;
            let mut pb = 0.0;
            let mut n = 0usize;
            for y in by * window.height..y_end {
                let row = y * w;
                for i in row + bx * window.width..row + x_end {
                    if joint_mask && !(a.is_valid_index(i) && b.is_valid_index(i)) {
                        continue;
                    }
                    let (s1, s2) = (sa[i], sb[i]);
                    cross += s1 * s2.conj();
                    pa += s1.norm_sqr();
                    pb += s2.norm_sqr();
                    n += 1;
                }
            }
            let denom = libm::sqrt(pa * pb);
            if n == 0 || denom <= 0.0 || !denom.is_finite() {
                magnitude.push(f64::NAN);
                phase.push(f64::NAN);
            } else {
                // the 1/n factors of the three means cancel
                magnitude.push((cross.norm() / denom).min(1.0));
                phase.push(wrap_phase(libm::atan2(cross.im, cross.re)));
            }
        }
    }

    let pixel = a.pixel_size_m() * libm::sqrt(window.samples() as f64);
    Ok(CoherenceMap {
        magnitude: BandRaster::new(out_w, out_h, pixel, magnitude)?,
        phase: BandRaster::new(out_w, out_h, pixel, phase)?,
        window,
        pair_id: pair.pair_id().into(),
        primary_time: a.acquisition_time(),
        repeat_time: b.acquisition_time(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Mask;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(w: usize, h: usize, seed: u64, t: i64) -> SlcImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..w * h)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        SlcImage::new(w, h, 5.0, samples, Timestamp(t)).unwrap()
    }

    fn pair(a: SlcImage, b: SlcImage) -> AcquisitionPair {
        AcquisitionPair::new(Arc::new(a), Arc::new(b), 0.0, "p").unwrap()
    }

    fn retimed(img: &SlcImage, t: i64) -> SlcImage {
        SlcImage::new(img.width(), img.height(), img.pixel_size_m(), img.samples().to_vec(), Timestamp(t)).unwrap()
    }

    #[test]
    fn self_coherence_is_one_with_zero_phase() {
        let a = noise(40, 40, 1, 0);
        let b = retimed(&a, 10);
        let map = estimate_coherence(&pair(a, b), Window::default()).unwrap();
        assert_eq!(map.dims(), (4, 2));
        for i in 0..map.magnitude.len() {
            assert!((map.magnitude.values()[i] - 1.0).abs() < 1e-6);
            assert!(map.phase.values()[i].abs() < 1e-12);
        }
    }

    #[test]
    fn repeat_times_i_gives_minus_half_pi() {
        let a = noise(20, 20, 2, 0);
        let b = retimed(&a.scaled(Complex64::new(0.0, 1.0)), 10);
        let map = estimate_coherence(&pair(a, b), Window::new(10, 10)).unwrap();
        for i in 0..map.magnitude.len() {
            assert!((map.magnitude.values()[i] - 1.0).abs() < 1e-9);
            assert!((map.phase.values()[i] + PI / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_of_minus_one_is_plus_pi() {
        let a = SlcImage::new(1, 1, 5.0, vec![Complex64::new(1.0, 0.0)], Timestamp(0)).unwrap();
        let b = SlcImage::new(1, 1, 5.0, vec![Complex64::new(-1.0, -0.0)], Timestamp(1)).unwrap();
        let map = estimate_coherence(&pair(a, b), Window::new(1, 1)).unwrap();
        assert_eq!(map.phase.values()[0], PI);
    }

    #[test]
    fn zero_power_window_is_nodata() {
        let a = SlcImage::new(2, 1, 5.0, vec![Complex64::new(0.0, 0.0); 2], Timestamp(0)).unwrap();
        let b = noise(2, 1, 3, 1);
        let map = estimate_coherence(&pair(a, b), Window::new(2, 1)).unwrap();
        assert_eq!(map.magnitude.valid_count(), 0);
        assert_eq!(map.phase.valid_count(), 0);
    }

    #[test]
    fn invalid_samples_are_excluded_jointly() {
        // second sample of b is garbage but masked; only the first pair of samples counts
        let a =
            SlcImage::new(2, 1, 5.0, vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)], Timestamp(0)).unwrap();
        let b = SlcImage::new(2, 1, 5.0, vec![Complex64::new(2.0, 0.0), Complex64::new(0.0, 5.0)], Timestamp(1))
            .unwrap()
            .with_validity(Mask::new(2, 1, vec![true, false]).unwrap())
            .unwrap();
        let map = estimate_coherence(&pair(a, b), Window::new(2, 1)).unwrap();
        assert!((map.magnitude.values()[0] - 1.0).abs() < 1e-12);

        let c = SlcImage::new(1, 1, 5.0, vec![Complex64::new(1.0, 0.0)], Timestamp(0))
            .unwrap()
            .with_validity(Mask::filled(1, 1, false))
            .unwrap();
        let d = SlcImage::new(1, 1, 5.0, vec![Complex64::new(1.0, 0.0)], Timestamp(1)).unwrap();
        let map = estimate_coherence(&pair(c, d), Window::new(1, 1)).unwrap();
        assert_eq!(map.magnitude.valid_count(), 0);
    }

    #[test]
    fn zero_window_and_mismatch_rejected() {
        let p = pair(noise(4, 4, 1, 0), noise(4, 4, 2, 1));
        assert!(estimate_coherence(&p, Window::new(0, 3)).is_err());
        let err = AcquisitionPair::new(Arc::new(noise(4, 4, 1, 0)), Arc::new(noise(4, 5, 2, 1)), 0.0, "x").unwrap_err();
        assert!(matches!(err, CoherenceError::Raster(RasterError::DimensionMismatch { .. })));
    }

    #[test]
    fn pair_requires_time_order_and_valid_baseline() {
        let a = Arc::new(noise(2, 2, 1, 10));
        let b = Arc::new(noise(2, 2, 2, 5));
        assert!(matches!(AcquisitionPair::new(a.clone(), b.clone(), 0.0, "x"), Err(CoherenceError::TimeOrder { .. })));
        assert!(matches!(AcquisitionPair::new(b, a, -1.0, "x"), Err(CoherenceError::InvalidBaseline(_))));
    }

    fn pair_with_baseline(baseline: f64, t: i64) -> AcquisitionPair {
        AcquisitionPair::new(
            Arc::new(noise(2, 2, 1, t)),
            Arc::new(noise(2, 2, 2, t + 1)),
            baseline,
            format!("{baseline}"),
        )
        .unwrap()
    }

    #[test]
    fn gate_keeps_small_baselines_in_order() {
        let pairs = vec![pair_with_baseline(50.0, 0), pair_with_baseline(100.0, 10), pair_with_baseline(120.0, 20)];
        let kept = gate_pairs(pairs, DEFAULT_MAX_BASELINE_M);
        let ids: Vec<&str> = kept.iter().map(|p| p.pair_id()).collect();
        assert_eq!(ids, ["50", "100"]);
    }

    #[test]
    fn gate_edge_cases() {
        assert!(gate_pairs(Vec::new(), 100.0).is_empty());
        let zeros = vec![pair_with_baseline(0.0, 0), pair_with_baseline(0.0, 5)];
        assert_eq!(gate_pairs(zeros, 100.0).len(), 2);
    }

    #[test]
    fn consecutive_pairs_sorted_with_baseline_differences() {
        let acqs = vec![
            Acquisition { image: Arc::new(noise(2, 2, 1, 24)), baseline_m: 150.0 },
            Acquisition { image: Arc::new(noise(2, 2, 2, 0)), baseline_m: 10.0 },
            Acquisition { image: Arc::new(noise(2, 2, 3, 12)), baseline_m: 40.0 },
        ];
        let pairs = consecutive_pairs(&acqs).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].pair_id(), "0_12");
        assert_eq!(pairs[0].baseline_m(), 30.0);
        assert_eq!(pairs[1].baseline_m(), 110.0);
    }

    #[test]
    fn ground_extent_window() {
        assert_eq!(Window::for_ground_extent(50.0, 5.0, 20.0), Window::new(10, 3));
    }
}
