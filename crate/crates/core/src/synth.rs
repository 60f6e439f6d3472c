//! Seeded synthetic scenes with known tillage events.
//!
//! Each SLC pixel follows a first-order chain between consecutive
//! acquisitions, `s[k+1] = rho * s[k] + sqrt(1 - rho^2) * n`, with `n` unit
//! circular complex Gaussian noise. Consecutive pairs therefore have true
//! coherence `rho`: `noise_coherence` for undisturbed ground and
//! `tilled_coherence` for the pair spanning a field's till date (or every
//! pair, for fields flagged as persistently changing). Optical bands are
//! written on the coherence-cell grid with fixed bare and vegetated
//! reflectances.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::coherence::{Acquisition, Window};
use crate::pipeline::OpticalBands;
use crate::raster::{BandRaster, Mask, RasterError, SlcImage};
use crate::time::Timestamp;

/// SWIR1, blue, red, NIR reflectances of exposed soil (BSI ~ 0.222).
pub const BARE_REFLECTANCE: [f64; 4] = [0.4, 0.15, 0.2, 0.15];
/// SWIR1, blue, red, NIR reflectances of green canopy (BSI = -0.375).
pub const VEGETATED_REFLECTANCE: [f64; 4] = [0.2, 0.05, 0.05, 0.5];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("scene needs a non-empty grid and a non-zero window")]
    EmptyGrid,
    #[error("at least two acquisitions are required")]
    TooFewAcquisitions,
    #[error("coherence levels must lie in [0, 1]")]
    CoherenceOutOfRange,
    #[error("field {0} lies outside the grid or has an empty box")]
    FieldOutOfBounds(String),
}

/// Half-open cell box `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CellBox {
    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub bbox: CellBox,
    pub till_time: Option<Timestamp>,
    /// Decorrelates on every pair (standing water, unstable cover).
    pub persistent_change: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub grid_width: usize,
    pub grid_height: usize,
    pub window: Window,
    pub pixel_size_m: f64,
    pub noise_coherence: f64,
    pub tilled_coherence: f64,
    /// Acquisition time and perpendicular baseline offset in meters.
    pub acquisitions: Vec<(Timestamp, f64)>,
    pub optical_times: Vec<Timestamp>,
    pub fields: Vec<FieldSpec>,
    /// Ground outside every field is bare instead of vegetated.
    pub background_bare: bool,
    pub seed: u64,
}

/// What the generator injected, on the cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub width: usize,
    pub height: usize,
    /// Index of the pair carrying each cell's till event, if any.
    pub event_pair: Vec<Option<usize>>,
    pub persistent: Mask,
    pub bare: Mask,
    /// Index into `SceneSpec::fields` covering each cell (last field wins).
    pub field_of_cell: Vec<Option<usize>>,
}

impl SceneTruth {
    pub fn injected_till(&self) -> Mask {
        Mask::new(self.width, self.height, self.event_pair.iter().map(Option::is_some).collect())
            .expect("truth grid is consistent")
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub acquisitions: Vec<Acquisition>,
    pub optical: Vec<OpticalBands>,
    pub truth: SceneTruth,
}

/// Index of the pair `(k, k+1)` whose interval `(t_k, t_{k+1}]` holds `when`.
pub fn pair_index_for(times: &[Timestamp], when: Timestamp) -> Option<usize> {
    times.windows(2).position(|w| w[0] < when && when <= w[1])
}

pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene, SceneError> {
    let (gw, gh) = (spec.grid_width, spec.grid_height);
    if gw == 0 || gh == 0 || spec.window.width == 0 || spec.window.height == 0 {
        return Err(SceneError::EmptyGrid);
    }
    if spec.acquisitions.len() < 2 {
        return Err(SceneError::TooFewAcquisitions);
    }
    let in_unit = |c: f64| (0.0..=1.0).contains(&c);
    if !in_unit(spec.noise_coherence) || !in_unit(spec.tilled_coherence) {
        return Err(SceneError::CoherenceOutOfRange);
    }
    for f in &spec.fields {
        if f.bbox.width() == 0 || f.bbox.height() == 0 || f.bbox.x1 > gw || f.bbox.y1 > gh {
            return Err(SceneError::FieldOutOfBounds(f.name.clone()));
        }
    }

    let mut acqs = spec.acquisitions.clone();
    acqs.sort_by_key(|a| a.0);
    let times: Vec<Timestamp> = acqs.iter().map(|a| a.0).collect();
    let n_pairs = times.len() - 1;

    let cells = gw * gh;
    let mut field_of_cell = vec![None; cells];
    for (fi, f) in spec.fields.iter().enumerate() {
        for y in f.bbox.y0..f.bbox.y1 {
            for x in f.bbox.x0..f.bbox.x1 {
                field_of_cell[y * gw + x] = Some(fi);
            }
        }
    }
    let event_pair: Vec<Option<usize>> = field_of_cell
        .iter()
        .map(|f| f.and_then(|fi| spec.fields[fi].till_time).and_then(|t| pair_index_for(&times, t)))
        .collect();
    let persistent_bits: Vec<bool> =
        field_of_cell.iter().map(|f| f.is_some_and(|fi| spec.fields[fi].persistent_change)).collect();
    let bare_bits: Vec<bool> = field_of_cell.iter().map(|f| f.is_some() || spec.background_bare).collect();

    // SLC chain on the pixel grid
    let win = spec.window;
    let (pw, ph) = (gw * win.width, gh * win.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut circular = move || {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
    };
    let cell_of = |i: usize| (i / pw / win.height) * gw + (i % pw) / win.width;

    let mut current: Vec<Complex64> = (0..pw * ph).map(|_| circular()).collect();
    let mut out = Vec::with_capacity(acqs.len());
    out.push(Acquisition {
        image: Arc::new(SlcImage::new(pw, ph, spec.pixel_size_m, current.clone(), times[0])?),
        baseline_m: acqs[0].1,
    });
    for k in 0..n_pairs {
        for (i, s) in current.iter_mut().enumerate() {
            let c = cell_of(i);
            let rho = if persistent_bits[c] || event_pair[c] == Some(k) {
                spec.tilled_coherence
            } else {
                spec.noise_coherence
            };
            *s = *s * rho + circular() * libm::sqrt(1.0 - rho * rho);
        }
        out.push(Acquisition {
            image: Arc::new(SlcImage::new(pw, ph, spec.pixel_size_m, current.clone(), times[k + 1])?),
            baseline_m: acqs[k + 1].1,
        });
    }

    let cell_size = spec.pixel_size_m * libm::sqrt(win.samples() as f64);
    let band = |idx: usize| -> Result<BandRaster, RasterError> {
        let values =
            bare_bits.iter().map(|&b| if b { BARE_REFLECTANCE[idx] } else { VEGETATED_REFLECTANCE[idx] }).collect();
        BandRaster::new(gw, gh, cell_size, values)
    };
    let optical = spec
        .optical_times
        .iter()
        .map(|&time| Ok(OpticalBands { time, swir1: band(0)?, blue: band(1)?, red: band(2)?, nir: band(3)? }))
        .collect::<Result<Vec<_>, RasterError>>()?;

    Ok(SyntheticScene {
        acquisitions: out,
        optical,
        truth: SceneTruth {
            width: gw,
            height: gh,
            event_pair,
            persistent: Mask::new(gw, gh, persistent_bits)?,
            bare: Mask::new(gw, gh, bare_bits)?,
            field_of_cell,
        },
    })
}
