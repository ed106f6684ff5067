//! Surface estimation, object segmentation and candidate extraction on a
//! denoised depth frame.

mod contour;

pub use contour::{contour_centroid, find_contours, BinaryMask, BoundingBox, Contour};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{self, DepthError, FilterParams, TemporalState};
use crate::frame::DepthFrame;

#[derive(Debug, Error, PartialEq)]
pub enum LocalizationError {
    #[error("surface not found: no valid depth inside the region of interest")]
    SurfaceNotFound,
    #[error("histogram of an empty sample set")]
    EmptyHistogram,
    #[error("invalid localization parameters: {0}")]
    InvalidParams(String),
    #[error("mask is {mask_w}x{mask_h} but frame is {frame_w}x{frame_h}")]
    DimensionMismatch {
        mask_w: u32,
        mask_h: u32,
        frame_w: u32,
        frame_h: u32,
    },
    #[error(transparent)]
    Denoise(#[from] DepthError),
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Roi {
    pub fn with_margin(width: u32, height: u32, margin: u32) -> Self {
        Self {
            x0: margin,
            y0: margin,
            x1: width.saturating_sub(margin + 1),
            y1: height.saturating_sub(margin + 1),
        }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }
}

pub const DEFAULT_ROI_MARGIN: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationParams {
    pub d_min_mm: u16,
    pub d_max_mm: u16,
    /// Minimum object height above the surface.
    pub min_height_mm: f64,
    pub bin_width_mm: u16,
    pub area_min_px: usize,
    pub area_max_px: usize,
    pub aspect_max: f64,
    pub epsilon: f64,
    pub roi: Roi,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        Self::for_frame(640, 480)
    }
}

impl LocalizationParams {
    /// Defaults with the ROI set to the frame minus a 20 px margin.
    pub fn for_frame(width: u32, height: u32) -> Self {
        Self {
            d_min_mm: 150,
            d_max_mm: 2000,
            min_height_mm: 10.0,
            bin_width_mm: 1,
            area_min_px: 50,
            area_max_px: 20_000,
            aspect_max: 4.0,
            epsilon: 1e-6,
            roi: Roi::with_margin(width, height, DEFAULT_ROI_MARGIN),
        }
    }

    pub fn validate_for(&self, width: u32, height: u32) -> Result<(), LocalizationError> {
        let bad = |m: String| Err(LocalizationError::InvalidParams(m));
        if self.d_min_mm >= self.d_max_mm {
            return bad(format!(
                "d_min {} must be below d_max {}",
                self.d_min_mm, self.d_max_mm
            ));
        }
        if !(self.min_height_mm > 0.0) {
            return bad("minimum object height must be positive".into());
        }
        if self.bin_width_mm == 0 {
            return bad("histogram bin width must be positive".into());
        }
        if self.area_min_px > self.area_max_px {
            return bad(format!(
                "A_min {} exceeds A_max {}",
                self.area_min_px, self.area_max_px
            ));
        }
        if !(self.aspect_max >= 1.0) {
            return bad(format!(
                "aspect ratio bound {} must be >= 1",
                self.aspect_max
            ));
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive".into());
        }
        let r = self.roi;
        if r.x0 > r.x1 || r.y0 > r.y1 || r.x1 >= width || r.y1 >= height {
            return bad(format!(
                "ROI {r:?} is empty or outside the {width}x{height} frame"
            ));
        }
        Ok(())
    }
}

/// One localized object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    pub cx: f64,
    pub cy: f64,
    pub z_mm: u16,
    pub area_px: usize,
    pub bbox: BoundingBox,
}

/// Mode of `values` over fixed-width bins `[k·w, (k+1)·w)`. The returned
/// depth is the midpoint of the integer millimeters in the winning bin, so a
/// 1 mm bin reports the sample value itself. Ties go to the nearer bin.
pub fn histogram_mode(values: &[u16], bin_width: u16) -> Result<f64, LocalizationError> {
    if values.is_empty() {
        return Err(LocalizationError::EmptyHistogram);
    }
    if bin_width == 0 {
        return Err(LocalizationError::InvalidParams(
            "histogram bin width must be positive".into(),
        ));
    }
    let bw = bin_width as usize;
    let mut counts = vec![0u32; u16::MAX as usize / bw + 1];
    for &v in values {
        counts[v as usize / bw] += 1;
    }
    let (best, _) =
        counts.iter().enumerate().fold(
            (0usize, 0u32),
            |(bi, bc), (i, &c)| if c > bc { (i, c) } else { (bi, bc) },
        );
    Ok((best * bw) as f64 + (bw - 1) as f64 / 2.0)
}

/// Estimates the surface depth inside the ROI and marks every pixel nearer
/// than `surface - min_height` (and inside the valid depth band).
pub fn create_binary_mask(
    frame: &DepthFrame,
    params: &LocalizationParams,
) -> Result<(BinaryMask, f64), LocalizationError> {
    params.validate_for(frame.width(), frame.height())?;
    let in_band = |d: u16| params.d_min_mm < d && d < params.d_max_mm;
    let r = params.roi;
    let mut valid = Vec::with_capacity(r.width() as usize * r.height() as usize);
    for y in r.y0..=r.y1 {
        for x in r.x0..=r.x1 {
            let d = frame.get(x, y);
            if in_band(d) {
                valid.push(d);
            }
        }
    }
    if valid.is_empty() {
        return Err(LocalizationError::SurfaceNotFound);
    }
    let surface = histogram_mode(&valid, params.bin_width_mm)?;
    let threshold = surface - params.min_height_mm;
    let mut mask = BinaryMask::new(frame.width(), frame.height());
    for y in r.y0..=r.y1 {
        for x in r.x0..=r.x1 {
            let d = frame.get(x, y);
            if in_band(d) && (d as f64) < threshold {
                mask.set(x, y, true);
            }
        }
    }
    Ok((mask, surface))
}

/// Contours found and how many each filter discarded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionStats {
    pub contours: usize,
    pub rejected_area: usize,
    pub rejected_aspect: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub candidates: Vec<Candidate>,
    pub stats: ExtractionStats,
}

pub fn aspect_ratio(bbox: &BoundingBox, epsilon: f64) -> f64 {
    let (w, h) = (bbox.w as f64, bbox.h as f64);
    w.max(h) / (w.min(h) + epsilon)
}

/// Lower median, so the result is always an observed sample.
fn lower_median(mut values: Vec<u16>) -> u16 {
    let mid = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable(mid);
    *m
}

pub fn extract_objects(
    mask: &BinaryMask,
    frame: &DepthFrame,
    params: &LocalizationParams,
) -> Result<Extraction, LocalizationError> {
    if mask.width() != frame.width() || mask.height() != frame.height() {
        return Err(LocalizationError::DimensionMismatch {
            mask_w: mask.width(),
            mask_h: mask.height(),
            frame_w: frame.width(),
            frame_h: frame.height(),
        });
    }
    let contours = find_contours(mask);
    let mut stats = ExtractionStats {
        contours: contours.len(),
        ..Default::default()
    };
    let mut candidates = Vec::new();
    for c in &contours {
        let area = c.area();
        if area < params.area_min_px || area > params.area_max_px {
            stats.rejected_area += 1;
            continue;
        }
        if aspect_ratio(&c.bbox, params.epsilon) > params.aspect_max {
            stats.rejected_aspect += 1;
            continue;
        }
        let (cx, cy) = contour_centroid(c);
        let z_mm = lower_median(c.pixels.iter().map(|&(x, y)| frame.get(x, y)).collect());
        candidates.push(Candidate {
            id: candidates.len(),
            cx,
            cy,
            z_mm,
            area_px: area,
            bbox: c.bbox,
        });
    }
    Ok(Extraction { candidates, stats })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub candidates: Vec<Candidate>,
    pub surface_depth_mm: f64,
    pub stats: ExtractionStats,
}

/// Full localization: denoise the stream, segment the latest refined frame
/// against its surface, extract candidates.
pub fn localize(
    raw: &[DepthFrame],
    filter: &FilterParams,
    params: &LocalizationParams,
    state: &mut TemporalState,
) -> Result<Localization, LocalizationError> {
    let refined = depth::denoise(raw, filter, state)?;
    let (mask, surface) = create_binary_mask(&refined, params)?;
    let Extraction { candidates, stats } = extract_objects(&mask, &refined, params)?;
    Ok(Localization {
        candidates,
        surface_depth_mm: surface,
        stats,
    })
}

/// The localization payload shown to the operator and embedded in planner
/// prompts: `[{id, cx, cy, z_mm, area_px, bbox}]`.
pub fn export_json(candidates: &[Candidate]) -> serde_json::Value {
    serde_json::to_value(candidates).expect("candidates serialize")
}
