//! Denoising in disparity space.
//!
//! The raw depth frame is converted to disparity (`k / depth`), passed
//! through an edge-preserving spatial filter, a temporal filter that carries
//! state across frames, and a scanline hole filler, then converted back to
//! integer millimeters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{DepthFrame, DisparityFrame};

/// Depth/disparity constant in whole pixels: roughly a 600 px focal length
/// times a 50 mm stereo baseline.
pub const DEFAULT_DISPARITY_K: f64 = 30_000.0;

/// Stereo cameras report disparity in 1/32 subpixel steps, and the default
/// filter thresholds below are expressed in those steps.
pub const SUBPIXEL_STEPS: f64 = 32.0;

#[derive(Debug, Error, PartialEq)]
pub enum DepthError {
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
    #[error("temporal state is {state_w}x{state_h} but frame is {frame_w}x{frame_h}")]
    DimensionMismatch {
        state_w: u32,
        state_h: u32,
        frame_w: u32,
        frame_h: u32,
    },
    #[error("denoise needs at least one frame")]
    EmptyStream,
}

/// Hole-filling strategy. Only one mode exists: mode `0` of the stereo SDK
/// filter, which propagates the nearest valid value from the left.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoleMode {
    #[default]
    FillFromLeft,
}

impl HoleMode {
    /// Maps the SDK's numeric mode argument.
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::FillFromLeft),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    pub spatial_alpha: f64,
    /// Edge threshold in disparity units.
    pub spatial_delta: f64,
    pub spatial_iterations: u32,
    pub temporal_alpha: f64,
    pub temporal_delta: f64,
    pub hole_mode: HoleMode,
    /// Depth/disparity constant, pixel·mm.
    pub disparity_k: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            spatial_alpha: 0.5,
            spatial_delta: 20.0,
            spatial_iterations: 2,
            temporal_alpha: 0.4,
            temporal_delta: 20.0,
            hole_mode: HoleMode::FillFromLeft,
            disparity_k: DEFAULT_DISPARITY_K * SUBPIXEL_STEPS,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), DepthError> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(DepthError::InvalidParams(format!(
                    "{name} must be in (0, 1], got {v}"
                )))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(DepthError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        unit("spatial_alpha", self.spatial_alpha)?;
        unit("temporal_alpha", self.temporal_alpha)?;
        positive("spatial_delta", self.spatial_delta)?;
        positive("temporal_delta", self.temporal_delta)?;
        positive("disparity_k", self.disparity_k)?;
        if self.spatial_iterations == 0 {
            return Err(DepthError::InvalidParams(
                "spatial_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-pixel memory of the temporal filter.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalState {
    width: u32,
    height: u32,
    history: Vec<Option<f64>>,
}

impl TemporalState {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            history: vec![None; width as usize * height as usize],
        }
    }

    pub fn for_frame(frame: &DepthFrame) -> Self {
        Self::new(frame.width(), frame.height())
    }

    pub fn history(&self) -> &[Option<f64>] {
        &self.history
    }
}

pub fn depth_to_disparity(frame: &DepthFrame, k: f64) -> DisparityFrame {
    let data = frame
        .data()
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { k / d as f64 })
        .collect();
    DisparityFrame::new(frame.width(), frame.height(), data).expect("dimensions carried over")
}

pub fn disparity_to_depth(frame: &DisparityFrame, k: f64) -> DepthFrame {
    let data = frame
        .data()
        .iter()
        .map(|&d| {
            if d > 0.0 {
                (k / d).round().clamp(1.0, u16::MAX as f64) as u16
            } else {
                0
            }
        })
        .collect();
    DepthFrame::new(frame.width(), frame.height(), data).expect("dimensions carried over")
}

/// One directional EMA pass over a strided 1-D line of the image.
/// `start` is the first index visited, `step` the signed stride between
/// consecutive samples, `len` the number of samples.
fn ema_pass(data: &mut [f64], start: usize, step: isize, len: usize, alpha: f64, delta: f64) {
    let mut idx = start as isize;
    let mut prev: Option<f64> = None;
    for _ in 0..len {
        let i = idx as usize;
        let cur = data[i];
        if cur > 0.0 {
            if let Some(p) = prev {
                if (cur - p).abs() <= delta {
                    data[i] = alpha * cur + (1.0 - alpha) * p;
                }
            }
            prev = Some(data[i]);
        } else {
            prev = None;
        }
        idx += step;
    }
}

/// Edge-preserving recursive smoothing: `spatial_iterations` rounds of
/// left→right, right→left, top→bottom and bottom→top passes. Adjacent valid
/// samples closer than `spatial_delta` are blended; holes break the chain.
pub fn spatial_filter(frame: &DisparityFrame, params: &FilterParams) -> DisparityFrame {
    let mut out = frame.clone();
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let (alpha, delta) = (params.spatial_alpha, params.spatial_delta);
    let data = out.data_mut();
    for _ in 0..params.spatial_iterations {
        for y in 0..h {
            ema_pass(data, y * w, 1, w, alpha, delta);
            ema_pass(data, y * w + w - 1, -1, w, alpha, delta);
        }
        for x in 0..w {
            ema_pass(data, x, w as isize, h, alpha, delta);
            ema_pass(data, (h - 1) * w + x, -(w as isize), h, alpha, delta);
        }
    }
    out
}

pub fn temporal_filter(
    state: &mut TemporalState,
    frame: &DisparityFrame,
    params: &FilterParams,
) -> Result<DisparityFrame, DepthError> {
    if state.width != frame.width() || state.height != frame.height() {
        return Err(DepthError::DimensionMismatch {
            state_w: state.width,
            state_h: state.height,
            frame_w: frame.width(),
            frame_h: frame.height(),
        });
    }
    let alpha = params.temporal_alpha;
    let data: Vec<f64> = frame
        .data()
        .iter()
        .zip(state.history.iter_mut())
        .map(|(&cur, hist)| {
            let out = match (cur > 0.0, *hist) {
                (true, Some(h)) if (cur - h).abs() <= params.temporal_delta => {
                    alpha * cur + (1.0 - alpha) * h
                }
                (true, _) => cur,
                (false, Some(h)) => h,
                (false, None) => 0.0,
            };
            *hist = (out > 0.0).then_some(out);
            out
        })
        .collect();
    Ok(DisparityFrame::new(frame.width(), frame.height(), data).expect("dimensions carried over"))
}

pub fn hole_fill(frame: &DisparityFrame, mode: HoleMode) -> DisparityFrame {
    let mut out = frame.clone();
    let w = frame.width() as usize;
    match mode {
        HoleMode::FillFromLeft => {
            for row in out.data_mut().chunks_mut(w) {
                let mut last = None;
                for v in row.iter_mut() {
                    if *v > 0.0 {
                        last = Some(*v);
                    } else if let Some(l) = last {
                        *v = l;
                    }
                }
            }
        }
    }
    out
}

/// Runs every frame of `raw` through the filter chain (so the temporal
/// state sees the whole stream) and returns the refined latest frame.
pub fn denoise(
    raw: &[DepthFrame],
    params: &FilterParams,
    state: &mut TemporalState,
) -> Result<DepthFrame, DepthError> {
    params.validate()?;
    let mut latest = None;
    for frame in raw {
        let k = params.disparity_k;
        let disparity = depth_to_disparity(frame, k);
        let smoothed = spatial_filter(&disparity, params);
        let stable = temporal_filter(state, &smoothed, params)?;
        let filled = hole_fill(&stable, params.hole_mode);
        latest = Some(disparity_to_depth(&filled, k));
    }
    latest.ok_or(DepthError::EmptyStream)
}
