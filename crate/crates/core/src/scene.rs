//! Synthetic depth scenes: a flat table seen top-down with components
//! standing on it. Stands in for the depth camera and provides exact ground
//! truth for the localization tests.
//!
//! Table-plane coordinates are millimeters in the camera frame: `x` grows to
//! the image right, `y` toward the image bottom, origin on the optical axis.
//! A component's top face sits at depth `surface_depth_mm - height_mm` and is
//! projected through the pinhole model at that depth.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::frame::DepthFrame;
use crate::label::ComponentLabel;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("component {0} projects outside the frame")]
    OutOfFrame(String),
    #[error("components {0} and {1} overlap")]
    Overlap(String, String),
    #[error("component {id}: {reason}")]
    InvalidComponent { id: String, reason: String },
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Footprint {
    /// Axis-aligned rectangle, `width_mm` along x and `length_mm` along y.
    Rect {
        width_mm: f64,
        length_mm: f64,
    },
    Circle {
        diameter_mm: f64,
    },
}

impl Footprint {
    fn half_extents(&self) -> (f64, f64) {
        match *self {
            Footprint::Rect {
                width_mm,
                length_mm,
            } => (width_mm / 2.0, length_mm / 2.0),
            Footprint::Circle { diameter_mm } => (diameter_mm / 2.0, diameter_mm / 2.0),
        }
    }

    fn contains(&self, dx: f64, dy: f64) -> bool {
        match *self {
            Footprint::Rect {
                width_mm,
                length_mm,
            } => dx.abs() <= width_mm / 2.0 && dy.abs() <= length_mm / 2.0,
            Footprint::Circle { diameter_mm } => {
                dx * dx + dy * dy <= diameter_mm * diameter_mm / 4.0
            }
        }
    }

    pub fn area_mm2(&self) -> f64 {
        match *self {
            Footprint::Rect {
                width_mm,
                length_mm,
            } => width_mm * length_mm,
            Footprint::Circle { diameter_mm } => {
                std::f64::consts::PI * diameter_mm * diameter_mm / 4.0
            }
        }
    }

    fn is_valid(&self) -> bool {
        let (a, b) = self.half_extents();
        a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneComponent {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ComponentLabel>,
    pub footprint: Footprint,
    pub height_mm: f64,
    /// Footprint center on the table plane.
    pub position_mm: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub surface_depth_mm: f64,
    #[serde(default)]
    pub components: Vec<SceneComponent>,
    #[serde(default)]
    pub noise_sigma_mm: f64,
    #[serde(default)]
    pub dropout_rate: f64,
}

/// Where a component lands in the image.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTruth {
    pub id: String,
    pub label: Option<ComponentLabel>,
    /// Pixels covered by the top face, row-major order.
    pub pixels: Vec<(u32, u32)>,
    /// Projection of the footprint center.
    pub center_px: (f64, f64),
    pub top_depth_mm: u16,
}

impl ComponentTruth {
    /// Mean of the covered pixel coordinates.
    pub fn raster_centroid(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let (sx, sy) = self.pixels.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| {
            (sx + x as f64, sy + y as f64)
        });
        (sx / n, sy / n)
    }
}

impl SceneSpec {
    pub fn empty(surface_depth_mm: f64) -> Self {
        Self {
            surface_depth_mm,
            components: Vec::new(),
            noise_sigma_mm: 0.0,
            dropout_rate: 0.0,
        }
    }

    fn validate_shape(&self) -> Result<(), SceneError> {
        let d = self.surface_depth_mm;
        if !(d >= 1.0 && d <= u16::MAX as f64) {
            return Err(SceneError::Invalid(format!(
                "surface depth {d} mm out of range"
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(SceneError::Invalid(format!(
                "dropout rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.noise_sigma_mm >= 0.0 && self.noise_sigma_mm.is_finite()) {
            return Err(SceneError::Invalid(format!(
                "noise sigma {} must be >= 0",
                self.noise_sigma_mm
            )));
        }
        for c in &self.components {
            let invalid = |reason: &str| SceneError::InvalidComponent {
                id: c.id.clone(),
                reason: reason.into(),
            };
            if !(c.height_mm > 0.0) {
                return Err(invalid("height must be positive"));
            }
            if c.height_mm >= d - 1.0 {
                return Err(invalid("component reaches the camera"));
            }
            if !c.footprint.is_valid() {
                return Err(invalid("footprint extents must be positive"));
            }
        }
        Ok(())
    }

    /// Projects every component, checking frame containment and overlap.
    pub fn ground_truth(&self, intr: &CameraIntrinsics) -> Result<Vec<ComponentTruth>, SceneError> {
        self.validate_shape()?;
        let (w, h) = (intr.width as usize, intr.height as usize);
        let mut owner: Vec<Option<usize>> = vec![None; w * h];
        let mut truths = Vec::with_capacity(self.components.len());
        for (ci, c) in self.components.iter().enumerate() {
            let top = self.surface_depth_mm - c.height_mm;
            let (hx, hy) = c.footprint.half_extents();
            let [cx, cy] = c.position_mm;
            let u_lo = intr.px + intr.fx * (cx - hx) / top;
            let u_hi = intr.px + intr.fx * (cx + hx) / top;
            let v_lo = intr.py + intr.fy * (cy - hy) / top;
            let v_hi = intr.py + intr.fy * (cy + hy) / top;
            if u_lo < 0.0 || v_lo < 0.0 || u_hi > (w - 1) as f64 || v_hi > (h - 1) as f64 {
                return Err(SceneError::OutOfFrame(c.id.clone()));
            }
            let mut pixels = Vec::new();
            for v in v_lo.ceil() as u32..=v_hi.floor() as u32 {
                for u in u_lo.ceil() as u32..=u_hi.floor() as u32 {
                    let x = (u as f64 - intr.px) * top / intr.fx;
                    let y = (v as f64 - intr.py) * top / intr.fy;
                    if c.footprint.contains(x - cx, y - cy) {
                        let idx = v as usize * w + u as usize;
                        if let Some(other) = owner[idx] {
                            return Err(SceneError::Overlap(
                                self.components[other].id.clone(),
                                c.id.clone(),
                            ));
                        }
                        owner[idx] = Some(ci);
                        pixels.push((u, v));
                    }
                }
            }
            if pixels.is_empty() {
                return Err(SceneError::InvalidComponent {
                    id: c.id.clone(),
                    reason: "covers no pixel".into(),
                });
            }
            truths.push(ComponentTruth {
                id: c.id.clone(),
                label: c.label,
                pixels,
                center_px: (intr.px + intr.fx * cx / top, intr.py + intr.fy * cy / top),
                top_depth_mm: top.round() as u16,
            });
        }
        Ok(truths)
    }
}

/// Renders the scene: surface everywhere, component tops where they
/// project, then Gaussian noise and an exact number of dropped pixels.
/// Deterministic in `(scene, intr, seed)`.
pub fn synthesize_frame(
    scene: &SceneSpec,
    intr: &CameraIntrinsics,
    seed: u64,
) -> Result<DepthFrame, SceneError> {
    intr.validate()
        .map_err(|e| SceneError::Invalid(e.to_string()))?;
    let truths = scene.ground_truth(intr)?;
    let surface = scene.surface_depth_mm.round() as u16;
    let mut frame = DepthFrame::filled(intr.width, intr.height, surface);
    for t in &truths {
        for &(u, v) in &t.pixels {
            frame.set(u, v, t.top_depth_mm);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if scene.noise_sigma_mm > 0.0 {
        let noise = Normal::new(0.0, scene.noise_sigma_mm)
            .map_err(|e| SceneError::Invalid(e.to_string()))?;
        for d in frame.data_mut() {
            let noisy = (*d as f64 + noise.sample(&mut rng)).round();
            *d = noisy.clamp(1.0, u16::MAX as f64) as u16;
        }
    }
    let total = frame.data().len();
    let dropped = (scene.dropout_rate * total as f64).floor() as usize;
    if dropped > 0 {
        let data = frame.data_mut();
        for i in index::sample(&mut rng, total, dropped) {
            data[i] = 0;
        }
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(id: &str, h: f64, pos: [f64; 2]) -> SceneComponent {
        SceneComponent {
            id: id.into(),
            label: None,
            footprint: Footprint::Rect {
                width_mm: 20.0,
                length_mm: 20.0,
            },
            height_mm: h,
            position_mm: pos,
        }
    }

    #[test]
    fn empty_scene_is_flat() {
        let f =
            synthesize_frame(&SceneSpec::empty(400.0), &CameraIntrinsics::default(), 1).unwrap();
        assert!(f.data().iter().all(|&d| d == 400));
    }

    #[test]
    fn centered_block_depths() {
        let mut scene = SceneSpec::empty(400.0);
        scene.components.push(block("a", 20.0, [0.0, 0.0]));
        let f = synthesize_frame(&scene, &CameraIntrinsics::default(), 1).unwrap();
        assert_eq!(f.get(320, 240), 380);
        assert_eq!(f.get(0, 0), 400);
        assert_eq!(f.get(639, 479), 400);
    }

    #[test]
    fn dropout_count_is_exact() {
        let mut scene = SceneSpec::empty(400.0);
        scene.dropout_rate = 0.05;
        scene.components.push(block("a", 20.0, [10.0, -5.0]));
        let f = synthesize_frame(&scene, &CameraIntrinsics::default(), 7).unwrap();
        assert_eq!(f.invalid_count(), (0.05 * 640.0 * 480.0) as usize);
        assert_eq!(f.invalid_count(), 15360);
    }

    #[test]
    fn deterministic_in_seed() {
        let mut scene = SceneSpec::empty(400.0);
        scene.noise_sigma_mm = 2.0;
        scene.dropout_rate = 0.02;
        scene.components.push(block("a", 30.0, [40.0, 10.0]));
        let intr = CameraIntrinsics::default();
        assert_eq!(
            synthesize_frame(&scene, &intr, 3).unwrap(),
            synthesize_frame(&scene, &intr, 3).unwrap()
        );
        assert_ne!(
            synthesize_frame(&scene, &intr, 3).unwrap(),
            synthesize_frame(&scene, &intr, 4).unwrap()
        );
    }

    #[test]
    fn out_of_frame_names_component() {
        let mut scene = SceneSpec::empty(400.0);
        scene.components.push(block("edge", 20.0, [250.0, 0.0]));
        assert_eq!(
            synthesize_frame(&scene, &CameraIntrinsics::default(), 0),
            Err(SceneError::OutOfFrame("edge".into()))
        );
    }

    #[test]
    fn overlap_rejected() {
        let mut scene = SceneSpec::empty(400.0);
        scene.components.push(block("a", 20.0, [0.0, 0.0]));
        scene.components.push(block("b", 20.0, [10.0, 0.0]));
        assert_eq!(
            synthesize_frame(&scene, &CameraIntrinsics::default(), 0),
            Err(SceneError::Overlap("a".into(), "b".into()))
        );
    }

    #[test]
    fn invalid_height_rejected() {
        let mut scene = SceneSpec::empty(400.0);
        scene.components.push(block("a", 0.0, [0.0, 0.0]));
        assert!(matches!(
            synthesize_frame(&scene, &CameraIntrinsics::default(), 0),
            Err(SceneError::InvalidComponent { .. })
        ));
    }

    #[test]
    fn circle_raster_centroid_near_projection() {
        let mut scene = SceneSpec::empty(400.0);
        scene.components.push(SceneComponent {
            id: "c".into(),
            label: None,
            footprint: Footprint::Circle { diameter_mm: 12.0 },
            height_mm: 30.0,
            position_mm: [-33.3, 17.9],
        });
        let truth = scene.ground_truth(&CameraIntrinsics::default()).unwrap();
        let (rx, ry) = truth[0].raster_centroid();
        let (cx, cy) = truth[0].center_px;
        assert!((rx - cx).abs() < 0.5 && (ry - cy).abs() < 0.5);
    }

    #[test]
    fn json_schema_shape() {
        let json = r#"{
            "surface_depth_mm": 400,
            "components": [
                {"id": "g1", "label": "small gear", "footprint": {"shape": "circle", "diameter_mm": 36},
                 "height_mm": 20, "position_mm": [-50, 10]}
            ],
            "noise_sigma_mm": 0,
            "dropout_rate": 0
        }"#;
        let scene: SceneSpec = serde_json::from_str(json).unwrap();
        assert_eq!(
            scene.components[0].footprint,
            Footprint::Circle { diameter_mm: 36.0 }
        );
    }
}
