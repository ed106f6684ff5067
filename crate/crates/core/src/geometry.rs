//! Pixel → camera → end-effector → base transform chain for an
//! end-effector-mounted camera, its inverse, and the camera-height
//! feasibility analysis.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::localization::{Candidate, LocalizationParams};

/// Orthonormality and determinant tolerance for rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("not a proper rotation: {0}")]
    NotARotation(String),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("point is behind the camera (camera-frame z = {0})")]
    BehindCamera(f64),
}

/// Homogeneous rigid transform `[R t; 0 1]`, translation in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformFile", into = "TransformFile")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// JSON form: row-major rotation and translation in millimeters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformFile {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl TryFrom<TransformFile> for RigidTransform {
    type Error = GeometryError;

    fn try_from(f: TransformFile) -> Result<Self, Self::Error> {
        RigidTransform::new(
            Matrix3::from_row_slice(&f.rotation),
            Vector3::from(f.translation),
        )
    }
}

impl From<RigidTransform> for TransformFile {
    fn from(t: RigidTransform) -> Self {
        let r = t.rotation;
        TransformFile {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

pub fn validate_rotation(r: &Matrix3<f64>) -> Result<(), GeometryError> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NotARotation("non-finite entry".into()));
    }
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if err > ROTATION_TOLERANCE {
        return Err(GeometryError::NotARotation(format!(
            "|R^T R - I| = {err:e}"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(GeometryError::NotARotation(format!("det(R) = {det}")));
    }
    Ok(())
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        validate_rotation(&rotation)?;
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NotARotation("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    /// Rotation about a (not necessarily unit) axis, angle in radians.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64, translation: [f64; 3]) -> Self {
        let axis = nalgebra::Unit::new_normalize(Vector3::from(axis));
        let rotation = nalgebra::Rotation3::from_axis_angle(&axis, angle).into_inner();
        Self {
            rotation,
            translation: Vector3::from(translation),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn with_translation(&self, x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: self.rotation,
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self · other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> Result<Self, GeometryError> {
        validate_rotation(&self.rotation)?;
        validate_rotation(&other.rotation)?;
        Ok(self.compose_unchecked(other))
    }

    fn compose_unchecked(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.rotation * Vector3::from(p) + self.translation;
        [v.x, v.y, v.z]
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// A point in the robot base frame, millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BasePoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn homogeneous(&self) -> [f64; 4] {
        [self.x, self.y, self.z, 1.0]
    }

    pub fn distance(&self, other: &BasePoint) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for BasePoint {
    fn from(p: [f64; 3]) -> Self {
        Self::new(p[0], p[1], p[2])
    }
}

/// Lifts a pixel with known depth to a homogeneous camera-frame point.
pub fn backproject(
    cx: f64,
    cy: f64,
    z: f64,
    intr: &CameraIntrinsics,
) -> Result<[f64; 4], GeometryError> {
    if !(z > 0.0) {
        return Err(GeometryError::NonPositiveDepth(z));
    }
    Ok([
        (cx - intr.px) / intr.fx * z,
        (cy - intr.py) / intr.fy * z,
        z,
        1.0,
    ])
}

/// Camera intrinsics plus the fixed camera→end-effector mount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub intrinsics: CameraIntrinsics,
    /// Camera frame expressed in the end-effector frame.
    pub ee_from_camera: RigidTransform,
}

pub fn pixel_to_base_xyz(
    cx: f64,
    cy: f64,
    z: f64,
    intr: &CameraIntrinsics,
    ee_from_camera: &RigidTransform,
    base_from_ee: &RigidTransform,
) -> Result<BasePoint, GeometryError> {
    let [x, y, z, _] = backproject(cx, cy, z, intr)?;
    let chain = base_from_ee.compose(ee_from_camera)?;
    Ok(chain.apply([x, y, z]).into())
}

/// Base-frame location of a localized candidate.
pub fn pixel_to_base(
    cand: &Candidate,
    intr: &CameraIntrinsics,
    ee_from_camera: &RigidTransform,
    base_from_ee: &RigidTransform,
) -> Result<BasePoint, GeometryError> {
    pixel_to_base_xyz(
        cand.cx,
        cand.cy,
        cand.z_mm as f64,
        intr,
        ee_from_camera,
        base_from_ee,
    )
}

/// Inverse of [`pixel_to_base_xyz`]: returns `(c_x, c_y, z)`.
pub fn project_to_pixel(
    p: &BasePoint,
    intr: &CameraIntrinsics,
    ee_from_camera: &RigidTransform,
    base_from_ee: &RigidTransform,
) -> Result<(f64, f64, f64), GeometryError> {
    let camera_from_base = base_from_ee.compose(ee_from_camera)?.inverse();
    let [x, y, z] = camera_from_base.apply(p.as_array());
    if !(z > 0.0) {
        return Err(GeometryError::BehindCamera(z));
    }
    Ok((intr.px + intr.fx * x / z, intr.py + intr.fy * y / z, z))
}

/// Physical envelope of one component type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFootprintSpec {
    pub category: String,
    pub height_mm: f64,
    pub min_extent_mm: f64,
    pub max_extent_mm: f64,
}

/// Camera heights (mm above the surface) at which a component survives
/// segmentation: it must stand taller than the minimum object height, and
/// its worst-case projected area `min_extent² · fx · fy / z²` must fall in
/// `[A_min, A_max]` with the footprint aspect ratio under the bound. The
/// result is clamped to the valid depth band. `None` when no height works.
pub fn valid_camera_height_range(
    spec: &ComponentFootprintSpec,
    params: &LocalizationParams,
    intr: &CameraIntrinsics,
) -> Option<(f64, f64)> {
    if !(spec.min_extent_mm > 0.0 && spec.min_extent_mm <= spec.max_extent_mm) {
        return None;
    }
    if !(spec.height_mm > params.min_height_mm) {
        return None;
    }
    if spec.max_extent_mm / (spec.min_extent_mm + params.epsilon) > params.aspect_max {
        return None;
    }
    let scaled_area = spec.min_extent_mm * spec.min_extent_mm * intr.fx * intr.fy;
    let z_hi = if params.area_min_px == 0 {
        f64::INFINITY
    } else {
        (scaled_area / params.area_min_px as f64).sqrt()
    };
    let z_lo = if params.area_max_px == 0 {
        f64::INFINITY
    } else {
        (scaled_area / params.area_max_px as f64).sqrt()
    };
    let lo = z_lo.max(params.d_min_mm as f64);
    let hi = z_hi.min(params.d_max_mm as f64);
    (lo <= hi).then_some((lo, hi))
}
