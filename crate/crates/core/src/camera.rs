use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IntrinsicsError {
    #[error("focal lengths must be positive (fx={fx}, fy={fy})")]
    NonPositiveFocal { fx: f64, fy: f64 },
    #[error("principal point ({px}, {py}) outside {width}x{height} image")]
    PrincipalPointOutside {
        px: f64,
        py: f64,
        width: u32,
        height: u32,
    },
}

/// Pinhole intrinsics: focal lengths and principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub px: f64,
    pub py: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    /// 640x480 sensor with a 600 px focal length, principal point at the image center.
    fn default() -> Self {
        Self {
            fx: 600.0,
            fy: 600.0,
            px: 320.0,
            py: 240.0,
            width: 640,
            height: 480,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        px: f64,
        py: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, IntrinsicsError> {
        let intr = Self {
            fx,
            fy,
            px,
            py,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), IntrinsicsError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(IntrinsicsError::NonPositiveFocal {
                fx: self.fx,
                fy: self.fy,
            });
        }
        let inside = (0.0..self.width as f64).contains(&self.px)
            && (0.0..self.height as f64).contains(&self.py);
        if !inside {
            return Err(IntrinsicsError::PrincipalPointOutside {
                px: self.px,
                py: self.py,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    /// Same field of view at a different resolution.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            px: self.px * factor,
            py: self.py * factor,
            width: (self.width as f64 * factor).round() as u32,
            height: (self.height as f64 * factor).round() as u32,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        CameraIntrinsics::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_focal_and_principal_point() {
        assert!(matches!(
            CameraIntrinsics::new(0.0, 600.0, 320.0, 240.0, 640, 480),
            Err(IntrinsicsError::NonPositiveFocal { .. })
        ));
        assert!(matches!(
            CameraIntrinsics::new(600.0, 600.0, 640.0, 240.0, 640, 480),
            Err(IntrinsicsError::PrincipalPointOutside { .. })
        ));
    }
}
