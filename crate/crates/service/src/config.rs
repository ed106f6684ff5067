//! Service configuration, read from a TOML file.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! data_dir = "sessions"
//! transform_file = "transforms.json"   # optional, defaults to the built-in mount
//! board_file = "board.json"            # optional, defaults to the task board
//!
//! [backend]                            # optional, used by llm-mode planning
//! base_url = "https://api.openai.com/v1"
//! model = "gpt-4.1-mini"
//! timeout_s = 30
//!
//! [camera]                             # optional, defaults to 640x480 @ 600 px
//! fx = 600.0
//! fy = 600.0
//! px = 320.0
//! py = 240.0
//! width = 640
//! height = 480
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use covillm_core::localization::LocalizationParams;
use covillm_core::pipeline::{load_board, PipelineError, TransformConfig, Workbench};
use covillm_core::planner::BackendConfig;
use covillm_core::CameraIntrinsics;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("camera: {0}")]
    Camera(String),
    #[error("localization: {0}")]
    Localization(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default)]
    pub transform_file: Option<PathBuf>,
    #[serde(default)]
    pub board_file: Option<PathBuf>,
    #[serde(default)]
    pub backend: Option<BackendConfig>,
    #[serde(default)]
    pub camera: Option<CameraIntrinsics>,
    /// Full localization parameter set; derived from the camera size when
    /// absent.
    #[serde(default)]
    pub localization: Option<LocalizationParams>,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("covillm-data")
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: default_listen(),
            data_dir: default_data_dir(),
            transform_file: None,
            board_file: None,
            backend: None,
            camera: None,
            localization: None,
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        let mut config: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.into(),
            source,
        })?;
        if let Some(base) = path.parent() {
            config.resolve_relative_to(base);
        }
        Ok(config)
    }

    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        self.transform_file.as_mut().map(fix);
        self.board_file.as_mut().map(fix);
    }

    pub fn workbench(&self) -> Result<Workbench, ConfigError> {
        let mut wb = Workbench::default();
        if let Some(camera) = self.camera {
            camera
                .validate()
                .map_err(|e| ConfigError::Camera(e.to_string()))?;
            wb.camera = camera;
            wb.localization = LocalizationParams::for_frame(camera.width, camera.height);
        }
        if let Some(params) = self.localization {
            wb.localization = params;
        }
        wb.localization
            .validate_for(wb.camera.width, wb.camera.height)
            .map_err(|e| ConfigError::Localization(e.to_string()))?;
        if let Some(path) = &self.transform_file {
            wb.transforms = TransformConfig::load(path)?;
        }
        if let Some(path) = &self.board_file {
            wb.board = load_board(path)?;
        }
        Ok(wb)
    }
}
