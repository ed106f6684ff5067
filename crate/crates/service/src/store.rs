//! On-disk session storage: `<id>.json` holds the snapshot and `<id>.cvlm`
//! the depth frame. Both are written to a temporary file first and then
//! renamed into place, so a crash never leaves a half-written snapshot.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use covillm_core::frame::FrameError;
use covillm_core::DepthFrame;
use thiserror::Error;

use crate::session::Session;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: corrupt snapshot: {source}")]
    Corrupt {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Frame { path: PathBuf, source: FrameError },
}

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn snapshot_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn frame_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.cvlm"))
    }

    pub fn save(&self, session: &Session) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(session).expect("session serializes");
        write_atomic(&self.snapshot_path(&session.id), &bytes)
    }

    pub fn save_frame(&self, id: &str, frame: &DepthFrame) -> Result<(), StoreError> {
        let path = self.frame_path(id);
        let bytes = frame.to_bytes().map_err(|source| StoreError::Frame {
            path: path.clone(),
            source,
        })?;
        write_atomic(&path, &bytes)
    }

    /// `Ok(None)` when no session with this id was ever saved.
    pub fn load(&self, id: &str) -> Result<Option<Session>, StoreError> {
        let path = self.snapshot_path(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|source| StoreError::Corrupt { path, source })
    }

    pub fn load_frame(&self, id: &str) -> Result<DepthFrame, StoreError> {
        let path = self.frame_path(id);
        let bytes = fs::read(&path).map_err(|source| StoreError::Io {
            path: path.clone(),
            source,
        })?;
        DepthFrame::from_bytes(&bytes).map_err(|source| StoreError::Frame { path, source })
    }

    pub fn frame_bytes(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.frame_path(id);
        fs::read(&path).map_err(|source| StoreError::Io { path, source })
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut file = fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(bytes).map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}
