//! Depth and disparity rasters plus the on-disk frame format.
//!
//! A frame file is the 4-byte magic `CVLM`, then `u16` width and `u16`
//! height, then `width * height` little-endian `u16` millimeter samples in
//! row-major order. Zero marks an invalid sample.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRAME_MAGIC: &[u8; 4] = b"CVLM";
const HEADER_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame data has {actual} samples, expected {width}x{height}")]
    SizeMismatch {
        width: u32,
        height: u32,
        actual: usize,
    },
    #[error("bad frame header: {0}")]
    BadHeader(String),
    #[error("frame truncated: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("frame dimensions {width}x{height} do not fit the file format")]
    TooLarge { width: u32, height: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Integer millimeter depth image; 0 = no measurement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthFrame {
    width: u32,
    height: u32,
    data: Vec<u16>,
}

impl DepthFrame {
    pub fn new(width: u32, height: u32, data: Vec<u16>) -> Result<Self, FrameError> {
        if data.len() != width as usize * height as usize {
            return Err(FrameError::SizeMismatch {
                width,
                height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, depth_mm: u16) -> Self {
        Self {
            width,
            height,
            data: vec![depth_mm; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u16] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, depth_mm: u16) {
        self.data[y as usize * self.width as usize + x as usize] = depth_mm;
    }

    pub fn invalid_count(&self) -> usize {
        self.data.iter().filter(|&&d| d == 0).count()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), FrameError> {
        let (width, height) = match (u16::try_from(self.width), u16::try_from(self.height)) {
            (Ok(w), Ok(h)) => (w, h),
            _ => {
                return Err(FrameError::TooLarge {
                    width: self.width,
                    height: self.height,
                })
            }
        };
        let mut buf = Vec::with_capacity(HEADER_LEN + 2 * self.data.len());
        buf.extend_from_slice(FRAME_MAGIC);
        buf.extend_from_slice(&width.to_le_bytes());
        buf.extend_from_slice(&height.to_le_bytes());
        for d in &self.data {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FrameError> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < HEADER_LEN {
            return Err(FrameError::BadHeader(format!(
                "{} bytes is shorter than the 8-byte header",
                bytes.len()
            )));
        }
        if &bytes[..4] != FRAME_MAGIC {
            return Err(FrameError::BadHeader("missing CVLM magic".into()));
        }
        let width = u16::from_le_bytes([bytes[4], bytes[5]]) as u32;
        let height = u16::from_le_bytes([bytes[6], bytes[7]]) as u32;
        if width == 0 || height == 0 {
            return Err(FrameError::BadHeader(format!(
                "empty frame {width}x{height}"
            )));
        }
        let expected = HEADER_LEN + 2 * width as usize * height as usize;
        if bytes.len() != expected {
            return Err(FrameError::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        Self::new(width, height, data)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, FrameError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Plain-text (P2) graymap with the raw millimeter values, for eyeballing
    /// frames in any image viewer.
    pub fn to_pgm(&self) -> String {
        let max = self.data.iter().copied().max().unwrap_or(0).max(1);
        let mut out = format!(
            "P2\n# covillm depth frame, millimeters, 0 = invalid\n{} {}\n{}\n",
            self.width, self.height, max
        );
        for row in self.data.chunks(self.width as usize) {
            let line: Vec<String> = row.iter().map(u16::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Real-valued disparity image (`k / depth`); 0 = invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityFrame {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl DisparityFrame {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self, FrameError> {
        if data.len() != width as usize * height as usize {
            return Err(FrameError::SizeMismatch {
                width,
                height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}
