//! Raw prediction dump.
//!
//! Layout, little-endian: `"GPRD"`, `u16` version, `u32` width, `u32` height,
//! `u16` channels, `u32` frame count, then every frame as channel-planar `f32`.

use std::fs;
use std::path::Path;

use gridcast_core::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GPRD";
pub const VERSION: u16 = 1;
const HEADER: usize = 4 + 2 + 4 + 4 + 2 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDump {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub frames: Vec<Vec<f32>>,
}

impl PredictionDump {
    pub fn new(width: usize, height: usize, channels: usize, frames: Vec<Vec<f32>>) -> Result<Self> {
        let n = width * height * channels;
        if let Some(bad) = frames.iter().find(|f| f.len() != n) {
            return Err(Error::Shape(format!("frame of {} values, expected {n}", bad.len())));
        }
        Ok(PredictionDump { width, height, channels, frames })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 4 * self.frames.iter().map(Vec::len).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.channels as u16).to_le_bytes());
        out.extend_from_slice(&(self.frames.len() as u32).to_le_bytes());
        for v in self.frames.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a prediction dump".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("four bytes")) as usize;
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported prediction dump version {version}")));
        }
        let (width, height) = (u32_at(6), u32_at(10));
        let channels = u16::from_le_bytes([bytes[14], bytes[15]]) as usize;
        let count = u32_at(16);
        let n = width * height * channels;
        if bytes.len() - HEADER != count * n * 4 {
            return Err(Error::Format(format!("payload does not hold {count} frames of {n} values")));
        }
        let values: Vec<f32> =
            bytes[HEADER..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let frames = if n == 0 { vec![Vec::new(); count] } else { values.chunks(n).map(<[f32]>::to_vec).collect() };
        PredictionDump::new(width, height, channels, frames)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        PredictionDump::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
