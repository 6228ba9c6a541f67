//! Binary PGM (P5, maxval 255) export of grids.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Ogm, Smgm};
use crate::error::{Error, Result};

pub fn ogm_pixels(ogm: &Ogm) -> Vec<u8> {
    ogm.cells().iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

pub fn smgm_pixels(smgm: &Smgm) -> Vec<u8> {
    let max_id = smgm.table().max_id() as u32;
    smgm.labels()
        .iter()
        .map(|&l| if max_id == 0 { 0 } else { (l as u32 * 255 / max_id) as u8 })
        .collect()
}

pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::Shape(format!("{} pixels for a {width}x{height} image", pixels.len())));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Parses a P5 image with maxval 255; returns `(width, height, pixels)`.
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| Error::Format("non-ascii PGM header".into()))?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(Error::Format(format!("unsupported PGM header {} / maxval {}", fields[0], fields[3])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM dimension '{s}'")));
    let (w, h) = (parse(fields[1])?, parse(fields[2])?);
    let data = &bytes[pos + 1..];
    if data.len() != w * h {
        return Err(Error::Format(format!("PGM payload is {} bytes, expected {}", data.len(), w * h)));
    }
    Ok((w, h, data.to_vec()))
}

pub fn write(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let bytes = encode(width, height, pixels)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn write_ogm(path: &Path, ogm: &Ogm) -> Result<()> {
    write(path, ogm.config().width, ogm.config().height, &ogm_pixels(ogm))
}

pub fn write_smgm(path: &Path, smgm: &Smgm) -> Result<()> {
    write(path, smgm.config().width, smgm.config().height, &smgm_pixels(smgm))
}
