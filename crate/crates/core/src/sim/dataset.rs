//! Sequence generation and the little-endian dataset file.
//!
//! Layout: `"EOGM"`, `u16` version, grid (`u32` width, `u32` height, `f32`
//! resolution), label table (`u8` variant, `u8` count, then per entry `u8` id,
//! `u8` name length, name bytes), `u32` sequence count, then per sequence
//! [`SEQUENCE_LEN`] frames of `[f32 m_occ; n] [f32 m_emp; n] [u8 label; n]
//! [u8 mask; n]`, all row-major.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::mask::dynamic_mask;
use super::scenario::ScenarioConfig;
use super::sensor::sense;
use super::substream;
use super::world::step_world;
use crate::error::{Error, Result};
use crate::grid::{rasterize_scan, Eogm, GridConfig, LabelTable, LabelVariant, Smgm};

pub const SEQUENCE_LEN: usize = 20;
pub const FRAME_PERIOD: f64 = 0.1;
pub const MAGIC: &[u8; 4] = b"EOGM";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub eogm: Eogm,
    pub smgm: Smgm,
    pub dynamic_mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    frames: Vec<Frame>,
}

impl SequenceSample {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.len() != SEQUENCE_LEN {
            return Err(Error::Shape(format!("a sequence holds {SEQUENCE_LEN} frames, got {}", frames.len())));
        }
        let cfg = *frames[0].eogm.config();
        let table = frames[0].smgm.table().clone();
        for f in &frames {
            if f.eogm.config() != &cfg || f.smgm.config() != &cfg || f.dynamic_mask.len() != cfg.cells() {
                return Err(Error::Shape("frames of one sequence must share a grid".into()));
            }
            if f.smgm.table() != &table {
                return Err(Error::Shape("frames of one sequence must share a label table".into()));
            }
        }
        Ok(SequenceSample { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame_period(&self) -> f64 {
        FRAME_PERIOD
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub version: u16,
    pub grid: GridConfig,
    pub table: Arc<LabelTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub sequences: Vec<SequenceSample>,
}

impl Dataset {
    pub fn grid(&self) -> &GridConfig {
        &self.header.grid
    }

    pub fn table(&self) -> &Arc<LabelTable> {
        &self.header.table
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.header.grid;
        let n = g.cells();
        let mut out = Vec::with_capacity(64 + self.sequences.len() * SEQUENCE_LEN * n * 10);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.header.version.to_le_bytes());
        out.extend_from_slice(&(g.width as u32).to_le_bytes());
        out.extend_from_slice(&(g.height as u32).to_le_bytes());
        out.extend_from_slice(&(g.resolution as f32).to_le_bytes());
        let table = &self.header.table;
        out.push(table.variant() as u8);
        out.push(table.len() as u8);
        for (id, name) in table.entries() {
            out.push(*id);
            out.push(name.len() as u8);
            out.extend_from_slice(name.as_bytes());
        }
        out.extend_from_slice(&(self.sequences.len() as u32).to_le_bytes());
        for seq in &self.sequences {
            for f in &seq.frames {
                for v in f.eogm.m_occ().iter().chain(f.eogm.m_emp()) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(f.smgm.labels());
                out.extend(f.dynamic_mask.iter().map(|&m| m as u8));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a dataset file (bad magic)".into()));
        }
        let version = u16::from_le_bytes(take(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let width = u32::from_le_bytes(take(&mut r)?) as usize;
        let height = u32::from_le_bytes(take(&mut r)?) as usize;
        let resolution = f32::from_le_bytes(take(&mut r)?) as f64;
        let grid = GridConfig::new(width, height, resolution).map_err(|e| Error::Format(e.to_string()))?;

        let variant_tag = u8::from_le_bytes(take(&mut r)?);
        let variant = LabelVariant::from_u8(variant_tag)
            .ok_or_else(|| Error::Format(format!("unknown label variant tag {variant_tag}")))?;
        let count = u8::from_le_bytes(take(&mut r)?);
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let [id, len] = take::<2>(&mut r)?;
            let mut name = vec![0u8; len as usize];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("label name is not UTF-8".into()))?;
            entries.push((id, name));
        }
        let table = Arc::new(LabelTable::from_parts(variant, entries)?);

        let n_seq = u32::from_le_bytes(take(&mut r)?) as usize;
        let n = grid.cells();
        let frame_bytes = n * 10;
        let remaining = bytes.len() - r.position() as usize;
        if remaining != n_seq * SEQUENCE_LEN * frame_bytes {
            return Err(Error::Format(format!(
                "payload is {remaining} bytes, expected {} for {n_seq} sequences",
                n_seq * SEQUENCE_LEN * frame_bytes
            )));
        }
        let mut sequences = Vec::with_capacity(n_seq);
        let mut pos = r.position() as usize;
        for _ in 0..n_seq {
            let mut frames = Vec::with_capacity(SEQUENCE_LEN);
            for _ in 0..SEQUENCE_LEN {
                let chunk = &bytes[pos..pos + frame_bytes];
                pos += frame_bytes;
                let floats = |s: &[u8]| -> Vec<f32> {
                    s.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
                };
                let m_occ = floats(&chunk[..4 * n]);
                let m_emp = floats(&chunk[4 * n..8 * n]);
                let labels = chunk[8 * n..9 * n].to_vec();
                let dynamic_mask = chunk[9 * n..]
                    .iter()
                    .map(|&b| match b {
                        0 => Ok(false),
                        1 => Ok(true),
                        other => Err(Error::Format(format!("mask byte {other} is not 0 or 1"))),
                    })
                    .collect::<Result<Vec<bool>>>()?;
                frames.push(Frame {
                    eogm: Eogm::from_channels(grid, m_occ, m_emp)?,
                    smgm: Smgm::new(grid, labels, table.clone())?,
                    dynamic_mask,
                });
            }
            sequences.push(SequenceSample::new(frames)?);
        }
        Ok(Dataset { header: DatasetHeader { version, grid, table }, sequences })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Dataset::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Format("unexpected end of file".into()))
}

fn take<const N: usize>(r: &mut Cursor<&[u8]>) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

/// Simulates one sequence: 20 steps of 0.1 s, each followed by a scan.
pub fn generate_sequence(cfg: &ScenarioConfig, table: &Arc<LabelTable>, seed: u64) -> Result<SequenceSample> {
    let sensor = cfg.sensor_config();
    let mut world = cfg.build_world(seed);
    let mut frames = Vec::with_capacity(SEQUENCE_LEN);
    for _ in 0..SEQUENCE_LEN {
        world = step_world(&world, FRAME_PERIOD);
        let hits = sense(&world, &sensor);
        let (eogm, smgm) = rasterize_scan(&hits, &cfg.grid, cfg.masses, table)?;
        frames.push(Frame { eogm, smgm, dynamic_mask: dynamic_mask(&world, &cfg.grid) });
    }
    SequenceSample::new(frames)
}

/// Generates `n_sequences` independent sequences. Sequence `i` draws from
/// its own substream of `seed`, so the result does not depend on how many
/// worker threads run.
pub fn generate_dataset(cfg: &ScenarioConfig, n_sequences: usize, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    if n_sequences == 0 {
        return Err(Error::Config("sequence count must be at least 1".into()));
    }
    let table = Arc::new(LabelTable::new(cfg.variant));
    let sequences = (0..n_sequences)
        .into_par_iter()
        .map(|i| generate_sequence(cfg, &table, substream(seed, i as u64, 0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { header: DatasetHeader { version: FORMAT_VERSION, grid: cfg.grid, table }, sequences })
}
