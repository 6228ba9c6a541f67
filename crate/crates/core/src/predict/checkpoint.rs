//! Model checkpoint file.
//!
//! Layout, little-endian: `"GCKP"`, `u16` version, `u32` length and the
//! architecture as JSON, `u32` tensor count, then per tensor a manifest entry
//! (`u16` name length, name, `u8` rank, `u32` dims, `u64` offset in values),
//! then `u64` value count and the `f32` payload.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use super::model::{Architecture, Model, Prong};
use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GCKP";
pub const VERSION: u16 = 1;

pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(model.arch())?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let tensors: Vec<(String, &Tensor<f32>)> = model
        .prongs()
        .iter()
        .flat_map(|p| p.params.entries().iter().map(move |(n, t)| (format!("{}.{n}", p.name), t)))
        .collect();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in &tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += t.len() as u64;
    }
    out.extend_from_slice(&offset.to_le_bytes());
    for (_, t) in &tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a>(Cursor<&'a [u8]>);

impl Reader<'_> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|_| Error::Format("checkpoint is truncated".into()))?;
        Ok(b)
    }

    fn vec(&mut self, n: usize) -> Result<Vec<u8>> {
        let remaining = self.0.get_ref().len() - self.0.position() as usize;
        if n > remaining {
            return Err(Error::Format("checkpoint is truncated".into()));
        }
        let mut b = vec![0u8; n];
        self.0.read_exact(&mut b).map_err(|_| Error::Format("checkpoint is truncated".into()))?;
        Ok(b)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader(Cursor::new(bytes));
    if &r.bytes::<4>()? != MAGIC {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let version = u16::from_le_bytes(r.bytes()?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let json_len = u32::from_le_bytes(r.bytes()?) as usize;
    let arch: Architecture = serde_json::from_slice(&r.vec(json_len)?)?;
    arch.validate()?;
    let count = u32::from_le_bytes(r.bytes()?) as usize;
    let mut manifest = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = u16::from_le_bytes(r.bytes()?) as usize;
        let name = String::from_utf8(r.vec(name_len)?).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = r.bytes::<1>()?[0] as usize;
        let shape = (0..rank).map(|_| Ok(u32::from_le_bytes(r.bytes()?) as usize)).collect::<Result<Vec<_>>>()?;
        let offset = u64::from_le_bytes(r.bytes()?) as usize;
        manifest.push((name, shape, offset));
    }
    let total = u64::from_le_bytes(r.bytes()?) as usize;
    let payload = r.vec(total.checked_mul(4).ok_or_else(|| Error::Format("payload size overflows".into()))?)?;
    if r.0.position() as usize != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    let values: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();

    let mut prongs = Vec::new();
    let mut entries = manifest.into_iter();
    for (pname, config) in arch.prongs() {
        let mut params = ParamSet::new();
        for (lname, lshape) in config.layout() {
            let (name, shape, offset) =
                entries.next().ok_or_else(|| Error::Format("checkpoint is missing tensors".into()))?;
            let want = format!("{pname}.{lname}");
            if name != want || shape != lshape {
                return Err(Error::Format(format!("expected tensor {want} {lshape:?}, found {name} {shape:?}")));
            }
            let n: usize = shape.iter().product();
            let data = values
                .get(offset..offset + n)
                .ok_or_else(|| Error::Format(format!("tensor {name} lies outside the payload")))?;
            params.push(lname, Tensor::new(shape, data.to_vec())?);
        }
        prongs.push(Prong { name: pname.to_string(), config, params });
    }
    if entries.next().is_some() {
        return Err(Error::Format("checkpoint has extra tensors".into()));
    }
    Model::from_parts(arch, prongs)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
