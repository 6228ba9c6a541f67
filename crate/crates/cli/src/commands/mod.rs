pub mod eval;
pub mod gen;
pub mod predict;
pub mod train;

use std::fs;
use std::path::{Path, PathBuf};

use gridcast_core::predict::{checkpoint, Model};
use gridcast_core::sim::Dataset;
use gridcast_core::Error;
use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult, Common};

pub const SPLIT: [f64; 3] = [0.7, 0.15, 0.15];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn require(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Missing(format!("{what} {} does not exist", path.display())))
    }
}

fn input_error(path: &Path, e: Error) -> CliError {
    match e {
        Error::Io { source, .. } => CliError::Config(format!("cannot read {}: {source}", path.display())),
        e => CliError::Config(format!("{}: {e}", path.display())),
    }
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    require(path, "dataset")?;
    Dataset::read(path).map_err(|e| input_error(path, e))
}

pub fn read_checkpoint(path: &Path) -> CliResult<Model> {
    require(path, "checkpoint")?;
    checkpoint::load(path).map_err(|e| input_error(path, e))
}

/// Parses the command config, or the defaults when none is given.
pub fn read_config<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> CliResult<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Rejects grid and label flags that disagree with an existing dataset.
pub fn check_overrides(common: &Common, data: &Dataset) -> CliResult<()> {
    let g = data.grid();
    if let Some(n) = common.grid_size {
        if (g.width, g.height) != (n, n) {
            return Err(CliError::Config(format!("--grid-size {n} does not match the {}x{} dataset", g.width, g.height)));
        }
    }
    if let Some(v) = common.variant {
        if v != data.table().variant() {
            return Err(CliError::Config(format!("--variant {v} does not match the '{}' dataset", data.table().variant())));
        }
    }
    Ok(())
}

pub fn split_ratios(flag: Option<&Vec<f64>>) -> CliResult<[f64; 3]> {
    match flag {
        None => Ok(SPLIT),
        Some(v) => v.as_slice().try_into().map_err(|_| CliError::Config("--split takes three ratios".into())),
    }
}
