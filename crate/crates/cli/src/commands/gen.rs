use gridcast_core::grid::GridConfig;
use gridcast_core::sim::{generate_dataset, ScenarioConfig};

use super::{prepare_out, read_config, sha256_hex, write};
use crate::{CliError, CliResult, GenArgs};

pub const DATASET_FILE: &str = "dataset.eogm";

/// Scenario after command-line overrides. `--grid-size` keeps the metric
/// extent of the configured grid and changes the cell size.
pub fn scenario(args: &GenArgs) -> CliResult<ScenarioConfig> {
    let mut cfg: ScenarioConfig = read_config(args.common.config.as_ref())?;
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.common.grid_size {
        let extent = cfg.grid.width as f64 * cfg.grid.resolution;
        cfg.grid = GridConfig::new(n, n, extent / n as f64).map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Some(v) = args.common.variant {
        cfg.variant = v;
    }
    if let Some(n) = args.sequences {
        cfg.sequences = n;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn run(args: &GenArgs) -> CliResult<()> {
    let cfg = scenario(args)?;
    prepare_out(&args.common.out)?;
    let data = generate_dataset(&cfg, cfg.sequences, cfg.seed)?;
    let bytes = data.to_bytes();
    let path = args.common.out.join(DATASET_FILE);
    write(&path, &bytes)?;
    println!(
        "{}: {} sequences of {}x{} ({} labels), {} bytes, sha256 {}",
        path.display(),
        data.len(),
        cfg.grid.width,
        cfg.grid.height,
        cfg.variant,
        bytes.len(),
        sha256_hex(&bytes)
    );
    Ok(())
}
