use gridcast_core::grid::{pgm, pignistic};
use gridcast_core::predict::{argmax_smgm, ModelKind, Schedule};
use gridcast_core::sim::FRAME_PERIOD;
use serde::{Deserialize, Serialize};

use super::{check_overrides, prepare_out, read_checkpoint, read_config, read_dataset};
use crate::dump::PredictionDump;
use crate::{CliError, CliResult, PredictArgs};

pub const DUMP_FILE: &str = "predictions.gprd";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictFile {
    pub t_in: usize,
    pub horizon: usize,
}

impl Default for PredictFile {
    fn default() -> Self {
        PredictFile { t_in: 5, horizon: 15 }
    }
}

/// Prediction time of the `k`-th predicted frame, e.g. `0.1s`.
pub fn time_tag(k: usize) -> String {
    format!("{:.1}s", (k + 1) as f64 * FRAME_PERIOD)
}

pub fn run(args: &PredictArgs) -> CliResult<()> {
    let file: PredictFile = read_config(args.common.config.as_ref())?;
    let model = read_checkpoint(&args.checkpoint)?;
    let data = read_dataset(&args.dataset)?;
    check_overrides(&args.common, &data)?;
    let seq = data.sequences.get(args.index).ok_or_else(|| {
        CliError::Config(format!("sequence index {} is out of range for {} sequences", args.index, data.len()))
    })?;
    let out = model.rollout(seq, Schedule::Recursive { t_in: file.t_in }, file.t_in, file.horizon)?;
    prepare_out(&args.common.out)?;

    let grid = *data.grid();
    let mut written = 0;
    for (k, e) in out.occupancy.iter().enumerate() {
        pgm::write_ogm(&args.common.out.join(format!("occ_{}.pgm", time_tag(k))), &pignistic(e))?;
        written += 1;
    }
    if let Some(sem) = &out.semantics {
        for (k, p) in sem.iter().enumerate() {
            let labels = argmax_smgm(p, grid, data.table().clone())?;
            pgm::write_smgm(&args.common.out.join(format!("sem_{}.pgm", time_tag(k))), &labels)?;
            written += 1;
        }
    }

    let dump = if model.kind() == ModelKind::Semantics {
        let frames = out.semantics.unwrap_or_default().into_iter().map(|t| t.into_data()).collect();
        PredictionDump::new(grid.width, grid.height, model.arch().n_classes(), frames)?
    } else {
        let frames = out.occupancy.iter().map(|e| e.m_occ().iter().chain(e.m_emp()).copied().collect()).collect();
        PredictionDump::new(grid.width, grid.height, 2, frames)?
    };
    let path = args.common.out.join(DUMP_FILE);
    dump.write(&path)?;
    println!(
        "{}: {} sequence {} rolled out for {} steps, {written} images and {}",
        args.common.out.display(),
        model.kind(),
        args.index,
        file.horizon,
        path.display()
    );
    Ok(())
}
