use gridcast_core::grid::Thresholds;
use gridcast_core::metrics::{evaluate, summary_csv, timestep_csv, CopyLast, Forecaster, GroundTruth, MetricReport};
use gridcast_core::predict::{split_indices, Model, ModelKind, Scheduled};
use gridcast_core::sim::SequenceSample;
use serde::{Deserialize, Serialize};

use super::{check_overrides, prepare_out, read_checkpoint, read_config, read_dataset, split_ratios, write};
use crate::{CliError, CliResult, EvalArgs};

pub const TIMESTEP_FILE: &str = "timestep.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalFile {
    pub t_in: usize,
    pub horizon: usize,
    pub thresholds: Thresholds,
}

impl Default for EvalFile {
    fn default() -> Self {
        EvalFile { t_in: 5, horizon: 15, thresholds: Thresholds::default() }
    }
}

fn label(path: &std::path::Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let file: EvalFile = read_config(args.common.config.as_ref())?;
    file.thresholds.validate()?;
    if args.checkpoints.is_empty() && args.baselines.is_empty() {
        return Err(CliError::Config("nothing to evaluate; pass --checkpoint or --baseline".into()));
    }
    let models: Vec<(String, Model)> =
        args.checkpoints.iter().map(|p| Ok((label(p), read_checkpoint(p)?))).collect::<CliResult<_>>()?;
    let data = read_dataset(&args.dataset)?;
    check_overrides(&args.common, &data)?;
    for (name, m) in &models {
        if m.kind() == ModelKind::Semantics {
            return Err(CliError::Config(format!("{name} is a semantics model, which predicts no occupancy")));
        }
        m.check_sequence(&data.sequences[0]).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
    }

    let sequences: Vec<SequenceSample> = if args.all {
        data.sequences.clone()
    } else {
        let [_, _, test] = split_indices(data.len(), split_ratios(args.split.as_ref())?, args.common.seed.unwrap_or(0))?;
        test.iter().map(|&i| data.sequences[i].clone()).collect()
    };
    if sequences.is_empty() {
        return Err(CliError::Config(format!("the test split of {} sequences is empty", data.len())));
    }

    let mut forecasters: Vec<Box<dyn Forecaster + '_>> = models
        .iter()
        .map(|(name, model)| {
            Box::new(Scheduled { model, teacher_forced: false, label: name.clone() }) as Box<dyn Forecaster>
        })
        .collect();
    for b in &args.baselines {
        forecasters.push(match b.as_str() {
            "oracle" => Box::new(GroundTruth),
            "copy-last" => Box::new(CopyLast),
            other => return Err(CliError::Config(format!("unknown baseline '{other}'; use oracle or copy-last"))),
        });
    }

    let scenario = args.scenario.clone().unwrap_or_else(|| label(&args.dataset));
    let reports: Vec<MetricReport> = forecasters
        .iter()
        .map(|f| evaluate(f.as_ref(), &scenario, &sequences, file.t_in, file.horizon, file.thresholds))
        .collect::<Result<_, _>>()?;
    prepare_out(&args.common.out)?;
    write(&args.common.out.join(TIMESTEP_FILE), timestep_csv(&reports).as_bytes())?;
    let summary = summary_csv(&reports);
    write(&args.common.out.join(SUMMARY_FILE), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}
