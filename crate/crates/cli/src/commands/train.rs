use std::path::PathBuf;

use gridcast_core::predict::{
    checkpoint, evaluate_loss, split_indices, train, Architecture, Model, ModelKind, TrainConfig, Widths,
};
use gridcast_core::sim::SequenceSample;
use serde::{Deserialize, Serialize};

use super::{check_overrides, prepare_out, read_checkpoint, read_config, read_dataset, sha256_hex, split_ratios, write};
use crate::{CliError, CliResult, TrainArgs};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub training: TrainConfig,
    /// Used when a model is created from scratch.
    pub widths: Widths,
}

pub fn checkpoint_name(kind: ModelKind, stage: u8) -> String {
    format!("{kind}-stage{stage}.gckp")
}

pub fn loss_name(kind: ModelKind, stage: u8) -> String {
    format!("{kind}-stage{stage}-loss.csv")
}

fn initial_model(args: &TrainArgs, kind: ModelKind, file: &TrainFile, arch: Architecture) -> CliResult<Model> {
    if let Some(path) = &args.init {
        let m = read_checkpoint(path)?;
        if m.kind() != kind {
            return Err(CliError::Config(format!("{} holds a '{}' model, not '{kind}'", path.display(), m.kind())));
        }
        return Ok(m);
    }
    if args.stage == 2 {
        return Err(CliError::Missing(format!("stage 2 continues a stage-1 '{kind}' checkpoint; pass it with --init")));
    }
    if kind == ModelKind::Ours {
        let path = args
            .semantics
            .as_ref()
            .ok_or_else(|| CliError::Missing("'ours' is built on a trained semantics checkpoint; pass --semantics".into()))?;
        let sem = read_checkpoint(path)?;
        if sem.arch().grid != arch.grid || sem.arch().variant != arch.variant {
            return Err(CliError::Config(format!("{} was trained on a different grid or label set", path.display())));
        }
        return Ok(Model::ours(&sem, None, file.training.seed)?);
    }
    if args.semantics.is_some() {
        log::warn!("--semantics is only used by 'ours' models");
    }
    Ok(Model::new(arch, file.training.seed)?)
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let kind: ModelKind = args.model.parse()?;
    let mut file: TrainFile = read_config(args.common.config.as_ref())?;
    if let Some(seed) = args.common.seed {
        file.training.seed = seed;
    }
    file.training.stage = args.stage;
    file.training.validate()?;
    let ratios = split_ratios(args.split.as_ref())?;

    let data = read_dataset(&args.dataset)?;
    check_overrides(&args.common, &data)?;
    let arch = Architecture::new(kind, *data.grid(), data.table().variant(), file.widths.clone())?;
    let mut model = initial_model(args, kind, &file, arch)?;
    let [train_idx, val_idx, _] = split_indices(data.len(), ratios, file.training.seed)?;
    let pick = |idx: &[usize]| -> Vec<SequenceSample> { idx.iter().map(|&i| data.sequences[i].clone()).collect() };
    let (train_set, val_set) = (pick(&train_idx), pick(&val_idx));
    prepare_out(&args.common.out)?;

    let curve = train(&mut model, &train_set, &file.training)?;
    let bytes = checkpoint::to_bytes(&model)?;
    let ckpt: PathBuf = args.common.out.join(checkpoint_name(kind, args.stage));
    write(&ckpt, &bytes)?;
    write(&args.common.out.join(loss_name(kind, args.stage)), curve.to_csv().as_bytes())?;

    let first = curve.losses.first().copied().unwrap_or(f64::NAN);
    let last = curve.losses.last().copied().unwrap_or(f64::NAN);
    print!(
        "{}: {kind} stage {} on {} sequences, loss {first:.6} -> {last:.6}",
        ckpt.display(),
        args.stage,
        train_set.len()
    );
    if !val_set.is_empty() {
        print!(", validation {:.6}", evaluate_loss(&model, &val_set, &file.training)?);
    }
    println!(", sha256 {}", sha256_hex(&bytes));
    Ok(())
}
