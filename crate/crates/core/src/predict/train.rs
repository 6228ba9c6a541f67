use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::model::{onehot_frames, occupancy_frames, prong_loss, Model, ModelKind, Objective, Prong, Stream};
use super::params::{seeded_rng, Adam};
use super::prong::Feedback;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::sim::{substream, SequenceSample, SEQUENCE_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Observed frames before prediction starts.
    pub t_in: usize,
    /// Predicted frames.
    pub horizon: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// 1 trains next-frame prediction, 2 fine-tunes recursive rollout.
    pub stage: u8,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { t_in: 5, horizon: 15, epochs: 30, batch_size: 4, learning_rate: 1e-4, stage: 1, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_in == 0 || self.horizon == 0 || self.t_in + self.horizon > SEQUENCE_LEN {
            return Err(Error::Config(format!(
                "t_in {} + horizon {} must fit a {SEQUENCE_LEN}-frame sequence",
                self.t_in, self.horizon
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !matches!(self.stage, 1 | 2) {
            return Err(Error::Config(format!("stage must be 1 or 2, got {}", self.stage)));
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        if self.stage == 1 {
            Objective::NextFrame
        } else {
            Objective::Rollout { t_in: self.t_in }
        }
    }

    fn frames(&self) -> usize {
        self.t_in + self.horizon
    }
}

/// Mean training loss of every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    pub stage: u8,
    pub losses: Vec<f64>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,stage,loss\n");
        for (e, l) in self.losses.iter().enumerate() {
            let _ = writeln!(out, "{},{},{:e}", e + 1, self.stage, l);
        }
        out
    }
}

struct SampleResult {
    loss: f64,
    grads: Vec<Vec<Tensor<f32>>>,
}

fn prong_grads(
    prong: &Prong,
    frames: &[Tensor<f32>],
    side: Option<&[Tensor<f32>]>,
    objective: Objective,
) -> Result<(f64, Vec<Tensor<f32>>)> {
    let mut g = Graph::new();
    let vars: Vec<_> = prong.params.tensors().map(|t| g.leaf(t.clone())).collect();
    let (loss, _) = prong_loss(&mut g, &prong.config, &vars, frames, side, objective)?;
    let value = g.value(loss).item() as f64;
    let mut grads = g.backward(loss)?;
    let grads = vars
        .iter()
        .zip(prong.params.tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((value, grads))
}

fn sample(
    model: &Model,
    seq: &SequenceSample,
    side: Option<&[Tensor<f32>]>,
    cfg: &TrainConfig,
) -> Result<SampleResult> {
    let len = cfg.frames();
    let objective = cfg.objective();
    let jobs: Vec<(usize, Vec<Tensor<f32>>)> = match model.kind() {
        ModelKind::Semantics => vec![(0, onehot_frames(seq, len)?)],
        ModelKind::Ours | ModelKind::Prednet => {
            vec![(model.trainable()[0], occupancy_frames(seq, len, Stream::All)?)]
        }
        ModelKind::DoubleProng => vec![
            (0, occupancy_frames(seq, len, Stream::Static)?),
            (1, occupancy_frames(seq, len, Stream::Dynamic)?),
        ],
    };
    let mut loss = 0.0;
    let mut grads = Vec::new();
    for (i, frames) in jobs {
        let (l, g) = prong_grads(&model.prongs()[i], &frames, side, objective)?;
        loss += l;
        grads.push(g);
    }
    Ok(SampleResult { loss, grads })
}

/// Frozen semantic predictions that condition the occupancy prong, one
/// list of per-step class maps for each sequence.
pub fn semantic_cache(model: &Model, data: &[SequenceSample], cfg: &TrainConfig) -> Result<Vec<Vec<Tensor<f32>>>> {
    let schedule = cfg.objective().schedule();
    data.par_iter().map(|s| model.semantic_predictions(s, schedule, cfg.frames(), Feedback::Soft)).collect()
}

/// Trains the trainable prongs of `model` with Adam. The model's semantic
/// prong stays fixed when it conditions an occupancy prong.
///
/// Samples of a batch run in parallel and their gradients are summed in
/// sample order, so results do not depend on the worker count.
pub fn train(model: &mut Model, data: &[SequenceSample], cfg: &TrainConfig) -> Result<LossCurve> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    for s in data {
        model.check_sequence(s)?;
    }
    let cache = if model.kind() == ModelKind::Ours { Some(semantic_cache(model, data, cfg)?) } else { None };
    let trainable = model.trainable();
    let mut opts: Vec<Adam> = trainable.iter().map(|&i| Adam::new(&model.prongs()[i].params, cfg.learning_rate)).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seeded_rng(substream(cfg.seed, epoch as u64, cfg.stage as u64)));
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<SampleResult> = batch
                .par_iter()
                .map(|&i| sample(model, &data[i], cache.as_ref().map(|c| c[i].as_slice()), cfg))
                .collect::<Result<_>>()?;
            let mut sum: Option<Vec<Vec<Tensor<f32>>>> = None;
            for (r, &i) in results.into_iter().zip(batch) {
                if !r.loss.is_finite() || r.grads.iter().flatten().any(|t| !t.all_finite()) {
                    return Err(Error::Numeric(format!(
                        "non-finite loss {} at epoch {}, batch {b}, sequence {i} (stage {}, lr {})",
                        r.loss,
                        epoch + 1,
                        cfg.stage,
                        cfg.learning_rate
                    )));
                }
                total += r.loss;
                match &mut sum {
                    None => sum = Some(r.grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().flatten().zip(r.grads.iter().flatten()) {
                            a.add_assign(g);
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f32;
            for ((&pi, opt), mut grads) in trainable.iter().zip(&mut opts).zip(sum.unwrap_or_default()) {
                for g in &mut grads {
                    g.data_mut().iter_mut().for_each(|v| *v *= scale);
                }
                opt.update(&mut model.prongs_mut()[pi].params, &grads)?;
            }
        }
        let mean = total / data.len() as f64;
        log::info!("{} stage {} epoch {}/{}: loss {mean:.6}", model.kind(), cfg.stage, epoch + 1, cfg.epochs);
        losses.push(mean);
    }
    for &i in &trainable {
        if !model.prongs()[i].params.all_finite() {
            return Err(Error::Numeric(format!("prong '{}' has non-finite parameters after training", model.prongs()[i].name)));
        }
    }
    Ok(LossCurve { stage: cfg.stage, losses })
}

/// Mean loss of the current parameters without updating them.
pub fn evaluate_loss(model: &Model, data: &[SequenceSample], cfg: &TrainConfig) -> Result<f64> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("evaluation split is empty".into()));
    }
    let cache = if model.kind() == ModelKind::Ours { Some(semantic_cache(model, data, cfg)?) } else { None };
    let losses: Vec<f64> = data
        .par_iter()
        .enumerate()
        .map(|(i, s)| sample(model, s, cache.as_ref().map(|c| c[i].as_slice()), cfg).map(|r| r.loss))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / data.len() as f64)
}

/// Deterministic `train / val / test` split by seeded shuffle.
pub fn split_indices(n: usize, ratios: [f64; 3], seed: u64) -> Result<[Vec<usize>; 3]> {
    let total: f64 = ratios.iter().sum();
    if ratios.iter().any(|&r| !(r >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be nonnegative and sum to 1")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(substream(seed, 0x5911, 0)));
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok([idx, val, test])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridConfig, LabelVariant};
    use crate::predict::model::{Architecture, Widths};
    use crate::sim::{generate_dataset, ScenarioConfig, ScenarioKind};

    fn arch(kind: ModelKind) -> Architecture {
        let grid = GridConfig::new(8, 8, 1.0).unwrap();
        Architecture::new(kind, grid, LabelVariant::Four, Widths { a: vec![3], r: vec![3, 4], kernel: 3 }).unwrap()
    }

    fn data(n: usize) -> Vec<SequenceSample> {
        let cfg = ScenarioConfig {
            scenario: ScenarioKind::MultiVehicleStraight,
            grid: GridConfig::new(8, 8, 1.0).unwrap(),
            variant: LabelVariant::Four,
            ..ScenarioConfig::default()
        };
        generate_dataset(&cfg, n, 5).unwrap().sequences
    }

    fn quick(stage: u8, lr: f64) -> TrainConfig {
        TrainConfig { epochs: 2, batch_size: 2, learning_rate: lr, stage, seed: 1, ..TrainConfig::default() }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let d = data(3);
        for kind in [ModelKind::Semantics, ModelKind::Prednet, ModelKind::DoubleProng] {
            for stage in [1, 2] {
                let mut m = Model::new(arch(kind), 7).unwrap();
                let before = m.clone();
                let curve = train(&mut m, &d, &quick(stage, 0.0)).unwrap();
                assert_eq!(m, before);
                assert!(curve.losses.iter().all(|l| l.is_finite()));
            }
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let d = data(3);
        let run = || {
            let mut m = Model::new(arch(ModelKind::Prednet), 7).unwrap();
            let c = train(&mut m, &d, &quick(1, 1e-2)).unwrap();
            (m, c)
        };
        let (a, ca) = run();
        let (b, cb) = run();
        assert_eq!(ca, cb);
        assert_eq!(a, b);
        assert_ne!(a, Model::new(arch(ModelKind::Prednet), 7).unwrap());
    }

    #[test]
    fn semantic_prong_stays_frozen() {
        let d = data(3);
        let sem = Model::new(arch(ModelKind::Semantics), 7).unwrap();
        let mut ours = Model::ours(&sem, None, 8).unwrap();
        let occ_before = ours.prong("occ").unwrap().clone();
        for stage in [1, 2] {
            train(&mut ours, &d, &quick(stage, 1e-2)).unwrap();
        }
        assert_eq!(ours.prong("sem").unwrap(), sem.prong("sem").unwrap());
        assert_ne!(ours.prong("occ").unwrap(), &occ_before);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let [a, b, c] = split_indices(200, [0.7, 0.15, 0.15], 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (140, 30, 30));
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        assert_eq!(split_indices(200, [0.7, 0.15, 0.15], 3).unwrap()[0], a);
        assert!(split_indices(10, [0.5, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn bad_configs() {
        let d = data(1);
        let mut m = Model::new(arch(ModelKind::Prednet), 0).unwrap();
        for cfg in [
            TrainConfig { stage: 3, ..quick(1, 0.0) },
            TrainConfig { horizon: 16, ..quick(1, 0.0) },
            TrainConfig { batch_size: 0, ..quick(1, 0.0) },
            TrainConfig { learning_rate: f64::NAN, ..quick(1, 0.0) },
        ] {
            assert!(matches!(train(&mut m, &d, &cfg), Err(Error::Config(_))));
        }
        assert!(train(&mut m, &[], &quick(1, 0.0)).is_err());
    }

    #[test]
    fn diverging_run_aborts() {
        let d = data(2);
        let mut m = Model::new(arch(ModelKind::Prednet), 0).unwrap();
        m.prongs_mut()[0].params.tensors_mut().next().unwrap().data_mut()[0] = f32::NAN;
        let err = train(&mut m, &d, &quick(1, 1e-3)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
    }
}
