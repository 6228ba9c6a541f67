use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::ParamSet;
use super::prong::{error_loss, prednet_error, unroll, Feedback, Head, ProngConfig, StepInput, Trace};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::grid::{dst_fuse, BeliefMass, Eogm, GridConfig, LabelTable, LabelVariant, Smgm};
use crate::metrics::Forecaster;
use crate::sim::{SequenceSample, SEQUENCE_LEN};

/// Weight of upper-layer errors relative to the bottom layer.
pub const UPPER_LAYER_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// The semantic prong on its own.
    Semantics,
    /// Occupancy prong conditioned on a frozen semantic prong.
    Ours,
    /// Occupancy prong without semantics.
    Prednet,
    /// Separate prongs for static and dynamic cells, fused per cell.
    DoubleProng,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Semantics, ModelKind::Ours, ModelKind::Prednet, ModelKind::DoubleProng];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Semantics => "semantics",
            ModelKind::Ours => "ours",
            ModelKind::Prednet => "prednet",
            ModelKind::DoubleProng => "double-prong",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind '{s}'")))
    }
}

/// Channel widths shared by every prong of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Widths {
    /// Target-unit channels of layers `1..`; layer 0 is the input.
    pub a: Vec<usize>,
    /// Representation channels, one per layer.
    pub r: Vec<usize>,
    pub kernel: usize,
}

impl Default for Widths {
    fn default() -> Self {
        Widths { a: vec![16, 32], r: vec![16, 32, 64], kernel: 3 }
    }
}

impl Widths {
    /// Compact stack for small grids on a single CPU.
    pub fn desk() -> Self {
        Widths { a: vec![8, 16], r: vec![8, 8, 16], kernel: 3 }
    }
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub kind: ModelKind,
    pub grid: GridConfig,
    pub variant: LabelVariant,
    pub widths: Widths,
}

impl Architecture {
    pub fn new(kind: ModelKind, grid: GridConfig, variant: LabelVariant, widths: Widths) -> Result<Self> {
        let arch = Architecture { kind, grid, variant, widths };
        arch.validate()?;
        Ok(arch)
    }

    pub fn n_classes(&self) -> usize {
        LabelTable::new(self.variant).len()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.widths.a.len() + 1 != self.widths.r.len() {
            return Err(Error::Config(format!(
                "{} representation layers need {} upper target widths, got {}",
                self.widths.r.len(),
                self.widths.r.len().saturating_sub(1),
                self.widths.a.len()
            )));
        }
        for (_, cfg) in self.prongs() {
            cfg.validate()?;
            cfg.check_grid(self.grid.height, self.grid.width)?;
        }
        Ok(())
    }

    fn prong(&self, head: Head, input: usize, side: usize) -> ProngConfig {
        let mut a_channels = vec![input];
        a_channels.extend(&self.widths.a);
        ProngConfig { head, a_channels, r_channels: self.widths.r.clone(), side_channels: side, kernel: self.widths.kernel }
    }

    pub fn semantic_prong(&self) -> ProngConfig {
        self.prong(Head::Softmax, self.n_classes(), 0)
    }

    /// Named prongs in checkpoint order.
    pub fn prongs(&self) -> Vec<(&'static str, ProngConfig)> {
        let n = self.n_classes();
        match self.kind {
            ModelKind::Semantics => vec![("sem", self.semantic_prong())],
            ModelKind::Ours => vec![("sem", self.semantic_prong()), ("occ", self.prong(Head::Mass, 2, n))],
            ModelKind::Prednet => vec![("occ", self.prong(Head::Mass, 2, 0))],
            ModelKind::DoubleProng => {
                vec![("stat", self.prong(Head::Mass, 2, 0)), ("dyn", self.prong(Head::Mass, 2, 0))]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prong {
    pub name: String,
    pub config: ProngConfig,
    pub params: ParamSet<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    prongs: Vec<Prong>,
}

/// How frames after the observed window reach the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Every step sees the true frame after predicting it.
    TeacherForced,
    /// Steps from `t_in` on see only the model's own predictions.
    Recursive { t_in: usize },
}

impl Schedule {
    pub fn observed(self, t: usize) -> bool {
        match self {
            Schedule::TeacherForced => true,
            Schedule::Recursive { t_in } => t < t_in,
        }
    }
}

/// Predictions from `t_in` on.
#[derive(Debug, Clone)]
pub struct RolloutOutput {
    pub occupancy: Vec<Eogm>,
    /// Class probabilities `n_classes x h x w` when the model has a semantic prong.
    pub semantics: Option<Vec<Tensor<f32>>>,
}

impl Model {
    /// Fresh seeded parameters for every prong.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let prongs = arch
            .prongs()
            .into_iter()
            .enumerate()
            .map(|(i, (name, config))| {
                let params = config.init(crate::sim::substream(seed, 0x9a9a, i as u64));
                Prong { name: name.to_string(), config, params }
            })
            .collect();
        Ok(Model { arch, prongs })
    }

    /// Semantics-conditioned model whose semantic prong is copied from a
    /// trained semantics model.
    pub fn ours(semantics: &Model, widths: Option<Widths>, seed: u64) -> Result<Self> {
        if semantics.arch.kind != ModelKind::Semantics {
            return Err(Error::Config(format!("expected a semantics model, got '{}'", semantics.arch.kind)));
        }
        let arch = Architecture {
            kind: ModelKind::Ours,
            widths: widths.unwrap_or_else(|| semantics.arch.widths.clone()),
            ..semantics.arch.clone()
        };
        let mut m = Model::new(arch, seed)?;
        let sem = semantics.prong("sem")?;
        if m.prong("sem")?.config != sem.config {
            return Err(Error::Config("semantic prong widths differ from the requested model".into()));
        }
        m.prongs[0] = sem.clone();
        Ok(m)
    }

    pub fn from_parts(arch: Architecture, prongs: Vec<Prong>) -> Result<Self> {
        arch.validate()?;
        let expected = arch.prongs();
        if expected.len() != prongs.len() {
            return Err(Error::Format(format!("'{}' model has {} prongs, got {}", arch.kind, expected.len(), prongs.len())));
        }
        for ((name, cfg), p) in expected.iter().zip(&prongs) {
            if p.name != *name || p.config != *cfg {
                return Err(Error::Format(format!("prong '{}' does not match the architecture", p.name)));
            }
            let layout = cfg.layout();
            let ok = layout.len() == p.params.len()
                && layout.iter().zip(p.params.entries()).all(|((n, s), (pn, t))| n == pn && s.as_slice() == t.shape());
            if !ok {
                return Err(Error::Format(format!("parameters of prong '{}' do not match its layout", p.name)));
            }
        }
        Ok(Model { arch, prongs })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind
    }

    pub fn prongs(&self) -> &[Prong] {
        &self.prongs
    }

    pub fn prongs_mut(&mut self) -> &mut [Prong] {
        &mut self.prongs
    }

    pub fn prong(&self, name: &str) -> Result<&Prong> {
        self.prongs
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Config(format!("'{}' model has no '{name}' prong", self.arch.kind)))
    }

    pub fn prong_mut(&mut self, name: &str) -> Result<&mut Prong> {
        let kind = self.arch.kind;
        self.prongs
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Config(format!("'{kind}' model has no '{name}' prong")))
    }

    /// Prongs updated by training; a conditioned model keeps its semantic prong fixed.
    pub fn trainable(&self) -> Vec<usize> {
        match self.arch.kind {
            ModelKind::Ours => vec![1],
            ModelKind::DoubleProng => vec![0, 1],
            _ => vec![0],
        }
    }

    pub fn check_sequence(&self, seq: &SequenceSample) -> Result<()> {
        let f = &seq.frames()[0];
        if f.eogm.config() != &self.arch.grid {
            return Err(Error::Config(format!(
                "model expects a {}x{} grid at {} m, data has {}x{} at {} m",
                self.arch.grid.width,
                self.arch.grid.height,
                self.arch.grid.resolution,
                f.eogm.config().width,
                f.eogm.config().height,
                f.eogm.config().resolution
            )));
        }
        if f.smgm.table().variant() != self.arch.variant {
            return Err(Error::Config(format!(
                "model uses '{}' labels, data has '{}'",
                self.arch.variant,
                f.smgm.table().variant()
            )));
        }
        Ok(())
    }

    /// Semantic prong predictions for each of `len` steps.
    pub fn semantic_predictions(
        &self,
        seq: &SequenceSample,
        schedule: Schedule,
        len: usize,
        feedback: Feedback,
    ) -> Result<Vec<Tensor<f32>>> {
        let sem = self.prong("sem")?;
        let frames = onehot_frames(seq, len)?;
        let mut g = Graph::new();
        let vars = constants(&mut g, &sem.params);
        let steps = step_inputs(&mut g, &frames, schedule, None);
        let tr = unroll(&mut g, &sem.config, &vars, self.grid_hw(), &steps, feedback)?;
        Ok(tr.preds.iter().map(|&p| g.value(p).clone()).collect())
    }

    fn grid_hw(&self) -> (usize, usize) {
        (self.arch.grid.height, self.arch.grid.width)
    }

    /// Predicts frames `t_in..t_in + horizon`. Only the first `t_in` frames of
    /// `seq` are read unless the schedule is teacher-forced.
    pub fn rollout(&self, seq: &SequenceSample, schedule: Schedule, t_in: usize, horizon: usize) -> Result<RolloutOutput> {
        self.rollout_with(seq, schedule, t_in, horizon, Feedback::Soft)
    }

    pub fn rollout_with(
        &self,
        seq: &SequenceSample,
        schedule: Schedule,
        t_in: usize,
        horizon: usize,
        feedback: Feedback,
    ) -> Result<RolloutOutput> {
        self.check_sequence(seq)?;
        if t_in == 0 {
            return Err(Error::Config("a rollout needs at least one observed frame".into()));
        }
        let len = t_in + horizon;
        if len > SEQUENCE_LEN {
            log::warn!("rolling out {len} steps, beyond the {SEQUENCE_LEN}-frame training window");
        }
        let available = seq.frames().len();
        if schedule == Schedule::TeacherForced && len > available + 1 {
            return Err(Error::Config(format!("teacher forcing {len} steps needs {} frames, sequence has {available}", len - 1)));
        }
        let schedule = match schedule {
            Schedule::Recursive { .. } => Schedule::Recursive { t_in },
            s => s,
        };
        let (h, w) = self.grid_hw();
        let cfg = self.arch.grid;
        let semantics = if matches!(self.arch.kind, ModelKind::Semantics | ModelKind::Ours) {
            Some(self.semantic_predictions(seq, schedule, len, feedback)?)
        } else {
            None
        };
        let occ_prong = |name: &str, frames: &[Tensor<f32>], side: Option<&[Tensor<f32>]>| -> Result<Vec<Eogm>> {
            let p = self.prong(name)?;
            let mut g = Graph::new();
            let vars = constants(&mut g, &p.params);
            let steps = step_inputs(&mut g, frames, schedule, side);
            let tr = unroll(&mut g, &p.config, &vars, (h, w), &steps, Feedback::Soft)?;
            tr.preds[t_in..].iter().map(|&v| tensor_eogm(g.value(v), cfg)).collect()
        };
        let occupancy = match self.arch.kind {
            ModelKind::Semantics => Vec::new(),
            ModelKind::Ours => occ_prong("occ", &occupancy_frames(seq, len, Stream::All)?, semantics.as_deref())?,
            ModelKind::Prednet => occ_prong("occ", &occupancy_frames(seq, len, Stream::All)?, None)?,
            ModelKind::DoubleProng => {
                let stat = occ_prong("stat", &occupancy_frames(seq, len, Stream::Static)?, None)?;
                let dy = occ_prong("dyn", &occupancy_frames(seq, len, Stream::Dynamic)?, None)?;
                stat.iter().zip(&dy).map(|(s, d)| merge_streams(s, d)).collect::<Result<_>>()?
            }
        };
        let semantics = semantics.map(|s| s[t_in..].to_vec());
        Ok(RolloutOutput { occupancy, semantics })
    }
}

impl Forecaster for Model {
    fn name(&self) -> &str {
        self.arch.kind.name()
    }

    fn forecast(&self, seq: &SequenceSample, t_in: usize, horizon: usize) -> Result<Vec<Eogm>> {
        if self.arch.kind == ModelKind::Semantics {
            return Err(Error::Config("a semantics model does not predict occupancy".into()));
        }
        Ok(self.rollout(seq, Schedule::Recursive { t_in }, t_in, horizon)?.occupancy)
    }
}

/// A named model that forecasts under a fixed schedule, for paired
/// comparisons of recursive and teacher-forced prediction.
pub struct Scheduled<'a> {
    pub model: &'a Model,
    pub teacher_forced: bool,
    pub label: String,
}

impl Forecaster for Scheduled<'_> {
    fn name(&self) -> &str {
        &self.label
    }

    fn forecast(&self, seq: &SequenceSample, t_in: usize, horizon: usize) -> Result<Vec<Eogm>> {
        let schedule = if self.teacher_forced { Schedule::TeacherForced } else { Schedule::Recursive { t_in } };
        Ok(self.model.rollout(seq, schedule, t_in, horizon)?.occupancy)
    }
}

/// Per-cell Dempster combination of the static and dynamic predictions;
/// totally conflicting cells fall back to the average of the two.
pub fn merge_streams(stat: &Eogm, dy: &Eogm) -> Result<Eogm> {
    if stat.config() != dy.config() {
        return Err(Error::Shape("static and dynamic predictions differ in grid".into()));
    }
    let masses: Vec<BeliefMass> = stat
        .masses()
        .zip(dy.masses())
        .map(|(a, b)| match dst_fuse(a, b) {
            Err(Error::TotalConflict(_)) => {
                Ok(BeliefMass { m_occ: 0.5 * (a.m_occ + b.m_occ), m_emp: 0.5 * (a.m_emp + b.m_emp) })
            }
            r => r,
        })
        .collect::<Result<_>>()?;
    Eogm::from_masses(*stat.config(), &masses)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    All,
    Static,
    Dynamic,
}

pub fn eogm_tensor<S: Scalar>(e: &Eogm) -> Tensor<S> {
    let cfg = e.config();
    let data = e.m_occ().iter().chain(e.m_emp()).map(|&v| S::of(v as f64)).collect();
    Tensor::new(vec![2, cfg.height, cfg.width], data).expect("two channels per cell")
}

/// Reads a two-channel mass tensor back into a grid.
pub fn tensor_eogm(t: &Tensor<f32>, cfg: GridConfig) -> Result<Eogm> {
    if t.shape() != [2, cfg.height, cfg.width] {
        return Err(Error::Shape(format!("mass tensor {:?} does not fit a {}x{} grid", t.shape(), cfg.width, cfg.height)));
    }
    let n = cfg.cells();
    let d = t.data();
    let masses: Vec<BeliefMass> = (0..n)
        .map(|i| {
            let (o, e) = (d[i] as f64, d[n + i] as f64);
            let s = (o + e).max(1.0);
            BeliefMass { m_occ: o / s, m_emp: e / s }
        })
        .collect();
    Eogm::from_masses(cfg, &masses)
}

pub fn onehot<S: Scalar>(s: &Smgm) -> Result<Tensor<S>> {
    let cfg = s.config();
    let (c, n) = (s.table().len(), cfg.cells());
    let mut t = Tensor::zeros(&[c, cfg.height, cfg.width]);
    for (i, &id) in s.labels().iter().enumerate() {
        if id as usize >= c {
            return Err(Error::UnknownLabel(id));
        }
        t.data_mut()[id as usize * n + i] = S::one();
    }
    Ok(t)
}

/// Most probable label per cell of a class-probability tensor.
pub fn argmax_smgm(p: &Tensor<f32>, cfg: GridConfig, table: Arc<LabelTable>) -> Result<Smgm> {
    let (c, h, w) = p.chw()?;
    if c != table.len() || (h, w) != (cfg.height, cfg.width) {
        return Err(Error::Shape(format!("class map {:?} does not fit the grid and table", p.shape())));
    }
    let n = h * w;
    let labels =
        (0..n).map(|i| (0..c).fold(0, |b, k| if p.data()[k * n + i] > p.data()[b * n + i] { k } else { b }) as u8).collect();
    Smgm::new(cfg, labels, table)
}

/// First `len` frames of one stream; frames past the end of the sequence are
/// never observed, so they are filled with the last frame.
pub fn occupancy_frames<S: Scalar>(seq: &SequenceSample, len: usize, stream: Stream) -> Result<Vec<Tensor<S>>> {
    let frames = seq.frames();
    (0..len)
        .map(|t| {
            let f = &frames[t.min(frames.len() - 1)];
            Ok(match stream {
                Stream::All => eogm_tensor(&f.eogm),
                Stream::Static => eogm_tensor(&f.eogm.masked(&f.dynamic_mask, false)?),
                Stream::Dynamic => eogm_tensor(&f.eogm.masked(&f.dynamic_mask, true)?),
            })
        })
        .collect()
}

pub fn onehot_frames<S: Scalar>(seq: &SequenceSample, len: usize) -> Result<Vec<Tensor<S>>> {
    let frames = seq.frames();
    (0..len).map(|t| onehot(&frames[t.min(frames.len() - 1)].smgm)).collect()
}

pub(crate) fn constants<S: Scalar>(g: &mut Graph<S>, p: &ParamSet<f32>) -> Vec<Var> {
    p.tensors().map(|t| g.constant(t.cast())).collect()
}

pub(crate) fn step_inputs<S: Scalar>(
    g: &mut Graph<S>,
    frames: &[Tensor<S>],
    schedule: Schedule,
    side: Option<&[Tensor<S>]>,
) -> Vec<StepInput> {
    frames
        .iter()
        .enumerate()
        .map(|(t, f)| StepInput {
            frame: schedule.observed(t).then(|| g.constant(f.clone())),
            side: side.map(|s| g.constant(s[t].clone())),
        })
        .collect()
}

/// What a prong is trained to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Predict each next frame from true history.
    NextFrame,
    /// Predict every frame from `t_in` on from its own outputs.
    Rollout { t_in: usize },
}

impl Objective {
    pub fn schedule(self) -> Schedule {
        match self {
            Objective::NextFrame => Schedule::TeacherForced,
            Objective::Rollout { t_in } => Schedule::Recursive { t_in },
        }
    }
}

/// Builds the training loss of one prong over `frames`.
///
/// Next-frame training weights layer errors by 1 at the bottom and
/// [`UPPER_LAYER_WEIGHT`] above, over every step but the first; class heads
/// replace the bottom error with cross-entropy. Rollout training scores the
/// bottom-layer predictions of the unobserved steps against the true frames.
pub fn prong_loss<S: Scalar>(
    g: &mut Graph<S>,
    cfg: &ProngConfig,
    vars: &[Var],
    frames: &[Tensor<S>],
    side: Option<&[Tensor<S>]>,
    objective: Objective,
) -> Result<(Var, Trace)> {
    let (_, h, w) = frames.first().ok_or_else(|| Error::Shape("no frames".into()))?.chw()?;
    let steps = step_inputs(g, frames, objective.schedule(), side);
    let tr = unroll(g, cfg, vars, (h, w), &steps, Feedback::Soft)?;
    let mut weights = vec![UPPER_LAYER_WEIGHT; cfg.layers()];
    weights[0] = 1.0;
    let loss = match (objective, cfg.head) {
        (Objective::NextFrame, Head::Mass) => error_loss(g, &tr, &weights)?,
        (Objective::NextFrame, Head::Softmax) => super::prong::semantic_loss(g, &tr, frames, &weights)?,
        (Objective::Rollout { t_in }, head) => {
            if t_in == 0 || t_in >= frames.len() {
                return Err(Error::Config(format!("rollout loss needs 0 < t_in < {}, got {t_in}", frames.len())));
            }
            let tw = S::of(1.0 / (frames.len() - t_in) as f64);
            let mut terms = Vec::new();
            for t in t_in..frames.len() {
                let term = match head {
                    Head::Mass => {
                        let truth = g.constant(frames[t].clone());
                        let e = prednet_error(g, truth, tr.preds[t])?;
                        g.mean(e)
                    }
                    Head::Softmax => g.cross_entropy(tr.logits[t], &frames[t])?,
                };
                terms.push((term, tw));
            }
            g.weighted_sum(&terms)?
        }
    };
    Ok((loss, tr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_dataset, ScenarioConfig, ScenarioKind};

    fn tiny_arch(kind: ModelKind) -> Architecture {
        let grid = GridConfig::new(8, 8, 1.0).unwrap();
        Architecture::new(kind, grid, LabelVariant::Four, Widths { a: vec![3], r: vec![3, 4], kernel: 3 }).unwrap()
    }

    fn tiny_data(n: usize) -> Vec<SequenceSample> {
        let cfg = ScenarioConfig {
            scenario: ScenarioKind::MultiVehicleStraight,
            grid: GridConfig::new(8, 8, 1.0).unwrap(),
            variant: LabelVariant::Four,
            ..ScenarioConfig::default()
        };
        generate_dataset(&cfg, n, 3).unwrap().sequences
    }

    #[test]
    fn shape_contract_for_every_kind() {
        let seq = &tiny_data(1)[0];
        let sem = Model::new(tiny_arch(ModelKind::Semantics), 1).unwrap();
        let out = sem.rollout(seq, Schedule::Recursive { t_in: 5 }, 5, 15).unwrap();
        assert!(out.occupancy.is_empty());
        for p in out.semantics.unwrap() {
            assert_eq!(p.shape(), &[4, 8, 8]);
            for i in 0..64 {
                let s: f32 = (0..4).map(|k| p.data()[k * 64 + i]).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
        let models = [
            Model::ours(&sem, None, 2).unwrap(),
            Model::new(tiny_arch(ModelKind::Prednet), 2).unwrap(),
            Model::new(tiny_arch(ModelKind::DoubleProng), 2).unwrap(),
        ];
        for m in &models {
            let frames = m.forecast(seq, 5, 15).unwrap();
            assert_eq!(frames.len(), 15);
            for f in &frames {
                assert_eq!(f.config(), &seq.frames()[0].eogm.config().clone());
                assert!(f.masses().all(|b| b.is_valid()));
            }
        }
    }

    #[test]
    fn recursive_rollout_reads_only_the_window() {
        let data = tiny_data(2);
        let m = Model::new(tiny_arch(ModelKind::Prednet), 4).unwrap();
        // splice a different future onto the first sequence
        let mut frames = data[0].frames().to_vec();
        frames[5..].clone_from_slice(&data[1].frames()[5..]);
        let spliced = SequenceSample::new(frames).unwrap();
        assert_eq!(m.forecast(&data[0], 5, 15).unwrap(), m.forecast(&spliced, 5, 15).unwrap());
    }

    #[test]
    fn conditioned_model_copies_semantics() {
        let sem = Model::new(tiny_arch(ModelKind::Semantics), 1).unwrap();
        let ours = Model::ours(&sem, None, 9).unwrap();
        assert_eq!(ours.prong("sem").unwrap(), sem.prong("sem").unwrap());
        assert_eq!(ours.prong("occ").unwrap().config.side_channels, 4);
        assert!(Model::ours(&ours, None, 1).is_err());
    }

    #[test]
    fn merge_prefers_evidence() {
        let cfg = GridConfig::new(2, 1, 1.0).unwrap();
        let stat = Eogm::from_masses(cfg, &[BeliefMass::new(0.0, 0.8).unwrap(), BeliefMass::VACUOUS]).unwrap();
        let dy = Eogm::from_masses(cfg, &[BeliefMass::VACUOUS, BeliefMass::new(0.7, 0.0).unwrap()]).unwrap();
        let m = merge_streams(&stat, &dy).unwrap();
        assert_eq!(m.get(0), stat.get(0));
        assert_eq!(m.get(1), dy.get(1));
        let full_o = Eogm::from_masses(cfg, &[BeliefMass::new(1.0, 0.0).unwrap(); 2]).unwrap();
        let full_e = Eogm::from_masses(cfg, &[BeliefMass::new(0.0, 1.0).unwrap(); 2]).unwrap();
        let avg = merge_streams(&full_o, &full_e).unwrap();
        assert_eq!(avg.get(0), BeliefMass::new(0.5, 0.5).unwrap());
    }

    #[test]
    fn onehot_and_argmax_round_trip() {
        let seq = &tiny_data(1)[0];
        let s = &seq.frames()[3].smgm;
        let t = onehot::<f32>(s).unwrap();
        assert_eq!(&argmax_smgm(&t, *s.config(), s.table().clone()).unwrap(), s);
    }

    #[test]
    fn mismatched_data_is_rejected() {
        let seq = &tiny_data(1)[0];
        let grid = GridConfig::new(8, 8, 1.0).unwrap();
        let arch = Architecture::new(ModelKind::Prednet, grid, LabelVariant::Six, Widths { a: vec![3], r: vec![3, 4], kernel: 3 });
        let m = Model::new(arch.unwrap(), 0).unwrap();
        assert!(m.forecast(seq, 5, 15).is_err());
        assert!(Architecture::new(
            ModelKind::Prednet,
            GridConfig::new(6, 6, 1.0).unwrap(),
            LabelVariant::Six,
            Widths { a: vec![3, 3], r: vec![3, 4, 4], kernel: 3 }
        )
        .is_err());
    }
}
