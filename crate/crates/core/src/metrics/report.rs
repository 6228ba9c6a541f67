use std::fmt::Write as _;

use rayon::prelude::*;

use super::image_similarity;
use crate::error::{Error, Result};
use crate::grid::{pignistic, Eogm, Thresholds};
use crate::sim::{SequenceSample, FRAME_PERIOD};

/// Anything that turns the first `t_in` frames of a sequence into
/// `horizon` predicted frames.
pub trait Forecaster: Sync {
    fn name(&self) -> &str;
    fn forecast(&self, seq: &SequenceSample, t_in: usize, horizon: usize) -> Result<Vec<Eogm>>;
}

/// Returns the true future frames.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruth;

impl Forecaster for GroundTruth {
    fn name(&self) -> &str {
        "oracle"
    }

    fn forecast(&self, seq: &SequenceSample, t_in: usize, horizon: usize) -> Result<Vec<Eogm>> {
        check_window(seq, t_in, horizon)?;
        Ok(seq.frames()[t_in..t_in + horizon].iter().map(|f| f.eogm.clone()).collect())
    }
}

/// Repeats the last observed frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct CopyLast;

impl Forecaster for CopyLast {
    fn name(&self) -> &str {
        "copy-last"
    }

    fn forecast(&self, seq: &SequenceSample, t_in: usize, horizon: usize) -> Result<Vec<Eogm>> {
        check_window(seq, t_in, horizon)?;
        Ok(vec![seq.frames()[t_in - 1].eogm.clone(); horizon])
    }
}

fn check_window(seq: &SequenceSample, t_in: usize, horizon: usize) -> Result<()> {
    if t_in == 0 || t_in + horizon > seq.frames().len() {
        return Err(Error::Config(format!(
            "window of {t_in} inputs and {horizon} predictions does not fit a {}-frame sequence",
            seq.frames().len()
        )));
    }
    Ok(())
}

/// One metric per prediction step plus its horizon aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub horizon_mean: f64,
    pub horizon_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub model: String,
    pub scenario: String,
    pub sequences: usize,
    pub mse: MetricSeries,
    pub is_score: MetricSeries,
    pub dynamic_mse: MetricSeries,
    /// Masked cells behind each dynamic MSE entry, summed over sequences.
    pub dyn_cells: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Pool {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Pool {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(&mut self, other: &Pool) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    fn se(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

struct StepStats {
    cells: Pool,
    dyn_cells: Pool,
    is: f64,
}

fn sequence_stats(
    forecaster: &dyn Forecaster,
    seq: &SequenceSample,
    t_in: usize,
    horizon: usize,
    thresholds: Thresholds,
) -> Result<Vec<StepStats>> {
    let preds = forecaster.forecast(seq, t_in, horizon)?;
    if preds.len() != horizon {
        return Err(Error::Shape(format!("{} returned {} frames, expected {horizon}", forecaster.name(), preds.len())));
    }
    preds
        .iter()
        .zip(&seq.frames()[t_in..t_in + horizon])
        .map(|(pred, frame)| {
            let p = pignistic(pred);
            let g = pignistic(&frame.eogm);
            p.check_same_shape(&g)?;
            if frame.dynamic_mask.len() != p.cells().len() {
                return Err(Error::Shape("dynamic mask does not match the grid".into()));
            }
            let mut cells = Pool::default();
            let mut dyn_cells = Pool::default();
            for ((a, b), &m) in p.cells().iter().zip(g.cells()).zip(&frame.dynamic_mask) {
                let d = (a - b) * (a - b);
                cells.push(d);
                if m {
                    dyn_cells.push(d);
                }
            }
            let is = image_similarity(&p, &g, thresholds)?;
            Ok(StepStats { cells, dyn_cells, is })
        })
        .collect()
}

/// Scores a forecaster on every sequence. Squared-error metrics pool cells
/// across sequences; image similarity uses the spread over sequences.
pub fn evaluate(
    forecaster: &dyn Forecaster,
    scenario: &str,
    sequences: &[SequenceSample],
    t_in: usize,
    horizon: usize,
    thresholds: Thresholds,
) -> Result<MetricReport> {
    if sequences.is_empty() {
        return Err(Error::Config("evaluation split is empty".into()));
    }
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least one frame".into()));
    }
    let per_seq: Vec<Vec<StepStats>> = sequences
        .par_iter()
        .map(|s| sequence_stats(forecaster, s, t_in, horizon, thresholds))
        .collect::<Result<_>>()?;

    let mut mse_series = series(horizon);
    let mut is_series = series(horizon);
    let mut dyn_series = series(horizon);
    let mut dyn_cells = vec![0; horizon];
    let (mut all_cells, mut all_dyn, mut seq_is) = (Pool::default(), Pool::default(), Pool::default());
    for k in 0..horizon {
        let (mut cells, mut dyn_pool, mut is) = (Pool::default(), Pool::default(), Pool::default());
        for steps in &per_seq {
            cells.merge(&steps[k].cells);
            dyn_pool.merge(&steps[k].dyn_cells);
            is.push(steps[k].is);
        }
        mse_series.mean[k] = cells.mean();
        mse_series.se[k] = cells.se();
        dyn_series.mean[k] = dyn_pool.mean();
        dyn_series.se[k] = dyn_pool.se();
        dyn_cells[k] = dyn_pool.n;
        is_series.mean[k] = is.mean();
        is_series.se[k] = is.se();
        all_cells.merge(&cells);
        all_dyn.merge(&dyn_pool);
    }
    for steps in &per_seq {
        seq_is.push(steps.iter().map(|s| s.is).sum::<f64>() / horizon as f64);
    }
    mse_series.horizon_mean = all_cells.mean();
    mse_series.horizon_se = all_cells.se();
    dyn_series.horizon_mean = all_dyn.mean();
    dyn_series.horizon_se = all_dyn.se();
    is_series.horizon_mean = seq_is.mean();
    is_series.horizon_se = seq_is.se();

    Ok(MetricReport {
        model: forecaster.name().to_string(),
        scenario: scenario.to_string(),
        sequences: sequences.len(),
        mse: mse_series,
        is_score: is_series,
        dynamic_mse: dyn_series,
        dyn_cells,
    })
}

fn series(horizon: usize) -> MetricSeries {
    MetricSeries { mean: vec![0.0; horizon], se: vec![0.0; horizon], horizon_mean: 0.0, horizon_se: 0.0 }
}

pub const TIMESTEP_HEADER: &str = "model,scenario,timestep_s,mse,mse_se,is,is_se,dyn_mse,dyn_mse_se,dyn_cells";
pub const SUMMARY_HEADER: &str = "model,scenario,sequences,mse,mse_se,is,is_se,dyn_mse,dyn_mse_se,dyn_cells";

impl MetricReport {
    pub fn horizon(&self) -> usize {
        self.mse.mean.len()
    }

    /// Per-timestep rows without a header.
    pub fn timestep_rows(&self) -> String {
        let mut out = String::new();
        for k in 0..self.horizon() {
            let _ = writeln!(
                out,
                "{},{},{:.1},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                self.model,
                self.scenario,
                (k + 1) as f64 * FRAME_PERIOD,
                self.mse.mean[k],
                self.mse.se[k],
                self.is_score.mean[k],
                self.is_score.se[k],
                self.dynamic_mse.mean[k],
                self.dynamic_mse.se[k],
                self.dyn_cells[k]
            );
        }
        out
    }

    pub fn summary_row(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
            self.model,
            self.scenario,
            self.sequences,
            self.mse.horizon_mean,
            self.mse.horizon_se,
            self.is_score.horizon_mean,
            self.is_score.horizon_se,
            self.dynamic_mse.horizon_mean,
            self.dynamic_mse.horizon_se,
            self.dyn_cells.iter().sum::<usize>()
        )
    }
}

pub fn timestep_csv(reports: &[MetricReport]) -> String {
    let mut out = format!("{TIMESTEP_HEADER}\n");
    for r in reports {
        out.push_str(&r.timestep_rows());
    }
    out
}

pub fn summary_csv(reports: &[MetricReport]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in reports {
        out.push_str(&r.summary_row());
    }
    out
}
