//! One PredNet-style prong: stacked ConvLSTM representation layers with
//! per-layer prediction, target and error units.

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{init_kernel, seeded_rng, ParamSet};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Activation of the bottom-layer prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// Two belief-mass channels.
    Mass,
    /// Per-cell class distribution.
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProngConfig {
    pub head: Head,
    /// Channels of the target units; entry 0 is the input.
    pub a_channels: Vec<usize>,
    /// Hidden channels of each representation layer.
    pub r_channels: Vec<usize>,
    /// Extra channels concatenated onto the bottom representation input.
    pub side_channels: usize,
    pub kernel: usize,
}

impl ProngConfig {
    pub fn layers(&self) -> usize {
        self.a_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.layers();
        if l == 0 || self.r_channels.len() != l {
            return Err(Error::Config(format!(
                "prong needs matching non-empty channel lists, got {:?} and {:?}",
                self.a_channels, self.r_channels
            )));
        }
        if self.a_channels.iter().chain(&self.r_channels).any(|&c| c == 0) {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {}", self.kernel)));
        }
        if self.head == Head::Mass && self.a_channels[0] != 2 {
            return Err(Error::Config("a mass head predicts exactly 2 channels".into()));
        }
        Ok(())
    }

    /// Grid sides must halve cleanly once per layer above the first.
    pub fn check_grid(&self, h: usize, w: usize) -> Result<()> {
        let f = 1 << (self.layers() - 1);
        if h % f != 0 || w % f != 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!("a {}-layer prong needs sides divisible by {f}, got {h}x{w}", self.layers())));
        }
        Ok(())
    }

    fn r_input_channels(&self, l: usize) -> usize {
        let mut c = 2 * self.a_channels[l] + self.r_channels[l];
        if l + 1 < self.layers() {
            c += self.r_channels[l + 1];
        }
        if l == 0 {
            c += self.side_channels;
        }
        c
    }

    /// Parameter names and shapes in their canonical order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let k = self.kernel;
        let mut out = Vec::new();
        for l in 0..self.layers() {
            let (a, r) = (self.a_channels[l], self.r_channels[l]);
            out.push((format!("r{l}.w"), vec![4 * r, self.r_input_channels(l), k, k]));
            out.push((format!("r{l}.b"), vec![4 * r]));
            out.push((format!("ahat{l}.w"), vec![a, r, k, k]));
            out.push((format!("ahat{l}.b"), vec![a]));
            if l > 0 {
                out.push((format!("a{l}.w"), vec![a, 2 * self.a_channels[l - 1], k, k]));
                out.push((format!("a{l}.b"), vec![a]));
            }
        }
        out
    }

    /// Seeded initial parameters; biases start at zero.
    pub fn init(&self, seed: u64) -> ParamSet<f32> {
        let mut rng = seeded_rng(seed);
        let mut p = ParamSet::new();
        for (name, shape) in self.layout() {
            let t = if shape.len() == 4 { init_kernel(&shape, &mut rng) } else { Tensor::zeros(&shape) };
            p.push(name, t);
        }
        p
    }
}

struct LayerVars {
    r_w: Var,
    r_b: Var,
    ahat_w: Var,
    ahat_b: Var,
    a: Option<(Var, Var)>,
}

fn layer_vars(cfg: &ProngConfig, vars: &[Var]) -> Result<Vec<LayerVars>> {
    if vars.len() != cfg.layout().len() {
        return Err(Error::Shape(format!("prong expects {} parameters, got {}", cfg.layout().len(), vars.len())));
    }
    let mut it = vars.iter().copied();
    let mut next = || it.next().expect("length checked");
    Ok((0..cfg.layers())
        .map(|l| {
            let (r_w, r_b, ahat_w, ahat_b) = (next(), next(), next(), next());
            let a = if l > 0 { Some((next(), next())) } else { None };
            LayerVars { r_w, r_b, ahat_w, ahat_b, a }
        })
        .collect())
}

/// Hidden and cell state of one ConvLSTM layer.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub hidden: Var,
    pub cell: Var,
}

/// One ConvLSTM update from input `x`. Gates are stacked `[i, f, o, g]`
/// along the output channels of the kernel `w`, which sees `[x, hidden]`.
pub fn convlstm_step<S: Scalar>(g: &mut Graph<S>, x: Var, s: LstmState, w: Var, b: Var) -> Result<LstmState> {
    let xh = g.concat(&[x, s.hidden])?;
    convlstm_gates(g, xh, s.cell, w, b)
}

fn convlstm_gates<S: Scalar>(g: &mut Graph<S>, xh: Var, cell: Var, w: Var, b: Var) -> Result<LstmState> {
    let z = g.conv(xh, w, b)?;
    let r = g.value(cell).chw()?.0;
    let zi = g.slice(z, 0, r)?;
    let zf = g.slice(z, r, r)?;
    let zo = g.slice(z, 2 * r, r)?;
    let zg = g.slice(z, 3 * r, r)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let o = g.sigmoid(zo);
    let cand = g.tanh(zg);
    let keep = g.mul(f, cell)?;
    let write = g.mul(i, cand)?;
    let cell = g.add(keep, write)?;
    let squashed = g.tanh(cell);
    let hidden = g.mul(o, squashed)?;
    Ok(LstmState { hidden, cell })
}

/// `[relu(a_hat - a), relu(a - a_hat)]` stacked on channels.
pub fn prednet_error<S: Scalar>(g: &mut Graph<S>, a: Var, a_hat: Var) -> Result<Var> {
    let over = g.sub(a_hat, a)?;
    let under = g.sub(a, a_hat)?;
    let pos = g.relu(over);
    let neg = g.relu(under);
    g.concat(&[pos, neg])
}

/// What a prong sees in place of a frame it has to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feedback {
    /// Its own prediction as is, which leaves the bottom error at zero.
    #[default]
    Soft,
    /// The per-cell argmax of a class prediction as a one-hot frame.
    Hard,
}

fn harden<S: Scalar>(p: &Tensor<S>) -> Result<Tensor<S>> {
    let (c, h, w) = p.chw()?;
    let n = h * w;
    let mut out = Tensor::zeros(&[c, h, w]);
    for i in 0..n {
        let best = (0..c).fold(0, |b, k| if p.data()[k * n + i] > p.data()[b * n + i] { k } else { b });
        out.data_mut()[best * n + i] = S::one();
    }
    Ok(out)
}

/// Per-step inputs of an unrolled prong.
#[derive(Debug, Clone, Copy)]
pub struct StepInput {
    /// Observed frame; `None` feeds the prong its own prediction.
    pub frame: Option<Var>,
    pub side: Option<Var>,
}

/// Everything an unrolled prong exposes to losses and callers.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Bottom-layer prediction of the frame at each step.
    pub preds: Vec<Var>,
    /// Pre-activation of `preds`.
    pub logits: Vec<Var>,
    /// `errors[t][l]`.
    pub errors: Vec<Vec<Var>>,
}

pub fn unroll<S: Scalar>(
    g: &mut Graph<S>,
    cfg: &ProngConfig,
    vars: &[Var],
    (h, w): (usize, usize),
    steps: &[StepInput],
    feedback: Feedback,
) -> Result<Trace> {
    cfg.check_grid(h, w)?;
    let layers = layer_vars(cfg, vars)?;
    let n = cfg.layers();
    let side = |l: usize| (h >> l, w >> l);
    let zeros = |g: &mut Graph<S>, c: usize, l: usize| g.constant(Tensor::zeros(&[c, side(l).0, side(l).1]));

    let mut state: Vec<LstmState> = (0..n)
        .map(|l| LstmState { hidden: zeros(g, cfg.r_channels[l], l), cell: zeros(g, cfg.r_channels[l], l) })
        .collect();
    let mut errors: Vec<Var> = (0..n).map(|l| zeros(g, 2 * cfg.a_channels[l], l)).collect();
    let mut trace = Trace { preds: Vec::new(), logits: Vec::new(), errors: Vec::new() };

    for (t, step) in steps.iter().enumerate() {
        if t == 0 && step.frame.is_none() {
            return Err(Error::Shape("the first step needs an observed frame".into()));
        }
        match (step.side, cfg.side_channels) {
            (None, 0) => {}
            (Some(s), c) if c > 0 && g.value(s).shape() == [c, h, w] => {}
            _ => return Err(Error::Shape(format!("step {t}: side input must be {} x {h} x {w}", cfg.side_channels))),
        }
        if let Some(f) = step.frame {
            if g.value(f).shape() != [cfg.a_channels[0], h, w] {
                return Err(Error::Shape(format!("step {t}: frame shape {:?}", g.value(f).shape())));
            }
        }

        for l in (0..n).rev() {
            let mut parts = vec![errors[l]];
            if l + 1 < n {
                parts.push(g.upsample2(state[l + 1].hidden)?);
            }
            parts.push(state[l].hidden);
            if let (0, Some(s)) = (l, step.side) {
                parts.push(s);
            }
            let xh = g.concat(&parts)?;
            state[l] = convlstm_gates(g, xh, state[l].cell, layers[l].r_w, layers[l].r_b)?;
        }

        let mut target = step.frame;
        let mut step_errors = Vec::with_capacity(n);
        for l in 0..n {
            let z = g.conv(state[l].hidden, layers[l].ahat_w, layers[l].ahat_b)?;
            let a_hat = if l == 0 {
                trace.logits.push(z);
                let p = match cfg.head {
                    Head::Mass => g.mass_renorm(z)?,
                    Head::Softmax => g.softmax(z)?,
                };
                trace.preds.push(p);
                if target.is_none() && feedback == Feedback::Hard && cfg.head == Head::Softmax {
                    let hard = harden(g.value(p))?;
                    target = Some(g.constant(hard));
                }
                p
            } else {
                g.relu(z)
            };
            let e = match target {
                Some(a) => prednet_error(g, a, a_hat)?,
                None => zeros(g, 2 * cfg.a_channels[l], l),
            };
            step_errors.push(e);
            if l + 1 < n {
                let (aw, ab) = layers[l + 1].a.expect("upper layers have target kernels");
                let z = g.conv(e, aw, ab)?;
                let z = g.relu(z);
                target = Some(g.max_pool2(z)?);
            }
        }
        errors.clone_from(&step_errors);
        trace.errors.push(step_errors);
    }
    Ok(trace)
}

/// Mean error activations weighted by layer, averaged over steps `1..`.
pub fn error_loss<S: Scalar>(g: &mut Graph<S>, trace: &Trace, layer_weights: &[f64]) -> Result<Var> {
    let steps = trace.errors.len();
    if steps < 2 {
        return Err(Error::Shape("the error loss needs at least two steps".into()));
    }
    let mut terms = Vec::new();
    let tw = 1.0 / (steps - 1) as f64;
    for errs in &trace.errors[1..] {
        for (&e, &lw) in errs.iter().zip(layer_weights) {
            if lw != 0.0 {
                let m = g.mean(e);
                terms.push((m, S::of(tw * lw)));
            }
        }
    }
    g.weighted_sum(&terms)
}

/// Cross-entropy of the class predictions against `targets[t]` for steps
/// `1..`, plus the weighted upper-layer errors.
pub fn semantic_loss<S: Scalar>(
    g: &mut Graph<S>,
    trace: &Trace,
    targets: &[Tensor<S>],
    layer_weights: &[f64],
) -> Result<Var> {
    let steps = trace.errors.len();
    if steps < 2 || targets.len() != steps {
        return Err(Error::Shape(format!("{} targets for {steps} steps", targets.len())));
    }
    let tw = 1.0 / (steps - 1) as f64;
    let mut terms = Vec::new();
    for t in 1..steps {
        let ce = g.cross_entropy(trace.logits[t], &targets[t])?;
        terms.push((ce, S::of(tw)));
        for (l, &lw) in layer_weights.iter().enumerate().skip(1) {
            if lw != 0.0 {
                let m = g.mean(trace.errors[t][l]);
                terms.push((m, S::of(tw * lw)));
            }
        }
    }
    g.weighted_sum(&terms)
}
