//! Reverse-mode differentiation on a per-sample tape of `C x H x W` tensors.

use super::conv::{conv2d_backward, conv2d_forward, ConvGeometry};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<S> {
    Leaf,
    Conv { x: Var, w: Var, b: Var, geom: ConvGeometry },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Upsample2(Var),
    Softmax(Var),
    CrossEntropy { logits: Var, target: Vec<S>, probs: Vec<S> },
    MassRenorm { z: Var, sig: Vec<S> },
    Mean(Var),
    WeightedSum(Vec<(Var, S)>),
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

/// Leaf gradients of one backward pass, indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.grads[v.0].take()
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    /// Constant input; no gradient is tracked through it.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable leaf such as a parameter.
    pub fn leaf(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Shape(format!("operand shapes {sa:?} and {sb:?} differ")));
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, op: Op<S>, f: impl Fn(S, S) -> S) -> Result<Var> {
        self.same_shape(a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(t, op, g))
    }

    fn unary(&mut self, a: Var, op: Op<S>, f: impl Fn(S) -> S) -> Var {
        let t = self.value(a).map(f);
        let g = self.needs(a);
        self.push(t, op, g)
    }

    /// Stride-1 "same" convolution with bias.
    pub fn conv(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let geom = ConvGeometry::same(self.value(w).shape().get(2).copied().unwrap_or(1));
        let t = conv2d_forward(self.value(x), self.value(w), Some(self.value(b)), geom)?;
        let g = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(t, Op::Conv { x, w, b, geom }, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, s: S) -> Var {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(S::zero()))
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let (_, h, w) = self.value(parts[0]).chw()?;
        let mut data = Vec::new();
        let mut c = 0;
        for &p in parts {
            let (pc, ph, pw) = self.value(p).chw()?;
            if (ph, pw) != (h, w) {
                return Err(Error::Shape(format!("cannot concatenate {ph}x{pw} onto {h}x{w}")));
            }
            data.extend_from_slice(self.value(p).data());
            c += pc;
        }
        let g = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::new(vec![c, h, w], data)?, Op::Concat(parts.to_vec()), g))
    }

    /// Channels `start..start + len`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if start + len > c {
            return Err(Error::Shape(format!("channel slice {start}..{} of {c}", start + len)));
        }
        let data = self.value(x).data()[start * h * w..(start + len) * h * w].to_vec();
        let g = self.needs(x);
        Ok(self.push(Tensor::new(vec![len, h, w], data)?, Op::Slice { x, start }, g))
    }

    /// 2x2 max pooling with stride 2.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("max pooling needs even sides, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let base = (ch * h + 2 * y) * w + 2 * xx;
                    let mut best = base;
                    for i in [base + 1, base + w, base + w + 1] {
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let g = self.needs(x);
        Ok(self.push(Tensor::new(vec![c, oh, ow], out)?, Op::MaxPool2 { x, argmax }, g))
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        let src = self.value(x).data();
        let mut out = vec![S::zero(); c * 4 * h * w];
        for ch in 0..c {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    out[(ch * 2 * h + y) * 2 * w + xx] = src[(ch * h + y / 2) * w + xx / 2];
                }
            }
        }
        let g = self.needs(x);
        Ok(self.push(Tensor::new(vec![c, 2 * h, 2 * w], out)?, Op::Upsample2(x), g))
    }

    /// Softmax over channels at every cell.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let probs = softmax_channels(self.value(x))?;
        let g = self.needs(x);
        Ok(self.push(probs, Op::Softmax(x), g))
    }

    /// Mean over cells of categorical cross-entropy between the channel
    /// softmax of `logits` and a per-cell target distribution.
    pub fn cross_entropy(&mut self, logits: Var, target: &Tensor<S>) -> Result<Var> {
        if self.value(logits).shape() != target.shape() {
            return Err(Error::Shape(format!(
                "target shape {:?} does not match logits {:?}",
                target.shape(),
                self.value(logits).shape()
            )));
        }
        let (c, h, w) = target.chw()?;
        let n = h * w;
        let z = self.value(logits).data();
        let mut loss = S::zero();
        for i in 0..n {
            let m = (0..c).map(|k| z[k * n + i]).fold(S::neg_infinity(), S::max);
            let lse = m + (0..c).map(|k| (z[k * n + i] - m).exp()).sum::<S>().ln();
            for k in 0..c {
                let t = target.data()[k * n + i];
                if t != S::zero() {
                    loss = loss - t * (z[k * n + i] - lse);
                }
            }
        }
        let probs = softmax_channels(self.value(logits))?.into_data();
        let g = self.needs(logits);
        let op = Op::CrossEntropy { logits, target: target.data().to_vec(), probs };
        Ok(self.push(Tensor::scalar(loss / S::of(n as f64)), op, g))
    }

    /// Belief-mass head: per-channel sigmoid over two channels, rescaled so
    /// that `m_occ + m_emp <= 1`.
    pub fn mass_renorm(&mut self, z: Var) -> Result<Var> {
        let (c, h, w) = self.value(z).chw()?;
        if c != 2 {
            return Err(Error::Shape(format!("mass head needs 2 channels, got {c}")));
        }
        let n = h * w;
        let sig: Vec<S> = self.value(z).data().iter().map(|&x| sigmoid(x)).collect();
        let mut out = sig.clone();
        for i in 0..n {
            let s = sig[i] + sig[n + i];
            if s > S::one() {
                out[i] = sig[i] / s;
                out[n + i] = sig[n + i] / s;
            }
        }
        let g = self.needs(z);
        Ok(self.push(Tensor::new(vec![2, h, w], out)?, Op::MassRenorm { z, sig }, g))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.data().iter().copied().sum::<S>() / S::of(t.len() as f64);
        let g = self.needs(x);
        self.push(Tensor::scalar(m), Op::Mean(x), g)
    }

    /// `sum_i w_i * x_i` over same-shaped operands.
    pub fn weighted_sum(&mut self, terms: &[(Var, S)]) -> Result<Var> {
        let first = terms.first().ok_or_else(|| Error::Shape("empty weighted sum".into()))?.0;
        let mut acc = Tensor::zeros(self.value(first).shape());
        for &(v, wt) in terms {
            self.same_shape(first, v)?;
            for (a, &x) in acc.data_mut().iter_mut().zip(self.value(v).data()) {
                *a = *a + wt * x;
            }
        }
        let g = terms.iter().any(|&(v, _)| self.needs(v));
        Ok(self.push(acc, Op::WeightedSum(terms.to_vec()), g))
    }

    /// Back-propagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!("loss must be a scalar, got shape {:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), S::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.propagate(node, &gy, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<S>>], v: Var, g: Tensor<S>) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node<S>, gy: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) -> Result<()> {
        let y = &node.value;
        let zip = |a: &Tensor<S>, f: &dyn Fn(S, S) -> S| {
            Tensor::new(a.shape().to_vec(), a.data().iter().zip(gy.data()).map(|(&x, &g)| f(x, g)).collect())
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, b, geom } => {
                let cg = conv2d_backward(self.value(*x), self.value(*w), gy, *geom, self.needs(*x))?;
                if let Some(dx) = cg.dx {
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate(grads, *w, cg.dw);
                self.accumulate(grads, *b, cg.db);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gy.clone());
                self.accumulate(grads, *b, gy.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gy.clone());
                self.accumulate(grads, *b, gy.map(|g| -g));
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, zip(self.value(*b), &|x, g| x * g)?);
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, zip(self.value(*a), &|x, g| x * g)?);
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, gy.map(|g| g * *s)),
            Op::Sigmoid(a) => self.accumulate(grads, *a, zip(y, &|s, g| g * s * (S::one() - s))?),
            Op::Tanh(a) => self.accumulate(grads, *a, zip(y, &|t, g| g * (S::one() - t * t))?),
            Op::Relu(a) => {
                self.accumulate(grads, *a, zip(self.value(*a), &|x, g| if x > S::zero() { g } else { S::zero() })?)
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.needs(p) {
                        let t = Tensor::new(self.value(p).shape().to_vec(), gy.data()[offset..offset + n].to_vec())?;
                        self.accumulate(grads, p, t);
                    }
                    offset += n;
                }
            }
            Op::Slice { x, start } => {
                let src = self.value(*x);
                let (_, h, w) = src.chw()?;
                let mut g = Tensor::zeros(src.shape());
                g.data_mut()[start * h * w..][..gy.len()].copy_from_slice(gy.data());
                self.accumulate(grads, *x, g);
            }
            Op::MaxPool2 { x, argmax } => {
                let mut g = Tensor::zeros(self.value(*x).shape());
                for (&i, &gv) in argmax.iter().zip(gy.data()) {
                    g.data_mut()[i] = g.data()[i] + gv;
                }
                self.accumulate(grads, *x, g);
            }
            Op::Upsample2(x) => {
                let (c, h, w) = self.value(*x).chw()?;
                let mut g = Tensor::zeros(self.value(*x).shape());
                for ch in 0..c {
                    for yy in 0..2 * h {
                        for xx in 0..2 * w {
                            let i = (ch * h + yy / 2) * w + xx / 2;
                            g.data_mut()[i] = g.data()[i] + gy.data()[(ch * 2 * h + yy) * 2 * w + xx];
                        }
                    }
                }
                self.accumulate(grads, *x, g);
            }
            Op::Softmax(x) => {
                let (c, h, w) = y.chw()?;
                let n = h * w;
                let (p, gd) = (y.data(), gy.data());
                let mut g = vec![S::zero(); c * n];
                for i in 0..n {
                    let dot: S = (0..c).map(|k| p[k * n + i] * gd[k * n + i]).sum();
                    for k in 0..c {
                        g[k * n + i] = p[k * n + i] * (gd[k * n + i] - dot);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![c, h, w], g)?);
            }
            Op::CrossEntropy { logits, target, probs } => {
                let shape = self.value(*logits).shape().to_vec();
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let n = h * w;
                let scale = gy.item() / S::of(n as f64);
                let mut g = vec![S::zero(); c * n];
                for i in 0..n {
                    let mass: S = (0..c).map(|k| target[k * n + i]).sum();
                    for k in 0..c {
                        g[k * n + i] = scale * (mass * probs[k * n + i] - target[k * n + i]);
                    }
                }
                self.accumulate(grads, *logits, Tensor::new(shape, g)?);
            }
            Op::MassRenorm { z, sig } => {
                let n = sig.len() / 2;
                let gd = gy.data();
                let mut g = vec![S::zero(); 2 * n];
                for i in 0..n {
                    let (s0, s1) = (sig[i], sig[n + i]);
                    let total = s0 + s1;
                    let (d0, d1) = if total > S::one() {
                        // d(s_k / total) / d s_j = (delta_kj - s_k / total) / total
                        let dot = (gd[i] * s0 + gd[n + i] * s1) / total;
                        ((gd[i] - dot) / total, (gd[n + i] - dot) / total)
                    } else {
                        (gd[i], gd[n + i])
                    };
                    g[i] = d0 * s0 * (S::one() - s0);
                    g[n + i] = d1 * s1 * (S::one() - s1);
                }
                self.accumulate(grads, *z, Tensor::new(self.value(*z).shape().to_vec(), g)?);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, Tensor::full(self.value(*x).shape(), gy.item() / S::of(n as f64)));
            }
            Op::WeightedSum(terms) => {
                for &(v, wt) in terms {
                    self.accumulate(grads, v, gy.map(|g| g * wt));
                }
            }
        }
        Ok(())
    }
}

pub fn softmax_channels<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let (c, h, w) = x.chw()?;
    let n = h * w;
    let z = x.data();
    let mut out = vec![S::zero(); c * n];
    for i in 0..n {
        let m = (0..c).map(|k| z[k * n + i]).fold(S::neg_infinity(), S::max);
        let mut total = S::zero();
        for k in 0..c {
            let e = (z[k * n + i] - m).exp();
            out[k * n + i] = e;
            total = total + e;
        }
        for k in 0..c {
            out[k * n + i] = out[k * n + i] / total;
        }
    }
    Tensor::new(vec![c, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn pool_and_upsample() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[1, 2, 4], &[1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 1.0]));
        let p = g.max_pool2(x).unwrap();
        assert_eq!(g.value(p).data(), &[5.0, 9.0]);
        let u = g.upsample2(p).unwrap();
        assert_eq!(g.value(u).data(), &[5.0, 5.0, 9.0, 9.0, 5.0, 5.0, 9.0, 9.0]);
        let m = g.mean(u);
        let grads = g.backward(m).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3, 1, 2], &[1.0, -2.0, 0.5, 300.0, -1.0, 0.0]));
        let p = g.softmax(x).unwrap();
        let v = g.value(p).data();
        for i in 0..2 {
            assert!(((0..3).map(|k| v[k * 2 + i]).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_cross_entropy() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[4, 2, 3]));
        let mut target = Tensor::zeros(&[4, 2, 3]);
        for i in 0..6 {
            target.data_mut()[(i % 4) * 6 + i] = 1.0;
        }
        let ce = g.cross_entropy(x, &target).unwrap();
        assert!((g.value(ce).item() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mass_head_is_valid() {
        let mut g = Graph::new();
        let z = g.leaf(t(&[2, 1, 3], &[5.0, -3.0, 0.0, 5.0, -3.0, 0.0]));
        let m = g.mass_renorm(z).unwrap();
        let v = g.value(m).data();
        for i in 0..3 {
            assert!(v[i] >= 0.0 && v[i + 3] >= 0.0 && v[i] + v[i + 3] <= 1.0 + 1e-15);
        }
        assert!((v[0] - 0.5).abs() < 1e-12);
        assert!((v[1] - 1.0 / (1.0 + 3f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let a = g.constant(t(&[1], &[2.0]));
        let b = g.leaf(t(&[1], &[3.0]));
        let c = g.mul(a, b).unwrap();
        let grads = g.backward(c).unwrap();
        assert!(grads.get(a).is_none());
        assert_eq!(grads.get(b).unwrap().data(), &[2.0]);
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::<f32>::new();
        let a = g.leaf(Tensor::zeros(&[1, 2, 2]));
        let b = g.leaf(Tensor::zeros(&[1, 2, 3]));
        assert!(g.add(a, b).is_err());
        assert!(g.concat(&[a, b]).is_err());
        assert!(g.max_pool2(b).is_err());
        assert!(g.backward(a).is_err());
    }
}
