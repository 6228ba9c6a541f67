use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Named trainable tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<S> {
    entries: Vec<(String, Tensor<S>)>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<S>) {
        self.entries.push((name.into(), t));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Tensor<S>)] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [(String, Tensor<S>)] {
        &mut self.entries
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<S>> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<S>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Total number of scalar values.
    pub fn count(&self) -> usize {
        self.tensors().map(|t| t.len()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ParamSet<T> {
        ParamSet { entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(|t| t.all_finite())
    }

    /// Replaces every value, keeping names and shapes.
    pub fn assign(&mut self, other: &ParamSet<S>) -> Result<()> {
        self.check_layout(other)?;
        self.entries.clone_from(&other.entries);
        Ok(())
    }

    pub fn check_layout(&self, other: &ParamSet<S>) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!("parameter sets of {} and {} tensors", self.len(), other.len())));
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(Error::Shape(format!("parameter {na} {:?} does not match {nb} {:?}", ta.shape(), tb.shape())));
            }
        }
        Ok(())
    }
}

/// Uniform fan-in initialization: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for
/// an `O x C x K x K` kernel.
pub fn init_kernel(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let fan_in: usize = shape[1..].iter().product();
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound) as f32).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adam optimizer state over one parameter set.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(params: &ParamSet<f32>, lr: f64) -> Self {
        let zeros = || params.tensors().map(|t| vec![0.0; t.len()]).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    pub fn update(&mut self, params: &mut ParamSet<f32>, grads: &[Tensor<f32>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        self.step += 1;
        if self.lr == 0.0 {
            return Ok(());
        }
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        for (((p, g), m), v) in params.tensors_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step * *m / (v.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_kernel(&[4, 3, 3, 3], &mut seeded_rng(5));
        let b = init_kernel(&[4, 3, 3, 3], &mut seeded_rng(5));
        assert_eq!(a, b);
        let bound = 1.0 / 27f32.sqrt();
        assert!(a.data().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = ParamSet::new();
        p.push("x", Tensor::new(vec![2], vec![3.0f32, -2.0]).unwrap());
        let mut opt = Adam::new(&p, 0.1);
        for _ in 0..500 {
            let g = p.get("x").unwrap().map(|x| 2.0 * x);
            opt.update(&mut p, &[g]).unwrap();
        }
        assert!(p.get("x").unwrap().data().iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = ParamSet::new();
        p.push("x", Tensor::new(vec![1], vec![0.3f32]).unwrap());
        let before = p.clone();
        let mut opt = Adam::new(&p, 0.0);
        opt.update(&mut p, &[Tensor::new(vec![1], vec![1.0]).unwrap()]).unwrap();
        assert_eq!(p, before);
    }
}
