//! Central finite-difference checks of analytic gradients.

use super::graph::{Graph, Var};
use super::params::ParamSet;
use crate::error::{Error, Result};

/// Gradients at or below this magnitude are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Largest relative error between the analytic gradient of `loss` and a
/// central difference with step `eps`, over every value in `params`.
///
/// The loss closure receives one leaf per tensor of `params`, in order.
pub fn grad_check<F>(params: &ParamSet<f64>, eps: f64, loss: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |p: &ParamSet<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = p.tensors().map(|t| g.leaf(t.clone())).collect();
        let l = loss(&mut g, &vars)?;
        Ok(g.value(l).item())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = params.tensors().map(|t| g.leaf(t.clone())).collect();
    let l = loss(&mut g, &vars)?;
    let grads = g.backward(l)?;

    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for (ti, &v) in vars.iter().enumerate() {
        let n = params.entries()[ti].1.len();
        for i in 0..n {
            let analytic = grads.get(v).map_or(0.0, |t| t.data()[i]);
            let x0 = params.entries()[ti].1.data()[i];
            let slot = |p: &mut ParamSet<f64>, x: f64| p.tensors_mut().nth(ti).expect("index in range").data_mut()[i] = x;
            slot(&mut probe, x0 + eps);
            let up = eval(&probe)?;
            slot(&mut probe, x0 - eps);
            let down = eval(&probe)?;
            slot(&mut probe, x0);
            let numeric = (up - down) / (2.0 * eps);
            if !numeric.is_finite() || !analytic.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for {}[{i}]", params.entries()[ti].0)));
            }
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::model::{prong_loss, Objective};
    use crate::predict::prong::{convlstm_step, prednet_error, Head, LstmState, ProngConfig};
    use crate::predict::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
    }

    /// Scalar objective `sum(x * probe)` that weights every output cell.
    fn project(g: &mut Graph<f64>, x: Var, rng_seed: u64) -> Result<Var> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let p = g.constant(random(g.value(x).shape(), &mut rng, 1.0));
        let y = g.mul(x, p)?;
        Ok(g.mean(y))
    }

    #[test]
    fn linear_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::new();
        p.push("w", random(&[3, 2, 1, 1], &mut rng, 1.0));
        p.push("b", random(&[3], &mut rng, 1.0));
        let x = random(&[2, 4, 4], &mut rng, 1.0);
        let err = grad_check(&p, 1e-3, |g, v| {
            let x = g.constant(x.clone());
            let y = g.conv(x, v[0], v[1])?;
            project(g, y, 9)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn conv_input_and_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ParamSet::new();
        p.push("x", random(&[2, 8, 8], &mut rng, 1.0));
        p.push("w", random(&[3, 2, 3, 3], &mut rng, 0.5));
        p.push("b", random(&[3], &mut rng, 0.5));
        let err = grad_check(&p, 1e-3, |g, v| {
            let y = g.conv(v[0], v[1], v[2])?;
            let y = g.tanh(y);
            project(g, y, 3)
        })
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn convlstm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamSet::new();
        p.push("x", random(&[2, 8, 8], &mut rng, 1.0));
        p.push("h", random(&[3, 8, 8], &mut rng, 0.5));
        p.push("c", random(&[3, 8, 8], &mut rng, 1.0));
        p.push("w", random(&[12, 5, 3, 3], &mut rng, 0.4));
        p.push("b", random(&[12], &mut rng, 0.5));
        let err = grad_check(&p, 1e-3, |g, v| {
            let s = convlstm_step(g, v[0], LstmState { hidden: v[1], cell: v[2] }, v[3], v[4])?;
            let s = convlstm_step(g, v[0], s, v[3], v[4])?;
            let a = project(g, s.hidden, 4)?;
            let b = project(g, s.cell, 5)?;
            g.weighted_sum(&[(a, 1.0), (b, 0.5)])
        })
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn error_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = ParamSet::new();
        p.push("a", random(&[2, 8, 8], &mut rng, 1.0));
        p.push("ahat", random(&[2, 8, 8], &mut rng, 1.0));
        let err = grad_check(&p, 1e-3, |g, v| {
            let e = prednet_error(g, v[0], v[1])?;
            project(g, e, 6)
        })
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn softmax_and_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = ParamSet::new();
        p.push("z", random(&[4, 8, 8], &mut rng, 2.0));
        let mut target = Tensor::zeros(&[4, 8, 8]);
        for i in 0..64 {
            target.data_mut()[rng.gen_range(0..4) * 64 + i] = 1.0;
        }
        let err = grad_check(&p, 1e-3, |g, v| {
            let s = g.softmax(v[0])?;
            let a = project(g, s, 7)?;
            let ce = g.cross_entropy(v[0], &target)?;
            g.weighted_sum(&[(a, 1.0), (ce, 1.0)])
        })
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn mass_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut p = ParamSet::new();
        p.push("z", random(&[2, 8, 8], &mut rng, 3.0));
        let err = grad_check(&p, 1e-3, |g, v| {
            let m = g.mass_renorm(v[0])?;
            project(g, m, 8)
        })
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn pooling_and_upsampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut p = ParamSet::new();
        p.push("x", random(&[2, 8, 8], &mut rng, 1.0));
        let err = grad_check(&p, 1e-3, |g, v| {
            let d = g.max_pool2(v[0])?;
            let u = g.upsample2(d)?;
            let s = g.sigmoid(u);
            project(g, s, 9)
        })
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    /// Checks a whole prong at a point away from the relu, pooling and
    /// renormalisation kinks, which a step of `1e-3` would otherwise cross.
    fn full_prong(head: Head, input: usize, side: usize, objective: Objective) -> f64 {
        let cfg = ProngConfig { head, a_channels: vec![input, 3], r_channels: vec![3, 4], side_channels: side, kernel: 3 };
        let mut params = cfg.init(12).cast::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (name, t) in params.entries_mut() {
            let shift = match name.as_str() {
                "ahat0.b" if head == Head::Mass => 2.0,
                "a1.b" => 1.0,
                "ahat1.b" => 4.0,
                _ => 0.0,
            };
            for x in t.data_mut() {
                *x += shift + rng.gen_range(-0.1..0.1);
            }
        }
        let frames: Vec<Tensor<f64>> = (0..4)
            .map(|_| match head {
                Head::Mass => {
                    let mut t = Tensor::zeros(&[2, 8, 8]);
                    for i in 0..64 {
                        let (o, e) = if rng.gen_bool(0.5) { (0.95, 0.02) } else { (0.02, 0.95) };
                        t.data_mut()[i] = o;
                        t.data_mut()[64 + i] = e;
                    }
                    t
                }
                Head::Softmax => {
                    let mut t = Tensor::zeros(&[input, 8, 8]);
                    for i in 0..64 {
                        t.data_mut()[rng.gen_range(0..input) * 64 + i] = 1.0;
                    }
                    t
                }
            })
            .collect();
        let sides: Vec<Tensor<f64>> = (0..4).map(|_| random(&[side.max(1), 8, 8], &mut rng, 1.0).map(f64::abs)).collect();
        grad_check(&params, 1e-3, |g, v| {
            let side = (side > 0).then_some(sides.as_slice());
            Ok(prong_loss(g, &cfg, v, &frames, side, objective)?.0)
        })
        .unwrap()
    }

    #[test]
    fn occupancy_prong() {
        let err = full_prong(Head::Mass, 2, 4, Objective::NextFrame);
        assert!(err < 1e-3, "{err}");
        let err = full_prong(Head::Mass, 2, 0, Objective::Rollout { t_in: 2 });
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn semantic_prong() {
        let err = full_prong(Head::Softmax, 4, 0, Objective::NextFrame);
        assert!(err < 1e-3, "{err}");
        let err = full_prong(Head::Softmax, 4, 0, Objective::Rollout { t_in: 2 });
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn no_parameters() {
        let err = grad_check(&ParamSet::new(), 1e-3, |g, _| {
            let x = g.constant(Tensor::scalar(2.0));
            Ok(g.scale(x, 3.0))
        })
        .unwrap();
        assert_eq!(err, 0.0);
    }
}
