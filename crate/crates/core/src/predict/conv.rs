//! 2-D cross-correlation over `C x H x W` tensors by im2col and GEMM.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    /// Stride 1 with output size equal to input size.
    pub fn same(kernel: usize) -> Self {
        ConvGeometry { stride: 1, padding: kernel / 2 }
    }
}

struct Dims {
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    oh: usize,
    ow: usize,
}

fn dims<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, g: ConvGeometry) -> Result<Dims> {
    let (c, h, wd) = x.chw()?;
    let (o, wc, k) = match w.shape()[..] {
        [o, wc, k1, k2] if k1 == k2 => (o, wc, k1),
        _ => return Err(Error::Shape(format!("kernel must be O x C x K x K, got {:?}", w.shape()))),
    };
    if wc != c {
        return Err(Error::Shape(format!("kernel expects {wc} input channels, input has {c}")));
    }
    if g.stride == 0 || h + 2 * g.padding < k || wd + 2 * g.padding < k {
        return Err(Error::Shape(format!("kernel {k} with {g:?} does not fit a {h}x{wd} input")));
    }
    let oh = (h + 2 * g.padding - k) / g.stride + 1;
    let ow = (wd + 2 * g.padding - k) / g.stride + 1;
    Ok(Dims { c, h, w: wd, o, k, oh, ow })
}

fn im2col<S: Scalar>(x: &[S], d: &Dims, g: ConvGeometry) -> Vec<S> {
    let n = d.oh * d.ow;
    let mut cols = vec![S::zero(); d.c * d.k * d.k * n];
    for c in 0..d.c {
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = &mut cols[((c * d.k + ky) * d.k + kx) * n..][..n];
                for oy in 0..d.oh {
                    let y = (oy * g.stride + ky) as isize - g.padding as isize;
                    if y < 0 || y >= d.h as isize {
                        continue;
                    }
                    let src = &x[(c * d.h + y as usize) * d.w..][..d.w];
                    for ox in 0..d.ow {
                        let xx = (ox * g.stride + kx) as isize - g.padding as isize;
                        if xx >= 0 && xx < d.w as isize {
                            row[oy * d.ow + ox] = src[xx as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<S: Scalar>(cols: &[S], d: &Dims, g: ConvGeometry, dx: &mut [S]) {
    let n = d.oh * d.ow;
    for c in 0..d.c {
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = &cols[((c * d.k + ky) * d.k + kx) * n..][..n];
                for oy in 0..d.oh {
                    let y = (oy * g.stride + ky) as isize - g.padding as isize;
                    if y < 0 || y >= d.h as isize {
                        continue;
                    }
                    let dst = &mut dx[(c * d.h + y as usize) * d.w..][..d.w];
                    for ox in 0..d.ow {
                        let xx = (ox * g.stride + kx) as isize - g.padding as isize;
                        if xx >= 0 && xx < d.w as isize {
                            dst[xx as usize] = dst[xx as usize] + row[oy * d.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn is_pointwise(d: &Dims, g: ConvGeometry) -> bool {
    d.k == 1 && g.stride == 1 && g.padding == 0
}

pub fn conv2d_forward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: Option<&Tensor<S>>,
    g: ConvGeometry,
) -> Result<Tensor<S>> {
    let d = dims(x, w, g)?;
    if let Some(b) = b {
        if b.shape() != [d.o] {
            return Err(Error::Shape(format!("bias must have {} entries, got shape {:?}", d.o, b.shape())));
        }
    }
    let n = d.oh * d.ow;
    let ckk = d.c * d.k * d.k;
    let mut out = vec![S::zero(); d.o * n];
    if let Some(b) = b {
        for (row, &bias) in out.chunks_mut(n).zip(b.data()) {
            row.fill(bias);
        }
    }
    let beta = if b.is_some() { S::one() } else { S::zero() };
    let owned;
    let cols = if is_pointwise(&d, g) {
        x.data()
    } else {
        owned = im2col(x.data(), &d, g);
        &owned
    };
    S::gemm(d.o, ckk, n, S::one(), w.data(), (ckk, 1), cols, (n, 1), beta, &mut out, (n, 1));
    Tensor::new(vec![d.o, d.oh, d.ow], out)
}

pub struct ConvGrads<S> {
    pub dx: Option<Tensor<S>>,
    pub dw: Tensor<S>,
    pub db: Tensor<S>,
}

pub fn conv2d_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    dout: &Tensor<S>,
    g: ConvGeometry,
    want_dx: bool,
) -> Result<ConvGrads<S>> {
    let d = dims(x, w, g)?;
    if dout.shape() != [d.o, d.oh, d.ow] {
        return Err(Error::Shape(format!("output gradient has shape {:?}, expected {:?}", dout.shape(), [d.o, d.oh, d.ow])));
    }
    let n = d.oh * d.ow;
    let ckk = d.c * d.k * d.k;
    let owned;
    let pointwise = is_pointwise(&d, g);
    let cols = if pointwise {
        x.data()
    } else {
        owned = im2col(x.data(), &d, g);
        &owned
    };
    let mut dw = vec![S::zero(); d.o * ckk];
    S::gemm(d.o, n, ckk, S::one(), dout.data(), (n, 1), cols, (1, n), S::zero(), &mut dw, (ckk, 1));
    let db: Vec<S> = dout.data().chunks(n).map(|r| r.iter().copied().sum()).collect();

    let dx = if want_dx {
        let mut dcols = vec![S::zero(); ckk * n];
        S::gemm(ckk, d.o, n, S::one(), w.data(), (1, ckk), dout.data(), (n, 1), S::zero(), &mut dcols, (n, 1));
        let dx = if pointwise {
            dcols
        } else {
            let mut dx = vec![S::zero(); d.c * d.h * d.w];
            col2im(&dcols, &d, g, &mut dx);
            dx
        };
        Some(Tensor::new(vec![d.c, d.h, d.w], dx)?)
    } else {
        None
    };
    Ok(ConvGrads { dx, dw: Tensor::new(w.shape().to_vec(), dw)?, db: Tensor::new(vec![d.o], db)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn naive(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, g: ConvGeometry) -> Tensor<f64> {
        let (c, h, wd) = x.chw().unwrap();
        let (o, k) = (w.shape()[0], w.shape()[2]);
        let oh = (h + 2 * g.padding - k) / g.stride + 1;
        let ow = (wd + 2 * g.padding - k) / g.stride + 1;
        let mut out = vec![0.0; o * oh * ow];
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let y = (oy * g.stride + ky) as isize - g.padding as isize;
                                let xx = (ox * g.stride + kx) as isize - g.padding as isize;
                                if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < wd {
                                    acc += w.data()[((oc * c + ic) * k + ky) * k + kx]
                                        * x.data()[(ic * h + y as usize) * wd + xx as usize];
                                }
                            }
                        }
                    }
                    out[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
        Tensor::new(vec![o, oh, ow], out).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[3, 4, 5], &mut rng);
        let mut w = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        assert_eq!(conv2d_forward(&x, &w, None, ConvGeometry::same(1)).unwrap(), x);
    }

    #[test]
    fn zero_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[2, 5, 5], &mut rng);
        let w = Tensor::zeros(&[4, 2, 3, 3]);
        let g = ConvGeometry::same(3);
        let y = conv2d_forward(&x, &w, None, g).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        let dout = random(&[4, 5, 5], &mut rng);
        let grads = conv2d_backward(&x, &w, &dout, g, true).unwrap();
        assert!(grads.dx.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for g in [ConvGeometry::same(3), ConvGeometry { stride: 2, padding: 1 }, ConvGeometry { stride: 1, padding: 0 }] {
            let x = random(&[3, 7, 6], &mut rng);
            let w = random(&[4, 3, 3, 3], &mut rng);
            let b = random(&[4], &mut rng);
            let fast = conv2d_forward(&x, &w, Some(&b), g).unwrap();
            let slow = naive(&x, &w, &b, g);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_is_adjoint() {
        // <dout, conv(x)> is bilinear, so its gradients are exact directional derivatives
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = ConvGeometry { stride: 2, padding: 1 };
        let x = random(&[2, 6, 5], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let y = conv2d_forward(&x, &w, Some(&b), g).unwrap();
        let dout = random(y.shape(), &mut rng);
        let grads = conv2d_backward(&x, &w, &dout, g, true).unwrap();
        let dot = |a: &Tensor<f64>, b: &Tensor<f64>| a.data().iter().zip(b.data()).map(|(p, q)| p * q).sum::<f64>();
        let zero_b = Tensor::zeros(&[3]);
        let dx = grads.dx.unwrap();
        let (vx, vw) = (random(x.shape(), &mut rng), random(w.shape(), &mut rng));
        assert!((dot(&dout, &conv2d_forward(&vx, &w, Some(&zero_b), g).unwrap()) - dot(&dx, &vx)).abs() < 1e-10);
        assert!((dot(&dout, &conv2d_forward(&x, &vw, Some(&zero_b), g).unwrap()) - dot(&grads.dw, &vw)).abs() < 1e-10);
        let db: f64 = dout.data().iter().take(y.shape()[1] * y.shape()[2]).sum();
        assert!((grads.db.data()[0] - db).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatch() {
        let x = Tensor::<f32>::zeros(&[2, 4, 4]);
        let w = Tensor::<f32>::zeros(&[1, 3, 3, 3]);
        assert!(conv2d_forward(&x, &w, None, ConvGeometry::same(3)).is_err());
        let w = Tensor::<f32>::zeros(&[1, 2, 3, 3]);
        assert!(conv2d_forward(&x, &w, Some(&Tensor::zeros(&[2])), ConvGeometry::same(3)).is_err());
    }
}
