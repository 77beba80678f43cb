//! Stride-1, zero-padded "same" 2-D cross-correlation and its adjoints.
//!
//! Layouts: input `[H, W, Cin]`, kernel `[kh, kw, Cin, Cout]`, bias `[Cout]`,
//! output `[H, W, Cout]`. The innermost loops run over output channels,
//! which are contiguous in both the kernel and the output.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub struct ConvGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

fn check(input: &Tensor, kernel: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (h, w, cin) = input.hwc()?;
    let [kh, kw, kcin, cout] = kernel.shape()[..] else {
        return Err(Error::usage(format!(
            "kernel must be kh×kw×Cin×Cout, got {:?}",
            kernel.shape()
        )));
    };
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::usage(format!("kernel extents must be odd, got {kh}×{kw}")));
    }
    if kcin != cin {
        return Err(Error::Shape {
            expected: vec![kh, kw, cin, cout],
            actual: kernel.shape().to_vec(),
        });
    }
    Ok((h, w, cin, kh, kw, cout))
}

pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (h, w, cin, kh, kw, cout) = check(input, kernel)?;
    bias.expect_shape(&[cout])?;
    let (ry, rx) = (kh / 2, kw / 2);
    let src = input.data();
    let k = kernel.data();
    let mut out = vec![0.0; h * w * cout];
    for y in 0..h {
        for x in 0..w {
            let o = &mut out[(y * w + x) * cout..(y * w + x + 1) * cout];
            o.copy_from_slice(bias.data());
            for dy in 0..kh {
                let Some(yy) = (y + dy).checked_sub(ry).filter(|&v| v < h) else {
                    continue;
                };
                for dx in 0..kw {
                    let Some(xx) = (x + dx).checked_sub(rx).filter(|&v| v < w) else {
                        continue;
                    };
                    let px = &src[(yy * w + xx) * cin..(yy * w + xx + 1) * cin];
                    let kbase = (dy * kw + dx) * cin * cout;
                    for (ci, &a) in px.iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        let row = &k[kbase + ci * cout..kbase + (ci + 1) * cout];
                        for (acc, &kv) in o.iter_mut().zip(row) {
                            *acc += a * kv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![h, w, cout], out)
}

/// Gradients of `⟨grad_out, conv2d(input, kernel, bias)⟩` with respect to
/// input, kernel and bias.
pub fn conv2d_backward(grad_out: &Tensor, input: &Tensor, kernel: &Tensor) -> Result<ConvGrads> {
    let (h, w, cin, kh, kw, cout) = check(input, kernel)?;
    grad_out.expect_shape(&[h, w, cout])?;
    let (ry, rx) = (kh / 2, kw / 2);
    let src = input.data();
    let k = kernel.data();
    let go = grad_out.data();
    let mut gi = vec![0.0; h * w * cin];
    let mut gk = vec![0.0; kh * kw * cin * cout];
    let mut gb = vec![0.0; cout];
    for y in 0..h {
        for x in 0..w {
            let g = &go[(y * w + x) * cout..(y * w + x + 1) * cout];
            for (b, &v) in gb.iter_mut().zip(g) {
                *b += v;
            }
            for dy in 0..kh {
                let Some(yy) = (y + dy).checked_sub(ry).filter(|&v| v < h) else {
                    continue;
                };
                for dx in 0..kw {
                    let Some(xx) = (x + dx).checked_sub(rx).filter(|&v| v < w) else {
                        continue;
                    };
                    let pix = (yy * w + xx) * cin;
                    let kbase = (dy * kw + dx) * cin * cout;
                    for ci in 0..cin {
                        let row = &k[kbase + ci * cout..kbase + (ci + 1) * cout];
                        gi[pix + ci] += row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                        let a = src[pix + ci];
                        if a != 0.0 {
                            let grow = &mut gk[kbase + ci * cout..kbase + (ci + 1) * cout];
                            for (acc, &gv) in grow.iter_mut().zip(g) {
                                *acc += a * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(vec![h, w, cin], gi)?,
        kernel: Tensor::new(vec![kh, kw, cin, cout], gk)?,
        bias: Tensor::new(vec![cout], gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_difference, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct nested-loop definition with explicit bounds checks.
    fn naive(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Tensor {
        let (h, w, cin) = input.hwc().unwrap();
        let s = kernel.shape();
        let (kh, kw, cout) = (s[0], s[1], s[3]);
        let mut out = Tensor::zeros(&[h, w, cout]);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                for co in 0..cout {
                    let mut acc = bias.data()[co];
                    for dy in 0..kh as i64 {
                        for dx in 0..kw as i64 {
                            let yy = y + dy - (kh as i64 / 2);
                            let xx = x + dx - (kw as i64 / 2);
                            if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                                continue;
                            }
                            for ci in 0..cin {
                                let kv = kernel.data()
                                    [((dy as usize * kw + dx as usize) * cin + ci) * cout + co];
                                acc += input.pixel(yy as usize, xx as usize)[ci] * kv;
                            }
                        }
                    }
                    out.pixel_mut(y as usize, x as usize)[co] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[4, 5, 1], &mut rng);
        let k = Tensor::full(&[1, 1, 1, 1], 1.0);
        let b = Tensor::zeros(&[1]);
        assert_eq!(conv2d(&x, &k, &b).unwrap(), x);
        let g = conv2d_backward(&x, &x, &k).unwrap();
        assert_eq!(g.input, x);
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let x = Tensor::full(&[3, 3, 2], 0.7);
        let k = Tensor::zeros(&[3, 3, 2, 2]);
        let b = Tensor::new(vec![2], vec![0.25, -1.5]).unwrap();
        let y = conv2d(&x, &k, &b).unwrap();
        for px in y.data().chunks(2) {
            assert_eq!(px, &[0.25, -1.5]);
        }
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (kh, kw, cin, cout) in [(3, 3, 1, 1), (3, 3, 2, 3), (5, 3, 3, 2), (1, 5, 2, 2)] {
            let x = random(&[5, 5, cin], &mut rng);
            let k = random(&[kh, kw, cin, cout], &mut rng);
            let b = random(&[cout], &mut rng);
            let fast = conv2d(&x, &k, &b).unwrap();
            let slow = naive(&x, &k, &b);
            assert!(relative_error(fast.data(), slow.data()) < 1e-12);
            assert!(fast
                .data()
                .iter()
                .zip(slow.data())
                .all(|(a, b)| (a - b).abs() <= 1e-12));
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = Tensor::zeros(&[4, 4, 2]);
        assert!(conv2d(&x, &Tensor::zeros(&[2, 2, 2, 1]), &Tensor::zeros(&[1])).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[3, 3, 3, 1]), &Tensor::zeros(&[1])).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[3, 3, 2, 1]), &Tensor::zeros(&[2])).is_err());
        let go = Tensor::zeros(&[4, 3, 1]);
        assert!(conv2d_backward(&go, &x, &Tensor::zeros(&[3, 3, 2, 1])).is_err());
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[4, 4, 2], &mut rng);
        let k = random(&[3, 3, 2, 3], &mut rng);
        let g = conv2d_backward(&Tensor::zeros(&[4, 4, 3]), &x, &k).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.kernel.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let cin = rng.random_range(1..4);
            let cout = rng.random_range(1..4);
            let x = random(&[4, 5, cin], &mut rng);
            let k = random(&[3, 3, cin, cout], &mut rng);
            let b = random(&[cout], &mut rng);
            // scalarize with a fixed random projection
            let proj = random(&[4, 5, cout], &mut rng);
            let g = conv2d_backward(&proj, &x, &k).unwrap();

            let fx = finite_difference(|t| conv2d(t, &k, &b).unwrap().dot(&proj).unwrap(), &x, 1e-5);
            assert!(relative_error(g.input.data(), fx.data()) <= 1e-5);
            let fk = finite_difference(|t| conv2d(&x, t, &b).unwrap().dot(&proj).unwrap(), &k, 1e-5);
            assert!(relative_error(g.kernel.data(), fk.data()) <= 1e-5);
            let fb = finite_difference(|t| conv2d(&x, &k, t).unwrap().dot(&proj).unwrap(), &b, 1e-5);
            assert!(relative_error(g.bias.data(), fb.data()) <= 1e-5);
        }
    }
}
