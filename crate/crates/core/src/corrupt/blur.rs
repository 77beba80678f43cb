use super::filters::{convolve, gaussian_blur, gaussian_kernel, reflect101, sample};
use super::pixel_scale;
use super::rng::Stream;
use crate::tensor::Tensor;

/// Disk kernel of the given radius, softened by a small Gaussian so that
/// sub-pixel radii still differ.
pub fn defocus(image: &Tensor, radius: f64, alias_sigma: f64) -> Tensor {
    let r = radius * pixel_scale(image);
    let g = gaussian_kernel(alias_sigma);
    let half = r.floor() as usize + g.len() / 2;
    let n = 2 * half + 1;
    let disk: Vec<f64> = (0..n * n)
        .map(|i| {
            let (dy, dx) = ((i / n) as f64 - half as f64, (i % n) as f64 - half as f64);
            if dy * dy + dx * dx <= r * r {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    // soften the disk with the alias Gaussian, zero outside the grid
    let gr = (g.len() / 2) as isize;
    let soften = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                let mut acc = 0.0;
                for (t, &kv) in g.iter().enumerate() {
                    let o = t as isize - gr;
                    let (yy, xx) = if horizontal {
                        (y as isize, x as isize + o)
                    } else {
                        (y as isize + o, x as isize)
                    };
                    if (0..n as isize).contains(&yy) && (0..n as isize).contains(&xx) {
                        acc += kv * src[yy as usize * n + xx as usize];
                    }
                }
                out[y * n + x] = acc;
            }
        }
        out
    };
    let mut kernel = soften(&soften(&disk, true), false);
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= total);
    convolve(image, &kernel, n, n)
}

/// Gaussian smoothing, local random pixel swaps, then smoothing again.
pub fn glass(image: &Tensor, sigma: f64, max_delta: f64, iterations: f64, rng: &Stream) -> Tensor {
    let scale = pixel_scale(image);
    let sigma = sigma * scale;
    // real-valued reach, so small images still see every severity step
    let delta = max_delta * scale;
    let mut img = gaussian_blur(image, sigma);
    let s = image.shape().to_vec();
    let (h, w, c) = (s[0], s[1], s[2]);
    let data = img.data_mut();
    for it in 0..iterations.round() as u64 {
        let pass = rng.stage(it);
        for y in (0..h).rev() {
            for x in (0..w).rev() {
                let idx = (y * w + x) as u64;
                let dy = ((2.0 * pass.uniform(2 * idx) - 1.0) * delta).round();
                let dx = ((2.0 * pass.uniform(2 * idx + 1) - 1.0) * delta).round();
                let yy = reflect101(y as isize + dy as isize, h);
                let xx = reflect101(x as isize + dx as isize, w);
                for ch in 0..c {
                    data.swap((y * w + x) * c + ch, (yy * w + xx) * c + ch);
                }
            }
        }
    }
    gaussian_blur(&img, sigma)
}

/// One-sided line kernel at a random angle with Gaussian falloff along it.
pub fn motion(image: &Tensor, radius: f64, sigma: f64, rng: &Stream) -> Tensor {
    let scale = pixel_scale(image);
    let (len, sigma) = ((radius * scale).max(1.0), (sigma * scale).max(0.5));
    let angle = (rng.uniform(0) * 90.0 - 45.0).to_radians();
    line_average(image, angle, len, |t| (-t * t / (2.0 * sigma * sigma)).exp())
}

/// Weighted average of samples at `p − t · (cos a, sin a)` for `t = 0..=len`.
pub(crate) fn line_average(image: &Tensor, angle: f64, len: f64, weight: impl Fn(f64) -> f64) -> Tensor {
    let s = image.shape();
    let (h, w, c) = (s[0], s[1], s[2]);
    let steps = len.ceil() as usize;
    let taps: Vec<(f64, f64, f64)> = (0..=steps)
        .map(|i| {
            let t = (i as f64).min(len);
            (t * angle.sin(), t * angle.cos(), weight(t))
        })
        .collect();
    let total: f64 = taps.iter().map(|t| t.2).sum();
    let mut out = Tensor::zeros(s);
    let mut px = vec![0.0; c];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 4];
            for &(dy, dx, wt) in &taps {
                sample(image, y as f64 - dy, x as f64 - dx, &mut px);
                for ch in 0..c {
                    acc[ch] += wt * px[ch];
                }
            }
            let o = out.pixel_mut(y, x);
            for ch in 0..c {
                o[ch] = acc[ch] / total;
            }
        }
    }
    out
}

/// Progressive average of centre zooms `1, 1 + step, ...` below `max_zoom`.
pub fn zoom(image: &Tensor, max_zoom: f64, step: f64) -> Tensor {
    let s = image.shape();
    let (h, w, c) = (s[0], s[1], s[2]);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut zooms = Vec::new();
    let mut i = 0;
    loop {
        let z = 1.0 + i as f64 * step;
        if z >= max_zoom - 1e-9 {
            break;
        }
        zooms.push(z);
        i += 1;
    }
    let mut acc = Tensor::zeros(s);
    let mut px = vec![0.0; c];
    for &z in &zooms {
        for y in 0..h {
            for x in 0..w {
                sample(image, cy + (y as f64 - cy) / z, cx + (x as f64 - cx) / z, &mut px);
                let o = acc.pixel_mut(y, x);
                for ch in 0..c {
                    o[ch] += px[ch];
                }
            }
        }
    }
    let n = zooms.len() as f64 + 1.0;
    let mut out = image.clone();
    for (o, a) in out.data_mut().iter_mut().zip(acc.data()) {
        *o = (*o + a) / n;
    }
    out
}
