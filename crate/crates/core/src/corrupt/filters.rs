//! Image-processing helpers shared by the corruption kernels. Images are
//! `[H, W, C]` tensors; borders reflect without repeating the edge pixel.

use super::rng::Stream;
use crate::tensor::Tensor;

#[inline]
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Normalised 1-D Gaussian with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable convolution along rows then columns.
pub fn separable(image: &Tensor, kernel: &[f64]) -> Tensor {
    let s = image.shape();
    let (h, w, c) = (s[0], s[1], s[2]);
    let r = (kernel.len() / 2) as isize;
    let src = image.data();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let o = (y * w + x) * c;
            for (t, &kv) in kernel.iter().enumerate() {
                let xx = reflect101(x as isize + t as isize - r, w);
                let i = (y * w + xx) * c;
                for ch in 0..c {
                    tmp[o + ch] += kv * src[i + ch];
                }
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for (t, &kv) in kernel.iter().enumerate() {
            let yy = reflect101(y as isize + t as isize - r, h);
            let (dst, row) = (y * w * c, yy * w * c);
            for j in 0..w * c {
                out[dst + j] += kv * tmp[row + j];
            }
        }
    }
    Tensor::new(s.to_vec(), out).expect("shape preserved")
}

pub fn gaussian_blur(image: &Tensor, sigma: f64) -> Tensor {
    if sigma <= 0.0 {
        return image.clone();
    }
    separable(image, &gaussian_kernel(sigma))
}

/// Dense 2-D correlation with a centred `kh × kw` kernel.
pub fn convolve(image: &Tensor, kernel: &[f64], kh: usize, kw: usize) -> Tensor {
    let s = image.shape();
    let (h, w, c) = (s[0], s[1], s[2]);
    let (ry, rx) = ((kh / 2) as isize, (kw / 2) as isize);
    let taps: Vec<(isize, isize, f64)> = (0..kh * kw)
        .filter(|&i| kernel[i] != 0.0)
        .map(|i| ((i / kw) as isize - ry, (i % kw) as isize - rx, kernel[i]))
        .collect();
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let o = (y * w + x) * c;
            for &(dy, dx, kv) in &taps {
                let yy = reflect101(y as isize + dy, h);
                let xx = reflect101(x as isize + dx, w);
                let i = (yy * w + xx) * c;
                for ch in 0..c {
                    out[o + ch] += kv * src[i + ch];
                }
            }
        }
    }
    Tensor::new(s.to_vec(), out).expect("shape preserved")
}

/// Bilinear sample at real coordinates, reflecting outside the image.
pub fn sample(image: &Tensor, y: f64, x: f64, out: &mut [f64]) {
    let s = image.shape();
    let (h, w, c) = (s[0], s[1], s[2]);
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let (y0, x0) = (y0 as isize, x0 as isize);
    let rows = [reflect101(y0, h), reflect101(y0 + 1, h)];
    let cols = [reflect101(x0, w), reflect101(x0 + 1, w)];
    let weights = [(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx];
    let d = image.data();
    out[..c].fill(0.0);
    for (k, wt) in weights.iter().enumerate() {
        let i = (rows[k / 2] * w + cols[k % 2]) * c;
        for ch in 0..c {
            out[ch] += wt * d[i + ch];
        }
    }
}

/// Smooth random noise: uniform lattice values every `cell` pixels, joined
/// with smoothstep interpolation. Values lie in `[0, 1]`.
pub fn value_noise(h: usize, w: usize, cell: f64, rng: &Stream) -> Vec<f64> {
    let cell = cell.max(1.0);
    let gw = (w as f64 / cell).ceil() as u64 + 2;
    let lattice = |gy: u64, gx: u64| rng.uniform(gy * gw + gx);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let fy = y as f64 / cell;
        let (gy, ty) = (fy.floor() as u64, smooth(fy.fract()));
        for x in 0..w {
            let fx = x as f64 / cell;
            let (gx, tx) = (fx.floor() as u64, smooth(fx.fract()));
            let top = lattice(gy, gx) * (1.0 - tx) + lattice(gy, gx + 1) * tx;
            let bottom = lattice(gy + 1, gx) * (1.0 - tx) + lattice(gy + 1, gx + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Sum of value-noise octaves, halving the cell and dividing the amplitude
/// by `decay` each octave, rescaled to `[0, 1]`.
pub fn fractal(h: usize, w: usize, base_cell: f64, octaves: usize, decay: f64, rng: &Stream) -> Vec<f64> {
    let mut acc = vec![0.0; h * w];
    let mut amp = 1.0;
    let mut cell = base_cell;
    for o in 0..octaves {
        let layer = value_noise(h, w, cell, &rng.stage(o as u64));
        for (a, v) in acc.iter_mut().zip(layer) {
            *a += amp * v;
        }
        amp /= decay;
        cell /= 2.0;
    }
    normalise(&mut acc);
    acc
}

pub fn normalise(v: &mut [f64]) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for x in v.iter_mut() {
        *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
    }
}

pub fn rgb_to_hsv(p: &[f64]) -> [f64; 3] {
    let (r, g, b) = (p[0], p[1], p[2]);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    } / 6.0;
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h, s, max]
}

pub fn hsv_to_rgb(hsv: [f64; 3]) -> [f64; 3] {
    let [h, s, v] = hsv;
    let h6 = (h * 6.0).rem_euclid(6.0);
    let i = h6.floor();
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u8 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}
