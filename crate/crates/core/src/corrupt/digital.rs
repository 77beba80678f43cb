use super::filters::{gaussian_blur, hsv_to_rgb, rgb_to_hsv, sample};
use super::pixel_scale;
use super::rng::Stream;
use crate::tensor::Tensor;

pub fn brightness(image: &Tensor, shift: f64) -> Tensor {
    let mut out = image.clone();
    for px in out.data_mut().chunks_mut(3) {
        let mut hsv = rgb_to_hsv(px);
        hsv[2] = (hsv[2] + shift).clamp(0.0, 1.0);
        px.copy_from_slice(&hsv_to_rgb(hsv));
    }
    out
}

/// Scales deviations from each channel's mean by `factor`.
pub fn contrast(image: &Tensor, factor: f64) -> Tensor {
    let c = image.shape()[2];
    let px = (image.len() / c) as f64;
    let mut means = vec![0.0; c];
    for p in image.data().chunks(c) {
        for (m, v) in means.iter_mut().zip(p) {
            *m += v / px;
        }
    }
    let mut out = image.clone();
    for p in out.data_mut().chunks_mut(c) {
        for (v, m) in p.iter_mut().zip(&means) {
            *v = (*v - m) * factor + m;
        }
    }
    out
}

/// Resamples along a smooth random displacement field with the given RMS
/// length.
pub fn elastic(image: &Tensor, displacement: f64, sigma: f64, rng: &Stream) -> Tensor {
    let s = image.shape();
    let (h, w, c) = (s[0], s[1], s[2]);
    let scale = pixel_scale(image);
    let white = Tensor::from_fn(&[h, w, 2], |i| rng.normal(i as u64));
    let mut field = gaussian_blur(&white, (sigma * scale).max(0.5));
    let rms = (field.data().iter().map(|v| v * v).sum::<f64>() / (h * w) as f64).sqrt();
    let gain = if rms > 0.0 { displacement * scale / rms } else { 0.0 };
    field = field.scale(gain);
    let mut out = Tensor::zeros(s);
    let mut px = vec![0.0; c];
    for y in 0..h {
        for x in 0..w {
            let d = field.pixel(y, x);
            sample(image, y as f64 + d[0], x as f64 + d[1], &mut px);
            out.pixel_mut(y, x).copy_from_slice(&px);
        }
    }
    out
}

/// Box downscale to `factor` of the size, then nearest upscale.
pub fn pixelate(image: &Tensor, factor: f64) -> Tensor {
    let s = image.shape();
    let (h, w, c) = (s[0], s[1], s[2]);
    let (sh, sw) = (
        ((h as f64 * factor).round() as usize).max(1),
        ((w as f64 * factor).round() as usize).max(1),
    );
    let cell_y: Vec<usize> = (0..h).map(|y| y * sh / h).collect();
    let cell_x: Vec<usize> = (0..w).map(|x| x * sw / w).collect();
    let mut sums = vec![0.0; sh * sw * c];
    let mut counts = vec![0usize; sh * sw];
    for y in 0..h {
        for x in 0..w {
            let cell = cell_y[y] * sw + cell_x[x];
            counts[cell] += 1;
            for (ch, v) in image.pixel(y, x).iter().enumerate() {
                sums[cell * c + ch] += v;
            }
        }
    }
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let cell = cell_y[y] * sw + cell_x[x];
            for (ch, v) in out.pixel_mut(y, x).iter_mut().enumerate() {
                *v = sums[cell * c + ch] / counts[cell] as f64;
            }
        }
    }
    out
}
