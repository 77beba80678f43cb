use super::blur::line_average;
use super::filters::{fractal, value_noise};
use super::pixel_scale;
use super::rng::Stream;
use crate::tensor::Tensor;

/// Falling flake streaks over a whitened image.
/// `p = [density, length, intensity, image_weight]`.
pub fn snow(image: &Tensor, p: &[f64], rng: &Stream) -> Tensor {
    let (density, length, intensity, image_weight) = (p[0], p[1], p[2], p[3]);
    let s = image.shape();
    let (h, w) = (s[0], s[1]);
    let flakes = rng.stage(0);
    let layer = Tensor::from_fn(&[h, w, 1], |i| {
        if flakes.uniform(i as u64) < density {
            0.5 + 0.5 * flakes.stage(1).uniform(i as u64)
        } else {
            0.0
        }
    });
    let len = (length * pixel_scale(image)).max(1.0);
    // mostly downward, tilted by up to 45 degrees either way
    let angle = (90.0 + rng.uniform(1) * 90.0 - 45.0).to_radians();
    let streaks = line_average(&layer, angle, len, |t| 1.0 - t / (len + 1.0));
    // line_average normalises; rescale so a streak keeps its flake brightness
    let gain = intensity * (len + 1.0) / 2.0;
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let px = out.pixel_mut(y, x);
            let grey = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
            let lift = grey * 1.5 + 0.5;
            let flake = (gain * streaks.pixel(y, x)[0]).min(1.0);
            for v in px.iter_mut() {
                *v = image_weight * *v + (1.0 - image_weight) * v.max(lift) + flake;
            }
        }
    }
    out
}

/// Procedural ice: ridged fractal noise with fine crystalline speckle,
/// tinted pale blue and added over the dimmed image.
pub fn frost(image: &Tensor, image_weight: f64, frost_weight: f64, rng: &Stream) -> Tensor {
    let s = image.shape();
    let (h, w) = (s[0], s[1]);
    let scale = pixel_scale(image);
    let base = fractal(h, w, 48.0 * scale.max(0.25), 4, 1.8, &rng.stage(0));
    let fine = value_noise(h, w, (3.0 * scale).max(1.0), &rng.stage(1));
    const TINT: [f64; 3] = [0.82, 0.9, 1.0];
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let ridge = 1.0 - (2.0 * base[i] - 1.0).abs();
            let ice = (0.75 * ridge * ridge + 0.25 * fine[i]).clamp(0.0, 1.0);
            for (v, t) in out.pixel_mut(y, x).iter_mut().zip(TINT) {
                *v = image_weight * *v + frost_weight * ice * t;
            }
        }
    }
    out
}

/// Plasma fog added to the image, then renormalised to the original peak.
pub fn fog(image: &Tensor, strength: f64, decay: f64, rng: &Stream) -> Tensor {
    let s = image.shape();
    let (h, w) = (s[0], s[1]);
    let side = h.max(w) as f64;
    let plasma = fractal(h, w, side / 2.0, 6, decay, rng);
    let peak = image.data().iter().cloned().fold(0.0, f64::max);
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let f = plasma[y * w + x];
            for v in out.pixel_mut(y, x) {
                *v = (*v + strength * f) * peak / (peak + strength);
            }
        }
    }
    out
}
