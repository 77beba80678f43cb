//! Deterministic synthetic segmentation scenes.
//!
//! Each scene is a fractal-textured, low-saturation background with one or
//! more saturated, textured shapes on top. Every foreground class has its
//! own archetype and hue; later shapes occlude earlier ones and the labels
//! follow the occlusion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::heads::{LabelMap, BACKGROUND};
use crate::par::Exec;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Archetype {
    Disk,
    Square,
    Triangle,
    Diamond,
    Ring,
    Cross,
    Ellipse,
}

/// Archetype and RGB hue of each foreground class, in class order (class 1
/// first).
pub const CLASS_STYLES: [(Archetype, [f64; 3]); 7] = [
    (Archetype::Disk, [0.85, 0.15, 0.12]),
    (Archetype::Square, [0.15, 0.72, 0.2]),
    (Archetype::Triangle, [0.18, 0.3, 0.9]),
    (Archetype::Diamond, [0.9, 0.82, 0.1]),
    (Archetype::Ring, [0.8, 0.2, 0.8]),
    (Archetype::Cross, [0.1, 0.8, 0.85]),
    (Archetype::Ellipse, [0.95, 0.5, 0.05]),
];

pub const MAX_CLASSES: usize = CLASS_STYLES.len() + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSpec {
    pub seed: u64,
    pub image_size: usize,
    /// Classes including background.
    pub num_classes: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Shape radius range as fractions of the image side; never below 4 px.
    pub radius_range: (f64, f64),
    pub texture_octaves: usize,
    /// Amplitude of the fractal texture modulating fills.
    pub texture_strength: f64,
    /// Std-dev of independent per-pixel noise.
    pub noise_floor: f64,
    /// Percentage of ids assigned to the validation split.
    pub val_percent: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        SyntheticSceneSpec {
            seed: 0,
            image_size: 96,
            num_classes: 4,
            min_shapes: 1,
            max_shapes: 3,
            radius_range: (0.1, 0.22),
            texture_octaves: 3,
            texture_strength: 0.35,
            noise_floor: 0.02,
            val_percent: 20,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_CLASSES).contains(&self.num_classes) {
            return Err(Error::usage(format!(
                "synthetic scenes support 2..={MAX_CLASSES} classes, got {}",
                self.num_classes
            )));
        }
        if self.image_size < 16 {
            return Err(Error::usage("image size must be at least 16"));
        }
        if self.min_shapes > self.max_shapes {
            return Err(Error::usage("min_shapes exceeds max_shapes"));
        }
        let (lo, hi) = self.radius_range;
        if !(lo > 0.0 && lo <= hi && hi < 0.5) {
            return Err(Error::usage(format!("radius range ({lo}, {hi}) must satisfy 0 < lo <= hi < 0.5")));
        }
        if self.val_percent > 100 {
            return Err(Error::usage("val_percent must be within 0..=100"));
        }
        Ok(())
    }

    fn radius_px(&self) -> (f64, f64) {
        let s = self.image_size as f64;
        let lo = (self.radius_range.0 * s).max(4.0);
        let hi = (self.radius_range.1 * s).max(lo + 1.0);
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub class: u8,
    pub archetype: Archetype,
    pub cy: f64,
    pub cx: f64,
    pub radius: f64,
}

impl Shape {
    /// Whether point `(py, px)` (continuous pixel coordinates) is inside.
    pub fn contains(&self, py: f64, px: f64) -> bool {
        let (dy, dx, r) = (py - self.cy, px - self.cx, self.radius);
        match self.archetype {
            Archetype::Disk => dy * dy + dx * dx <= r * r,
            Archetype::Square => dy.abs() <= 0.8 * r && dx.abs() <= 0.8 * r,
            Archetype::Triangle => {
                // apex up, base at dy = r/2
                dy >= -r && dy <= 0.5 * r && dx.abs() <= (dy + r) / 1.5 * 0.866
            }
            Archetype::Diamond => dy.abs() + dx.abs() <= r,
            Archetype::Ring => {
                let d2 = dy * dy + dx * dx;
                d2 <= r * r && d2 >= 0.3 * r * r
            }
            Archetype::Cross => {
                (dy.abs() <= 0.35 * r && dx.abs() <= r) || (dx.abs() <= 0.35 * r && dy.abs() <= r)
            }
            Archetype::Ellipse => (dy / (0.6 * r)).powi(2) + (dx / r).powi(2) <= 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Tensor,
    pub label: LabelMap,
    /// Generating shapes in paint order; empty for samples read from disk.
    pub shapes: Vec<Shape>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// Stable id-hash split.
pub fn split_of(id: &str, val_percent: u64) -> Split {
    if fnv1a(id.as_bytes()) % 100 < val_percent {
        Split::Val
    } else {
        Split::Train
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn sample_id(seed: u64, index: usize) -> String {
    format!("s{seed}-{index:05}")
}

/// Generates `count` samples. Sample `i` depends only on `(spec, i)`.
pub fn generate(spec: &SyntheticSceneSpec, count: usize) -> Result<Vec<Sample>> {
    generate_with(spec, count, Exec::Sequential)
}

pub fn generate_with(spec: &SyntheticSceneSpec, count: usize, exec: Exec) -> Result<Vec<Sample>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::usage("sample count must be at least 1"));
    }
    Ok(exec.map_indexed(count, |i| generate_one(spec, i)))
}

/// Splits samples by id hash into (train, val).
pub fn split(samples: Vec<Sample>, val_percent: u64) -> (Vec<Sample>, Vec<Sample>) {
    samples
        .into_iter()
        .partition(|s| split_of(&s.id, val_percent) == Split::Train)
}

fn generate_one(spec: &SyntheticSceneSpec, index: usize) -> Sample {
    let id = sample_id(spec.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(id.as_bytes()) ^ spec.seed.rotate_left(17));
    let n = spec.image_size;

    let shape_count = rng.random_range(spec.min_shapes..=spec.max_shapes);
    let shapes = place_shapes(spec, shape_count, &mut rng);

    // background: two muted colours blended by fractal noise
    let bg_a = muted_colour(&mut rng);
    let bg_b = muted_colour(&mut rng);
    let blend = fractal_noise(n, spec.texture_octaves, &mut rng);
    let fg_texture = fractal_noise(n, spec.texture_octaves, &mut rng);

    let mut image = Tensor::zeros(&[n, n, 3]);
    let mut label = LabelMap::filled(n, n, BACKGROUND as u8);
    let fills: Vec<[f64; 3]> = shapes
        .iter()
        .map(|s| {
            let base = CLASS_STYLES[s.class as usize - 1].1;
            let jitter = rng.random_range(0.85..1.1);
            base.map(|c| (c * jitter).clamp(0.0, 1.0))
        })
        .collect();
    for y in 0..n {
        for x in 0..n {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            let top = shapes.iter().rposition(|s| s.contains(py, px));
            let t = fg_texture[y * n + x];
            let colour = match top {
                Some(i) => {
                    label.set(y, x, shapes[i].class);
                    let m = 1.0 + spec.texture_strength * (t - 0.5);
                    fills[i].map(|c| c * m)
                }
                None => {
                    let b = blend[y * n + x];
                    let m = 1.0 + 0.5 * spec.texture_strength * (t - 0.5);
                    [0, 1, 2].map(|ch| (bg_a[ch] * (1.0 - b) + bg_b[ch] * b) * m)
                }
            };
            let dst = image.pixel_mut(y, x);
            for ch in 0..3 {
                let noise = spec.noise_floor * standard_normal(&mut rng);
                dst[ch] = (colour[ch] + noise).clamp(0.0, 1.0);
            }
        }
    }
    Sample {
        id,
        image,
        label,
        shapes,
    }
}

fn place_shapes(spec: &SyntheticSceneSpec, count: usize, rng: &mut ChaCha8Rng) -> Vec<Shape> {
    const RETRIES: usize = 50;
    let n = spec.image_size as f64;
    let (rlo, rhi) = spec.radius_px();
    let mut shapes: Vec<Shape> = Vec::with_capacity(count);
    for _ in 0..count {
        let class = rng.random_range(1..spec.num_classes) as u8;
        let archetype = CLASS_STYLES[class as usize - 1].0;
        let placed = (0..RETRIES).find_map(|_| {
            let radius = rng.random_range(rlo..=rhi);
            let margin = radius * 0.6;
            let cy = rng.random_range(margin..=n - margin);
            let cx = rng.random_range(margin..=n - margin);
            let overlapping = shapes.iter().any(|s| {
                let d = ((s.cy - cy).powi(2) + (s.cx - cx).powi(2)).sqrt();
                d < 0.6 * (s.radius + radius)
            });
            (!overlapping).then_some(Shape {
                class,
                archetype,
                cy,
                cx,
                radius,
            })
        });
        match placed {
            Some(s) => shapes.push(s),
            None => {
                log::warn!("could not place shape {} of {count} after {RETRIES} tries", shapes.len() + 1);
                break;
            }
        }
    }
    shapes
}

fn muted_colour(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let grey: f64 = rng.random_range(0.2..0.8);
    [0, 1, 2].map(|_| (grey + rng.random_range(-0.08..0.08)).clamp(0.0, 1.0))
}

/// Multi-octave value noise on an `n×n` grid, normalized to `[0, 1]`.
pub fn fractal_noise(n: usize, octaves: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    let mut amplitude = 1.0;
    let mut cells = 3usize;
    for _ in 0..octaves.max(1) {
        let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1)).map(|_| rng.random()).collect();
        let step = n as f64 / cells as f64;
        for y in 0..n {
            let gy = y as f64 / step;
            let (y0, fy) = (gy.floor() as usize, smooth(gy.fract()));
            for x in 0..n {
                let gx = x as f64 / step;
                let (x0, fx) = (gx.floor() as usize, smooth(gx.fract()));
                let at = |yy: usize, xx: usize| lattice[yy.min(cells) * (cells + 1) + xx.min(cells)];
                let top = at(y0, x0) + (at(y0, x0 + 1) - at(y0, x0)) * fx;
                let bottom = at(y0 + 1, x0) + (at(y0 + 1, x0 + 1) - at(y0 + 1, x0)) * fx;
                out[y * n + x] += amplitude * (top + (bottom - top) * fy);
            }
        }
        amplitude *= 0.5;
        cells *= 2;
    }
    let lo = out.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    out.iter_mut().for_each(|v| *v = (*v - lo) / span);
    out
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

pub(crate) fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller, one draw per call
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
