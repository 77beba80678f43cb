//! Fifteen seeded image corruptions at five severities, grouped as Noise,
//! Blur, Weather, Lighting and Spatial.
//!
//! All randomness comes from counter-based streams keyed by the spec's seed,
//! so a given `(image, spec)` always produces the same bits. Severity 0 is
//! the identity. Parameters live in [`SeverityTable`], a data file.

mod blur;
mod digital;
mod filters;
pub mod jpeg;
mod noise;
pub mod rng;
mod severity;
mod weather;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

pub use severity::{KindParams, SeverityTable};

use crate::dataset::fnv1a;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Noise,
    Blur,
    Weather,
    Lighting,
    Spatial,
}

impl Group {
    pub const ALL: [Group; 5] = [Group::Noise, Group::Blur, Group::Weather, Group::Lighting, Group::Spatial];

    pub fn name(self) -> &'static str {
        match self {
            Group::Noise => "Noise",
            Group::Blur => "Blur",
            Group::Weather => "Weather",
            Group::Lighting => "Lighting",
            Group::Spatial => "Spatial",
        }
    }

    pub fn kinds(self) -> impl Iterator<Item = CorruptionKind> {
        CorruptionKind::ALL.into_iter().filter(move |k| k.group() == self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CorruptionKind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    DefocusBlur,
    GlassBlur,
    MotionBlur,
    ZoomBlur,
    Snow,
    Frost,
    Fog,
    Brightness,
    Contrast,
    Elastic,
    Pixelate,
    Jpeg,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 15] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::ShotNoise,
        CorruptionKind::ImpulseNoise,
        CorruptionKind::DefocusBlur,
        CorruptionKind::GlassBlur,
        CorruptionKind::MotionBlur,
        CorruptionKind::ZoomBlur,
        CorruptionKind::Snow,
        CorruptionKind::Frost,
        CorruptionKind::Fog,
        CorruptionKind::Brightness,
        CorruptionKind::Contrast,
        CorruptionKind::Elastic,
        CorruptionKind::Pixelate,
        CorruptionKind::Jpeg,
    ];

    pub fn group(self) -> Group {
        use CorruptionKind::*;
        match self {
            GaussianNoise | ShotNoise | ImpulseNoise => Group::Noise,
            DefocusBlur | GlassBlur | MotionBlur | ZoomBlur => Group::Blur,
            Snow | Frost | Fog => Group::Weather,
            Brightness | Contrast => Group::Lighting,
            Elastic | Pixelate | Jpeg => Group::Spatial,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        use CorruptionKind::*;
        match self {
            GaussianNoise => "gaussian_noise",
            ShotNoise => "shot_noise",
            ImpulseNoise => "impulse_noise",
            DefocusBlur => "defocus_blur",
            GlassBlur => "glass_blur",
            MotionBlur => "motion_blur",
            ZoomBlur => "zoom_blur",
            Snow => "snow",
            Frost => "frost",
            Fog => "fog",
            Brightness => "brightness",
            Contrast => "contrast",
            Elastic => "elastic",
            Pixelate => "pixelate",
            Jpeg => "jpeg",
        }
    }

    /// Column heading used in report tables.
    pub fn short(self) -> &'static str {
        use CorruptionKind::*;
        match self {
            GaussianNoise => "Gaus.",
            ShotNoise => "Sh.",
            ImpulseNoise => "Imp.",
            DefocusBlur => "Dfc.",
            GlassBlur => "Gls.",
            MotionBlur => "Mtn.",
            ZoomBlur => "Zm.",
            Snow => "Sno.",
            Frost => "Frs.",
            Fog => "Fog",
            Brightness => "Bri.",
            Contrast => "Cnt.",
            Elastic => "Ela.",
            Pixelate => "Pix.",
            Jpeg => "JPEG",
        }
    }

    fn param_count(self) -> usize {
        use CorruptionKind::*;
        match self {
            GaussianNoise | ShotNoise | ImpulseNoise | Brightness | Contrast | Pixelate | Jpeg => 1,
            DefocusBlur | MotionBlur | ZoomBlur | Frost | Fog | Elastic => 2,
            GlassBlur => 3,
            Snow => 4,
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown corruption `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// 0 is the clean input; 1..=5 increasingly strong.
    pub severity: u8,
    pub seed: u64,
}

impl CorruptionSpec {
    /// The same corruption reseeded for one particular image, so that images
    /// sharing a spec do not share noise patterns.
    pub fn for_image(&self, image_id: &str) -> CorruptionSpec {
        CorruptionSpec {
            seed: rng::key(&[self.seed, fnv1a(image_id.as_bytes())]),
            ..*self
        }
    }

    fn stream(&self) -> Stream {
        Stream::new(&[self.seed, self.kind.index() as u64, self.severity as u64])
    }
}

fn default_table() -> &'static SeverityTable {
    static TABLE: OnceLock<SeverityTable> = OnceLock::new();
    TABLE.get_or_init(SeverityTable::default)
}

/// Applies `spec` using the built-in severity table.
pub fn corrupt(image: &Tensor, spec: &CorruptionSpec) -> Result<Tensor> {
    corrupt_with(image, spec, default_table())
}

pub fn corrupt_with(image: &Tensor, spec: &CorruptionSpec, table: &SeverityTable) -> Result<Tensor> {
    let (_, _, c) = image.hwc()?;
    if c != 3 {
        return Err(Error::usage(format!("corruptions need RGB images, got {c} channels")));
    }
    if spec.severity > 5 {
        return Err(Error::usage(format!("severity {} outside 0..=5", spec.severity)));
    }
    if spec.severity == 0 {
        return Ok(image.clone());
    }
    let p = table.params(spec.kind, spec.severity);
    let rng = spec.stream();
    use CorruptionKind::*;
    let mut out = match spec.kind {
        GaussianNoise => noise::gaussian(image, p[0], &rng),
        ShotNoise => noise::shot(image, p[0], &rng),
        ImpulseNoise => noise::impulse(image, p[0], &rng),
        DefocusBlur => blur::defocus(image, p[0], p[1]),
        GlassBlur => blur::glass(image, p[0], p[1], p[2], &rng),
        MotionBlur => blur::motion(image, p[0], p[1], &rng),
        ZoomBlur => blur::zoom(image, p[0], p[1]),
        Snow => weather::snow(image, p, &rng),
        Frost => weather::frost(image, p[0], p[1], &rng),
        Fog => weather::fog(image, p[0], p[1], &rng),
        Brightness => digital::brightness(image, p[0]),
        Contrast => digital::contrast(image, p[0]),
        Elastic => digital::elastic(image, p[0], p[1], &rng),
        Pixelate => digital::pixelate(image, p[0]),
        Jpeg => jpeg::round_trip(image, p[0].round() as u8)?,
    };
    for v in out.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Every kind at every listed severity, in kind order then severity order.
pub fn corruption_suite(severities: &[u8], base_seed: u64) -> Result<Vec<CorruptionSpec>> {
    let mut sev = severities.to_vec();
    sev.sort_unstable();
    sev.dedup();
    if let Some(s) = sev.iter().find(|s| !(1..=5).contains(*s)) {
        return Err(Error::usage(format!("suite severities must be in 1..=5, got {s}")));
    }
    Ok(CorruptionKind::ALL
        .into_iter()
        .flat_map(|kind| {
            sev.iter().map(move |&severity| CorruptionSpec {
                kind,
                severity,
                seed: rng::key(&[base_seed, kind.index() as u64, severity as u64]),
            })
        })
        .collect())
}

/// Scale of (px) table parameters for an image: `min(H, W) / 224`.
pub(crate) fn pixel_scale(image: &Tensor) -> f64 {
    let s = image.shape();
    s[0].min(s[1]) as f64 / 224.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(seed: u64, n: usize) -> Tensor {
        let s = Stream::new(&[seed, 99]);
        // smooth colour ramps with a few blocks, so blur and spatial warps bite
        Tensor::from_fn(&[n, n, 3], |i| {
            let (p, ch) = (i / 3, i % 3);
            let (y, x) = ((p / n) as f64, (p % n) as f64);
            let base = 0.5 + 0.3 * ((x * (0.2 + 0.1 * ch as f64) + y * 0.15 + s.uniform(ch as u64) * 6.0).sin());
            // blocks of odd size at a random offset, so no resampling grid lines up with them
            let off = s.range(7, 0, 6) as f64;
            let block = if (((y + off) / 7.0) as usize + ((x + off) / 7.0) as usize) % 2 == 0 {
                0.15
            } else {
                -0.15
            };
            (base + block + 0.05 * s.normal(i as u64)).clamp(0.0, 1.0)
        })
    }

    fn mean_l2(a: &Tensor, b: &Tensor) -> f64 {
        let px = a.len() / 3;
        a.data()
            .chunks(3)
            .zip(b.data().chunks(3))
            .map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / px as f64
    }

    #[test]
    fn taxonomy() {
        assert_eq!(CorruptionKind::ALL.len(), 15);
        let sizes: Vec<usize> = Group::ALL.iter().map(|g| g.kinds().count()).collect();
        assert_eq!(sizes, vec![3, 4, 3, 2, 3]);
        for k in CorruptionKind::ALL {
            assert_eq!(k.name().parse::<CorruptionKind>().unwrap(), k);
        }
    }

    #[test]
    fn severity_zero_is_identity_and_range_holds() {
        let img = scene(1, 40);
        for kind in CorruptionKind::ALL {
            let clean = corrupt(&img, &CorruptionSpec { kind, severity: 0, seed: 3 }).unwrap();
            assert_eq!(clean, img);
            for severity in 1..=5 {
                let out = corrupt(&img, &CorruptionSpec { kind, severity, seed: 3 }).unwrap();
                assert_eq!(out.shape(), img.shape());
                assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)), "{kind} {severity}");
                let again = corrupt(&img, &CorruptionSpec { kind, severity, seed: 3 }).unwrap();
                assert_eq!(out, again, "{kind} not deterministic");
            }
        }
        let bad = CorruptionSpec {
            kind: CorruptionKind::Fog,
            severity: 6,
            seed: 0,
        };
        assert!(corrupt(&img, &bad).is_err());
    }

    #[test]
    fn suite_structure() {
        let all = corruption_suite(&[1, 2, 3, 4, 5], 7).unwrap();
        assert_eq!(all.len(), 75);
        assert_eq!(all[0].kind, CorruptionKind::GaussianNoise);
        assert_eq!(all[0].severity, 1);
        assert_eq!(all[74].kind, CorruptionKind::Jpeg);
        assert_eq!(all[74].severity, 5);
        assert!(corruption_suite(&[], 7).unwrap().is_empty());
        assert_eq!(corruption_suite(&[3, 1], 7).unwrap(), corruption_suite(&[1, 3], 7).unwrap());
        assert_eq!(all, corruption_suite(&[1, 2, 3, 4, 5], 7).unwrap());
        assert_ne!(all, corruption_suite(&[1, 2, 3, 4, 5], 8).unwrap());
        assert!(corruption_suite(&[0], 7).is_err());
    }

    #[test]
    fn brightness_raises_mean() {
        let grey = Tensor::full(&[32, 32, 3], 0.5);
        let mut prev = grey.mean();
        for severity in 1..=5 {
            let spec = CorruptionSpec {
                kind: CorruptionKind::Brightness,
                severity,
                seed: 0,
            };
            let m = corrupt(&grey, &spec).unwrap().mean();
            assert!(m > prev);
            prev = m;
        }
    }

    #[test]
    fn degradation_grows_with_severity() {
        let images: Vec<Tensor> = (0..20).map(|i| scene(i, 48)).collect();
        for kind in CorruptionKind::ALL {
            let mut prev = 0.0;
            for severity in 1..=5 {
                let d: f64 = images
                    .iter()
                    .enumerate()
                    .map(|(i, img)| {
                        let spec = CorruptionSpec { kind, severity, seed: 11 }.for_image(&i.to_string());
                        mean_l2(img, &corrupt(img, &spec).unwrap())
                    })
                    .sum::<f64>()
                    / images.len() as f64;
                assert!(d >= prev, "{kind}: severity {severity} distance {d} < {prev}");
                prev = d;
            }
            assert!(prev > 0.0, "{kind} never changes the image");
        }
    }
}
