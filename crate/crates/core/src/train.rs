//! Momentum SGD with a poly learning-rate schedule, decoupled weight decay,
//! and random scale-and-crop augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::heads::{HeadKind, LabelMap, BACKGROUND};
use crate::model::SegNet;
use crate::par::Exec;
use crate::tensor::{bilinear_resize, nearest_index, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub head: HeadKind,
    /// Learning rate of the hidden layers.
    pub base_lr: f64,
    /// Learning rate of the output layer.
    pub classifier_lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub total_iters: usize,
    pub crop_size: usize,
    pub scale_range: (f64, f64),
    pub seed: u64,
    pub poly_power: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            head: HeadKind::SoftmaxBaseline,
            base_lr: 0.01,
            classifier_lr: 0.1,
            weight_decay: 5e-5,
            momentum: 0.9,
            batch_size: 8,
            total_iters: 3000,
            crop_size: 64,
            scale_range: (0.5, 1.5),
            seed: 0,
            poly_power: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= 1.0 && 1.0 <= hi && hi.is_finite()) {
            return Err(Error::usage(format!("scale range ({lo}, {hi}) must satisfy 0 < lo <= 1 <= hi")));
        }
        if self.crop_size < 16 {
            return Err(Error::usage(format!("crop size {} is below 16", self.crop_size)));
        }
        if self.batch_size == 0 {
            return Err(Error::usage("batch size must be positive"));
        }
        for (name, v) in [
            ("base_lr", self.base_lr),
            ("classifier_lr", self.classifier_lr),
            ("weight_decay", self.weight_decay),
            ("momentum", self.momentum),
            ("poly_power", self.poly_power),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::usage(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// `base_lr · (1 − iter/total_iters)^poly_power`.
pub fn poly_lr(iter: usize, cfg: &TrainConfig) -> Result<f64> {
    poly_factor(iter, cfg).map(|f| cfg.base_lr * f)
}

fn poly_factor(iter: usize, cfg: &TrainConfig) -> Result<f64> {
    if iter > cfg.total_iters || cfg.total_iters == 0 {
        return Err(Error::usage(format!(
            "iteration {iter} outside schedule of {} iterations",
            cfg.total_iters
        )));
    }
    Ok((1.0 - iter as f64 / cfg.total_iters as f64).powf(cfg.poly_power))
}

/// Random rescale (bilinear for the image, nearest for labels) followed by a
/// random `crop_size²` crop. Scaled inputs smaller than the crop are padded
/// with black pixels labelled background.
pub fn augment(image: &Tensor, label: &LabelMap, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<(Tensor, LabelMap)> {
    let (h, w, c) = image.hwc()?;
    if (label.height(), label.width()) != (h, w) {
        return Err(Error::Shape {
            expected: vec![h, w],
            actual: vec![label.height(), label.width()],
        });
    }
    let (lo, hi) = cfg.scale_range;
    let s = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let sh = ((h as f64 * s).round() as usize).max(1);
    let sw = ((w as f64 * s).round() as usize).max(1);
    let scaled = bilinear_resize(image, sh, sw)?;
    let scaled_label = resize_labels(label, sh, sw);

    let crop = cfg.crop_size;
    let oy = if sh > crop { rng.random_range(0..=sh - crop) } else { 0 };
    let ox = if sw > crop { rng.random_range(0..=sw - crop) } else { 0 };
    let mut out = Tensor::zeros(&[crop, crop, c]);
    let mut out_label = LabelMap::filled(crop, crop, BACKGROUND as u8);
    for y in 0..crop.min(sh - oy) {
        for x in 0..crop.min(sw - ox) {
            out.pixel_mut(y, x).copy_from_slice(scaled.pixel(oy + y, ox + x));
            out_label.set(y, x, scaled_label.get(oy + y, ox + x) as u8);
        }
    }
    Ok((out, out_label))
}

/// Corner-aligned nearest-neighbour label resize.
pub fn resize_labels(label: &LabelMap, out_h: usize, out_w: usize) -> LabelMap {
    if (out_h, out_w) == (label.height(), label.width()) {
        return label.clone();
    }
    let mut out = LabelMap::filled(out_h, out_w, 0);
    for y in 0..out_h {
        let sy = nearest_index(y, label.height(), out_h);
        for x in 0..out_w {
            let sx = nearest_index(x, label.width(), out_w);
            out.set(y, x, label.get(sy, sx) as u8);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: SegNet,
    pub config: TrainConfig,
    pub iteration: usize,
    pub loss_history: Vec<f64>,
}

impl Checkpoint {
    pub fn initial(config: &TrainConfig, num_classes: usize) -> Result<Self> {
        Ok(Checkpoint {
            net: SegNet::new(config.head, num_classes, config.seed)?,
            config: config.clone(),
            iteration: 0,
            loss_history: Vec::new(),
        })
    }
}

/// Trains a fresh network on `samples`. Fully deterministic given
/// `cfg.seed`; the worker count only changes how per-image gradients are
/// scheduled.
pub fn train(cfg: &TrainConfig, samples: &[Sample], num_classes: usize, exec: Exec) -> Result<Checkpoint> {
    train_with_progress(cfg, samples, num_classes, exec, |_, _| {})
}

pub fn train_with_progress(
    cfg: &TrainConfig,
    samples: &[Sample],
    num_classes: usize,
    exec: Exec,
    mut progress: impl FnMut(usize, f64),
) -> Result<Checkpoint> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::usage("training set is empty"));
    }
    let mut ckpt = Checkpoint::initial(cfg, num_classes)?;
    let net = &mut ckpt.net;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e_5f64_6174);
    let mut velocity = crate::model::Gradients::zeros_like(net);
    let mut order: Vec<usize> = Vec::new();
    let last = net.layers.len() - 1;

    for iter in 0..cfg.total_iters {
        let mut images = Vec::with_capacity(cfg.batch_size);
        let mut labels = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if order.is_empty() {
                order = (0..samples.len()).collect();
                shuffle(&mut order, &mut rng);
            }
            let s = &samples[order.pop().expect("refilled above")];
            let (img, lab) = augment(&s.image, &s.label, cfg, &mut rng)?;
            images.push(img);
            labels.push(lab);
        }
        let (loss, grads) = net.backward(&images, &labels, exec)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "{} training diverged at iteration {iter} (loss {loss})",
                cfg.head
            )));
        }
        let factor = poly_factor(iter, cfg)?;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let lr = factor * if i == last { cfg.classifier_lr } else { cfg.base_lr };
            sgd_step(
                layer.kernel.data_mut(),
                velocity.kernels[i].data_mut(),
                grads.kernels[i].data(),
                lr,
                cfg.momentum,
                cfg.weight_decay,
            );
            sgd_step(
                layer.bias.data_mut(),
                velocity.biases[i].data_mut(),
                grads.biases[i].data(),
                lr,
                cfg.momentum,
                0.0,
            );
        }
        ckpt.loss_history.push(loss);
        ckpt.iteration = iter + 1;
        progress(iter, loss);
    }
    Ok(ckpt)
}

fn sgd_step(params: &mut [f64], velocity: &mut [f64], grad: &[f64], lr: f64, momentum: f64, decay: f64) {
    for ((p, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v + g;
        *p -= lr * (*v + decay * *p);
    }
}

fn shuffle(items: &mut [usize], rng: &mut impl Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, SyntheticSceneSpec};

    fn tiny_spec() -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            image_size: 24,
            ..SyntheticSceneSpec::default()
        }
    }

    #[test]
    fn poly_examples() {
        let cfg = TrainConfig {
            total_iters: 1000,
            ..TrainConfig::default()
        };
        assert_eq!(poly_lr(0, &cfg).unwrap(), cfg.base_lr);
        assert_eq!(poly_lr(1000, &cfg).unwrap(), 0.0);
        let half = poly_lr(500, &cfg).unwrap();
        assert!((half / cfg.base_lr - 0.535_886_731_268_146).abs() < 1e-12);
        assert!(poly_lr(1001, &cfg).is_err());
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let lr = poly_lr(i, &cfg).unwrap();
            assert!(lr < prev);
            prev = lr;
        }
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { scale_range: (1.2, 1.5), ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { scale_range: (0.5, 0.9), ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { crop_size: 8, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn augment_identity_at_unit_scale() {
        let samples = generate(&tiny_spec(), 1).unwrap();
        let cfg = TrainConfig {
            crop_size: 24,
            scale_range: (1.0, 1.0),
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (img, lab) = augment(&samples[0].image, &samples[0].label, &cfg, &mut rng).unwrap();
        assert_eq!(img, samples[0].image);
        assert_eq!(lab, samples[0].label);
    }

    #[test]
    fn augment_is_seeded_and_keeps_label_set() {
        let samples = generate(&tiny_spec(), 6).unwrap();
        let cfg = TrainConfig {
            crop_size: 16,
            scale_range: (0.5, 2.0),
            ..TrainConfig::default()
        };
        for s in &samples {
            for seed in 0..10 {
                let a = augment(&s.image, &s.label, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                let b = augment(&s.image, &s.label, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                assert_eq!(a, b);
                let before: std::collections::BTreeSet<u8> = s.label.classes().iter().copied().collect();
                assert!(a.1.classes().iter().all(|c| *c == 0 || before.contains(c)));
                assert_eq!((a.0.shape()[0], a.1.height()), (16, 16));
            }
        }
    }

    #[test]
    fn zero_iterations_is_initialization() {
        let samples = generate(&tiny_spec(), 2).unwrap();
        let cfg = TrainConfig {
            total_iters: 0,
            crop_size: 16,
            seed: 5,
            ..TrainConfig::default()
        };
        let ckpt = train(&cfg, &samples, 4, Exec::Sequential).unwrap();
        assert_eq!(ckpt, Checkpoint::initial(&cfg, 4).unwrap());
        assert!(train(&cfg, &[], 4, Exec::Sequential).is_err());
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let samples = generate(&tiny_spec(), 4).unwrap();
        let cfg = TrainConfig {
            head: HeadKind::Scribe,
            total_iters: 30,
            batch_size: 2,
            crop_size: 16,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train(&cfg, &samples, 4, Exec::Sequential).unwrap();
        let b = train(&cfg, &samples, 4, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.loss_history.len(), 30);
        let head: f64 = a.loss_history[..5].iter().sum();
        let tail: f64 = a.loss_history[25..].iter().sum();
        assert!(tail < head, "loss did not decrease: {head} -> {tail}");
    }

    #[test]
    fn divergence_is_reported() {
        let samples = generate(&tiny_spec(), 2).unwrap();
        let cfg = TrainConfig {
            total_iters: 50,
            batch_size: 1,
            crop_size: 16,
            base_lr: 1e6,
            classifier_lr: 1e6,
            ..TrainConfig::default()
        };
        match train(&cfg, &samples, 4, Exec::Sequential) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("diverged")),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
