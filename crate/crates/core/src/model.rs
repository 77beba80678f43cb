//! A small fully convolutional segmentation network with explicit
//! backpropagation. Channel plan `3 → 16 → 32 → 32 → C`, 3×3 kernels,
//! ReLU between layers, linear output; `C` depends on the head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::conv::{conv2d, conv2d_backward};
use crate::error::{Error, Result};
use crate::heads::{batch_loss, HeadKind, LabelMap, LogitMap};
use crate::par::Exec;
use crate::tensor::{relu, relu_backward, Tensor};

pub const HIDDEN: [usize; 3] = [16, 32, 32];
pub const KERNEL: usize = 3;
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub relu: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegNet {
    pub head: HeadKind,
    pub num_classes: usize,
    pub layers: Vec<Layer>,
}

/// Parameter gradients, laid out like [`SegNet::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub kernels: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(net: &SegNet) -> Self {
        Gradients {
            kernels: net.layers.iter().map(|l| Tensor::zeros(l.kernel.shape())).collect(),
            biases: net.layers.iter().map(|l| Tensor::zeros(l.bias.shape())).collect(),
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        let pairs = self
            .kernels
            .iter_mut()
            .zip(&other.kernels)
            .chain(self.biases.iter_mut().zip(&other.biases));
        for (a, b) in pairs {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for t in self.kernels.iter_mut().chain(self.biases.iter_mut()) {
            for x in t.data_mut() {
                *x *= s;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.kernels
            .iter()
            .chain(&self.biases)
            .flat_map(|t| t.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

impl SegNet {
    /// He-initialized network: hidden kernels ~ N(0, 2/fan_in), the linear
    /// output kernel ~ N(0, 1/fan_in), all biases zero. Hidden layers draw
    /// from the generator first, so nets with the same seed share their body
    /// whatever the head.
    pub fn new(head: HeadKind, num_classes: usize, seed: u64) -> Result<Self> {
        if num_classes < 2 || num_classes > u8::MAX as usize {
            return Err(Error::usage(format!("unsupported class count {num_classes}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut plan = vec![INPUT_CHANNELS];
        plan.extend(HIDDEN);
        plan.push(head.channels(num_classes));
        let layers = plan
            .windows(2)
            .enumerate()
            .map(|(i, io)| {
                let (cin, cout) = (io[0], io[1]);
                let last = i == HIDDEN.len();
                let fan_in = (KERNEL * KERNEL * cin) as f64;
                let std = if last { (1.0 / fan_in).sqrt() } else { (2.0 / fan_in).sqrt() };
                let normal = Normal::new(0.0, std).expect("positive std");
                Layer {
                    kernel: Tensor::from_fn(&[KERNEL, KERNEL, cin, cout], |_| normal.sample(&mut rng)),
                    bias: Tensor::zeros(&[cout]),
                    relu: !last,
                }
            })
            .collect();
        Ok(SegNet {
            head,
            num_classes,
            layers,
        })
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.bias.len())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.kernel.len() + l.bias.len()).sum()
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let (_, _, c) = image.hwc()?;
        if c != INPUT_CHANNELS {
            return Err(Error::usage(format!(
                "network expects {INPUT_CHANNELS}-channel images, got {c}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, image: &Tensor) -> Result<LogitMap> {
        self.check_input(image)?;
        let mut x = image.clone();
        for layer in &self.layers {
            let z = conv2d(&x, &layer.kernel, &layer.bias)?;
            x = if layer.relu { relu(&z) } else { z };
        }
        LogitMap::new(x, self.head, self.num_classes)
    }

    pub fn forward_batch(&self, images: &[Tensor], exec: Exec) -> Result<Vec<LogitMap>> {
        exec.map(images, |img| self.forward(img)).into_iter().collect()
    }

    /// Loss and gradients for one image.
    pub fn backward_one(&self, image: &Tensor, labels: &LabelMap) -> Result<(f64, Gradients)> {
        self.check_input(image)?;
        // inputs to each layer, and pre-activation outputs
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = image.clone();
        for layer in &self.layers {
            let z = conv2d(&x, &layer.kernel, &layer.bias)?;
            let next = if layer.relu { relu(&z) } else { z.clone() };
            inputs.push(x);
            pre.push(z);
            x = next;
        }
        let logits = LogitMap::new(x, self.head, self.num_classes)?;
        let (loss, mut grad) = batch_loss(&logits, labels)?;

        let mut grads = Gradients::zeros_like(self);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.relu {
                grad = relu_backward(&grad, &pre[i])?;
            }
            let g = conv2d_backward(&grad, &inputs[i], &layer.kernel)?;
            grads.kernels[i] = g.kernel;
            grads.biases[i] = g.bias;
            grad = g.input;
        }
        Ok((loss, grads))
    }

    /// Mean loss over the batch and its exact parameter gradient. Per-image
    /// work may run in parallel; the reduction is always in batch order.
    pub fn backward(&self, images: &[Tensor], labels: &[LabelMap], exec: Exec) -> Result<(f64, Gradients)> {
        if images.is_empty() || images.len() != labels.len() {
            return Err(Error::usage(format!(
                "batch needs matching non-empty images and labels ({} vs {})",
                images.len(),
                labels.len()
            )));
        }
        let pairs: Vec<(&Tensor, &LabelMap)> = images.iter().zip(labels).collect();
        let per_image = exec.map(&pairs, |(img, lab)| self.backward_one(img, lab));
        let mut total = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for r in per_image {
            let (l, g) = r?;
            loss += l;
            total.add_assign(&g);
        }
        let n = images.len() as f64;
        total.scale(1.0 / n);
        Ok((loss / n, total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_difference_slice, relative_error};
    use rand::Rng;

    fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(&[h, w, 3], |_| rng.random_range(0.0..1.0))
    }

    fn random_labels(h: usize, w: usize, k: usize, rng: &mut ChaCha8Rng) -> LabelMap {
        LabelMap::new(h, w, (0..h * w).map(|_| rng.random_range(0..k as u8)).collect()).unwrap()
    }

    #[test]
    fn shapes_per_head() {
        let base = SegNet::new(HeadKind::SoftmaxBaseline, 4, 1).unwrap();
        let sig = SegNet::new(HeadKind::SigmoidOnly, 4, 1).unwrap();
        let ibe = SegNet::new(HeadKind::Ibe, 4, 1).unwrap();
        let scribe = SegNet::new(HeadKind::Scribe, 4, 1).unwrap();
        assert_eq!(base.output_channels(), 4);
        assert_eq!(ibe.output_channels(), 3);
        assert_eq!(base.parameter_count(), sig.parameter_count());
        assert_eq!(ibe.parameter_count(), scribe.parameter_count());
        assert_eq!(base.parameter_count() - ibe.parameter_count(), 9 * 32 + 1);
        // shared body for a shared seed
        assert_eq!(base.layers[..3], ibe.layers[..3]);
    }

    #[test]
    fn zero_final_layer_gives_zero_logits() {
        let mut net = SegNet::new(HeadKind::Ibe, 4, 2).unwrap();
        let last = net.layers.last_mut().unwrap();
        last.kernel = Tensor::zeros(last.kernel.shape());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = net.forward(&random_image(6, 7, &mut rng)).unwrap();
        assert!(out.logits().data().iter().all(|&v| v == 0.0));
        assert_eq!((out.height(), out.width()), (6, 7));
    }

    #[test]
    fn forward_is_deterministic_and_checks_channels() {
        let net = SegNet::new(HeadKind::SoftmaxBaseline, 4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let img = random_image(8, 8, &mut rng);
        assert_eq!(net.forward(&img).unwrap(), net.forward(&img).unwrap());
        assert!(net.forward(&Tensor::zeros(&[8, 8, 1])).is_err());
    }

    #[test]
    fn duplicated_image_keeps_mean_gradient() {
        let net = SegNet::new(HeadKind::Scribe, 4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(6, 6, &mut rng);
        let lab = random_labels(6, 6, 4, &mut rng);
        let (l1, g1) = net.backward(&[img.clone()], &[lab.clone()], Exec::Sequential).unwrap();
        let (l2, g2) = net
            .backward(&[img.clone(), img], &[lab.clone(), lab], Exec::Sequential)
            .unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.kernels.iter().zip(&g2.kernels) {
            assert!(relative_error(a.data(), b.data()) < 1e-14);
        }
    }

    #[test]
    fn parallel_backward_is_bit_identical() {
        let net = SegNet::new(HeadKind::Ibe, 4, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let imgs: Vec<Tensor> = (0..4).map(|_| random_image(8, 8, &mut rng)).collect();
        let labs: Vec<LabelMap> = (0..4).map(|_| random_labels(8, 8, 4, &mut rng)).collect();
        let a = net.backward(&imgs, &labs, Exec::Sequential).unwrap();
        let b = net.backward(&imgs, &labs, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn saturated_loss_has_vanishing_gradient() {
        // a bias pushing every pixel hard toward background
        let mut net = SegNet::new(HeadKind::SoftmaxBaseline, 3, 6).unwrap();
        let last = net.layers.last_mut().unwrap();
        last.kernel = Tensor::zeros(last.kernel.shape());
        last.bias = Tensor::new(vec![3], vec![40.0, -40.0, -40.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(5, 5, &mut rng);
        let (loss, g) = net
            .backward(&[img], &[LabelMap::filled(5, 5, 0)], Exec::Sequential)
            .unwrap();
        assert!(loss < 1e-12);
        assert!(g.norm() <= 1e-10);
    }

    /// Every parameter of a small net against central differences of the
    /// mean loss.
    #[test]
    fn end_to_end_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for head in HeadKind::ALL {
            let mut net = SegNet::new(head, 4, rng.random()).unwrap();
            for layer in &mut net.layers {
                let n = layer.bias.len();
                layer.bias = Tensor::from_fn(&[n], |_| rng.random_range(-0.1..0.1));
            }
            let imgs = vec![random_image(6, 6, &mut rng), random_image(6, 6, &mut rng)];
            let labs = vec![random_labels(6, 6, 4, &mut rng), random_labels(6, 6, 4, &mut rng)];
            let (_, g) = net.backward(&imgs, &labs, Exec::Sequential).unwrap();
            // check the first and last layers' kernels and biases in full
            for li in [0, 3] {
                let kernel = net.layers[li].kernel.clone();
                let fd = finite_difference_slice(
                    |d| {
                        let mut n = net.clone();
                        n.layers[li].kernel = Tensor::new(kernel.shape().to_vec(), d.to_vec()).unwrap();
                        n.backward(&imgs, &labs, Exec::Sequential).unwrap().0
                    },
                    kernel.data(),
                    1e-5,
                );
                assert!(relative_error(g.kernels[li].data(), &fd) <= 1e-4, "{head} layer {li}");
                let bias = net.layers[li].bias.clone();
                let fd = finite_difference_slice(
                    |d| {
                        let mut n = net.clone();
                        n.layers[li].bias = Tensor::new(bias.shape().to_vec(), d.to_vec()).unwrap();
                        n.backward(&imgs, &labs, Exec::Sequential).unwrap().0
                    },
                    bias.data(),
                    1e-5,
                );
                assert!(relative_error(g.biases[li].data(), &fd) <= 1e-4, "{head} bias {li}");
            }
        }
    }
}
