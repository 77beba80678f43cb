//! Per-pixel classification heads: Softmax baseline, implicit background
//! estimation (IBE), positive-only sigmoid, and sigmoid with IBE (SCrIBE).
//!
//! Labels always use class 0 for background. Heads with an implicit
//! background see only the `k − 1` foreground logits; foreground channel `j`
//! scores class `j + 1`, and the background score is the negative
//! log-sum-exp of the foreground logits. With that construction background
//! wins exactly when every foreground response is sufficiently negative.
//!
//! Every loss is defined explicitly as a scalar and the reported gradient is
//! `∂loss/∂v`, so signs follow the descent convention throughout.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{logsumexp_unchecked, neg_log_sigmoid, sigmoid, softmax_into, softplus};
use crate::tensor::Tensor;

pub const BACKGROUND: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeadKind {
    SoftmaxBaseline,
    Ibe,
    SigmoidOnly,
    Scribe,
}

impl HeadKind {
    pub const ALL: [HeadKind; 4] = [
        HeadKind::SoftmaxBaseline,
        HeadKind::Ibe,
        HeadKind::SigmoidOnly,
        HeadKind::Scribe,
    ];

    /// The three heads compared in the robustness benchmark.
    pub const BENCHMARKED: [HeadKind; 3] = [HeadKind::SoftmaxBaseline, HeadKind::Ibe, HeadKind::Scribe];

    pub fn implicit_background(self) -> bool {
        matches!(self, HeadKind::Ibe | HeadKind::Scribe)
    }

    /// Logit channels the network must produce for `k` classes.
    pub fn channels(self, k: usize) -> usize {
        if self.implicit_background() {
            k - 1
        } else {
            k
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::SoftmaxBaseline => "baseline",
            HeadKind::Ibe => "ibe",
            HeadKind::SigmoidOnly => "sigmoid",
            HeadKind::Scribe => "scribe",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            HeadKind::SoftmaxBaseline => "Baseline",
            HeadKind::Ibe => "IBE",
            HeadKind::SigmoidOnly => "Sigmoid",
            HeadKind::Scribe => "SCrIBE",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "softmax" => Ok(HeadKind::SoftmaxBaseline),
            "ibe" => Ok(HeadKind::Ibe),
            "sigmoid" => Ok(HeadKind::SigmoidOnly),
            "scribe" => Ok(HeadKind::Scribe),
            other => Err(Error::usage(format!(
                "unknown head `{other}` (expected baseline, ibe, sigmoid or scribe)"
            ))),
        }
    }
}

/// Per-pixel class indices of an `H×W` map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    classes: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, classes: Vec<u8>) -> Result<Self> {
        if classes.len() != height * width {
            return Err(Error::usage(format!(
                "label map {height}×{width} needs {} entries, got {}",
                height * width,
                classes.len()
            )));
        }
        Ok(LabelMap {
            height,
            width,
            classes,
        })
    }

    pub fn filled(height: usize, width: usize, class: u8) -> Self {
        LabelMap {
            height,
            width,
            classes: vec![class; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn classes_mut(&mut self) -> &mut [u8] {
        &mut self.classes
    }

    pub fn get(&self, y: usize, x: usize) -> usize {
        self.classes[y * self.width + x] as usize
    }

    pub fn set(&mut self, y: usize, x: usize, class: u8) {
        self.classes[y * self.width + x] = class;
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Errors if any entry is `>= k`.
    pub fn validate(&self, k: usize) -> Result<()> {
        match self.classes.iter().position(|&c| c as usize >= k) {
            Some(i) => Err(Error::data(format!(
                "label {} at pixel {i} is out of range for {k} classes",
                self.classes[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn flip_horizontal(&self) -> LabelMap {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(y, self.width - 1 - x, self.get(y, x) as u8);
            }
        }
        out
    }
}

/// A head's raw network output.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMap {
    logits: Tensor,
    head: HeadKind,
    num_classes: usize,
}

impl LogitMap {
    pub fn new(logits: Tensor, head: HeadKind, num_classes: usize) -> Result<Self> {
        let (_, _, c) = logits.hwc()?;
        if num_classes < 2 {
            return Err(Error::usage("at least two classes are required"));
        }
        if c != head.channels(num_classes) {
            return Err(Error::usage(format!(
                "{head} head with {num_classes} classes needs {} channels, got {c}",
                head.channels(num_classes)
            )));
        }
        Ok(LogitMap {
            logits,
            head,
            num_classes,
        })
    }

    pub fn logits(&self) -> &Tensor {
        &self.logits
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn height(&self) -> usize {
        self.logits.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.logits.shape()[1]
    }
}

/// Foreground logits with the implicit background channel appended last.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedLogits {
    pub values: Tensor,
}

impl AugmentedLogits {
    pub fn background_channel(&self) -> usize {
        self.values.shape()[2] - 1
    }

    /// Drops the background channel, recovering the foreground logits.
    pub fn foreground(&self) -> Tensor {
        let (h, w, k) = self.values.hwc().expect("augmented logits are rank 3");
        let mut out = Tensor::zeros(&[h, w, k - 1]);
        for (dst, src) in out.data_mut().chunks_mut(k - 1).zip(self.values.data().chunks(k)) {
            dst.copy_from_slice(&src[..k - 1]);
        }
        out
    }
}

/// The implicit background logit for one pixel's foreground vector.
#[inline]
pub fn background_logit(fg: &[f64]) -> f64 {
    -logsumexp_unchecked(fg)
}

pub fn ibe_augment(fg: &LogitMap) -> Result<AugmentedLogits> {
    if !fg.head.implicit_background() {
        return Err(Error::usage(format!(
            "{} head has an explicit background channel",
            fg.head
        )));
    }
    let (h, w, c) = fg.logits.hwc()?;
    let mut out = Tensor::zeros(&[h, w, c + 1]);
    for (dst, src) in out.data_mut().chunks_mut(c + 1).zip(fg.logits.data().chunks(c)) {
        dst[..c].copy_from_slice(src);
        dst[c] = background_logit(src);
    }
    Ok(AugmentedLogits { values: out })
}

/// One pixel's scores in class order (background first) for any head.
pub fn class_scores(head: HeadKind, v: &[f64], out: &mut [f64]) {
    if head.implicit_background() {
        out[0] = background_logit(v);
        out[1..].copy_from_slice(v);
    } else {
        out.copy_from_slice(v);
    }
}

/// Per-pixel class probabilities under the head's own output rule:
/// softmax for the Softmax-trained heads, independent sigmoids for the
/// sigmoid-trained ones. Output is in class order.
pub fn class_probabilities(head: HeadKind, v: &[f64], out: &mut [f64]) {
    class_scores(head, v, out);
    match head {
        HeadKind::SoftmaxBaseline | HeadKind::Ibe => {
            let scores = out.to_vec();
            softmax_into(&scores, out);
        }
        HeadKind::SigmoidOnly | HeadKind::Scribe => {
            for s in out.iter_mut() {
                *s = sigmoid(*s);
            }
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
#[inline]
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_label(label: usize, k: usize) -> Result<()> {
    if label >= k {
        return Err(Error::usage(format!("label {label} out of range for {k} classes")));
    }
    Ok(())
}

fn check_pixel(v: &[f64], min_len: usize) -> Result<()> {
    if v.len() < min_len {
        return Err(Error::usage(format!(
            "pixel vector needs at least {min_len} components, got {}",
            v.len()
        )));
    }
    Ok(())
}

/// Softmax cross entropy over `k` explicit logits.
pub fn loss_softmax(v: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    check_pixel(v, 2)?;
    check_label(label, v.len())?;
    let mut grad = vec![0.0; v.len()];
    let loss = softmax_pixel(v, label, &mut grad);
    Ok((loss, grad))
}

/// Cross entropy of the softmax over IBE-augmented logits, differentiated
/// through the implicit background channel.
pub fn loss_ibe(fg: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    check_pixel(fg, 1)?;
    check_label(label, fg.len() + 1)?;
    let mut grad = vec![0.0; fg.len()];
    let loss = ibe_pixel(fg, label, &mut grad);
    Ok((loss, grad))
}

/// Positive-only sigmoid cross entropy: only the labelled component is
/// penalized.
pub fn loss_sigmoid(v: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    check_pixel(v, 2)?;
    check_label(label, v.len())?;
    let mut grad = vec![0.0; v.len()];
    let loss = sigmoid_pixel(v, label, &mut grad);
    Ok((loss, grad))
}

/// Sigmoid cross entropy with an implicit background: a foreground label
/// trains its own binary detector; a background label trains
/// `sigmoid(−logsumexp(fg))` and so reaches every foreground component.
pub fn loss_scribe(fg: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    check_pixel(fg, 1)?;
    check_label(label, fg.len() + 1)?;
    let mut grad = vec![0.0; fg.len()];
    let loss = scribe_pixel(fg, label, &mut grad);
    Ok((loss, grad))
}

/// Loss and gradient of one pixel for any head. `grad` is overwritten.
/// Label must already be validated.
#[inline]
pub fn pixel_loss(head: HeadKind, v: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    match head {
        HeadKind::SoftmaxBaseline => softmax_pixel(v, label, grad),
        HeadKind::Ibe => ibe_pixel(v, label, grad),
        HeadKind::SigmoidOnly => sigmoid_pixel(v, label, grad),
        HeadKind::Scribe => scribe_pixel(v, label, grad),
    }
}

fn softmax_pixel(v: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let lse = logsumexp_unchecked(v);
    for (g, &x) in grad.iter_mut().zip(v) {
        *g = (x - lse).exp();
    }
    grad[label] -= 1.0;
    lse - v[label]
}

fn ibe_pixel(fg: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let lse_fg = logsumexp_unchecked(fg);
    let bg = -lse_fg;
    // log of the partition function over [fg..., bg]
    let log_z = softplus(-2.0 * lse_fg) + lse_fg;
    let p_bg = (bg - log_z).exp();
    let y_bg = if label == BACKGROUND { 1.0 } else { 0.0 };
    // d bg / d v_n = −softmax(fg)_n
    for (g, &x) in grad.iter_mut().zip(fg) {
        let p = (x - log_z).exp();
        let q = (x - lse_fg).exp();
        *g = p - (p_bg - y_bg) * q;
    }
    if label == BACKGROUND {
        log_z - bg
    } else {
        grad[label - 1] -= 1.0;
        log_z - fg[label - 1]
    }
}

fn sigmoid_pixel(v: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    grad.fill(0.0);
    grad[label] = -(1.0 - sigmoid(v[label]));
    neg_log_sigmoid(v[label])
}

fn scribe_pixel(fg: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    grad.fill(0.0);
    if label == BACKGROUND {
        let lse = logsumexp_unchecked(fg);
        let s = sigmoid(lse);
        for (g, &x) in grad.iter_mut().zip(fg) {
            *g = s * (x - lse).exp();
        }
        softplus(lse)
    } else {
        let n = label - 1;
        grad[n] = -(1.0 - sigmoid(fg[n]));
        neg_log_sigmoid(fg[n])
    }
}

/// Per-pixel argmax in class order. Implicit-background heads compare the
/// augmented scores.
pub fn predict(logits: &LogitMap) -> LabelMap {
    let (h, w, c) = logits.logits.hwc().expect("logit maps are rank 3");
    let k = logits.num_classes;
    let mut scores = vec![0.0; k];
    let classes = logits
        .logits
        .data()
        .chunks(c)
        .map(|v| {
            class_scores(logits.head, v, &mut scores);
            argmax(&scores) as u8
        })
        .collect();
    LabelMap {
        height: h,
        width: w,
        classes,
    }
}

/// Diagnostic decision rule for sigmoid heads: the strongest foreground
/// detector with `sigmoid(v) > 0.5`, background when none fires.
pub fn predict_threshold(logits: &LogitMap) -> LabelMap {
    let (h, w, c) = logits.logits.hwc().expect("logit maps are rank 3");
    let offset = usize::from(logits.head.implicit_background());
    let classes = logits
        .logits
        .data()
        .chunks(c)
        .map(|v| {
            let mut best: Option<usize> = None;
            for (i, &x) in v.iter().enumerate() {
                let class = i + offset;
                if class == BACKGROUND || sigmoid(x) <= 0.5 {
                    continue;
                }
                if best.is_none_or(|b| x > v[b - offset]) {
                    best = Some(class);
                }
            }
            best.unwrap_or(BACKGROUND) as u8
        })
        .collect();
    LabelMap {
        height: h,
        width: w,
        classes,
    }
}

/// Mean per-pixel loss over the map and its gradient (per-pixel gradients
/// scaled by `1/(H·W)`).
pub fn batch_loss(logits: &LogitMap, labels: &LabelMap) -> Result<(f64, Tensor)> {
    let (h, w, c) = logits.logits.hwc()?;
    if (labels.height, labels.width) != (h, w) {
        return Err(Error::Shape {
            expected: vec![h, w],
            actual: vec![labels.height, labels.width],
        });
    }
    labels.validate(logits.num_classes).map_err(|e| Error::usage(e.to_string()))?;
    let n = (h * w) as f64;
    let mut grad = Tensor::zeros(&[h, w, c]);
    // row partials then rows, so any row-parallel variant sums identically
    let mut total = 0.0;
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            let i = y * w + x;
            let v = &logits.logits.data()[i * c..(i + 1) * c];
            let g = &mut grad.data_mut()[i * c..(i + 1) * c];
            row += pixel_loss(logits.head, v, labels.classes[i] as usize, g);
            for gv in g.iter_mut() {
                *gv /= n;
            }
        }
        total += row;
    }
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_difference_slice, relative_error};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn channel_counts() {
        assert_eq!(HeadKind::SoftmaxBaseline.channels(21), 21);
        assert_eq!(HeadKind::SigmoidOnly.channels(21), 21);
        assert_eq!(HeadKind::Ibe.channels(21), 20);
        assert_eq!(HeadKind::Scribe.channels(21), 20);
        for h in HeadKind::ALL {
            assert_eq!(h.name().parse::<HeadKind>().unwrap(), h);
        }
        assert!("dice".parse::<HeadKind>().is_err());
    }

    #[test]
    fn augment_examples() {
        let fg = LogitMap::new(Tensor::zeros(&[1, 1, 2]), HeadKind::Ibe, 3).unwrap();
        let aug = ibe_augment(&fg).unwrap();
        assert_eq!(aug.values.data()[..2], [0.0, 0.0]);
        assert!(close(aug.values.data()[2], -LN2, 1e-15));
        assert_eq!(aug.foreground(), *fg.logits());

        let v = vec![-10.0; 20];
        let b = background_logit(&v);
        assert!(b >= 10.0 - 20f64.ln() - 1e-12);
        assert!(b > -10.0);

        let b = background_logit(&[3.0, -800.0, -900.0]);
        assert!(close(b, -3.0, 1e-12));

        let wrong = LogitMap::new(Tensor::zeros(&[1, 1, 3]), HeadKind::SoftmaxBaseline, 3).unwrap();
        assert!(ibe_augment(&wrong).is_err());
    }

    #[test]
    fn softmax_examples() {
        let (loss, grad) = loss_softmax(&[0.0, 0.0, 0.0], 0).unwrap();
        assert!(close(loss, 3f64.ln(), 1e-12));
        assert!(close(grad[0], -2.0 / 3.0, 1e-15));
        assert!(close(grad[1], 1.0 / 3.0, 1e-15));
        assert!(close(grad[2], 1.0 / 3.0, 1e-15));

        let (loss, grad) = loss_softmax(&[60.0, 0.0, 0.0], 0).unwrap();
        assert!(loss < 1e-20);
        assert!(grad.iter().all(|g| g.abs() < 1e-20));
        assert!(loss_softmax(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn ibe_examples() {
        let (loss, grad) = loss_ibe(&[0.0, 0.0], BACKGROUND).unwrap();
        assert!(close(loss, 5f64.ln(), 1e-12));
        assert!(close(grad[0], 0.8, 1e-12) && close(grad[1], 0.8, 1e-12));

        let (loss, _) = loss_ibe(&[0.0, 0.0], 1).unwrap();
        assert!(close(loss, -(0.4f64.ln()), 1e-12));
        assert!(loss_ibe(&[0.0, 0.0], 3).is_err());
    }

    #[test]
    fn sigmoid_examples() {
        let (loss, grad) = loss_sigmoid(&[3.0, 0.0, -2.0], 1).unwrap();
        assert!(close(loss, LN2, 1e-15));
        assert_eq!(grad, vec![0.0, -0.5, 0.0]);
        let (loss, grad) = loss_sigmoid(&[50.0, 50.0], 0).unwrap();
        assert!(loss < 1e-20 && grad[0].abs() < 1e-20);
    }

    #[test]
    fn scribe_examples() {
        let (loss, grad) = loss_scribe(&[0.0, 0.0], BACKGROUND).unwrap();
        assert!(close(loss, 3f64.ln(), 1e-12));
        assert!(close(grad[0], 1.0 / 3.0, 1e-12) && close(grad[1], 1.0 / 3.0, 1e-12));

        let (loss, grad) = loss_scribe(&[0.0, 0.0], 1).unwrap();
        assert!(close(loss, LN2, 1e-15));
        assert_eq!(grad, vec![-0.5, 0.0]);
    }

    #[test]
    fn predict_examples() {
        let fg = LogitMap::new(Tensor::full(&[1, 1, 20], -20.0), HeadKind::Ibe, 21).unwrap();
        assert_eq!(predict(&fg).get(0, 0), BACKGROUND);

        let mut v = vec![-5.0; 20];
        v[6] = 5.0;
        let fg = LogitMap::new(Tensor::new(vec![1, 1, 20], v).unwrap(), HeadKind::Ibe, 21).unwrap();
        assert_eq!(predict(&fg).get(0, 0), 7);

        let sm = LogitMap::new(
            Tensor::new(vec![1, 1, 3], vec![0.1, 2.0, 0.3]).unwrap(),
            HeadKind::SoftmaxBaseline,
            3,
        )
        .unwrap();
        assert_eq!(predict(&sm).get(0, 0), 1);

        let tie = LogitMap::new(Tensor::zeros(&[1, 1, 3]), HeadKind::SoftmaxBaseline, 3).unwrap();
        assert_eq!(predict(&tie).get(0, 0), 0);
    }

    #[test]
    fn threshold_rule() {
        let m = LogitMap::new(
            Tensor::new(vec![1, 2, 3], vec![-1.0, -2.0, -0.5, 0.5, 2.0, 1.0]).unwrap(),
            HeadKind::Scribe,
            4,
        )
        .unwrap();
        let p = predict_threshold(&m);
        assert_eq!(p.classes(), &[0, 2]);
    }

    #[test]
    fn predict_shift_invariance_only_for_explicit_background() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<f64> = (0..4 * 4 * 5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t = Tensor::new(vec![4, 4, 5], v).unwrap();
        let shifted = t.map(|x| x + 7.0);
        let a = LogitMap::new(t.clone(), HeadKind::SoftmaxBaseline, 5).unwrap();
        let b = LogitMap::new(shifted.clone(), HeadKind::SoftmaxBaseline, 5).unwrap();
        assert_eq!(predict(&a), predict(&b));

        // all-negative foreground, shifted up, stops being background
        let neg = Tensor::full(&[1, 1, 4], -3.0);
        let a = LogitMap::new(neg.clone(), HeadKind::Ibe, 5).unwrap();
        let b = LogitMap::new(neg.map(|x| x + 7.0), HeadKind::Ibe, 5).unwrap();
        assert_eq!(predict(&a).get(0, 0), BACKGROUND);
        assert_ne!(predict(&b).get(0, 0), BACKGROUND);
    }

    #[test]
    fn batch_loss_examples() {
        let m = LogitMap::new(Tensor::zeros(&[3, 2, 3]), HeadKind::SoftmaxBaseline, 3).unwrap();
        let labels = LabelMap::new(3, 2, vec![0, 1, 2, 0, 1, 2]).unwrap();
        let (loss, _) = batch_loss(&m, &labels).unwrap();
        assert!(close(loss, 3f64.ln(), 1e-12));

        let px = LogitMap::new(
            Tensor::new(vec![1, 1, 3], vec![0.3, -1.0, 2.0]).unwrap(),
            HeadKind::Scribe,
            4,
        )
        .unwrap();
        let (loss, grad) = batch_loss(&px, &LabelMap::filled(1, 1, 2)).unwrap();
        let (l2, g2) = loss_scribe(&[0.3, -1.0, 2.0], 2).unwrap();
        assert_eq!(loss, l2);
        assert_eq!(grad.data(), &g2[..]);

        assert!(batch_loss(&m, &LabelMap::filled(2, 2, 0)).is_err());
        assert!(batch_loss(&m, &LabelMap::filled(3, 2, 3)).is_err());
    }

    #[test]
    fn batch_loss_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for head in HeadKind::ALL {
            let k = 4;
            let c = head.channels(k);
            let t = Tensor::from_fn(&[8, 8, c], |_| rng.random_range(-3.0..3.0));
            let labels: Vec<u8> = (0..64).map(|_| rng.random_range(0..k as u8)).collect();
            let labels = LabelMap::new(8, 8, labels).unwrap();
            let m = LogitMap::new(t.clone(), head, k).unwrap();
            let (_, grad) = batch_loss(&m, &labels).unwrap();
            let fd = finite_difference_slice(
                |d| {
                    let t = Tensor::new(vec![8, 8, c], d.to_vec()).unwrap();
                    batch_loss(&LogitMap::new(t, head, k).unwrap(), &labels).unwrap().0
                },
                t.data(),
                1e-5,
            );
            assert!(relative_error(grad.data(), &fd) <= 1e-5, "{head}");
        }
    }

    proptest! {
        #[test]
        fn softmax_gradient_sums_to_zero(
            v in prop::collection::vec(-20.0f64..20.0, 2..22),
            label in 0usize..22,
        ) {
            let label = label % v.len();
            let (_, g) = loss_softmax(&v, label).unwrap();
            prop_assert!(g.iter().sum::<f64>().abs() <= 1e-12);
        }

        #[test]
        fn sigmoid_ignores_negatives(
            v in prop::collection::vec(-50.0f64..50.0, 2..22),
            label in 0usize..22,
        ) {
            let label = label % v.len();
            let (_, g) = loss_sigmoid(&v, label).unwrap();
            for (n, &gn) in g.iter().enumerate() {
                if n != label {
                    prop_assert_eq!(gn, 0.0);
                }
            }
        }

        #[test]
        fn ibe_background_probability_closed_form(
            fg in prop::collection::vec(-8.0f64..8.0, 1..21),
        ) {
            let s: f64 = fg.iter().map(|x| x.exp()).sum();
            let mut u = fg.clone();
            u.push(background_logit(&fg));
            let p = crate::numerics::softmax(&u);
            let closed = 1.0 / (s * s + 1.0);
            prop_assert!((p[fg.len()] - closed).abs() <= 1e-12);
            let (loss, _) = loss_ibe(&fg, BACKGROUND).unwrap();
            prop_assert!((loss - (s * s + 1.0).ln()).abs() <= 1e-12 * loss.max(1.0));
        }

        #[test]
        fn scribe_sparsity(
            fg in prop::collection::vec(-10.0f64..10.0, 1..21),
            label in 0usize..22,
        ) {
            let label = label % (fg.len() + 1);
            let (_, g) = loss_scribe(&fg, label).unwrap();
            let nonzero = g.iter().filter(|&&x| x != 0.0).count();
            if label == BACKGROUND {
                prop_assert_eq!(nonzero, fg.len());
            } else {
                prop_assert_eq!(nonzero, 1);
                prop_assert!(g[label - 1] != 0.0);
            }
        }

        #[test]
        fn augment_then_strip_is_identity(
            fg in prop::collection::vec(-30.0f64..30.0, 2..20),
        ) {
            let c = fg.len();
            let m = LogitMap::new(Tensor::new(vec![1, 1, c], fg).unwrap(), HeadKind::Scribe, c + 1).unwrap();
            let aug = ibe_augment(&m).unwrap();
            prop_assert_eq!(&aug.foreground(), m.logits());
        }
    }
}
