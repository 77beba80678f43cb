//! Dense row-major `f64` tensors.
//!
//! Images and per-pixel maps are stored height-major with channels last
//! (`[H, W, C]`), so a pixel's channel vector is a contiguous slice.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::usage(format!("zero extent in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::usage(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(H, W, C)` of a rank-3 tensor.
    pub fn hwc(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::usage(format!(
                "expected an H×W×C tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Channel vector of pixel `(y, x)` in an `[H, W, C]` tensor.
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let (w, c) = (self.shape[1], self.shape[2]);
        let at = (y * w + x) * c;
        &self.data[at..at + c]
    }

    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let (w, c) = (self.shape[1], self.shape[2]);
        let at = (y * w + x) * c;
        &mut self.data[at..at + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.expect_shape(other.shape())?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Sums out `axis`, dropping it from the shape. Reducing the only axis
    /// leaves a one-element tensor.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.shape.len() {
            return Err(Error::usage(format!(
                "axis {axis} out of range for rank {}",
                self.shape.len()
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..n {
                let src = &self.data[(o * n + i) * inner..(o * n + i + 1) * inner];
                for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += v;
                }
            }
        }
        let mut shape: Vec<usize> = self.shape.clone();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        Tensor::new(shape, out)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        let n = *self
            .shape
            .get(axis)
            .ok_or_else(|| Error::usage(format!("axis {axis} out of range")))?;
        Ok(self.sum_axis(axis)?.scale(1.0 / n as f64))
    }

    pub fn expect_shape(&self, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::Shape {
                expected: expected.to_vec(),
                actual: self.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.expect_shape(other.shape())?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Mirrors an `[H, W, C]` tensor left to right.
    pub fn flip_horizontal(&self) -> Result<Tensor> {
        let (h, w, c) = self.hwc()?;
        let mut out = Tensor::zeros(&[h, w, c]);
        for y in 0..h {
            for x in 0..w {
                out.pixel_mut(y, w - 1 - x).copy_from_slice(self.pixel(y, x));
            }
        }
        Ok(out)
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Passes `grad` through where the forward input was positive.
pub fn relu_backward(grad: &Tensor, input: &Tensor) -> Result<Tensor> {
    grad.zip_with(input, |g, x| if x > 0.0 { g } else { 0.0 })
}

/// Corner-aligned bilinear resampling of an `[H, W, C]` tensor: output
/// corners map exactly onto input corners. Same-size resizing returns the
/// input unchanged.
pub fn bilinear_resize(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, c) = input.hwc()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::usage("resize target must be non-empty"));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(input.clone());
    }
    let ys = axis_samples(h, out_h);
    let xs = axis_samples(w, out_w);
    let mut out = Tensor::zeros(&[out_h, out_w, c]);
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            let (p00, p01) = (input.pixel(y0, x0), input.pixel(y0, x1));
            let (p10, p11) = (input.pixel(y1, x0), input.pixel(y1, x1));
            let dst = out.pixel_mut(oy, ox);
            for ch in 0..c {
                let top = p00[ch] + (p01[ch] - p00[ch]) * fx;
                let bottom = p10[ch] + (p11[ch] - p10[ch]) * fx;
                dst[ch] = top + (bottom - top) * fy;
            }
        }
    }
    Ok(out)
}

/// For each output index along one axis: (lower source index, upper source
/// index, fractional weight of the upper one).
fn axis_samples(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            if dst == 1 || src == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Corner-aligned nearest-neighbour source index for resizing an axis of
/// length `src` to `dst`.
pub fn nearest_index(i: usize, src: usize, dst: usize) -> usize {
    if dst == 1 || src == 1 {
        return 0;
    }
    let pos = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
    (pos.round() as usize).min(src - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shape() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn sum_axis_reduces_the_right_axis() {
        let t = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.sum_axis(0).unwrap().data(), &[5.0, 7.0, 9.0]);
        assert_eq!(t.sum_axis(1).unwrap().data(), &[6.0, 15.0]);
        assert_eq!(t.mean_axis(1).unwrap().data(), &[2.0, 5.0]);
        assert!(t.sum_axis(2).is_err());
    }

    #[test]
    fn relu_and_mask() {
        let x = Tensor::new(vec![4], vec![-1.0, 0.0, 2.0, -3.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0, 0.0]);
        let g = Tensor::full(&[4], 5.0);
        assert_eq!(relu_backward(&g, &x).unwrap().data(), &[0.0, 0.0, 5.0, 0.0]);
    }

    #[test]
    fn bilinear_identity_and_corners() {
        let x = Tensor::from_fn(&[5, 7, 2], |i| (i as f64 * 0.37).sin());
        let same = bilinear_resize(&x, 5, 7).unwrap();
        assert_eq!(same, x);

        let up = bilinear_resize(&x, 9, 13).unwrap();
        assert_eq!(up.pixel(0, 0), x.pixel(0, 0));
        assert_eq!(up.pixel(8, 12), x.pixel(4, 6));
        // exact doubling (minus one) lands midpoints between neighbours
        let mid = up.pixel(0, 1)[0];
        assert!((mid - 0.5 * (x.pixel(0, 0)[0] + x.pixel(0, 1)[0])).abs() < 1e-12);
    }

    #[test]
    fn flip_twice_is_identity() {
        let x = Tensor::from_fn(&[3, 4, 2], |i| i as f64);
        let f = x.flip_horizontal().unwrap();
        assert_eq!(f.pixel(0, 0), x.pixel(0, 3));
        assert_eq!(f.flip_horizontal().unwrap(), x);
    }
}
