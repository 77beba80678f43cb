//! Stable scalar and per-pixel primitives, plus the central-difference
//! gradient oracle used to check every analytical backward pass.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `log Σ exp(v)` with max-shift stabilization.
pub fn logsumexp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::usage("logsumexp of an empty vector"));
    }
    Ok(logsumexp_unchecked(v))
}

#[inline]
pub(crate) fn logsumexp_unchecked(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = v.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    softmax_into(v, &mut out);
    out
}

#[inline]
pub(crate) fn softmax_into(v: &[f64], out: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `−log sigmoid(x)`.
#[inline]
pub fn neg_log_sigmoid(x: f64) -> f64 {
    softplus(-x)
}

/// Central differences of `f` at `x`, one coordinate at a time:
/// `(f(x + eps·e_i) − f(x − eps·e_i)) / (2·eps)`.
///
/// Intended for `eps` in `[1e-7, 1e-3]`; `f` must be deterministic.
pub fn finite_difference(f: impl Fn(&Tensor) -> f64, x: &Tensor, eps: f64) -> Tensor {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// [`finite_difference`] over a plain slice.
pub fn finite_difference_slice(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            probe[i] = orig + eps;
            let plus = f(&probe);
            probe[i] = orig - eps;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// Max-norm relative error `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, 1e-8)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error length mismatch");
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = a
        .iter()
        .chain(b)
        .map(|v| v.abs())
        .fold(1e-8, f64::max);
    diff / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logsumexp_examples() {
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(logsumexp(&[5.0]).unwrap(), 5.0);
        let big = logsumexp(&[1000.0, 1000.0]).unwrap();
        assert!((big - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!(logsumexp(&[]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[0.0, 0.0, 0.0]);
        for p in u {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        for c in [-50.0, 0.0, 3.5, 700.0] {
            let p = softmax(&[c, c + 2f64.ln()]);
            assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
            assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        let tiny = sigmoid(-700.0);
        assert!(tiny > 0.0 && tiny <= 1e-12);
        for x in [0.3, 2.0, 17.0, 40.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
        assert!((neg_log_sigmoid(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn finite_difference_examples() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let g = finite_difference(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-5);
        assert!((g.data()[0] - 2.0).abs() < 1e-8);
        assert!((g.data()[1] - 4.0).abs() < 1e-8);
        let z = finite_difference(|_| 3.0, &x, 1e-5);
        assert_eq!(z.data(), &[0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn softmax_normalized_and_shift_invariant(
            v in prop::collection::vec(-30.0f64..30.0, 2..25),
            c in -100.0f64..100.0,
        ) {
            let p = softmax(&v);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&x| x > 0.0));
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let lse = logsumexp(&v).unwrap();
            for (a, x) in p.iter().zip(&v) {
                prop_assert!((a - (x - lse).exp()).abs() <= 1e-12);
            }
        }

        #[test]
        fn logsumexp_bounds(v in prop::collection::vec(-500.0f64..500.0, 1..40)) {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = logsumexp(&v).unwrap();
            prop_assert!(lse >= m);
            prop_assert!(lse <= m + (v.len() as f64).ln() + 1e-12);
        }
    }
}
