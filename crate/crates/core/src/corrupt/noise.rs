use super::rng::Stream;
use crate::tensor::Tensor;

pub fn gaussian(image: &Tensor, sigma: f64, rng: &Stream) -> Tensor {
    let mut out = image.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v += sigma * rng.normal(i as u64);
    }
    out
}

/// `Poisson(x · photons) / photons` per value.
pub fn shot(image: &Tensor, photons: f64, rng: &Stream) -> Tensor {
    let mut out = image.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v = rng.poisson(i as u64, v.max(0.0) * photons) / photons;
    }
    out
}

/// Salt and pepper: a fraction `amount` of values become 0 or 1 with equal odds.
pub fn impulse(image: &Tensor, amount: f64, rng: &Stream) -> Tensor {
    let coin = rng.stage(1);
    let mut out = image.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if rng.uniform(i as u64) < amount {
            *v = if coin.uniform(i as u64) < 0.5 { 1.0 } else { 0.0 };
        }
    }
    out
}
