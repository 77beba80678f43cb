//! Baseline JPEG round trip in memory: 8-bit YCbCr, 4:2:0 chroma, 8×8 DCT
//! with the standard quantisation tables scaled by quality, then decode.
//! No entropy coding, since it is lossless and does not change the pixels.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69, 56, 14, 17, 22, 29, 51,
    87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113, 92, 49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

const CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99,
];

/// Quantisation table for `quality` in `1..=100` using the IJG scaling rule.
pub fn quant_table(base: &[u16; 64], quality: u8) -> [f64; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0.0; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((b as u32 * scale + 50) / 100).clamp(1, 255) as f64;
    }
    out
}

struct Dct {
    // basis[u][x] = c(u) / 2 · cos((2x + 1) u π / 16)
    basis: [[f64; 8]; 8],
}

impl Dct {
    fn new() -> Self {
        let mut basis = [[0.0; 8]; 8];
        for (u, row) in basis.iter_mut().enumerate() {
            let cu = if u == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
            for (x, b) in row.iter_mut().enumerate() {
                *b = cu / 2.0 * (((2 * x + 1) * u) as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        Dct { basis }
    }

    fn forward(&self, block: &[f64; 64]) -> [f64; 64] {
        let mut tmp = [0.0; 64];
        for y in 0..8 {
            for u in 0..8 {
                tmp[y * 8 + u] = (0..8).map(|x| self.basis[u][x] * block[y * 8 + x]).sum();
            }
        }
        let mut out = [0.0; 64];
        for v in 0..8 {
            for u in 0..8 {
                out[v * 8 + u] = (0..8).map(|y| self.basis[v][y] * tmp[y * 8 + u]).sum();
            }
        }
        out
    }

    fn inverse(&self, coef: &[f64; 64]) -> [f64; 64] {
        let mut tmp = [0.0; 64];
        for v in 0..8 {
            for x in 0..8 {
                tmp[v * 8 + x] = (0..8).map(|u| self.basis[u][x] * coef[v * 8 + u]).sum();
            }
        }
        let mut out = [0.0; 64];
        for y in 0..8 {
            for x in 0..8 {
                out[y * 8 + x] = (0..8).map(|v| self.basis[v][y] * tmp[v * 8 + x]).sum();
            }
        }
        out
    }
}

/// Encodes and decodes one plane whose sides are multiples of 8.
fn code_plane(plane: &mut [f64], w: usize, table: &[f64; 64], dct: &Dct) {
    let h = plane.len() / w;
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut block = [0.0; 64];
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = plane[(by + y) * w + bx + x] - 128.0;
                }
            }
            let mut coef = dct.forward(&block);
            for (c, q) in coef.iter_mut().zip(table) {
                *c = (*c / q).round() * q;
            }
            let rec = dct.inverse(&coef);
            for y in 0..8 {
                for x in 0..8 {
                    plane[(by + y) * w + bx + x] = (rec[y * 8 + x] + 128.0).round().clamp(0.0, 255.0);
                }
            }
        }
    }
}

pub fn round_trip(image: &Tensor, quality: u8) -> Result<Tensor> {
    if !(1..=100).contains(&quality) {
        return Err(Error::usage(format!("JPEG quality {quality} outside 1..=100")));
    }
    let (h, w, c) = image.hwc()?;
    if c != 3 {
        return Err(Error::usage("JPEG needs an RGB image"));
    }
    let (ph, pw) = (h.div_ceil(16) * 16, w.div_ceil(16) * 16);
    let (ch, cw) = (ph / 2, pw / 2);
    let mut luma = vec![0.0; ph * pw];
    let mut cb_full = vec![0.0; ph * pw];
    let mut cr_full = vec![0.0; ph * pw];
    for y in 0..ph {
        for x in 0..pw {
            // edge replication into the padding
            let p = image.pixel(y.min(h - 1), x.min(w - 1));
            let [r, g, b] = [0, 1, 2].map(|i| (p[i].clamp(0.0, 1.0) * 255.0).round());
            let i = y * pw + x;
            luma[i] = 0.299 * r + 0.587 * g + 0.114 * b;
            cb_full[i] = -0.168_735_892 * r - 0.331_264_108 * g + 0.5 * b + 128.0;
            cr_full[i] = 0.5 * r - 0.418_687_589 * g - 0.081_312_411 * b + 128.0;
        }
    }
    let subsample = |full: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; ch * cw];
        for y in 0..ch {
            for x in 0..cw {
                let (a, b) = (2 * y * pw + 2 * x, (2 * y + 1) * pw + 2 * x);
                out[y * cw + x] = (full[a] + full[a + 1] + full[b] + full[b + 1]) / 4.0;
            }
        }
        out
    };
    let mut cb = subsample(&cb_full);
    let mut cr = subsample(&cr_full);
    let dct = Dct::new();
    let (tl, tc) = (quant_table(&LUMA, quality), quant_table(&CHROMA, quality));
    code_plane(&mut luma, pw, &tl, &dct);
    code_plane(&mut cb, cw, &tc, &dct);
    code_plane(&mut cr, cw, &tc, &dct);
    let mut out = Tensor::zeros(&[h, w, 3]);
    for y in 0..h {
        for x in 0..w {
            let yy = luma[y * pw + x];
            let ci = (y / 2) * cw + x / 2;
            let (b_, r_) = (cb[ci] - 128.0, cr[ci] - 128.0);
            let rgb = [
                yy + 1.402 * r_,
                yy - 0.344_136_286 * b_ - 0.714_136_286 * r_,
                yy + 1.772 * b_,
            ];
            for (o, v) in out.pixel_mut(y, x).iter_mut().zip(rgb) {
                *o = v.round().clamp(0.0, 255.0) / 255.0;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dct_is_orthonormal() {
        let dct = Dct::new();
        let mut block = [0.0; 64];
        for (i, b) in block.iter_mut().enumerate() {
            *b = ((i * 29) % 17) as f64 - 8.0;
        }
        let back = dct.inverse(&dct.forward(&block));
        for (a, b) in block.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        let flat = dct.forward(&[10.0; 64]);
        assert!((flat[0] - 80.0).abs() < 1e-9);
        assert!(flat[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn quality_scaling() {
        assert_eq!(quant_table(&LUMA, 100), [1.0; 64]);
        assert_eq!(quant_table(&LUMA, 50)[0], 16.0);
        assert_eq!(quant_table(&LUMA, 10)[0], 80.0);
    }

    #[test]
    fn odd_sizes_and_bad_quality() {
        let img = Tensor::full(&[13, 21, 3], 0.3);
        let out = round_trip(&img, 50).unwrap();
        assert_eq!(out.shape(), img.shape());
        assert!(round_trip(&img, 0).is_err());
        assert!(round_trip(&img, 101).is_err());
    }
}
