//! Counter-based random streams. A draw depends only on the stream key and
//! its index, never on how many draws came before, so corruption output is
//! independent of evaluation order and threading.

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines several words into one well-mixed key.
pub fn key(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5ca1_ab1e_0ddb_a11u64, |acc, &p| mix64(acc ^ mix64(p)))
}

#[derive(Debug, Clone, Copy)]
pub struct Stream {
    key: u64,
}

impl Stream {
    pub fn new(parts: &[u64]) -> Self {
        Stream { key: key(parts) }
    }

    /// A sub-stream for one processing stage.
    pub fn stage(&self, stage: u64) -> Stream {
        Stream {
            key: key(&[self.key, stage]),
        }
    }

    #[inline]
    pub fn bits(&self, index: u64) -> u64 {
        mix64(self.key ^ index.wrapping_mul(0xd134_2543_de82_ef95))
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&self, index: u64) -> f64 {
        (self.bits(index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller on draws `2i` and `2i + 1`.
    #[inline]
    pub fn normal(&self, index: u64) -> f64 {
        let u1 = 1.0 - self.uniform(2 * index);
        let u2 = self.uniform(2 * index + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Integer uniform in `lo..=hi`.
    #[inline]
    pub fn range(&self, index: u64, lo: i64, hi: i64) -> i64 {
        let span = (hi - lo + 1) as u64;
        lo + (self.bits(index) % span) as i64
    }

    /// Poisson draw with mean `mean` by sequential inversion.
    pub fn poisson(&self, index: u64, mean: f64) -> f64 {
        if mean <= 0.0 {
            return 0.0;
        }
        let u = self.uniform(index);
        if mean > 500.0 {
            // normal approximation; inversion would underflow exp(−mean)
            return (mean + mean.sqrt() * self.stage(1).normal(index)).round().max(0.0);
        }
        let mut k = 0.0;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf && k < 10_000.0 {
            k += 1.0;
            p *= mean / k;
            cdf += p;
        }
        k
    }
}
