use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Distribution accepted by [`RngStream::draw`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std: f64 },
}

/// Counter-based random stream (ChaCha20) addressed by `(seed, stream_id)`.
///
/// Every draw consumes a fixed number of 64-bit words:
/// `uniform` and `below` take one word, `normal` takes two (Box-Muller,
/// cosine branch only). Streams with distinct ids never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream on the same seed with another id.
    pub fn sibling(&self, stream_id: u64) -> Self {
        RngStream::new(self.seed, stream_id)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        if low == high {
            // consume the word anyway so the advance count stays fixed
            self.next_u64();
            return low;
        }
        low + (high - low) * self.uniform01()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform01();
        let u2 = self.uniform01();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[inline]
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let z = self.standard_normal();
        if std == 0.0 {
            mean
        } else {
            mean + std * z
        }
    }

    /// Integer in `[0, n)` by multiply-shift; one word per call.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Samples from a categorical distribution given by `probs`.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform01();
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len().saturating_sub(1)
    }

    pub fn draw(&mut self, dist: Dist, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::invalid("draw count must be at least 1"));
        }
        match dist {
            Dist::Uniform { low, high } => {
                if !(low <= high) {
                    return Err(Error::invalid(format!("uniform bounds {low} > {high}")));
                }
                Ok((0..n).map(|_| self.uniform(low, high)).collect())
            }
            Dist::Normal { mean, std } => {
                if !(std >= 0.0) {
                    return Err(Error::invalid(format!("negative std {std}")));
                }
                Ok((0..n).map(|_| self.normal(mean, std)).collect())
            }
        }
    }
}
