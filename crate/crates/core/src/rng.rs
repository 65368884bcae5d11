//! Counter-based random streams.
//!
//! Every stream is addressed by a `(seed, stream)` pair and produces the
//! SplitMix64 sequence started from a derived key:
//!
//! ```text
//! key      = mix64(mix64(seed) ^ (stream + 1) * 0x9E3779B97F4A7C15)
//! output_i = mix64(key + (i + 1) * 0x9E3779B97F4A7C15)      i = 0, 1, 2, ...
//! mix64(z) = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!            z ^= z >> 27; z *= 0x94D049BB133111EB; z ^ (z >> 31)
//! ```
//!
//! All arithmetic wraps modulo 2^64. Derived quantities:
//!
//! * uniform `f64` in `[0, 1)`: `(output >> 11) * 2^-53`
//! * integer below `n`: reject outputs `< 2^64 mod n`, return `output % n`
//! * standard normal: Box-Muller on `u1 = 1 - uniform`, `u2 = uniform`,
//!   returning `sqrt(-2 ln u1) * cos(2 pi u2)` then the cached
//!   `sqrt(-2 ln u1) * sin(2 pi u2)`
//!
//! Episode `e` of a run seeded with `s` always reads stream `(s, e)`, so it is
//! reproduced exactly no matter how episodes are scheduled across threads.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key of stream `stream` under `seed`.
pub fn stream_key(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed) ^ stream.wrapping_add(1).wrapping_mul(GAMMA))
}

#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        CounterRng {
            key: stream_key(seed, stream),
            counter: 0,
            spare_normal: None,
        }
    }

    /// Output at an absolute position, without advancing.
    pub fn output_at(&self, position: u64) -> u64 {
        mix64(self.key.wrapping_add(position.wrapping_add(1).wrapping_mul(GAMMA)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let x = self.output_at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        x
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[low, high)`.
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.next_f64()
    }

    /// Unbiased integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    /// `k` distinct indices from `0..n` via a partial Fisher-Yates shuffle of
    /// `0..n`: for `i` in `0..k`, swap slot `i` with slot `i + below(n - i)`.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
