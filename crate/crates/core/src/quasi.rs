//! Halton points mapped to Gaussian vectors for deterministic direction sampling.

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in base `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

/// Standard normal vectors from a Halton sequence through Box–Muller.
#[derive(Debug, Clone)]
pub struct QuasiNormal {
    dim: usize,
    index: u64,
}

impl QuasiNormal {
    /// `seed` selects a disjoint stretch of the sequence.
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(2 * dim.div_ceil(2) <= PRIMES.len(), "dimension too large for the Halton table");
        Self {
            dim,
            index: 1 + seed.wrapping_mul(1 << 20),
        }
    }

    pub fn next_vec(&mut self) -> Vec<f64> {
        let k = self.index;
        self.index += 1;
        let mut out = Vec::with_capacity(self.dim);
        for p in 0..self.dim.div_ceil(2) {
            let u1 = radical_inverse(k, PRIMES[2 * p]).max(f64::MIN_POSITIVE);
            let u2 = radical_inverse(k, PRIMES[2 * p + 1]);
            let r = (-2.0 * u1.ln()).sqrt();
            let t = std::f64::consts::TAU * u2;
            out.push(r * t.cos());
            if out.len() < self.dim {
                out.push(r * t.sin());
            }
        }
        out
    }
}
