//! Seeded sample points.
//!
//! Every sample index owns its own stream, so a point depends only on
//! `(seed, tag, index)` and not on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::C64;

/// Half-widths of the sampling box `[−1,1] + i[−0.3,0.3]`.
pub const BOX_RE: f64 = 1.0;
pub const BOX_IM: f64 = 0.3;

/// Draws before a point is declared unreachable.
pub const MAX_DRAWS: usize = 4000;

fn fnv(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64, tag: &str, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv(tag));
        rng.set_stream(index);
        Sampler { rng }
    }

    pub fn complex(&mut self) -> C64 {
        C64::new(self.rng.random_range(-BOX_RE..BOX_RE), self.rng.random_range(-BOX_IM..BOX_IM))
    }

    pub fn vector(&mut self, len: usize) -> Vec<C64> {
        (0..len).map(|_| self.complex()).collect()
    }

    /// Rejection sampling of `(u, λ)` until `accept` holds.
    pub fn point<F>(&mut self, n_u: usize, n_lambda: usize, accept: F) -> Option<(Vec<C64>, Vec<C64>)>
    where
        F: Fn(&[C64], &[C64]) -> bool,
    {
        for _ in 0..MAX_DRAWS {
            let u = self.vector(n_u);
            let lam = self.vector(n_lambda);
            if accept(&u, &lam) {
                return Some((u, lam));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_index() {
        let a = Sampler::new(7, "x", 3).vector(4);
        let b = Sampler::new(7, "x", 3).vector(4);
        let c = Sampler::new(7, "x", 4).vector(4);
        let d = Sampler::new(7, "y", 3).vector(4);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert!(a.iter().all(|z| z.re.abs() <= BOX_RE && z.im.abs() <= BOX_IM));
    }
}
