//! Counter-based random streams.
//!
//! A stream is a pure function of `(master_seed, tag, sample_index)`: the
//! ChaCha8 key is derived from the seed and the experiment tag, and the
//! sample index selects the ChaCha stream. Sample `i` therefore sees the
//! same numbers whichever worker evaluates it.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Experiment tags. Paths for different experiments never share streams.
pub mod tags {
    pub const BROWNIAN: u64 = 0x4252_4f57_4e00_0001;
    pub const MGF_PARAMS: u64 = 0x4d47_4650_0000_0001;
    pub const MGF_SAMPLES: u64 = 0x4d47_4653_0000_0001;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identity of a stream: which experiment and which sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub tag: u64,
    pub sample_index: u64,
}

/// Deterministic source of uniforms and standard normals.
#[derive(Clone)]
pub struct RandomStream {
    master_seed: u64,
    id: StreamId,
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RandomStream {
    pub fn new(master_seed: u64, tag: u64, sample_index: u64) -> Self {
        let mut state = master_seed ^ splitmix64(&mut tag.clone());
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(sample_index);
        Self {
            master_seed,
            id: StreamId { tag, sample_index },
            rng,
            spare_normal: None,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal by the Box-Muller transform. Both variates of a pair
    /// are used, cosine branch first.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare_normal = Some(radius * sin);
        radius * cos
    }

    pub fn fill_normal(&mut self, out: &mut [f64], scale: f64) {
        for v in out {
            *v = scale * self.normal();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_inputs_same_stream() {
        let mut a = RandomStream::new(7, tags::BROWNIAN, 3);
        let mut b = RandomStream::new(7, tags::BROWNIAN, 3);
        for _ in 0..100 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn different_index_tag_or_seed_differ() {
        let first = |seed, tag, idx| RandomStream::new(seed, tag, idx).next_u64();
        let base = first(7, tags::BROWNIAN, 3);
        assert_ne!(base, first(7, tags::BROWNIAN, 4));
        assert_ne!(base, first(8, tags::BROWNIAN, 3));
        assert_ne!(base, first(7, tags::MGF_SAMPLES, 3));
    }

    #[test]
    fn uniform_range() {
        let mut s = RandomStream::new(1, 2, 3);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments() {
        let mut s = RandomStream::new(11, tags::BROWNIAN, 0);
        let n = 200_000;
        let (mut m1, mut m2, mut m4) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = s.normal();
            m1 += z;
            m2 += z * z;
            m4 += z * z * z * z;
        }
        let n = n as f64;
        // SE of mean = 1/sqrt(n), SE of second moment = sqrt(2/n), of fourth = sqrt(96/n).
        assert!((m1 / n).abs() < 5.0 / n.sqrt());
        assert!((m2 / n - 1.0).abs() < 5.0 * (2.0 / n).sqrt());
        assert!((m4 / n - 3.0).abs() < 5.0 * (96.0 / n).sqrt());
    }
}
