//! Seeded randomness: named sub-streams, Haar rotations, Gaussian coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{Coords, Mat3};
use crate::scalar::Real;

pub type StreamRng = ChaCha8Rng;

/// Deterministic generator for the sub-stream `name` of run seed `seed`.
pub fn stream_rng(seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Haar-distributed rotation (normalized Gaussian quaternion).
pub fn uniform_rotation<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Mat3<T> {
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    Mat3::from_quaternion(q.map(T::lit))
}

/// `n x 3` matrix of independent standard normal entries.
pub fn standard_normal_coords<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Coords<T> {
    Coords::new(
        (0..n)
            .map(|_| std::array::from_fn(|_| T::lit(rng.sample::<f64, _>(StandardNormal))))
            .collect(),
    )
}
