//! Seeded random streams.
//!
//! Every stochastic block takes an explicit seed. Draws are made in `f64`
//! and converted, so `f32` and `f64` runs consume identical random streams.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::{Cplx, Scalar};

pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator family keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Circularly symmetric complex Gaussian with `E|n|^2 = variance`.
pub fn complex_normal<T: Scalar>(rng: &mut SimRng, variance: f64) -> Cplx<T> {
    let s = (variance / 2.0).sqrt();
    let re = standard_normal(rng) * s;
    let im = standard_normal(rng) * s;
    Cplx::new(T::of(re), T::of(im))
}

/// Uniform draw on `[-1, 1)`.
pub fn uniform_symmetric(rng: &mut SimRng) -> f64 {
    rng.random::<f64>() * 2.0 - 1.0
}

pub fn uniform_index(rng: &mut SimRng, n: usize) -> usize {
    rng.random_range(0..n)
}
