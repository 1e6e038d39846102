//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream selected by
//! `(seed, stream)`, so a draw depends only on its logical index and never on
//! how work is split between workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::latent::Latent;

pub type StreamRng = ChaCha8Rng;

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for the `sample`-th Monte-Carlo draw of optimisation step `step`.
pub fn step_sample_stream(step: usize, sample: usize) -> u64 {
    ((step as u64) << 32) | (sample as u64 & 0xffff_ffff)
}

pub fn standard_normal(rng: &mut impl Rng, dim: usize) -> Latent {
    Latent((0..dim).map(|_| rng.sample(StandardNormal)).collect())
}

/// The noise ε used at `(step, sample)` of an editing run seeded by `seed`.
pub fn step_noise(seed: u64, step: usize, sample: usize, dim: usize) -> Latent {
    standard_normal(&mut stream(seed, step_sample_stream(step, sample)), dim)
}
