//! Deterministic RNG stream splitting.
//!
//! Every random stream in an experiment is a ChaCha8 stream keyed by the
//! master seed. Episode `e` uses stream `4 * e + purpose`, so episodes can run
//! in any order or in parallel and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// What an RNG stream is used for within one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Deployment, shadowing and per-slot fading.
    Environment = 0,
    /// Stochastic policies (Random benchmark, action sampling).
    Policy = 1,
    /// Training-level randomness (initialisation, minibatch shuffles).
    Learner = 2,
}

pub fn stream(master_seed: u64, episode: u64, purpose: Purpose) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(episode.wrapping_mul(4).wrapping_add(purpose as u64));
    rng
}
