//! Seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha generator keyed by
//! `(master_seed, stream, step)`. Distinct keys give independent streams, so
//! initialization, tuple sampling, and auxiliary draws never interleave, and
//! the tuple drawn at step `t` depends only on `(master_seed, t)` — not on how
//! much randomness earlier steps or other components consumed. That keeps
//! tuple sequences identical across algorithms and network widths that share
//! a seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Named purposes for independent randomness streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Network weight and sign initialization.
    Init,
    /// Transition tuple sampling (one substream per iteration).
    Tuples,
    /// Environment generation.
    Env,
    /// Everything else (Monte Carlo checks, random ball points, ...).
    Aux,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 0x01,
            Stream::Tuples => 0x02,
            Stream::Env => 0x03,
            Stream::Aux => 0x04,
        }
    }
}

fn keyed(master_seed: u64, stream_tag: u64, step: u64) -> ChaCha12Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&stream_tag.to_le_bytes());
    seed[16..24].copy_from_slice(&step.to_le_bytes());
    seed[24..32].copy_from_slice(&0x7464_6c61_6221_0001u64.to_le_bytes());
    ChaCha12Rng::from_seed(seed)
}

/// Generator for a named stream.
pub fn stream_rng(master_seed: u64, stream: Stream) -> ChaCha12Rng {
    keyed(master_seed, stream.tag(), u64::MAX)
}

/// Generator for step `t` of a named stream.
pub fn step_rng(master_seed: u64, stream: Stream, t: u64) -> ChaCha12Rng {
    keyed(master_seed, stream.tag(), t)
}
