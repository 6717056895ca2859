//! Named, seeded random streams.
//!
//! Every repetition derives all of its randomness from one seed. Each consumer
//! (instance synthesis, reward noise, exploration, ...) gets its own ChaCha
//! stream, so adding a consumer never shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Instance,
    Graph,
    Noise,
    Explore,
    Policy,
    MonteCarlo,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Instance => 1,
            Stream::Graph => 2,
            Stream::Noise => 3,
            Stream::Explore => 4,
            Stream::Policy => 5,
            Stream::MonteCarlo => 6,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
