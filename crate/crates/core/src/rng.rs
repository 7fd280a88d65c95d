//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream of the run
//! seed, so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Split,
    Resample,
    Init,
    Shuffle { epoch: usize },
    Hmm { class: usize },
    Synth { class: usize },
    Check,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Split => 1,
            Stream::Resample => 2,
            Stream::Init => 3,
            Stream::Check => 4,
            Stream::Shuffle { epoch } => (1 << 32) | epoch as u64,
            Stream::Hmm { class } => (2 << 32) | class as u64,
            Stream::Synth { class } => (3 << 32) | class as u64,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
