//! Named, independent random streams derived from one master seed.
//!
//! Every stream is a ChaCha8 generator whose 32-byte key is
//! `SHA-256(seed_le || name)`. Adding a new stream name never shifts the
//! draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Placement,
    Events,
    Agent,
    Channel,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::Placement => "placement",
            Stream::Events => "events",
            Stream::Agent => "agent",
            Stream::Channel => "channel",
        }
    }
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(&[&seed.to_le_bytes(), which.name().as_bytes()]))
}

/// Seed of episode `episode` under `master`. Paired runs of different
/// algorithms use the same episode seeds.
pub fn episode_seed(master: u64, episode: u64) -> u64 {
    let d = digest(&[&master.to_le_bytes(), b"episode", &episode.to_le_bytes()]);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Seed of evaluation episode `episode`; disjoint from training seeds.
pub fn eval_episode_seed(master: u64, episode: u64) -> u64 {
    let d = digest(&[&master.to_le_bytes(), b"evaluation", &episode.to_le_bytes()]);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
