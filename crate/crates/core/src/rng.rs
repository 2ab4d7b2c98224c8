//! Deterministic randomness plumbing.
//!
//! Every run owns a single root seed which is split into named substreams so
//! that environment dynamics, agent-internal draws, and exploration draws
//! evolve independently: changing how often the agent samples never perturbs
//! the environment's stream, and vice versa.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Substream labels used by the training loop.
pub const STREAM_ENV: &str = "env";
pub const STREAM_AGENT: &str = "agent";
pub const STREAM_EXPLORATION: &str = "exploration";

/// FNV-1a, 64-bit. Stable across platforms and releases, which is all we
/// need from it — this is stream *labelling*, not cryptography.
fn fnv1a(label: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// SplitMix64 finalizer to decorrelate `root ^ label` mixes.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the substream `label` of run seed `root`.
pub fn stream_seed(root: u64, label: &str) -> u64 {
    splitmix(root ^ fnv1a(label))
}

/// Generator for the substream `label` of run seed `root`.
pub fn stream_rng(root: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(stream_seed(root, label))
}

/// Serializable snapshot of a stream's position, stored in checkpoints so a
/// run's randomness is fully described by its artifacts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RngSnapshot {
    pub label: String,
    pub seed: u64,
    pub word_pos: u64,
}

impl RngSnapshot {
    pub fn capture(label: &str, root: u64, rng: &ChaCha12Rng) -> Self {
        RngSnapshot {
            label: label.to_string(),
            seed: stream_seed(root, label),
            // Desk-scale runs never get near 2^64 words.
            word_pos: rng.get_word_pos() as u64,
        }
    }
}
