//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by an
//! explicit user seed plus a stream id, so independent consumers (per-label
//! shuffles, per-fold shuffles, per-epoch batch orders) never share state and
//! results do not depend on evaluation order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream namespaces. The upper 32 bits of the stream id.
#[derive(Debug, Clone, Copy)]
#[repr(u32)]
pub(crate) enum Purpose {
    Split = 1,
    KShot = 2,
    Synth = 3,
    Batches = 4,
    Folds = 5,
    Control = 6,
    RouterInit = 7,
    RouterSplit = 8,
    RouterBatches = 9,
}

pub(crate) fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) ^ index);
    rng
}

pub(crate) fn shuffled<T: Clone>(items: &[T], seed: u64, purpose: Purpose, index: u64) -> Vec<T> {
    let mut out = items.to_vec();
    out.shuffle(&mut stream(seed, purpose, index));
    out
}
