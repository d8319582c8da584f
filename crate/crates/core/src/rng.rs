//! Deterministic stream derivation for reproducible Monte Carlo runs.
//!
//! All randomness in this crate flows from explicit stream addresses instead
//! of one shared mutable generator. A stream is addressed by `(master seed,
//! context, trial, snapshot)`: the master seed selects the ChaCha key and the
//! remaining indices are packed into the cipher's 64-bit stream counter, so
//! distinct addresses yield non-overlapping streams. The address→stream map is
//! a pure function, which makes every experiment bit-reproducible regardless
//! of worker count or scheduling, and lets trials run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Address of one random stream: a master seed plus a `(context, trial)`
/// coordinate. Snapshot-level streams hang off this key via [`TrialKey::rng`].
///
/// `context` distinguishes experiment phases that must not share randomness
/// (threshold calibration, each sweep point, each detection-probability grid
/// point); `trial` is the Monte Carlo trial index within that phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrialKey {
    pub master_seed: u64,
    pub context: u16,
    pub trial: u32,
}

impl TrialKey {
    pub fn new(master_seed: u64, context: u16, trial: u32) -> Self {
        Self {
            master_seed,
            context,
            trial,
        }
    }

    /// Generator for one snapshot slot of this trial (0 is the cell under
    /// test, `1..=K` are the secondary cells).
    pub fn rng(&self, snapshot: u16) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(pack(self.context, self.trial, snapshot));
        rng
    }
}

/// Packs the stream coordinate into the ChaCha stream counter:
/// 16 context bits, 32 trial bits, 16 snapshot bits.
fn pack(context: u16, trial: u32, snapshot: u16) -> u64 {
    ((context as u64) << 48) | ((trial as u64) << 16) | snapshot as u64
}
