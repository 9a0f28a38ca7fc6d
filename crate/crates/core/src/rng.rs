//! Reproducible random streams.
//!
//! Every simulation run draws from a ChaCha8 stream keyed by
//! `(master_seed, stream_id)`. ChaCha is counter based, so stream `r` is the
//! same sequence no matter which worker runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream `stream_id` of the generator family rooted at `master_seed`.
pub fn derive_stream(master_seed: u64, stream_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    rng
}
