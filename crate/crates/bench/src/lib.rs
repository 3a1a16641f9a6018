//! Benchmarks live in `benches/`; run them with `cargo bench -p dartsketch-bench`.

use dartsketch::dartboard::{Dartboard, OffsetVector, PartitionParams};

/// Unsmoothed board with `m` columns.
pub fn board(q: f64, m: usize, seed: u64) -> Dartboard {
    let params = PartitionParams::new(q, m).expect("valid base and m");
    Dartboard::new(params, OffsetVector::zeros(m), seed).expect("offsets match m")
}
