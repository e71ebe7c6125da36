//! Benchmark fixtures for `choicetrees`.

use choicetrees::RngStream;

/// Fixed stream per benchmark so runs are comparable across commits.
pub fn rng(tag: u64) -> RngStream {
    RngStream::new(0xbe9c, tag)
}
