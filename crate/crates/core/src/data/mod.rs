//! MNIST ingestion, augmentation and rate-code spike encoding.

mod augment;
mod idx;
mod rate;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use augment::{augment, AugmentConfig};
pub use idx::{load_idx, load_idx_shaped, read_idx_images, read_idx_labels, IdxError, ImageBatch};
pub use rate::{rate_encode, rate_encode_pixel, RateError, SpikeFrames, RATE_EPSILON};

/// Purpose tags that keep independent random streams apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Init = 1,
    Shuffle = 2,
    Augment = 3,
}

/// ChaCha8 stream keyed by `(seed, kind, epoch, index)`.
///
/// The 32-byte key is the little-endian concatenation of the four words, so a
/// stream is reproducible on any platform from those values alone.
pub fn stream_rng(seed: u64, kind: StreamKind, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(kind as u64).to_le_bytes());
    key[16..24].copy_from_slice(&epoch.to_le_bytes());
    key[24..32].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream_rng(7, StreamKind::Augment, 1, 2).random();
        let b: u64 = stream_rng(7, StreamKind::Augment, 1, 2).random();
        let c: u64 = stream_rng(7, StreamKind::Augment, 1, 3).random();
        let d: u64 = stream_rng(7, StreamKind::Shuffle, 1, 2).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
