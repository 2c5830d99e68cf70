//! Labelled, splittable random streams.
//!
//! Every stream is keyed by the master seed and a path of labels. Child
//! streams are derived from the key alone, never from the parent's
//! consumption state, so a task gets the same draws no matter which worker
//! runs it or in what order siblings are evaluated.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    key: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    /// Root stream for `(seed, label)`.
    pub fn new(seed: u64, label: &str) -> Self {
        Self::from_key(seed, splitmix64(seed ^ splitmix64(label_hash(label))))
    }

    fn from_key(seed: u64, key: u64) -> Self {
        let mut material = [0u8; 32];
        let mut state = key;
        for chunk in material.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self {
            seed,
            key,
            rng: ChaCha8Rng::from_seed(material),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream named by a label.
    pub fn fork(&self, label: &str) -> Self {
        Self::from_key(self.seed, splitmix64(self.key ^ splitmix64(label_hash(label))))
    }

    /// Child stream named by an index, e.g. a member or replica number.
    pub fn fork_index(&self, index: u64) -> Self {
        let tagged = splitmix64(index.wrapping_add(0x6a09_e667_f3bc_c908));
        Self::from_key(self.seed, splitmix64(self.key.rotate_left(17) ^ tagged))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(mut s: RngStream) -> Vec<u64> {
        (0..8).map(|_| s.random::<u64>()).collect()
    }

    #[test]
    fn same_seed_and_label_repeat() {
        assert_eq!(draws(RngStream::new(7, "a")), draws(RngStream::new(7, "a")));
        assert_ne!(draws(RngStream::new(7, "a")), draws(RngStream::new(7, "b")));
        assert_ne!(draws(RngStream::new(7, "a")), draws(RngStream::new(8, "a")));
    }

    #[test]
    fn forks_ignore_parent_consumption() {
        let root = RngStream::new(1, "root");
        let mut used = root.clone();
        let _ = used.random::<u64>();
        assert_eq!(draws(root.fork_index(3)), draws(used.fork_index(3)));
        assert_eq!(draws(root.fork("x")), draws(used.fork("x")));
        assert_ne!(draws(root.fork_index(3)), draws(root.fork_index(4)));
        assert_ne!(draws(root.fork_index(0)), draws(root.clone()));
    }
}
