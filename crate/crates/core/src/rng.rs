//! Counter-based derived RNG streams.
//!
//! Every stochastic task owns a ChaCha8 generator seeded from
//! (root seed, stream label, counters), so parallel and serial execution
//! draw identical values and any task can be regenerated in isolation.

use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Mix a root seed, a stream label, and counters into a single 64-bit seed.
///
/// Every ingredient is folded into a fully mixed state before the next one
/// is XORed in; otherwise nearby (label, counter) tuples would only differ
/// in a few low bits and collide.
pub fn derive_seed(root: u64, label: &str, counters: &[u64]) -> u64 {
    let mut state = root ^ 0xA076_1D64_78BD_642F;
    state = splitmix64(&mut state);
    state ^= fnv1a(label.as_bytes());
    state = splitmix64(&mut state);
    for &c in counters {
        state ^= c;
        state = splitmix64(&mut state);
    }
    state
}

/// Deterministic generator for the (root, label, counters) stream.
pub fn rng_for(root: u64, label: &str, counters: &[u64]) -> ChaCha8Rng {
    let mut state = derive_seed(root, label, counters);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    rand::SeedableRng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_stable_and_distinct() {
        let mut a1 = rng_for(42, "ae", &[0, 7]);
        let mut a2 = rng_for(42, "ae", &[0, 7]);
        assert_eq!(a1.next_u64(), a2.next_u64());

        let mut b = rng_for(42, "ae", &[0, 8]);
        let mut c = rng_for(42, "frames", &[0, 7]);
        let mut d = rng_for(43, "ae", &[0, 7]);
        let base = rng_for(42, "ae", &[0, 7]).next_u64();
        assert_ne!(base, b.next_u64());
        assert_ne!(base, c.next_u64());
        assert_ne!(base, d.next_u64());
    }

    #[test]
    fn counter_order_matters() {
        let x = derive_seed(1, "s", &[2, 3]);
        let y = derive_seed(1, "s", &[3, 2]);
        assert_ne!(x, y);
    }

    /// Small counter grids (condition x index, layer x window, ...) must
    /// never collide; low-bit-only counter differences once did.
    #[test]
    fn counter_grids_stay_collision_free() {
        let mut seeds = Vec::new();
        for a in 0..3u64 {
            for b in 0..64u64 {
                seeds.push(derive_seed(42, "grid", &[a, b]));
            }
        }
        let n = seeds.len();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), n);
    }
}
