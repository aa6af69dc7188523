//! Labeled seed derivation. Every random stream is keyed by a root seed, a
//! subsystem label and a few integer coordinates (epoch, batch, worker), so
//! changing how many draws one subsystem makes never shifts another's stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const LABEL_INIT: &str = "init";
pub const LABEL_NEGSAMPLE: &str = "negsample";
pub const LABEL_GUMBEL: &str = "gumbel";
pub const LABEL_SPLIT: &str = "split";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, label: &str, coords: &[u64]) -> u64 {
    // FNV-1a over the label, then mixed with the root and coordinates.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut state = splitmix64(root ^ splitmix64(h));
    for &c in coords {
        state = splitmix64(state ^ splitmix64(c.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    state
}

pub fn rng_for(root: u64, label: &str, coords: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(root, label, coords))
}
