//! Seed splitting.
//!
//! Every random stream in a run is seeded by
//! `derive_seed(master, label, index)`, so a stream depends only on its own
//! coordinates and never on how many other streams exist.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    mix64(mix64(master ^ fnv1a(label)) ^ mix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}
