//! Deterministic random streams.
//!
//! Every consumer of randomness asks for `stream(seed, domain, index)` and gets an
//! independent ChaCha8 generator. The key is derived from `(seed, domain)`, the
//! ChaCha stream id is `index`, so the output depends only on those three values
//! and never on thread count or evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;
pub type NoiseRng = rand_xoshiro::Xoshiro256PlusPlus;

/// Purpose tag mixed into the stream key so different consumers never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Permute = 0x7065_726d,
    TrainSample = 0x7472_6e73,
    RecoverSample = 0x7263_7673,
    Residual = 0x7265_7364,
    Basis = 0x6261_7373,
    Simulation = 0x7369_6d75,
    CrossFit = 0x7866_6974,
    Cell = 0x6365_6c6c,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> StreamRng {
    let mut state = seed ^ (domain as u64).rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Fast generator for bulk Gaussian noise, keyed by `stream(seed, domain, index)`.
pub fn noise_stream(seed: u64, domain: Domain, index: u64) -> NoiseRng {
    NoiseRng::from_rng(stream(seed, domain, index)).expect("ChaCha never fails")
}

/// Derive a child seed, e.g. one per sweep cell.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    stream(seed, domain, index).gen()
}

/// Fisher–Yates shuffle of `0..n`.
pub fn shuffle<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// `k` distinct indices drawn uniformly from `0..v`, sorted ascending.
///
/// Sparse draws use rejection against a bitmap, which also yields the sorted order.
pub fn sample_indices<R: Rng + ?Sized>(rng: &mut R, v: usize, k: usize) -> Vec<usize> {
    assert!(k <= v, "cannot draw {k} distinct indices from {v}");
    if 2 * k > v {
        let mut idx = rand::seq::index::sample(rng, v, k).into_vec();
        idx.sort_unstable();
        return idx;
    }
    let mut bits = vec![0u64; v.div_ceil(64)];
    let mut drawn = 0;
    while drawn < k {
        let i = rng.gen_range(0..v);
        let (word, bit) = (i / 64, 1u64 << (i % 64));
        if bits[word] & bit == 0 {
            bits[word] |= bit;
            drawn += 1;
        }
    }
    let mut idx = Vec::with_capacity(k);
    for (w, &word) in bits.iter().enumerate() {
        let mut m = word;
        while m != 0 {
            idx.push(w * 64 + m.trailing_zeros() as usize);
            m &= m - 1;
        }
    }
    idx
}
