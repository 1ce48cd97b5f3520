//! Keyed pseudorandom permutation of `[0, n)` computed one index at a time.
//!
//! A rank is zero-padded to a `b`-bit block, pushed through a small Feistel
//! network, and re-encrypted while the result lands outside `[0, n)` (cycle
//! walking). Because `2^b < 2n` the expected number of encryptions is below 2.

use serde::{Deserialize, Serialize};

use crate::error::PermutationError;

pub const DEFAULT_ROUNDS: u32 = 4;
pub const CYCLE_WALK_LIMIT: u32 = 64;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Anything that can map a scan rank to a word index over a fixed domain.
pub trait PermutationProvider {
    fn domain(&self) -> u64;
    fn index_of(&self, rank: u64) -> Result<u64, PermutationError>;
}

/// The identity map, for tests and for reasoning about scan order.
#[derive(Clone, Copy, Debug)]
pub struct Identity(pub u64);

impl PermutationProvider for Identity {
    fn domain(&self) -> u64 {
        self.0
    }

    fn index_of(&self, rank: u64) -> Result<u64, PermutationError> {
        if rank >= self.0 {
            return Err(PermutationError::RankOutOfRange { rank, n: self.0 });
        }
        Ok(rank)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    n: u64,
    seed: u64,
    bits: u32,
    round_keys: Vec<u64>,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[inline]
fn round_fn(half: u64, key: u64) -> u64 {
    mix64(half.wrapping_mul(GOLDEN) ^ key)
}

impl Permutation {
    pub fn new(n: u64, seed: u64) -> Result<Self, PermutationError> {
        Self::with_rounds(n, seed, DEFAULT_ROUNDS)
    }

    pub fn with_rounds(n: u64, seed: u64, rounds: u32) -> Result<Self, PermutationError> {
        if n == 0 {
            return Err(PermutationError::DomainEmpty);
        }
        if rounds == 0 {
            return Err(PermutationError::NoRounds);
        }
        let ceil_log2 = if n <= 1 { 0 } else { 64 - (n - 1).leading_zeros() };
        let round_keys = (0..rounds as u64)
            .map(|r| mix64(seed ^ (r + 1).wrapping_mul(GOLDEN)))
            .collect();
        Ok(Permutation { n, seed, bits: ceil_log2.max(2), round_keys })
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Block width `b`.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn rounds(&self) -> u32 {
        self.round_keys.len() as u32
    }

    fn halves(&self) -> (u32, u32) {
        let left = self.bits.div_ceil(2);
        (left, self.bits - left)
    }

    fn encrypt(&self, block: u64) -> u64 {
        let (lw0, rw0) = self.halves();
        let (mut l, mut lw) = (block >> rw0, lw0);
        let (mut r, mut rw) = (block & mask(rw0), rw0);
        for &key in &self.round_keys {
            let next_r = l ^ (round_fn(r, key) & mask(lw));
            l = r;
            r = next_r;
            std::mem::swap(&mut lw, &mut rw);
        }
        (l << rw) | r
    }

    fn decrypt(&self, block: u64) -> u64 {
        let (lw0, rw0) = self.halves();
        // An odd round count leaves the half widths swapped.
        let (mut lw, mut rw) = if self.round_keys.len().is_multiple_of(2) { (lw0, rw0) } else { (rw0, lw0) };
        let (mut l, mut r) = (block >> rw, block & mask(rw));
        for &key in self.round_keys.iter().rev() {
            let prev_l = r ^ (round_fn(l, key) & mask(rw));
            r = l;
            l = prev_l;
            std::mem::swap(&mut lw, &mut rw);
        }
        (l << rw) | r
    }

    fn walk(&self, start: u64, step: impl Fn(u64) -> u64) -> Result<u64, PermutationError> {
        let mut j = step(start);
        for _ in 1..CYCLE_WALK_LIMIT {
            if j < self.n {
                return Ok(j);
            }
            j = step(j);
        }
        if j < self.n {
            Ok(j)
        } else {
            Err(PermutationError::CycleWalkExhausted { n: self.n, limit: CYCLE_WALK_LIMIT })
        }
    }

    /// `pi[i]`.
    pub fn get(&self, i: u64) -> Result<u64, PermutationError> {
        if i >= self.n {
            return Err(PermutationError::RankOutOfRange { rank: i, n: self.n });
        }
        self.walk(i, |b| self.encrypt(b))
    }

    /// The rank `i` with `get(i) == j`.
    pub fn invert(&self, j: u64) -> Result<u64, PermutationError> {
        if j >= self.n {
            return Err(PermutationError::RankOutOfRange { rank: j, n: self.n });
        }
        self.walk(j, |b| self.decrypt(b))
    }
}

impl PermutationProvider for Permutation {
    fn domain(&self) -> u64 {
        self.n
    }

    #[inline]
    fn index_of(&self, rank: u64) -> Result<u64, PermutationError> {
        self.get(rank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_bijective(p: &Permutation) {
        let n = p.len() as usize;
        let mut seen = vec![false; n];
        for i in 0..p.len() {
            let j = p.get(i).unwrap() as usize;
            assert!(!seen[j], "n={n} seed={} duplicate {j}", p.seed());
            seen[j] = true;
        }
    }

    #[test]
    fn singleton_domain() {
        let p = Permutation::new(1, 0xdead).unwrap();
        assert_eq!(p.get(0), Ok(0));
        assert_eq!(p.invert(0), Ok(0));
        assert_eq!(p.bits(), 2);
    }

    #[test]
    fn errors() {
        assert_eq!(Permutation::new(0, 1), Err(PermutationError::DomainEmpty));
        assert_eq!(Permutation::with_rounds(4, 1, 0), Err(PermutationError::NoRounds));
        let p = Permutation::new(8, 42).unwrap();
        assert_eq!(p.get(8), Err(PermutationError::RankOutOfRange { rank: 8, n: 8 }));
        assert_eq!(p.invert(9), Err(PermutationError::RankOutOfRange { rank: 9, n: 8 }));
    }

    #[test]
    fn small_domains_are_permutations() {
        assert_bijective(&Permutation::new(8, 42).unwrap());
        assert_bijective(&Permutation::new(4, 7).unwrap());
        let p = Permutation::new(1000, 5).unwrap();
        assert_eq!(p.bits(), 10);
        assert_bijective(&p);
        assert_bijective(&Permutation::new(24576, 11).unwrap());
    }

    #[test]
    fn bit_width() {
        for (n, b) in [(1, 2), (2, 2), (3, 2), (4, 2), (5, 3), (1024, 10), (1025, 11), (u64::MAX, 64)] {
            assert_eq!(Permutation::new(n, 0).unwrap().bits(), b, "n={n}");
        }
    }

    #[test]
    fn odd_round_counts_still_invert() {
        for rounds in 1..=7 {
            let p = Permutation::with_rounds(777, 3, rounds).unwrap();
            assert_bijective(&p);
            for i in 0..777 {
                assert_eq!(p.invert(p.get(i).unwrap()), Ok(i));
            }
        }
    }

    #[test]
    fn full_width_domain_round_trips() {
        let p = Permutation::new(u64::MAX, 99).unwrap();
        for i in [0, 1, 12345, u64::MAX - 1] {
            assert_eq!(p.invert(p.get(i).unwrap()), Ok(i));
        }
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = Permutation::new(500, 1).unwrap();
        let b = Permutation::new(500, 1).unwrap();
        let c = Permutation::new(500, 2).unwrap();
        let seq = |p: &Permutation| (0..500).map(|i| p.get(i).unwrap()).collect::<Vec<_>>();
        assert_eq!(seq(&a), seq(&b));
        assert_ne!(seq(&a), seq(&c));
    }

    #[test]
    fn identity_provider() {
        assert_eq!(Identity(3).index_of(2), Ok(2));
        assert!(Identity(3).index_of(3).is_err());
    }
}
