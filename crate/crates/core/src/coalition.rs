//! Coalitions of input variables as 64-bit masks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest variable count a coalition can address.
pub const MAX_VARIABLES: usize = 64;

/// Largest variable count for which exhaustive enumeration over all
/// coalitions is attempted.
pub const EXACT_LIMIT: usize = 24;

/// A subset `S` of the variable set `N = {0, .., n-1}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coalition {
    bits: u64,
    n: u8,
}

fn full_mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl Coalition {
    pub fn empty(n: usize) -> Self {
        assert!(n <= MAX_VARIABLES, "coalitions address at most 64 variables");
        Coalition { bits: 0, n: n as u8 }
    }

    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_VARIABLES, "coalitions address at most 64 variables");
        Coalition {
            bits: full_mask(n),
            n: n as u8,
        }
    }

    pub fn from_bits(n: usize, bits: u64) -> Result<Self> {
        if n > MAX_VARIABLES {
            return Err(Error::Capacity(format!("{n} variables exceed the 64-bit mask")));
        }
        if bits & !full_mask(n) != 0 {
            return Err(Error::Argument(format!("mask {bits:#x} has bits at or above n = {n}")));
        }
        Ok(Coalition { bits, n: n as u8 })
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut s = Coalition::empty(n);
        for &i in indices {
            if i >= n {
                return Err(Error::Argument(format!("index {i} out of range for n = {n}")));
            }
            s.bits |= 1 << i;
        }
        Ok(s)
    }

    pub(crate) fn from_bits_unchecked(n: usize, bits: u64) -> Self {
        debug_assert_eq!(bits & !full_mask(n), 0);
        Coalition { bits, n: n as u8 }
    }

    #[inline]
    pub fn bits(self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn n(self) -> usize {
        self.n as usize
    }

    #[inline]
    pub fn size(self) -> usize {
        self.bits.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        i < self.n() && self.bits >> i & 1 == 1
    }

    #[inline]
    pub fn with(self, i: usize) -> Self {
        debug_assert!(i < self.n());
        Coalition {
            bits: self.bits | 1 << i,
            n: self.n,
        }
    }

    #[inline]
    pub fn without(self, i: usize) -> Self {
        Coalition {
            bits: self.bits & !(1 << i),
            n: self.n,
        }
    }

    pub fn union(self, other: Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        Coalition {
            bits: self.bits | other.bits,
            n: self.n,
        }
    }

    pub fn intersection(self, other: Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        Coalition {
            bits: self.bits & other.bits,
            n: self.n,
        }
    }

    pub fn complement(self) -> Self {
        Coalition {
            bits: !self.bits & full_mask(self.n()),
            n: self.n,
        }
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        let mut rest = self.bits;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(i)
            }
        })
    }

    /// Every subset of `self`, ascending by mask value, starting with the
    /// empty set.
    pub fn subsets(self) -> impl Iterator<Item = Coalition> {
        let pool = self.bits;
        let n = self.n;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == pool {
                None
            } else {
                Some(cur.wrapping_sub(pool) & pool)
            };
            Some(Coalition { bits: cur, n })
        })
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.indices()).finish()
    }
}

/// Binomial coefficient as `f64`. Exact for every argument used in this
/// crate (n ≤ 64).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as f64
}

/// All size-`m` subsets of `pool` in lexicographic order of their sorted
/// index lists.
pub fn enumerate_subsets_of_size(pool: Coalition, m: usize) -> Result<SubsetsOfSize> {
    let members: Vec<usize> = pool.indices().collect();
    if m > members.len() {
        return Err(Error::Argument(format!(
            "cannot choose {m} of {} pool variables",
            members.len()
        )));
    }
    Ok(SubsetsOfSize {
        n: pool.n(),
        members,
        cursor: Some((0..m).collect()),
    })
}

pub struct SubsetsOfSize {
    n: usize,
    members: Vec<usize>,
    cursor: Option<Vec<usize>>,
}

impl Iterator for SubsetsOfSize {
    type Item = Coalition;

    fn next(&mut self) -> Option<Coalition> {
        let pos = self.cursor.as_mut()?;
        let bits = pos.iter().fold(0u64, |b, &p| b | 1 << self.members[p]);
        let out = Coalition::from_bits_unchecked(self.n, bits);

        let k = pos.len();
        let len = self.members.len();
        let mut advanced = false;
        for slot in (0..k).rev() {
            if pos[slot] < len - k + slot {
                pos[slot] += 1;
                for t in slot + 1..k {
                    pos[t] = pos[t - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            self.cursor = None;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_choose_two() {
        let pool = Coalition::from_indices(3, &[0, 1, 2]).unwrap();
        let got: Vec<u64> = enumerate_subsets_of_size(pool, 2).unwrap().map(|s| s.bits()).collect();
        assert_eq!(got, vec![0b011, 0b101, 0b110]);
    }

    #[test]
    fn choose_zero_is_empty_set_only() {
        let pool = Coalition::full(5);
        let got: Vec<_> = enumerate_subsets_of_size(pool, 0).unwrap().collect();
        assert_eq!(got, vec![Coalition::empty(5)]);
    }

    #[test]
    fn eight_choose_four() {
        let pool = Coalition::from_indices(12, &[0, 2, 3, 5, 7, 8, 10, 11]).unwrap();
        let got: Vec<_> = enumerate_subsets_of_size(pool, 4).unwrap().collect();
        assert_eq!(got.len(), 70);
        let distinct: std::collections::HashSet<_> = got.iter().collect();
        assert_eq!(distinct.len(), 70);
        assert!(got.iter().all(|s| s.size() == 4 && s.is_subset_of(pool)));
    }

    #[test]
    fn oversized_choice_is_rejected() {
        let pool = Coalition::from_indices(4, &[1, 2]).unwrap();
        assert!(matches!(enumerate_subsets_of_size(pool, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn bits_outside_n_rejected() {
        assert!(Coalition::from_bits(3, 0b1000).is_err());
        assert!(Coalition::from_indices(3, &[3]).is_err());
    }

    #[test]
    fn subsets_walks_whole_powerset() {
        let pool = Coalition::from_indices(10, &[1, 4, 6, 9]).unwrap();
        let all: Vec<_> = pool.subsets().collect();
        assert_eq!(all.len(), 16);
        assert!(all.iter().all(|s| s.is_subset_of(pool)));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(8, 4), 70.0);
        assert_eq!(binomial(10, 5), 252.0);
        assert_eq!(binomial(3, 4), 0.0);
        assert_eq!(binomial(62, 31), 465428353255261088.0);
    }

    proptest! {
        #[test]
        fn set_algebra(a in 0u64..(1 << 24), b in 0u64..(1 << 24)) {
            let a = Coalition::from_bits(24, a).unwrap();
            let b = Coalition::from_bits(24, b).unwrap();
            prop_assert_eq!(a.union(b).size() + a.intersection(b).size(), a.size() + b.size());
            prop_assert_eq!(a.complement().complement(), a);
            prop_assert_eq!(a.union(a.complement()), Coalition::full(24));
            prop_assert!(a.intersection(a.complement()).is_empty());
            // De Morgan
            prop_assert_eq!(a.union(b).complement(), a.complement().intersection(b.complement()));
            prop_assert!(a.indices().all(|i| i < 24));
        }

        #[test]
        fn sized_enumeration_count(bits in 0u64..(1 << 12), m in 0usize..7) {
            let pool = Coalition::from_bits(12, bits).unwrap();
            match enumerate_subsets_of_size(pool, m) {
                Ok(it) => prop_assert_eq!(it.count() as f64, binomial(pool.size(), m)),
                Err(_) => prop_assert!(m > pool.size()),
            }
        }
    }
}
