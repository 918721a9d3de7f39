//! Assignment of the D latent indices to features and feature pairs.
//!
//! Each feature owns `s` standalone indices and each unordered feature pair
//! shares `o` overlap indices, so `D = K*s + K(K-1)/2 * o`. A feature value
//! vector has `d = s + (K-1)*o` entries: its standalone block first, then one
//! block of `o` entries per other feature in ascending feature order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Who owns a physical latent index, and where it sits inside the owners'
/// d-length vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotOwner {
    Standalone {
        feature: usize,
        pos: usize,
    },
    Pair {
        first: usize,
        first_pos: usize,
        second: usize,
        second_pos: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexLayout {
    num_features: usize,
    standalone: usize,
    overlap: usize,
    seed: u64,
    standalone_slots: Vec<Vec<usize>>,
    pair_slots: Vec<Vec<usize>>,
    feature_slots: Vec<Vec<usize>>,
    owners: Vec<SlotOwner>,
}

/// Number of unordered pairs among `k` features.
pub fn num_pairs(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

/// Index of the unordered pair `{a, b}` in lexicographic order of `(min, max)`.
pub fn pair_index(k: usize, a: usize, b: usize) -> usize {
    debug_assert!(a != b && a < k && b < k);
    let (i, j) = if a < b { (a, b) } else { (b, a) };
    // pairs (0,1)..(0,k-1), (1,2).., ...
    i * k - i * (i + 1) / 2 + (j - i - 1)
}

fn check_dimensions(k: usize, s: usize, o: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidDimensions("K must be at least 1".into()));
    }
    if s + o == 0 {
        return Err(Error::InvalidDimensions(
            "standalone and overlap dimensions cannot both be zero".into(),
        ));
    }
    if k == 1 && s == 0 {
        return Err(Error::InvalidDimensions(
            "a single feature needs a standalone dimension".into(),
        ));
    }
    Ok(())
}

impl IndexLayout {
    /// Builds the layout for `k` features; `seed` only permutes which
    /// physical indices land in which slot.
    pub fn build(k: usize, s: usize, o: usize, seed: u64) -> Result<Self> {
        check_dimensions(k, s, o)?;
        let total = k * s + num_pairs(k) * o;
        let mut perm: Vec<usize> = (0..total).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

        let mut next = perm.into_iter();
        let standalone_slots: Vec<Vec<usize>> =
            (0..k).map(|_| next.by_ref().take(s).collect()).collect();
        let pair_slots: Vec<Vec<usize>> = (0..num_pairs(k))
            .map(|_| next.by_ref().take(o).collect())
            .collect();
        Self::from_tables(k, s, o, seed, standalone_slots, pair_slots)
    }

    /// Reassembles a layout from explicit slot tables, checking that they
    /// partition `0..D`.
    pub fn from_tables(
        k: usize,
        s: usize,
        o: usize,
        seed: u64,
        standalone_slots: Vec<Vec<usize>>,
        pair_slots: Vec<Vec<usize>>,
    ) -> Result<Self> {
        check_dimensions(k, s, o)?;
        let total = k * s + num_pairs(k) * o;
        if standalone_slots.len() != k || standalone_slots.iter().any(|v| v.len() != s) {
            return Err(Error::InvalidDimensions("malformed standalone slot table".into()));
        }
        if pair_slots.len() != num_pairs(k) || pair_slots.iter().any(|v| v.len() != o) {
            return Err(Error::InvalidDimensions("malformed pair slot table".into()));
        }

        let mut feature_slots: Vec<Vec<usize>> = standalone_slots.clone();
        for j in 0..k {
            for other in (0..k).filter(|&x| x != j) {
                feature_slots[j].extend_from_slice(&pair_slots[pair_index(k, j, other)]);
            }
        }

        let mut owners: Vec<Option<SlotOwner>> = vec![None; total];
        let mut claim = |idx: usize, owner: SlotOwner| -> Result<()> {
            match owners.get_mut(idx) {
                Some(slot @ None) => {
                    *slot = Some(owner);
                    Ok(())
                }
                Some(Some(_)) => Err(Error::InvalidDimensions(format!(
                    "latent index {} assigned twice",
                    idx
                ))),
                None => Err(Error::InvalidDimensions(format!(
                    "latent index {} out of range 0..{}",
                    idx, total
                ))),
            }
        };
        for (j, slots) in standalone_slots.iter().enumerate() {
            for (pos, &idx) in slots.iter().enumerate() {
                claim(idx, SlotOwner::Standalone { feature: j, pos })?;
            }
        }
        for first in 0..k {
            for second in first + 1..k {
                let p = pair_index(k, first, second);
                // block offsets of this pair inside each member's vector
                let first_base = s + (second - 1) * o;
                let second_base = s + first * o;
                for (i, &idx) in pair_slots[p].iter().enumerate() {
                    claim(
                        idx,
                        SlotOwner::Pair {
                            first,
                            first_pos: first_base + i,
                            second,
                            second_pos: second_base + i,
                        },
                    )?;
                }
            }
        }
        let owners = owners
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidDimensions("slot tables leave indices unowned".into()))?;

        Ok(IndexLayout {
            num_features: k,
            standalone: s,
            overlap: o,
            seed,
            standalone_slots,
            pair_slots,
            feature_slots,
            owners,
        })
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn standalone_dim(&self) -> usize {
        self.standalone
    }

    pub fn overlap_dim(&self) -> usize {
        self.overlap
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// D, the user/item latent dimension.
    pub fn total_dim(&self) -> usize {
        self.owners.len()
    }

    /// d, the length of a single feature value vector.
    pub fn feature_dim(&self) -> usize {
        self.standalone + (self.num_features - 1) * self.overlap
    }

    /// The d physical indices of feature `j`, in vector order.
    pub fn feature_slots(&self, j: usize) -> &[usize] {
        &self.feature_slots[j]
    }

    pub fn standalone_slots(&self, j: usize) -> &[usize] {
        &self.standalone_slots[j]
    }

    pub fn pair_slots(&self, a: usize, b: usize) -> &[usize] {
        &self.pair_slots[pair_index(self.num_features, a, b)]
    }

    pub fn pair_tables(&self) -> &[Vec<usize>] {
        &self.pair_slots
    }

    pub fn standalone_tables(&self) -> &[Vec<usize>] {
        &self.standalone_slots
    }

    pub fn owners(&self) -> &[SlotOwner] {
        &self.owners
    }
}
