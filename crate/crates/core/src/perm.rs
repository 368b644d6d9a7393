//! Permutations of story elements.
//!
//! A [`Permutation`] maps element index `i` to the (0-based) position `positions[i]`
//! that element occupies in an ordering.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest supported story length.
pub const MIN_N: usize = 2;
/// Largest story length the assignment solver accepts.
pub const MAX_N: usize = 16;
/// Largest story length for which all `n!` permutations may be enumerated.
pub const MAX_ENUM_N: usize = 8;

pub(crate) fn check_size(n: usize) -> Result<()> {
    if (MIN_N..=MAX_N).contains(&n) {
        Ok(())
    } else {
        Err(Error::Size {
            n,
            min: MIN_N,
            max: MAX_N,
        })
    }
}

pub(crate) fn check_enumerable(n: usize) -> Result<()> {
    check_size(n)?;
    if n > MAX_ENUM_N {
        return Err(Error::EnumerationCap { n, cap: MAX_ENUM_N });
    }
    Ok(())
}

/// A bijection from element index to position.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    positions: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from `positions[i] = position of element i`.
    pub fn new(positions: Vec<usize>) -> Result<Self> {
        let n = positions.len();
        check_size(n)?;
        let mut seen = vec![false; n];
        for &p in &positions {
            if p >= n || seen[p] {
                return Err(Error::invalid(format!("{positions:?} is not a permutation of 0..{n}")));
            }
            seen[p] = true;
        }
        Ok(Self { positions })
    }

    pub fn identity(n: usize) -> Result<Self> {
        check_size(n)?;
        Ok(Self {
            positions: (0..n).collect(),
        })
    }

    /// Uniform draw from all `n!` permutations (Fisher-Yates).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::identity(n)?;
        p.positions.shuffle(rng);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Position of element `i`.
    pub fn position(&self, i: usize) -> usize {
        self.positions[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &p) in self.positions.iter().enumerate() {
            inv[p] = i;
        }
        Self { positions: inv }
    }

    /// The order read back to front: position `p` becomes `n - 1 - p`.
    pub fn reversed(&self) -> Self {
        let n = self.len();
        Self {
            positions: self.positions.iter().map(|&p| n - 1 - p).collect(),
        }
    }

    /// `self` after `other`: element `i` goes to `self[other[i]]`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::dim(format!("compose {} with {}", self.len(), other.len())));
        }
        Ok(Self {
            positions: other.positions.iter().map(|&p| self.positions[p]).collect(),
        })
    }

    /// Places `items[i]` at index `positions[i]` of the output.
    pub fn apply<T: Clone>(&self, items: &[T]) -> Result<Vec<T>> {
        if items.len() != self.len() {
            return Err(Error::dim(format!(
                "permutation of {} applied to {} items",
                self.len(),
                items.len()
            )));
        }
        let mut out: Vec<Option<T>> = vec![None; items.len()];
        for (item, &p) in items.iter().zip(&self.positions) {
            out[p] = Some(item.clone());
        }
        Ok(out.into_iter().map(|x| x.expect("bijection")).collect())
    }

    /// All `n!` permutations in lexicographic order of their position lists.
    pub fn enumerate(n: usize) -> Result<Permutations> {
        check_enumerable(n)?;
        Ok(Permutations {
            next: Some((0..n).collect()),
        })
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(positions: Vec<usize>) -> Result<Self> {
        Self::new(positions)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.positions
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.positions)
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.positions)
    }
}

/// Lexicographic permutation iterator, see [`Permutation::enumerate`].
#[derive(Debug, Clone)]
pub struct Permutations {
    next: Option<Vec<usize>>,
}

impl Iterator for Permutations {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if next_lexicographic(&mut succ) {
            self.next = Some(succ);
        }
        Some(Permutation { positions: current })
    }
}

// Standard next-permutation step; false once `v` is the last (descending) arrangement.
fn next_lexicographic(v: &mut [usize]) -> bool {
    let Some(pivot) = (0..v.len().saturating_sub(1)).rev().find(|&k| v[k] < v[k + 1]) else {
        return false;
    };
    let succ = (pivot + 1..v.len())
        .rev()
        .find(|&k| v[k] > v[pivot])
        .expect("pivot has a successor");
    v.swap(pivot, succ);
    v[pivot + 1..].reverse();
    true
}

pub fn identity_permutation(n: usize) -> Result<Permutation> {
    Permutation::identity(n)
}

pub fn inverse(p: &Permutation) -> Permutation {
    p.inverse()
}

pub fn enumerate_permutations(n: usize) -> Result<Permutations> {
    Permutation::enumerate(n)
}

pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Permutation> {
    Permutation::random(n, rng)
}
