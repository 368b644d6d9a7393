//! Voting ensemble: each member contributes its top-k permutations, every permutation
//! casts one vote per (element, position), and the consensus is the assignment that
//! collects the most votes.

use serde::{Deserialize, Serialize};

use crate::assign::{hungarian_max, ScoreMatrix};
use crate::data::Story;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::perm::Permutation;

pub const DEFAULT_TOP_K: usize = 3;

/// `counts[i][p]`: votes for element `i` at position `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteMatrix {
    pub counts: Vec<Vec<u32>>,
}

impl VoteMatrix {
    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| u64::from(c)).sum()
    }

    /// Votes collected by `sigma`.
    pub fn votes_for(&self, sigma: &Permutation) -> u64 {
        sigma
            .positions()
            .iter()
            .enumerate()
            .map(|(i, &p)| u64::from(self.counts[i][p]))
            .sum()
    }

    fn as_scores(&self) -> Result<ScoreMatrix> {
        let n = self.n();
        let data = self.counts.iter().flatten().map(|&c| f64::from(c)).collect();
        ScoreMatrix::new(Matrix::new(n, n, data)?)
    }
}

pub fn accumulate_votes(candidates: &[Permutation]) -> Result<VoteMatrix> {
    let first = candidates
        .first()
        .ok_or(Error::EmptyInput("no candidate permutations"))?;
    let n = first.len();
    let mut counts = vec![vec![0u32; n]; n];
    for c in candidates {
        if c.len() != n {
            return Err(Error::dim(format!("candidate of length {} among length {n}", c.len())));
        }
        for (i, &p) in c.positions().iter().enumerate() {
            counts[i][p] += 1;
        }
    }
    Ok(VoteMatrix { counts })
}

/// Vote-maximizing permutation; ties go to the lexicographically smallest.
pub fn decode_votes(v: &VoteMatrix) -> Result<Permutation> {
    Ok(hungarian_max(&v.as_scores()?)?.0)
}

/// Anything that can rank orderings of a story's presentation slots.
pub trait Ranker {
    fn name(&self) -> String;

    /// The `k` best orderings over presentation slots, best first.
    fn top_k_slots(&self, story: &Story, k: usize) -> Result<Vec<(Permutation, f64)>>;
}

/// Vote matrix over presentation slots for one story.
pub fn ensemble_votes(members: &[&dyn Ranker], story: &Story, k: usize) -> Result<VoteMatrix> {
    if members.is_empty() {
        return Err(Error::EmptyInput("ensemble has no members"));
    }
    if k == 0 {
        return Err(Error::invalid("top-k must be at least 1"));
    }
    let mut candidates = Vec::with_capacity(members.len() * k);
    for m in members {
        let top = m.top_k_slots(story, k).map_err(|e| Error::Member {
            member: m.name(),
            source: Box::new(e),
        })?;
        candidates.extend(top.into_iter().map(|(p, _)| p));
    }
    accumulate_votes(&candidates)
}

/// Consensus order in element index space.
pub fn ensemble_sort(members: &[&dyn Ranker], story: &Story, k: usize) -> Result<Permutation> {
    let votes = ensemble_votes(members, story, k)?;
    story.slots_to_elements(&decode_votes(&votes)?)
}
