//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use storyseq::pairwise::PairScoreMatrix;
use storyseq::ScoreMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn score_matrix(n: usize, seed: u64) -> ScoreMatrix {
    ScoreMatrix::from_rows(&random_rows(n, &mut rng(seed))).expect("square")
}

pub fn pair_scores(n: usize, seed: u64) -> PairScoreMatrix {
    let mut r = rng(seed);
    PairScoreMatrix::from_fn(n, |_, _| Ok(r.random_range(-1.0..1.0))).expect("square")
}
