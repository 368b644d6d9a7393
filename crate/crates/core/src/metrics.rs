//! Order-recovery metrics comparing a predicted permutation with the gold one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::Permutation;

fn same_len(pred: &Permutation, gold: &Permutation) -> Result<usize> {
    if pred.len() != gold.len() {
        return Err(Error::dim(format!(
            "predicted order has {} elements, gold has {}",
            pred.len(),
            gold.len()
        )));
    }
    Ok(pred.len())
}

/// Spearman's rank correlation. Permutations have no ties, so the closed form is exact.
pub fn spearman(pred: &Permutation, gold: &Permutation) -> Result<f64> {
    let n = same_len(pred, gold)?;
    let d2: usize = pred
        .positions()
        .iter()
        .zip(gold.positions())
        .map(|(&a, &b)| a.abs_diff(b).pow(2))
        .sum();
    let n = n as f64;
    Ok(1.0 - 6.0 * d2 as f64 / (n * (n * n - 1.0)))
}

/// Fraction of unordered element pairs whose relative order agrees with gold.
pub fn pairwise_accuracy(pred: &Permutation, gold: &Permutation) -> Result<f64> {
    let n = same_len(pred, gold)?;
    let (p, g) = (pred.positions(), gold.positions());
    let mut agree = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if (p[i] < p[j]) == (g[i] < g[j]) {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (n * (n - 1) / 2) as f64)
}

/// Mean absolute displacement between predicted and gold positions.
pub fn avg_distance(pred: &Permutation, gold: &Permutation) -> Result<f64> {
    let n = same_len(pred, gold)?;
    let total: usize = pred
        .positions()
        .iter()
        .zip(gold.positions())
        .map(|(&a, &b)| a.abs_diff(b))
        .sum();
    Ok(total as f64 / n as f64)
}

/// The three per-story metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoryMetrics {
    pub spearman: f64,
    pub pairwise_accuracy: f64,
    pub avg_distance: f64,
}

impl StoryMetrics {
    pub fn evaluate(pred: &Permutation, gold: &Permutation) -> Result<Self> {
        Ok(Self {
            spearman: spearman(pred, gold)?,
            pairwise_accuracy: pairwise_accuracy(pred, gold)?,
            avg_distance: avg_distance(pred, gold)?,
        })
    }
}

impl From<(f64, f64, f64)> for StoryMetrics {
    fn from((spearman, pairwise_accuracy, avg_distance): (f64, f64, f64)) -> Self {
        Self {
            spearman,
            pairwise_accuracy,
            avg_distance,
        }
    }
}

/// Corpus-level metrics: unweighted means over stories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub spearman: f64,
    pub pairwise_accuracy: f64,
    pub avg_distance: f64,
    pub story_count: usize,
}

impl MetricReport {
    /// One-line JSON with metrics at fixed 6-decimal precision.
    pub fn to_json_line(&self) -> String {
        format!(
            "{{\"spearman\":{:.6},\"pairwise_accuracy\":{:.6},\"avg_distance\":{:.6},\"story_count\":{}}}",
            self.spearman, self.pairwise_accuracy, self.avg_distance, self.story_count
        )
    }
}

pub fn aggregate<I, M>(per_story: I) -> Result<MetricReport>
where
    I: IntoIterator<Item = M>,
    M: Into<StoryMetrics>,
{
    let mut sums = (0.0, 0.0, 0.0);
    let mut count = 0usize;
    for m in per_story {
        let m = m.into();
        sums.0 += m.spearman;
        sums.1 += m.pairwise_accuracy;
        sums.2 += m.avg_distance;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyInput("no stories to aggregate"));
    }
    let c = count as f64;
    Ok(MetricReport {
        spearman: sums.0 / c,
        pairwise_accuracy: sums.1 / c,
        avg_distance: sums.2 / c,
        story_count: count,
    })
}

/// `counts[g][p]`: elements with gold position `g` predicted at position `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub stories: u64,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            counts: vec![vec![0; n]; n],
            stories: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, pred: &Permutation, gold: &Permutation) -> Result<()> {
        let n = same_len(pred, gold)?;
        if n != self.n() {
            return Err(Error::dim(format!(
                "story of length {n} in a {0}x{0} confusion matrix",
                self.n()
            )));
        }
        for (&p, &g) in pred.positions().iter().zip(gold.positions()) {
            self.counts[g][p] += 1;
        }
        self.stories += 1;
        Ok(())
    }

    /// Rows normalized to fractions of evaluated stories.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        let s = self.stories.max(1) as f64;
        self.counts
            .iter()
            .map(|r| r.iter().map(|&c| c as f64 / s).collect())
            .collect()
    }
}

pub fn confusion<'a, I>(pairs: I) -> Result<ConfusionMatrix>
where
    I: IntoIterator<Item = (&'a Permutation, &'a Permutation)>,
{
    let mut iter = pairs.into_iter().peekable();
    let Some((first, _)) = iter.peek() else {
        return Err(Error::EmptyInput("no stories for the confusion matrix"));
    };
    let mut cm = ConfusionMatrix::new(first.len());
    for (pred, gold) in iter {
        cm.add(pred, gold)?;
    }
    Ok(cm)
}
