//! Linear assignment: best permutation under additive per-(element, position) scores.
//!
//! [`hungarian_max`] is exact in O(n^3) per solve. Among optimal assignments it returns
//! the one with the lexicographically smallest position list, found by fixing elements
//! in index order and re-solving the remaining sub-problem.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::perm::{check_enumerable, check_size, Permutation};

/// Relative tolerance under which two assignment totals count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// `s[i][p]`: score of placing element `i` at position `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    m: Matrix,
}

impl ScoreMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim(format!("score matrix is {}x{}", m.rows(), m.cols())));
        }
        check_size(m.rows())?;
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.m.rows()
    }

    pub fn get(&self, i: usize, p: usize) -> f64 {
        self.m.get(i, p)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.m.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    /// `sum_i s[i][sigma_i]`, accumulated for `i = 0..n`.
    pub fn score(&self, sigma: &Permutation) -> Result<f64> {
        if sigma.len() != self.n() {
            return Err(Error::dim(format!(
                "permutation of {} scored against a {1}x{1} matrix",
                sigma.len(),
                self.n()
            )));
        }
        Ok(self.score_unchecked(sigma.positions()))
    }

    fn score_unchecked(&self, positions: &[usize]) -> f64 {
        let mut total = 0.0;
        for (i, &p) in positions.iter().enumerate() {
            total += self.m.get(i, p);
        }
        total
    }
}

/// Min-cost assignment on a dense `n x n` cost matrix via shortest augmenting paths
/// with potentials. Returns the column assigned to each row.
fn min_cost_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[col_owner[j] - 1] = j - 1;
    }
    assignment
}

/// Best completion (maximizing) of a partial assignment covering rows `0..prefix.len()`.
fn complete(s: &ScoreMatrix, prefix: &[usize]) -> Vec<usize> {
    let n = s.n();
    let k = prefix.len();
    let mut out = prefix.to_vec();
    if k == n {
        return out;
    }
    let mut taken = vec![false; n];
    for &p in prefix {
        taken[p] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&p| !taken[p]).collect();
    let m = n - k;
    let mut cost = Vec::with_capacity(m * m);
    for i in k..n {
        for &p in &free {
            cost.push(-s.get(i, p));
        }
    }
    out.extend(min_cost_assignment(&cost, m).into_iter().map(|c| free[c]));
    out
}

/// Maximum-score assignment and its total. Ties go to the lexicographically smallest
/// position list.
pub fn hungarian_max(s: &ScoreMatrix) -> Result<(Permutation, f64)> {
    let n = s.n();
    let scale = s.matrix().data().iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    let tol = TIE_TOLERANCE * scale * n as f64;

    let mut sigma = complete(s, &[]);
    let mut best = s.score_unchecked(&sigma);
    let target = best;
    for i in 0..n {
        let prefix = &sigma[..i];
        let candidates: Vec<usize> = (0..sigma[i]).filter(|p| !prefix.contains(p)).collect();
        for p in candidates {
            let mut trial = prefix.to_vec();
            trial.push(p);
            let tau = complete(s, &trial);
            let score = s.score_unchecked(&tau);
            if score >= target.max(best) - tol {
                best = best.max(score);
                sigma = tau;
                break;
            }
        }
    }
    let total = s.score_unchecked(&sigma);
    Ok((Permutation::new(sigma)?, total))
}

/// The `k` best assignments by exhaustive enumeration, best first. Equal scores keep
/// lexicographic order.
pub fn topk_assignments(s: &ScoreMatrix, k: usize) -> Result<Vec<(Permutation, f64)>> {
    let n = s.n();
    check_enumerable(n)?;
    let total: usize = (1..=n).product();
    if k == 0 || k > total {
        return Err(Error::Size {
            n: k,
            min: 1,
            max: total,
        });
    }
    let mut scored: Vec<(Permutation, f64)> = Permutation::enumerate(n)?
        .map(|p| {
            let v = s.score_unchecked(p.positions());
            (p, v)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored.truncate(k);
    Ok(scored)
}
