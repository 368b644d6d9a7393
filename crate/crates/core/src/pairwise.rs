//! Pairwise order models: a learned score for "element i goes before element j",
//! aggregated over all pairs and maximized by enumerating permutations.

use serde::{Deserialize, Serialize};

use crate::data::{dataset_dims, Story};
use crate::error::{Error, Result};
use crate::linalg::{concat, Matrix, Vector};
use crate::neural::{sgd_train, MlpParams, OutputActivation, TrainConfig, TrainingData, DEFAULT_HIDDEN};
use crate::perm::{check_enumerable, check_size, Permutation};

/// `s[i][j]`: score for placing element `i` before element `j`. The diagonal is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScoreMatrix {
    m: Matrix,
}

impl PairScoreMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim(format!("pair score matrix is {}x{}", m.rows(), m.cols())));
        }
        check_size(m.rows())?;
        if (0..m.rows()).any(|i| m.get(i, i) != 0.0) {
            return Err(Error::invalid("pair score diagonal must be zero"));
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Builds the matrix from `score(i, j)` for `i != j`.
    pub fn from_fn(n: usize, mut score: impl FnMut(usize, usize) -> Result<f64>) -> Result<Self> {
        check_size(n)?;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    data[i * n + j] = score(i, j)?;
                }
            }
        }
        Self::new(Matrix::new(n, n, data)?)
    }

    pub fn n(&self) -> usize {
        self.m.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }
}

/// Sum over unordered pairs `{i, j}` of the chosen orientation's score minus the other's.
pub fn pairwise_objective(s: &PairScoreMatrix, sigma: &Permutation) -> Result<f64> {
    if sigma.len() != s.n() {
        return Err(Error::dim(format!(
            "permutation of {} scored against {1}x{1} pair scores",
            sigma.len(),
            s.n()
        )));
    }
    Ok(objective_unchecked(s, sigma.positions()))
}

fn objective_unchecked(s: &PairScoreMatrix, pos: &[usize]) -> f64 {
    let n = pos.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let forward = s.get(i, j) - s.get(j, i);
            total += if pos[i] < pos[j] { forward } else { -forward };
        }
    }
    total
}

/// Every permutation with its objective, best first; equal scores stay lexicographic.
pub fn rank_permutations(s: &PairScoreMatrix) -> Result<Vec<(Permutation, f64)>> {
    check_enumerable(s.n())?;
    let mut all: Vec<(Permutation, f64)> = Permutation::enumerate(s.n())?
        .map(|p| {
            let v = objective_unchecked(s, p.positions());
            (p, v)
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(all)
}

pub fn top_k_pairwise(s: &PairScoreMatrix, k: usize) -> Result<Vec<(Permutation, f64)>> {
    let mut ranked = rank_permutations(s)?;
    if k == 0 || k > ranked.len() {
        return Err(Error::Size {
            n: k,
            min: 1,
            max: ranked.len(),
        });
    }
    ranked.truncate(k);
    Ok(ranked)
}

/// Exhaustive argmax of [`pairwise_objective`]; ties go to the lexicographically smallest.
pub fn decode_pairwise(s: &PairScoreMatrix) -> Result<Permutation> {
    check_enumerable(s.n())?;
    let mut best: Option<(Permutation, f64)> = None;
    for p in Permutation::enumerate(s.n())? {
        let v = objective_unchecked(s, p.positions());
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((p, v));
        }
    }
    Ok(best.expect("at least one permutation").0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseConfig {
    pub train: TrainConfig,
    pub hidden: usize,
    pub use_image: bool,
    pub margin: f64,
}

impl Default for PairwiseConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                learning_rate: 0.02,
                epochs: 5,
                batch_size: 32,
                seed: 0,
                l2: 0.0,
            },
            hidden: DEFAULT_HIDDEN,
            use_image: true,
            margin: 1.0,
        }
    }
}

/// MLP over concatenated `(features_i, features_j)` producing one score.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseModel {
    pub mlp: MlpParams,
    pub use_image: bool,
    pub margin: f64,
    pub train_config: TrainConfig,
}

impl PairwiseModel {
    pub fn new(mlp: MlpParams, use_image: bool, margin: f64, train_config: TrainConfig) -> Result<Self> {
        if mlp.output_dim() != 1 || !mlp.input_dim().is_multiple_of(2) {
            return Err(Error::dim(format!(
                "pairwise network must map 2d -> 1, got {:?}",
                mlp.layer_dims
            )));
        }
        Ok(Self {
            mlp,
            use_image,
            margin,
            train_config,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.mlp.input_dim() / 2
    }

    pub fn score(&self, x_i: &[f64], x_j: &[f64]) -> Result<f64> {
        Ok(self.mlp.forward(&concat(x_i, x_j))?[0])
    }

    pub fn pair_scores(&self, features: &[Vector]) -> Result<PairScoreMatrix> {
        PairScoreMatrix::from_fn(features.len(), |i, j| self.score(&features[i], &features[j]))
    }

    pub fn story_scores(&self, story: &Story) -> Result<PairScoreMatrix> {
        self.pair_scores(&story.presented_features(self.use_image)?)
    }

    pub fn top_k_slots(&self, story: &Story, k: usize) -> Result<Vec<(Permutation, f64)>> {
        top_k_pairwise(&self.story_scores(story)?, k)
    }

    pub fn predict(&self, story: &Story) -> Result<Permutation> {
        story.slots_to_elements(&decode_pairwise(&self.story_scores(story)?)?)
    }
}

/// Both orientations of every element pair become hinge examples labeled by gold order.
pub fn pair_examples(stories: &[Story], use_image: bool) -> Result<Vec<(Vector, f64)>> {
    let mut examples = Vec::new();
    for s in stories {
        let feats = s
            .elements()
            .iter()
            .map(|e| e.features(use_image))
            .collect::<Result<Vec<_>>>()?;
        for (i, ei) in s.elements().iter().enumerate() {
            for (j, ej) in s.elements().iter().enumerate() {
                if i != j {
                    let label = if ei.gold_position < ej.gold_position { 1.0 } else { -1.0 };
                    examples.push((concat(&feats[i], &feats[j]), label));
                }
            }
        }
    }
    Ok(examples)
}

pub fn train_pairwise(stories: &[Story], cfg: &PairwiseConfig) -> Result<PairwiseModel> {
    cfg.train.validate()?;
    if !(cfg.margin > 0.0 && cfg.margin.is_finite()) {
        return Err(Error::invalid(format!("margin must be positive, got {}", cfg.margin)));
    }
    let dims = dataset_dims(stories)?;
    let input = 2 * dims.input_dim(cfg.use_image)?;
    let data = TrainingData::PairwiseHinge {
        examples: pair_examples(stories, cfg.use_image)?,
        margin: cfg.margin,
    };
    let init = MlpParams::init(
        &[input, cfg.hidden, 1],
        OutputActivation::Identity,
        &mut cfg.train.init_rng(),
    )?;
    let mlp = sgd_train(init, &data, &cfg.train)?;
    PairwiseModel::new(mlp, cfg.use_image, cfg.margin, cfg.train.clone())
}
