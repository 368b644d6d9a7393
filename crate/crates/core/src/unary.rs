//! Unary position model: an independent distribution over positions for each element,
//! decoded as a linear assignment.

use serde::{Deserialize, Serialize};

use crate::assign::{hungarian_max, topk_assignments, ScoreMatrix};
use crate::data::{dataset_dims, Story};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::neural::{sgd_train, softmax, MlpParams, OutputActivation, TrainConfig, TrainingData, DEFAULT_HIDDEN};
use crate::perm::Permutation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnaryConfig {
    pub train: TrainConfig,
    pub hidden: usize,
    pub use_image: bool,
}

impl Default for UnaryConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                learning_rate: 0.05,
                epochs: 15,
                batch_size: 32,
                seed: 0,
                l2: 0.0,
            },
            hidden: DEFAULT_HIDDEN,
            use_image: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnaryModel {
    pub mlp: MlpParams,
    pub use_image: bool,
    pub train_config: TrainConfig,
}

impl UnaryModel {
    pub fn new(mlp: MlpParams, use_image: bool, train_config: TrainConfig) -> Result<Self> {
        crate::perm::check_size(mlp.output_dim())?;
        Ok(Self {
            mlp,
            use_image,
            train_config,
        })
    }

    /// Number of positions the model distributes over.
    pub fn n(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Row `i` is the softmax over positions for `features[i]`.
    pub fn position_probs(&self, features: &[Vector]) -> Result<ScoreMatrix> {
        if features.len() != self.n() {
            return Err(Error::dim(format!(
                "unary model over {} positions given {} elements",
                self.n(),
                features.len()
            )));
        }
        let mut data = Vec::with_capacity(self.n() * self.n());
        for x in features {
            data.extend(softmax(&self.mlp.forward(x)?));
        }
        ScoreMatrix::new(Matrix::new(self.n(), self.n(), data)?)
    }

    /// Position probabilities for the story's presentation slots.
    pub fn story_probs(&self, story: &Story) -> Result<ScoreMatrix> {
        self.position_probs(&story.presented_features(self.use_image)?)
    }

    pub fn top_k_slots(&self, story: &Story, k: usize) -> Result<Vec<(Permutation, f64)>> {
        topk_assignments(&self.story_probs(story)?, k)
    }

    /// Predicted order in element index space.
    pub fn predict(&self, story: &Story) -> Result<Permutation> {
        story.slots_to_elements(&decode_unary(&self.story_probs(story)?)?)
    }
}

/// `sum_i P(sigma_i | i)`.
pub fn unary_score(probs: &ScoreMatrix, sigma: &Permutation) -> Result<f64> {
    probs.score(sigma)
}

pub fn decode_unary(probs: &ScoreMatrix) -> Result<Permutation> {
    Ok(hungarian_max(probs)?.0)
}

/// Per-element softmax cross-entropy against the gold position.
pub fn train_unary(stories: &[Story], cfg: &UnaryConfig) -> Result<UnaryModel> {
    cfg.train.validate()?;
    let dims = dataset_dims(stories)?;
    let input = dims.input_dim(cfg.use_image)?;
    let mut examples = Vec::with_capacity(stories.len() * dims.n);
    for s in stories {
        for e in s.elements() {
            examples.push((e.features(cfg.use_image)?, e.gold_position));
        }
    }
    let init = MlpParams::init(
        &[input, cfg.hidden, dims.n],
        OutputActivation::Identity,
        &mut cfg.train.init_rng(),
    )?;
    let mlp = sgd_train(init, &TrainingData::SoftmaxCe(examples), &cfg.train)?;
    UnaryModel::new(mlp, cfg.use_image, cfg.train.clone())
}
