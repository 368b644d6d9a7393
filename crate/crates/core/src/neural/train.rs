use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{hinge, order_story_loss, softmax_cross_entropy};
use super::mlp::MlpParams;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Mini-batch SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight decay on weight matrices (biases are not penalized).
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            l2: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid(format!("l2 must be non-negative, got {}", self.l2)));
        }
        Ok(())
    }

    /// The generator used for parameter initialization.
    pub fn init_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        rng
    }

    fn shuffle_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Training examples together with the loss head they are trained under.
#[derive(Debug, Clone)]
pub enum TrainingData {
    /// Softmax cross-entropy: features and the target class.
    SoftmaxCe(Vec<(Vector, usize)>),
    /// Single-score hinge `max(0, margin - y * s)`: features and `y` in {-1, +1}.
    PairwiseHinge { examples: Vec<(Vector, f64)>, margin: f64 },
    /// Order-embedding loss: each example is one story's element features in gold order.
    NpeOrder { stories: Vec<Vec<Vector>>, alpha: f64 },
}

impl TrainingData {
    pub fn len(&self) -> usize {
        match self {
            TrainingData::SoftmaxCe(v) => v.len(),
            TrainingData::PairwiseHinge { examples, .. } => examples.len(),
            TrainingData::NpeOrder { stories, .. } => stories.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Loss of example `idx`; adds `scale * gradient` into `grad`.
    fn example(&self, params: &MlpParams, idx: usize, scale: f64, grad: &mut MlpParams) -> Result<f64> {
        match self {
            TrainingData::SoftmaxCe(examples) => {
                let (x, target) = &examples[idx];
                let cache = params.forward_cached(x)?;
                let (loss, d_out) = softmax_cross_entropy(cache.output(), *target)?;
                params.backward(&cache, &d_out, scale, grad);
                Ok(loss)
            }
            TrainingData::PairwiseHinge { examples, margin } => {
                let (x, label) = &examples[idx];
                let cache = params.forward_cached(x)?;
                let (loss, d) = hinge(cache.output()[0], *label, *margin);
                if d != 0.0 {
                    params.backward(&cache, &[d], scale, grad);
                }
                Ok(loss)
            }
            TrainingData::NpeOrder { stories, alpha } => {
                let caches = stories[idx]
                    .iter()
                    .map(|x| params.forward_cached(x))
                    .collect::<Result<Vec<_>>>()?;
                let embeddings: Vec<Vector> = caches.iter().map(|c| c.output().to_vec()).collect();
                let (loss, d_emb) = order_story_loss(&embeddings, *alpha)?;
                for (cache, d) in caches.iter().zip(&d_emb) {
                    params.backward(cache, d, scale, grad);
                }
                Ok(loss)
            }
        }
    }

    /// Mean loss over `indices` (plus `l2 / 2 * ||W||^2`) and its gradient.
    pub fn objective(&self, params: &MlpParams, indices: &[usize], l2: f64) -> Result<(f64, MlpParams)> {
        let mut grad = params.zeros_like();
        if indices.is_empty() {
            return Ok((0.0, grad));
        }
        let scale = 1.0 / indices.len() as f64;
        let mut total = 0.0;
        for &idx in indices {
            total += self.example(params, idx, scale, &mut grad)?;
        }
        let mut loss = total * scale;
        if l2 > 0.0 {
            loss += 0.5 * l2 * params.weight_sq_norm();
            for (g, w) in grad.weights.iter_mut().zip(&params.weights) {
                for (gv, wv) in g.data_mut().iter_mut().zip(w.data()) {
                    *gv += l2 * wv;
                }
            }
        }
        Ok((loss, grad))
    }

    /// Mean loss over all examples.
    pub fn mean_loss(&self, params: &MlpParams) -> Result<f64> {
        let all: Vec<usize> = (0..self.len()).collect();
        Ok(self.objective(params, &all, 0.0)?.0)
    }
}

/// Plain mini-batch gradient descent. Shuffling is driven by `cfg.seed`, so identical
/// inputs give bit-identical parameters.
pub fn sgd_train(mut params: MlpParams, data: &TrainingData, cfg: &TrainConfig) -> Result<MlpParams> {
    cfg.validate()?;
    if data.is_empty() {
        return Ok(params);
    }
    let mut rng = cfg.shuffle_rng();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grad) = data.objective(&params, batch, cfg.l2)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {loss} at epoch {epoch}, batch {batch_idx}"
                )));
            }
            params.axpy(-cfg.learning_rate, &grad);
            if !params.is_finite() {
                return Err(Error::Numeric(format!(
                    "parameters diverged at epoch {epoch}, batch {batch_idx}"
                )));
            }
        }
    }
    Ok(params)
}
