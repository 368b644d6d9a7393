//! Neural position embeddings.
//!
//! Elements are embedded in the non-negative orthant so that later elements sit farther
//! from the origin. Training minimizes, over gold-ordered pairs `i < j`,
//! `|| max(0, alpha - (x_j - x_i)) ||^2`, with the max taken per coordinate. At test time
//! that penalty is negated and used as a pairwise score: `s[i][j] = -L_ij`.

use serde::{Deserialize, Serialize};

use crate::data::{dataset_dims, Story};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::neural::{
    order_pair_loss, order_story_loss, sgd_train, MlpParams, OutputActivation, TrainConfig, TrainingData,
    DEFAULT_HIDDEN,
};
use crate::pairwise::{decode_pairwise, top_k_pairwise, PairScoreMatrix};
use crate::perm::Permutation;

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_EMBED_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpeConfig {
    pub embed_dim: usize,
    pub alpha: f64,
    pub hidden: usize,
    pub use_image: bool,
    pub train: TrainConfig,
}

impl Default for NpeConfig {
    fn default() -> Self {
        Self {
            embed_dim: DEFAULT_EMBED_DIM,
            alpha: DEFAULT_ALPHA,
            hidden: DEFAULT_HIDDEN,
            use_image: false,
            train: TrainConfig {
                learning_rate: 0.002,
                epochs: 30,
                batch_size: 16,
                seed: 0,
                l2: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpeModel {
    pub mlp: MlpParams,
    pub alpha: f64,
    pub use_image: bool,
    pub train_config: TrainConfig,
}

impl NpeModel {
    pub fn new(mlp: MlpParams, alpha: f64, use_image: bool, train_config: TrainConfig) -> Result<Self> {
        if mlp.output != OutputActivation::Relu {
            return Err(Error::invalid("position embeddings need a terminal ReLU"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            mlp,
            alpha,
            use_image,
            train_config,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Embedding with every coordinate `>= 0`.
    pub fn embed(&self, features: &[f64]) -> Result<Vector> {
        self.mlp.forward(features)
    }

    /// Total order penalty of a story laid out in its gold order.
    pub fn story_loss(&self, story: &Story) -> Result<f64> {
        let embeddings = story
            .gold_ordered_features(self.use_image)?
            .iter()
            .map(|x| self.embed(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(order_story_loss(&embeddings, self.alpha)?.0)
    }

    /// `s[i][j] = -L_ij` over the given element features.
    pub fn pair_scores(&self, features: &[Vector]) -> Result<PairScoreMatrix> {
        let embeddings = features.iter().map(|x| self.embed(x)).collect::<Result<Vec<_>>>()?;
        scores_from_embeddings(&embeddings, self.alpha)
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

pub fn npe_pair_loss(x_i: &[f64], x_j: &[f64], alpha: f64) -> Result<f64> {
    order_pair_loss(x_i, x_j, alpha)
}

pub fn scores_from_embeddings(embeddings: &[Vector], alpha: f64) -> Result<PairScoreMatrix> {
    PairScoreMatrix::from_fn(embeddings.len(), |i, j| {
        Ok(-order_pair_loss(&embeddings[i], &embeddings[j], alpha)?)
    })
}

pub fn order_training_data(stories: &[Story], use_image: bool, alpha: f64) -> Result<TrainingData> {
    let stories = stories
        .iter()
        .map(|s| s.gold_ordered_features(use_image))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingData::NpeOrder { stories, alpha })
}

pub fn train_npe(stories: &[Story], cfg: &NpeConfig) -> Result<NpeModel> {
    cfg.train.validate()?;
    if cfg.embed_dim == 0 {
        return Err(Error::invalid("embed_dim must be at least 1"));
    }
    let dims = dataset_dims(stories)?;
    let input = dims.input_dim(cfg.use_image)?;
    let data = order_training_data(stories, cfg.use_image, cfg.alpha)?;
    let init = MlpParams::init(
        &[input, cfg.hidden, cfg.embed_dim],
        OutputActivation::Relu,
        &mut cfg.train.init_rng(),
    )?;
    let mlp = sgd_train(init, &data, &cfg.train)?;
    NpeModel::new(mlp, cfg.alpha, cfg.use_image, cfg.train.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::neural::grad_check;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_embedder(dim: usize) -> NpeModel {
        let mut w = vec![0.0; dim * dim];
        for k in 0..dim {
            w[k * dim + k] = 1.0;
        }
        let mlp = MlpParams::from_parts(vec![dim, dim], vec![w], vec![vec![0.0; dim]], OutputActivation::Relu).unwrap();
        NpeModel::new(mlp, 1.0, false, TrainConfig::default()).unwrap()
    }

    #[test]
    fn embed_cases() {
        let zero = NpeModel::new(
            MlpParams::zeros(&[3, 4, 2], OutputActivation::Relu).unwrap(),
            1.0,
            false,
            TrainConfig::default(),
        )
        .unwrap();
        assert_eq!(zero.embed(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let id = identity_embedder(3);
        assert_eq!(id.embed(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, 0.0, 0.25]);
        assert!(id.embed(&[1.0]).is_err());
        assert!(NpeModel::new(
            MlpParams::zeros(&[3, 2], OutputActivation::Identity).unwrap(),
            1.0,
            false,
            TrainConfig::default()
        )
        .is_err());
    }

    #[test]
    fn embeddings_are_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mlp = MlpParams::init(&[5, 8, 6], OutputActivation::Relu, &mut rng).unwrap();
        let model = NpeModel::new(mlp, 1.0, false, TrainConfig::default()).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-10.0..10.0)).collect();
            assert!(model.embed(&x).unwrap().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn pair_loss_cases() {
        assert_eq!(npe_pair_loss(&[2.0; 4], &[2.0; 4], 1.0).unwrap(), 4.0);
        assert_eq!(npe_pair_loss(&[0.5, 1.0], &[1.5, 2.0], 1.0).unwrap(), 0.0);
        assert_eq!(npe_pair_loss(&[0.0, 0.0], &[0.5, 2.0], 1.0).unwrap(), 0.25);
    }

    fn story_with_text(rows: Vec<Vec<f64>>) -> Story {
        let n = rows.len();
        let elements = rows
            .into_iter()
            .enumerate()
            .map(|(g, text)| crate::data::Element {
                element_id: format!("e{g}"),
                gold_position: g,
                text_features: text,
                image_features: None,
            })
            .collect();
        Story::new("t".into(), elements, Permutation::identity(n).unwrap()).unwrap()
    }

    #[test]
    fn story_loss_cases() {
        let model = identity_embedder(4);
        let same = story_with_text(vec![vec![0.5; 4]; 5]);
        assert_eq!(model.story_loss(&same).unwrap(), 40.0);
        let spread = story_with_text((0..5).map(|g| vec![g as f64 * 1.25; 4]).collect());
        assert_eq!(model.story_loss(&spread).unwrap(), 0.0);
        let pair = story_with_text(vec![vec![0.0, 0.0, 0.0, 0.0], vec![0.5, 2.0, 0.0, 1.0]]);
        assert_eq!(
            model.story_loss(&pair).unwrap(),
            npe_pair_loss(&[0.0; 4], &[0.5, 2.0, 0.0, 1.0], 1.0).unwrap()
        );
    }

    #[test]
    fn scores_from_monotone_embeddings() {
        let model = identity_embedder(3);
        let same = vec![vec![1.0; 3]; 5];
        let s = model.pair_scores(&same).unwrap();
        let off: Vec<f64> = (0..5)
            .flat_map(|i| (0..5).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s.get(i, j))
            .collect();
        assert!(off.iter().all(|&v| v == off[0]));
        assert_eq!(decode_pairwise(&s).unwrap(), Permutation::identity(5).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let gold = Permutation::random(5, &mut rng).unwrap();
            let feats: Vec<Vector> = (0..5).map(|i| vec![gold.position(i) as f64; 3]).collect();
            let s = model.pair_scores(&feats).unwrap();
            assert_eq!(decode_pairwise(&s).unwrap(), gold);
            assert_ne!(s.get(0, 1), -s.get(1, 0));
        }
    }

    // Piecewise quadratic in each coordinate: central differences are exact between kinks.
    // Output biases have an exactly zero gradient (the loss is translation invariant), so
    // the check is only meaningful while roundoff in the loss stays well below
    // 1e-8 * 2 * eps; keeping the loss small (alpha = 0.5, short stories) ensures that.
    #[test]
    fn story_loss_gradient_matches_finite_differences() {
        let eps = 1e-3;
        let alpha = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut checked = 0;
        while checked < 10 {
            let stories: Vec<Vec<Vector>> = (0..2)
                .map(|_| {
                    (0..3)
                        .map(|g| (0..3).map(|_| g as f64 * 0.3 + rng.random_range(-0.5..0.5)).collect())
                        .collect()
                })
                .collect();
            let mut params = MlpParams::init(&[3, 6, 3], OutputActivation::Relu, &mut rng).unwrap();
            let bumped: Vec<f64> = params.to_flat().iter().map(|w| w + 0.1).collect();
            params.set_flat(&bumped).unwrap();
            let safe = stories.iter().all(|story| {
                let emb: Vec<Vector> = story.iter().map(|x| params.forward(x).unwrap()).collect();
                let residual_ok = (0..emb.len()).all(|i| {
                    (i + 1..emb.len()).all(|j| {
                        emb[i]
                            .iter()
                            .zip(&emb[j])
                            .all(|(a, b)| (alpha - (b - a)).abs() > 50.0 * eps)
                    })
                });
                residual_ok
                    && story
                        .iter()
                        .all(|x| params.forward_cached(x).unwrap().kink_margin(params.output) > 50.0 * eps)
            });
            if !safe {
                continue;
            }
            let data = TrainingData::NpeOrder { stories, alpha };
            let err = grad_check(|p| data.objective(p, &[0, 1], 0.0), &params, eps).unwrap();
            assert!(err < 1e-4, "max relative error {err}");
            checked += 1;
        }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let spec = SyntheticSpec {
            story_count: 60,
            text_dim: 6,
            image_dim: 2,
            seed: 8,
            ..Default::default()
        };
        let stories = generate_synthetic(&spec).unwrap();
        let mut cfg = NpeConfig {
            embed_dim: 8,
            hidden: 16,
            ..Default::default()
        };
        cfg.train.epochs = 50;
        let init = MlpParams::init(&[6, 16, 8], OutputActivation::Relu, &mut cfg.train.init_rng()).unwrap();
        let untrained = NpeModel::new(init, cfg.alpha, false, cfg.train.clone()).unwrap();
        let trained = train_npe(&stories, &cfg).unwrap();
        let mean = |m: &NpeModel| stories.iter().map(|s| m.story_loss(s).unwrap()).sum::<f64>() / stories.len() as f64;
        assert!(mean(&trained) < mean(&untrained));
        assert_eq!(trained, train_npe(&stories, &cfg).unwrap());
    }

    proptest! {
        #[test]
        fn telescoping_gaps_give_zero_loss(
            start in prop::collection::vec(0.0f64..2.0, 4),
            steps in prop::collection::vec(prop::collection::vec(1.0f64..2.0, 4), 1..7),
        ) {
            let mut embeddings = vec![start];
            for step in &steps {
                let prev = embeddings.last().unwrap();
                embeddings.push(prev.iter().zip(step).map(|(a, b)| a + b).collect());
            }
            // The certificate is about stored values, so check the gaps after rounding.
            prop_assume!(embeddings.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b - a >= 1.0)));
            prop_assert_eq!(order_story_loss(&embeddings, 1.0).unwrap().0, 0.0);
        }

        #[test]
        fn loss_is_translation_invariant(
            e in prop::collection::vec(prop::collection::vec(0.0f64..3.0, 3), 2..6),
            shift in prop::collection::vec(0.0f64..5.0, 3),
        ) {
            let moved: Vec<Vector> = e.iter().map(|x| x.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
            let a = order_story_loss(&e, 1.0).unwrap().0;
            let b = order_story_loss(&moved, 1.0).unwrap().0;
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
