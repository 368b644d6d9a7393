//! Trained models behind one type, and their JSON checkpoint format.
//!
//! ```text
//! {"model_kind":"npe","layer_dims":[32,64,32],"weights":[[...],[...]],"biases":[[...],[...]],
//!  "output_activation":"relu","use_image":false,"alpha":1.0,"margin":null,
//!  "train_config":{"learning_rate":0.002,"epochs":30,"batch_size":16,"seed":7,"l2":0.0}}
//! ```
//!
//! Weight arrays are row-major, one per layer, shaped `layer_dims[l+1] x layer_dims[l]`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureDims, Story};
use crate::ensemble::Ranker;
use crate::error::{Error, Result};
use crate::neural::{MlpParams, OutputActivation, TrainConfig};
use crate::npe::NpeModel;
use crate::pairwise::PairwiseModel;
use crate::perm::Permutation;
use crate::unary::UnaryModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Unary,
    Pairwise,
    Npe,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Unary => "unary",
            ModelKind::Pairwise => "pairwise",
            ModelKind::Npe => "npe",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Unary(UnaryModel),
    Pairwise(PairwiseModel),
    Npe(NpeModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model_kind: ModelKind,
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub output_activation: OutputActivation,
    pub use_image: bool,
    pub alpha: Option<f64>,
    pub margin: Option<f64>,
    pub train_config: TrainConfig,
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Unary(_) => ModelKind::Unary,
            Model::Pairwise(_) => ModelKind::Pairwise,
            Model::Npe(_) => ModelKind::Npe,
        }
    }

    pub fn mlp(&self) -> &MlpParams {
        match self {
            Model::Unary(m) => &m.mlp,
            Model::Pairwise(m) => &m.mlp,
            Model::Npe(m) => &m.mlp,
        }
    }

    pub fn use_image(&self) -> bool {
        match self {
            Model::Unary(m) => m.use_image,
            Model::Pairwise(m) => m.use_image,
            Model::Npe(m) => m.use_image,
        }
    }

    /// Checks that stories of shape `dims` can be fed to this model.
    pub fn check_compatible(&self, dims: &FeatureDims) -> Result<()> {
        let input = dims.input_dim(self.use_image())?;
        let expected = match self {
            Model::Pairwise(m) => m.feature_dim(),
            _ => self.mlp().input_dim(),
        };
        if input != expected {
            return Err(Error::invalid(format!(
                "{} model expects {expected} features per element, dataset provides {input}",
                self.kind().as_str()
            )));
        }
        if let Model::Unary(m) = self {
            if m.n() != dims.n {
                return Err(Error::invalid(format!(
                    "unary model orders {} elements, dataset stories have {}",
                    m.n(),
                    dims.n
                )));
            }
        }
        Ok(())
    }

    /// Predicted order in element index space.
    pub fn predict(&self, story: &Story) -> Result<Permutation> {
        match self {
            Model::Unary(m) => m.predict(story),
            Model::Pairwise(m) => m.predict(story),
            Model::Npe(m) => m.predict(story),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mlp = self.mlp();
        let (alpha, margin, train_config) = match self {
            Model::Unary(m) => (None, None, m.train_config.clone()),
            Model::Pairwise(m) => (None, Some(m.margin), m.train_config.clone()),
            Model::Npe(m) => (Some(m.alpha), None, m.train_config.clone()),
        };
        Checkpoint {
            model_kind: self.kind(),
            layer_dims: mlp.layer_dims.clone(),
            weights: mlp.weights.iter().map(|w| w.data().to_vec()).collect(),
            biases: mlp.biases.clone(),
            output_activation: mlp.output,
            use_image: self.use_image(),
            alpha,
            margin,
            train_config,
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        let mlp = MlpParams::from_parts(c.layer_dims, c.weights, c.biases, c.output_activation)?;
        match c.model_kind {
            ModelKind::Unary => Ok(Model::Unary(UnaryModel::new(mlp, c.use_image, c.train_config)?)),
            ModelKind::Pairwise => {
                let margin = c
                    .margin
                    .ok_or_else(|| Error::invalid("pairwise checkpoint without margin"))?;
                Ok(Model::Pairwise(PairwiseModel::new(
                    mlp,
                    c.use_image,
                    margin,
                    c.train_config,
                )?))
            }
            ModelKind::Npe => {
                let alpha = c.alpha.ok_or_else(|| Error::invalid("npe checkpoint without alpha"))?;
                Ok(Model::Npe(NpeModel::new(mlp, alpha, c.use_image, c.train_config)?))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_checkpoint())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl Ranker for Model {
    fn name(&self) -> String {
        self.kind().as_str().to_string()
    }

    fn top_k_slots(&self, story: &Story, k: usize) -> Result<Vec<(Permutation, f64)>> {
        match self {
            Model::Unary(m) => m.top_k_slots(story, k),
            Model::Pairwise(m) => m.top_k_slots(story, k),
            Model::Npe(m) => m.top_k_slots(story, k),
        }
    }
}

impl From<UnaryModel> for Model {
    fn from(m: UnaryModel) -> Self {
        Model::Unary(m)
    }
}

impl From<PairwiseModel> for Model {
    fn from(m: PairwiseModel) -> Self {
        Model::Pairwise(m)
    }
}

impl From<NpeModel> for Model {
    fn from(m: NpeModel) -> Self {
        Model::Npe(m)
    }
}
