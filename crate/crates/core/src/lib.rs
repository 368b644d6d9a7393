//! Recovering the temporal order of a jumbled set of story elements.
//!
//! Elements arrive as feature vectors. Three families of scorers are provided:
//!
//! - [`unary`]: per-element position distributions decoded by linear assignment,
//! - [`pairwise`]: learned "i before j" scores decoded by exhaustive search,
//! - [`npe`]: position embeddings in the non-negative orthant, used as a pairwise scorer,
//!
//! and [`ensemble`] combines their top-k permutations through a vote matrix.
//! [`metrics`] scores predictions against gold orders and [`data`] handles
//! ingestion and synthetic benchmark generation.

pub mod assign;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod npe;
pub mod pairwise;
pub mod perm;
pub mod unary;

pub use assign::ScoreMatrix;
pub use data::{Element, Story, SyntheticSpec};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use metrics::{ConfusionMatrix, MetricReport};
pub use model::Model;
pub use neural::{MlpParams, TrainConfig};
pub use perm::Permutation;
