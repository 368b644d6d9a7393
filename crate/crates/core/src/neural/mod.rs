//! Small fully connected networks trained from scratch.

mod gradcheck;
mod loss;
mod mlp;
mod train;

pub use gradcheck::grad_check;
pub use loss::{hinge, order_pair_loss, order_story_loss, softmax, softmax_cross_entropy};
pub use mlp::{mlp_forward, ForwardCache, MlpParams, OutputActivation};
pub use train::{sgd_train, TrainConfig, TrainingData};

/// Hidden width used by every model unless configured otherwise.
pub const DEFAULT_HIDDEN: usize = 64;
