//! Unsupervised network estimator.
//!
//! A small convolutional network reads the observations together with the
//! pilot information the receiver has and outputs `(θ̂, σ̂², ξ̂)`. It is
//! trained without labels, directly on the least-squares residual (DML mode)
//! or on the covariance likelihood (SML mode).

pub mod dataset;
pub mod features;
pub mod gradcheck;
pub mod loss;
pub mod model_file;
pub mod network;
pub mod optim;
pub mod tape;
pub mod train;

pub use dataset::{generate_dataset, Dataset, DatasetSpec, Sample, Truth};
pub use features::{build_input_tensor, build_pilot_feature, FeatureTensor, PilotFeature, PilotMode, Standardization};
pub use gradcheck::{gradient_check, tiny_gradient_check, GradCheck};
pub use loss::{dml_sample_loss, evaluate_batch, sml_sample_loss, BatchEval, LossContext};
pub use model_file::{load_model, model_from_str, model_to_string, save_model};
pub use network::{squash, HeadOutput, HeadScales, NetworkConfig, NetworkParameters};
pub use optim::{AdamState, AdamW};
pub use train::{evaluate_mae, fit, fit_with, mae_degrees, train, EpochStats, TrainConfig, TrainReport, TrainedModel};
