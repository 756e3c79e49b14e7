//! Audio-visual refinement of keypoint trajectories.

pub mod features;
pub mod model;
pub mod pitch;
pub mod train;

pub use features::{align_features, FeatureExtractor, FeatureSequence, MelStub};
pub use model::{FusionConfig, FusionModel, FusionOutput, PositionalEncoding};
pub use pitch::extract_pitch;
pub use train::{evaluate_fusion, fusion_loss, train_fusion, FusionReport, FusionSample, FusionTrainConfig};
