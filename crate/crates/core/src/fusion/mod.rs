//! Gaze and scene fusion: heatmaps, scene features, the fused tensor, and the
//! trainable head that turns them into an attention decision.

pub mod heatmap;
pub mod model;
pub mod scene;
pub mod train;

pub use heatmap::{build_gaze_stack, gaussian_heatmap, recency_weights, GazeHeatmap, GRID};
pub use model::{classify_attention, AttentionDecision, DecisionStage, FusionModel, ModelDims};
pub use scene::{fuse, scene_features, FusedTensor, ReferenceExtractor, SceneExtractor, SceneFeatures};
pub use train::{train_head, Example, TrainConfig, TrainedHead};
