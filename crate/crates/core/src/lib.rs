//! Segment-by-aspect preference optimization toolkit.
//!
//! Preference pairs carry a two-dimensional score matrix — one row per
//! response segment, one column per quality aspect — and the training
//! objectives modulate the per-token temperature of the pairwise
//! log-sigmoid loss with those scores. The crate covers the whole desk-scale
//! loop: dataset schema and validation, sentence segmentation with token
//! alignment, judge-based annotation, reward algebra, losses with analytic
//! gradients, a small exactly-differentiable autoregressive policy, and the
//! training/evaluation drivers.

pub mod annotation;
pub mod dataset;
pub mod loss;
pub mod policy;
pub mod reward;
pub mod segmenter;
pub mod synthetic;
pub mod trainer;

pub use dataset::{
    AnnotatedResponse, Aspect, AspectVector, PreferencePair, ScoreMatrix, Segment, Utterance,
    ValidationReport,
};
pub use loss::{LossOutput, TokenLogRatios};
pub use reward::{AspectWeights, PairedSelection, RejectedRewardMode};
pub use segmenter::TokenSpan;
pub use trainer::{Method, MetricsRecord, TrainingConfig};
