//! Reward algebra: Likert normalization, aspect weighting, segment
//! selection/pairing, the adaptive temperature rule, and representative
//! response scores.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Aspect, AspectVector, ScoreMatrix, MAX_SCORE};

/// Per-aspect mixing weights. Non-negative and summing to 1 (within 1e-9).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct AspectWeights([f64; 5]);

/// Default weights: helpfulness 0.3, correctness 0.4, safety/completeness/
/// clarity 0.1 each.
pub const DEFAULT_WEIGHTS: [f64; 5] = [0.3, 0.4, 0.1, 0.1, 0.1];

/// Helpfulness-only weights used by the single-aspect configuration.
pub const HELPFULNESS_ONLY_WEIGHTS: [f64; 5] = [1.0, 0.0, 0.0, 0.0, 0.0];

#[derive(Debug, Error, PartialEq)]
pub enum WeightError {
    #[error("weight for {aspect} is negative: {value}")]
    Negative { aspect: Aspect, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
}

impl AspectWeights {
    pub fn new(weights: [f64; 5]) -> Result<Self, WeightError> {
        for (j, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) {
                return Err(WeightError::Negative {
                    aspect: Aspect::ALL[j],
                    value: w,
                });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(WeightError::NotNormalized { sum });
        }
        Ok(AspectWeights(weights))
    }

    pub fn get(&self, aspect: Aspect) -> f64 {
        self.0[aspect.index()]
    }

    pub fn as_array(&self) -> [f64; 5] {
        self.0
    }
}

impl Default for AspectWeights {
    fn default() -> Self {
        AspectWeights(DEFAULT_WEIGHTS)
    }
}

impl TryFrom<[f64; 5]> for AspectWeights {
    type Error = WeightError;
    fn try_from(v: [f64; 5]) -> Result<Self, WeightError> {
        AspectWeights::new(v)
    }
}

impl From<AspectWeights> for [f64; 5] {
    fn from(w: AspectWeights) -> [f64; 5] {
        w.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("raw score {0} outside 0..=4")]
    OutOfRange(i64),
    #[error("empty response has no segments to select")]
    EmptyResponse,
    #[error("batch mean reward is not positive")]
    ZeroMeanReward,
}

/// Map a raw Likert point onto the unit interval: `raw / 4`.
pub fn normalize_score(raw: i64) -> Result<f64, RewardError> {
    if !(0..=MAX_SCORE).contains(&raw) {
        return Err(RewardError::OutOfRange(raw));
    }
    Ok(raw as f64 / MAX_SCORE as f64)
}

/// Collapse a normalized aspect vector to a scalar reward by dotting with the
/// weights. Monotone in every aspect with positive weight; output stays in
/// `[0, 1]` when inputs do.
pub fn weighted_reward(normalized: &[f64; 5], weights: &AspectWeights) -> f64 {
    let mut acc = 0.0;
    for j in 0..5 {
        acc += weights.0[j] * normalized[j];
    }
    acc
}

/// How the rejected response's segment scores enter the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectedRewardMode {
    /// Use the annotated score as-is: low-scoring rejected segments get small
    /// gradients.
    #[default]
    Raw,
    /// Use `1 - r`: the worst rejected segments get the strongest push-down.
    Inverted,
}

/// Apply the configured transform to a rejected-segment reward.
pub fn rejected_transform(reward: f64, mode: RejectedRewardMode) -> f64 {
    match mode {
        RejectedRewardMode::Raw => reward,
        RejectedRewardMode::Inverted => 1.0 - reward,
    }
}

/// One chosen/rejected segment pairing produced by selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedPair {
    /// Segment index within the chosen response.
    pub chosen_segment: usize,
    pub chosen_reward: f64,
    /// Segment index within the rejected response.
    pub rejected_segment: usize,
    pub rejected_reward: f64,
}

/// The N paired per-segment preference groups: the top-N chosen segments by
/// reward matched rank-for-rank with the bottom-N rejected segments, where
/// `N = min(S_w, S_l)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairedSelection {
    pub pairs: Vec<SelectedPair>,
}

impl PairedSelection {
    pub fn n(&self) -> usize {
        self.pairs.len()
    }
}

/// Select and pair segments for the grouped objective.
///
/// Chosen segments are ranked by descending reward, rejected by ascending
/// reward; ties break toward the lower segment index. The i-th best chosen
/// segment pairs with the i-th worst rejected segment.
pub fn select_segments(
    chosen_rewards: &[f64],
    rejected_rewards: &[f64],
) -> Result<PairedSelection, RewardError> {
    if chosen_rewards.is_empty() || rejected_rewards.is_empty() {
        return Err(RewardError::EmptyResponse);
    }
    let n = chosen_rewards.len().min(rejected_rewards.len());

    let mut chosen_order: Vec<usize> = (0..chosen_rewards.len()).collect();
    chosen_order.sort_by(|&a, &b| {
        chosen_rewards[b]
            .partial_cmp(&chosen_rewards[a])
            .expect("finite rewards")
            .then(a.cmp(&b))
    });
    let mut rejected_order: Vec<usize> = (0..rejected_rewards.len()).collect();
    rejected_order.sort_by(|&a, &b| {
        rejected_rewards[a]
            .partial_cmp(&rejected_rewards[b])
            .expect("finite rewards")
            .then(a.cmp(&b))
    });

    let pairs = (0..n)
        .map(|i| SelectedPair {
            chosen_segment: chosen_order[i],
            chosen_reward: chosen_rewards[chosen_order[i]],
            rejected_segment: rejected_order[i],
            rejected_reward: rejected_rewards[rejected_order[i]],
        })
        .collect();
    Ok(PairedSelection { pairs })
}

/// Rescale the base temperature so the batch-average effective temperature
/// equals the target: `beta_eff = beta_target / mean(rewards)`, which makes
/// `mean(beta_eff * r) = beta_target`.
pub fn adaptive_beta(segment_rewards: &[f64], beta_target: f64) -> Result<f64, RewardError> {
    if segment_rewards.is_empty() {
        return Err(RewardError::ZeroMeanReward);
    }
    let mean = segment_rewards.iter().sum::<f64>() / segment_rewards.len() as f64;
    if mean <= 0.0 {
        return Err(RewardError::ZeroMeanReward);
    }
    Ok(beta_target / mean)
}

/// Collapse a whole score matrix to one scalar for ranking sampled responses.
///
/// Per-aspect reduction over segments: helpfulness and correctness average,
/// safety takes the minimum, completeness and clarity take the last segment's
/// value. The reduced vector is then dotted with the weights.
pub fn representative_score(
    matrix: &ScoreMatrix,
    weights: &AspectWeights,
) -> Result<f64, RewardError> {
    let rows: Vec<AspectVector> = matrix
        .aspect_vectors()
        .map_err(|e| match e {
            crate::dataset::ScoreError::OutOfRange { value, .. } => RewardError::OutOfRange(value),
            crate::dataset::ScoreError::SafetyNotBinary { value } => {
                RewardError::OutOfRange(value)
            }
        })?;
    if rows.is_empty() {
        return Err(RewardError::EmptyResponse);
    }
    let normalized: Vec<[f64; 5]> = rows.iter().map(AspectVector::normalized).collect();
    let s = normalized.len();
    let mean = |j: usize| normalized.iter().map(|r| r[j]).sum::<f64>() / s as f64;
    let reduced = [
        mean(Aspect::Helpfulness.index()),
        mean(Aspect::Correctness.index()),
        normalized
            .iter()
            .map(|r| r[Aspect::Safety.index()])
            .fold(f64::INFINITY, f64::min),
        normalized[s - 1][Aspect::Completeness.index()],
        normalized[s - 1][Aspect::Clarity.index()],
    ];
    Ok(weighted_reward(&reduced, weights))
}

/// Weighted per-segment rewards for one response: normalize each row and dot
/// with the weights.
pub fn segment_rewards(
    matrix: &ScoreMatrix,
    weights: &AspectWeights,
) -> Result<Vec<f64>, RewardError> {
    matrix
        .0
        .iter()
        .map(|row| {
            let mut normalized = [0.0; 5];
            for (n, &v) in normalized.iter_mut().zip(row.iter()) {
                *n = normalize_score(v)?;
            }
            Ok(weighted_reward(&normalized, weights))
        })
        .collect()
}
