//! Post-training evaluation: sequence rewards, per-segment implicit rewards,
//! sequential KL, and the rank agreement between implicit and annotated
//! segment rewards.

use serde::{Deserialize, Serialize};

use crate::dataset::PreferencePair;
use crate::loss::{implicit_token_rewards, sequence_reward};
use crate::policy::{response_log_ratios, sequential_kl, PolicyParams, Vocab};
use crate::reward::RejectedRewardMode;
use crate::trainer::{prepare_pair, reward_accuracy, TrainError, TrainingConfig};

/// Implicit-reward summary of one chosen-response segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEval {
    pub segment: usize,
    /// Weighted annotated reward of this segment.
    pub annotated_reward: f64,
    /// Mean per-token implicit reward over the segment's tokens.
    pub mean_implicit_reward: f64,
    pub token_rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEval {
    pub id: String,
    pub chosen_sequence_reward: f64,
    pub rejected_sequence_reward: f64,
    pub kl_chosen: f64,
    pub kl_rejected: f64,
    pub chosen_segments: Vec<SegmentEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: Vec<PairEval>,
    pub reward_accuracy: f64,
    pub mean_margin: f64,
    /// Rank correlation between per-segment mean implicit rewards and the
    /// annotated segment rewards over all chosen responses; absent when the
    /// inputs are degenerate (zero variance).
    pub spearman: Option<f64>,
    pub spearman_degenerate: bool,
    /// How the KL columns are aggregated over positions.
    pub kl_definition: String,
}

/// Average ranks (1-based), ties sharing their mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = mean_rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties. `None` when the
/// lengths differ, fewer than two points exist, or either side has zero
/// variance.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mean) * (b - mean);
        var_x += (a - mean) * (a - mean);
        var_y += (b - mean) * (b - mean);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return None;
    }
    Some(cov / (var_x * var_y).sqrt())
}

/// Evaluate a trained policy against its frozen reference on a dataset.
pub fn evaluate(
    params: &PolicyParams,
    reference: &PolicyParams,
    vocab: &Vocab,
    dataset: &[PreferencePair],
    config: &TrainingConfig,
) -> Result<EvalReport, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::Data("empty dataset".to_string()));
    }
    let weights = config
        .effective_weights()
        .map_err(|e| TrainError::Data(e.to_string()))?;
    let beta = config.beta_target;

    let mut pairs = Vec::with_capacity(dataset.len());
    let mut margins = Vec::with_capacity(dataset.len());
    let mut implicit_points = Vec::new();
    let mut annotated_points = Vec::new();
    for record in dataset {
        // Rewards here are the annotated per-segment scalars; the rejected
        // transform is irrelevant to chosen-side correlation.
        let prepared = prepare_pair(vocab, record, &weights, RejectedRewardMode::Raw)?;
        let ratios_chosen =
            response_log_ratios(params, reference, &prepared.prompt, &prepared.chosen)?;
        let ratios_rejected =
            response_log_ratios(params, reference, &prepared.prompt, &prepared.rejected)?;
        let token_rewards = implicit_token_rewards(&ratios_chosen, beta);

        let mut segments = Vec::with_capacity(prepared.chosen_spans.len());
        for (k, span) in prepared.chosen_spans.iter().enumerate() {
            let slice = &token_rewards[span.indices()];
            let mean = slice.iter().sum::<f64>() / span.len as f64;
            segments.push(SegmentEval {
                segment: k,
                annotated_reward: prepared.chosen_rewards[k],
                mean_implicit_reward: mean,
                token_rewards: slice.to_vec(),
            });
            implicit_points.push(mean);
            annotated_points.push(prepared.chosen_rewards[k]);
        }

        let seq_w = sequence_reward(&ratios_chosen, beta);
        let seq_l = sequence_reward(&ratios_rejected, beta);
        margins.push(seq_w - seq_l);
        pairs.push(PairEval {
            id: prepared.id.clone(),
            chosen_sequence_reward: seq_w,
            rejected_sequence_reward: seq_l,
            kl_chosen: sequential_kl(params, reference, &prepared.prompt, &prepared.chosen)?,
            kl_rejected: sequential_kl(params, reference, &prepared.prompt, &prepared.rejected)?,
            chosen_segments: segments,
        });
    }

    let rho = spearman(&implicit_points, &annotated_points);
    Ok(EvalReport {
        reward_accuracy: reward_accuracy(&margins)?,
        mean_margin: margins.iter().sum::<f64>() / margins.len() as f64,
        spearman: rho,
        spearman_degenerate: rho.is_none(),
        kl_definition: "sum_over_response_positions".to_string(),
        pairs,
    })
}

/// Short human-readable summary of a report.
pub fn summarize(report: &EvalReport) -> String {
    let rho = match report.spearman {
        Some(r) => format!("{r:.4}"),
        None => "n/a (degenerate)".to_string(),
    };
    let mean_kl_chosen: f64 =
        report.pairs.iter().map(|p| p.kl_chosen).sum::<f64>() / report.pairs.len() as f64;
    let mean_kl_rejected: f64 =
        report.pairs.iter().map(|p| p.kl_rejected).sum::<f64>() / report.pairs.len() as f64;
    format!(
        "pairs: {}\nreward_accuracy: {:.4}\nmean_margin: {:.6}\nspearman(implicit vs annotated): {rho}\nmean_kl_chosen: {mean_kl_chosen:.6}\nmean_kl_rejected: {mean_kl_rejected:.6}\nkl_definition: {}\n",
        report.pairs.len(),
        report.reward_accuracy,
        report.mean_margin,
        report.kl_definition
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 30.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn spearman_known_values() {
        // Perfect monotone agreement and disagreement.
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[5.0, 3.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // Hand-computed: x = [1,2,3,4], y = [1,3,2,4] -> rho = 0.8.
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((rho - 0.8).abs() < 1e-12);
    }

    #[test]
    fn spearman_degenerate_inputs_are_none() {
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        assert_eq!(spearman(&[1.0], &[2.0]), None);
        assert_eq!(spearman(&[1.0, 2.0], &[1.0]), None);
    }

    #[test]
    fn identity_policy_reports_zero_rewards_and_flags_degenerate_correlation() {
        let vocab = synthetic::vocab();
        let dataset = synthetic::generate(&synthetic::SyntheticConfig {
            pairs: 4,
            seed: 1,
            ..synthetic::SyntheticConfig::default()
        });
        let config = TrainingConfig {
            dim: 8,
            hidden: 8,
            window: 4,
            ..TrainingConfig::default()
        };
        let params = crate::policy::PolicyParams::init(
            crate::policy::PolicyShape {
                vocab: vocab.len(),
                dim: 8,
                hidden: 8,
                window: 4,
            },
            0,
        );
        let reference = params.clone_reference();
        let report = evaluate(&params, &reference, &vocab, &dataset, &config).unwrap();
        assert_eq!(report.reward_accuracy, 0.0);
        assert_eq!(report.mean_margin, 0.0);
        for pair in &report.pairs {
            assert_eq!(pair.kl_chosen, 0.0);
            assert_eq!(pair.chosen_sequence_reward, 0.0);
        }
        // All implicit rewards are exactly zero: correlation is undefined.
        assert!(report.spearman.is_none());
        assert!(report.spearman_degenerate);
    }
}
