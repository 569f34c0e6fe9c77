//! Per-step training indicators and their append-only CSV form.

use serde::{Deserialize, Serialize};

/// One logged training step.
///
/// Rewards are sequence-level implicit rewards at the target temperature;
/// the margin is chosen minus rejected; accuracy is the fraction of batch
/// pairs with a strictly positive margin; the KL columns hold the sequential
/// KL (summed over response positions) against the frozen reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub loss: f64,
    pub chosen_reward: f64,
    pub rejected_reward: f64,
    pub reward_margin: f64,
    pub reward_accuracy: f64,
    pub kl_chosen: f64,
    pub kl_rejected: f64,
}

pub const CSV_HEADER: &str =
    "step,loss,chosen_reward,rejected_reward,reward_margin,reward_accuracy,kl_chosen,kl_rejected";

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.loss,
            self.chosen_reward,
            self.rejected_reward,
            self.reward_margin,
            self.reward_accuracy,
            self.kl_chosen,
            self.kl_rejected
        )
    }

    pub fn parse_csv_row(row: &str) -> Option<MetricsRecord> {
        let mut fields = row.split(',');
        let mut next = || fields.next().map(str::trim);
        Some(MetricsRecord {
            step: next()?.parse().ok()?,
            loss: next()?.parse().ok()?,
            chosen_reward: next()?.parse().ok()?,
            rejected_reward: next()?.parse().ok()?,
            reward_margin: next()?.parse().ok()?,
            reward_accuracy: next()?.parse().ok()?,
            kl_chosen: next()?.parse().ok()?,
            kl_rejected: next()?.parse().ok()?,
        })
    }
}

/// Whole metrics log as CSV text.
pub fn to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for record in records {
        out.push_str(&record.csv_row());
        out.push('\n');
    }
    out
}

/// Parse a CSV metrics log (header line required).
pub fn from_csv(text: &str) -> Option<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    if lines.next()?.trim() != CSV_HEADER {
        return None;
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(MetricsRecord::parse_csv_row)
        .collect()
}
