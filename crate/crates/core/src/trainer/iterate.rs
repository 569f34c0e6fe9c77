//! Iterative rounds: sample responses per instruction, score them, build a
//! fresh preference dataset from the best/worst samples, and train on it
//! with unchanged hyperparameters.

use thiserror::Error;

use crate::dataset::{
    validate_pair, AnnotatedResponse, AnnotationProvenance, PreferencePair, ScoreMatrix, Segment,
    Utterance,
};
use crate::policy::{sample, PolicyParams, SampleOptions, Vocab};
use crate::reward::representative_score;
use crate::segmenter::segment_response;
use crate::trainer::{prompt_text, train, TrainError, TrainOutcome, TrainingConfig};

/// Produces a full score matrix for a segmented response. Implementations
/// range from scripted ground-truth scorers to remote judge models.
pub trait ResponseScorer {
    fn score(
        &self,
        history: &[Utterance],
        segments: &[Segment],
    ) -> Result<ScoreMatrix, ScorerError>;

    fn name(&self) -> String {
        "scorer".to_string()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("scorer failure: {0}")]
pub struct ScorerError(pub String);

/// One round of sample-score-train.
#[derive(Debug, Clone)]
pub struct IterationRound {
    pub index: usize,
    pub instructions: Vec<Vec<Utterance>>,
    /// Responses sampled per instruction; at least 2 (a best and a worst).
    pub samples_per_instruction: usize,
}

#[derive(Debug, Error)]
pub enum IterateError {
    #[error("round needs at least 2 samples per instruction, got {0}")]
    TooFewSamples(usize),
    #[error("round has no instructions")]
    NoInstructions,
    #[error("instruction {instruction}: {source}")]
    Scorer {
        instruction: usize,
        #[source]
        source: ScorerError,
    },
    #[error("degenerate round: {0}")]
    DegenerateRound(String),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Dataset built by a round plus the training outcome on it.
#[derive(Debug)]
pub struct RoundOutcome {
    pub dataset: Vec<PreferencePair>,
    /// Representative score of every sample, per instruction, in sampling
    /// order; audit trail for the best/worst selection.
    pub sample_scores: Vec<Vec<f64>>,
    pub outcome: TrainOutcome,
}

fn mix_seed(seed: u64, round: usize, instruction: usize, sample_idx: usize, attempt: usize) -> u64 {
    let mut h = seed ^ 0x9e3779b97f4a7c15;
    for v in [round as u64, instruction as u64, sample_idx as u64, attempt as u64] {
        h ^= v.wrapping_add(0x9e3779b97f4a7c15)
            .wrapping_add(h << 6)
            .wrapping_add(h >> 2);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Run one iterative round and train on the resulting dataset.
///
/// Per instruction: sample `samples_per_instruction` responses, score each
/// with the scorer, rank by representative score, and pair the best with the
/// worst (ties break toward the earlier sample). Training reuses the given
/// config unchanged.
pub fn iterate_round(
    params: PolicyParams,
    vocab: &Vocab,
    round: &IterationRound,
    config: &TrainingConfig,
    scorer: &dyn ResponseScorer,
) -> Result<RoundOutcome, IterateError> {
    if round.samples_per_instruction < 2 {
        return Err(IterateError::TooFewSamples(round.samples_per_instruction));
    }
    if round.instructions.is_empty() {
        return Err(IterateError::NoInstructions);
    }
    let weights = config
        .effective_weights()
        .map_err(|e| TrainError::Data(e.to_string()))?;

    let mut dataset = Vec::with_capacity(round.instructions.len());
    let mut sample_scores = Vec::with_capacity(round.instructions.len());
    for (i, history) in round.instructions.iter().enumerate() {
        let prompt_ids = vocab
            .encode(&prompt_text(history))
            .map_err(|e| TrainError::Data(format!("instruction {i}: {e}")))?;

        let mut candidates: Vec<(String, Vec<Segment>, ScoreMatrix, f64)> = Vec::new();
        for j in 0..round.samples_per_instruction {
            // A freshly warmed-up policy can emit whitespace-only text;
            // retry on derived seeds before giving up on the round.
            let mut produced = None;
            for attempt in 0..4 {
                let opts = SampleOptions {
                    temperature: config.sample_temperature,
                    top_p: config.sample_top_p,
                    max_tokens: config.max_sample_tokens,
                    min_tokens: 1,
                    seed: mix_seed(config.seed, round.index, i, j, attempt),
                };
                let ids = sample(&params, &prompt_ids, &opts).map_err(TrainError::Policy)?;
                let text = vocab
                    .decode(&ids)
                    .map_err(|e| TrainError::Data(format!("instruction {i}: {e}")))?;
                if let Ok(segments) = segment_response(&text) {
                    produced = Some((text, segments));
                    break;
                }
            }
            let Some((text, segments)) = produced else {
                return Err(IterateError::DegenerateRound(format!(
                    "instruction {i}: sample {j} was empty on every attempt"
                )));
            };
            let matrix = scorer
                .score(history, &segments)
                .map_err(|source| IterateError::Scorer {
                    instruction: i,
                    source,
                })?;
            let score = representative_score(&matrix, &weights)
                .map_err(|e| TrainError::Data(format!("instruction {i}: {e}")))?;
            candidates.push((text, segments, matrix, score));
        }

        if candidates.windows(2).all(|w| w[0].0 == w[1].0) {
            return Err(IterateError::DegenerateRound(format!(
                "instruction {i}: all {} samples identical",
                candidates.len()
            )));
        }

        // Highest representative score wins, lowest loses; ties break toward
        // the earlier sample index. If every score ties, the worst falls back
        // to the earliest non-best sample.
        let mut best = 0usize;
        let mut worst = 0usize;
        for (j, c) in candidates.iter().enumerate() {
            if c.3 > candidates[best].3 {
                best = j;
            }
            if c.3 < candidates[worst].3 {
                worst = j;
            }
        }
        if worst == best {
            worst = (0..candidates.len()).find(|&j| j != best).expect(">= 2 samples");
        }

        let (_, best_segments, best_matrix, _) = candidates[best].clone();
        let (_, worst_segments, worst_matrix, _) = candidates[worst].clone();
        let pair = PreferencePair {
            id: format!("round{}-inst{}", round.index, i),
            history: history.clone(),
            chosen: AnnotatedResponse::new(best_segments, best_matrix),
            rejected: AnnotatedResponse::new(worst_segments, worst_matrix),
            provenance: Some(AnnotationProvenance {
                judge: scorer.name(),
                scored_jointly: false,
                completeness_repaired_chosen: false,
                completeness_repaired_rejected: false,
            }),
            extra: serde_json::Map::new(),
        };
        let report = validate_pair(&pair);
        if !report.is_clean() {
            return Err(IterateError::Scorer {
                instruction: i,
                source: ScorerError(format!("scorer produced an invalid matrix: {report}")),
            });
        }
        sample_scores.push(candidates.iter().map(|c| c.3).collect());
        dataset.push(pair);
    }

    let outcome = train(config, vocab, &dataset, params)?;
    Ok(RoundOutcome {
        dataset,
        sample_scores,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MAX_SCORE;

    struct FixedScorer;

    impl ResponseScorer for FixedScorer {
        fn score(
            &self,
            _history: &[Utterance],
            segments: &[Segment],
        ) -> Result<ScoreMatrix, ScorerError> {
            Ok(ScoreMatrix(
                (0..segments.len()).map(|_| [MAX_SCORE; 5]).collect(),
            ))
        }
    }

    #[test]
    fn too_few_samples_is_rejected() {
        let vocab = crate::synthetic::vocab();
        let params = crate::policy::PolicyParams::init(
            crate::policy::PolicyShape {
                vocab: vocab.len(),
                dim: 4,
                hidden: 4,
                window: 2,
            },
            0,
        );
        let round = IterationRound {
            index: 0,
            instructions: vec![vec![Utterance::user("tell me about alpha.")]],
            samples_per_instruction: 1,
        };
        let err = iterate_round(params, &vocab, &round, &TrainingConfig::default(), &FixedScorer)
            .unwrap_err();
        assert!(matches!(err, IterateError::TooFewSamples(1)));
    }

    #[test]
    fn argmax_argmin_selection_by_representative_score() {
        // Hand ranking: scores [0.9, 0.4, 0.7, 0.2] -> best 0, worst 3.
        let scores = [0.9, 0.4, 0.7, 0.2];
        let mut best = 0;
        let mut worst = 0;
        for (j, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = j;
            }
            if s < scores[worst] {
                worst = j;
            }
        }
        assert_eq!((best, worst), (0, 3));
    }
}
