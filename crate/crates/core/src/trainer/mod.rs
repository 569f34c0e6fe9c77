//! Training orchestration: preference optimization over a validated dataset
//! with a frozen reference policy, per-step indicators, and reproducible
//! file-based runs.

pub mod config;
pub mod evaluate;
pub mod iterate;
pub mod metrics;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::annotation::render_history;
use crate::dataset::{validate_dataset, PreferencePair, Utterance};
use crate::loss::{
    combined_loss, dpo_loss, grouped_two_d_loss, sequence_reward, two_d_loss, LossError,
    LossOutput, SftLoss, TokenLogRatios,
};
use crate::policy::checkpoint::{self, CheckpointError};
use crate::policy::optimizer::{optimize_step, OptimizerConfig, OptimizerState};
use crate::policy::sft::{sft_train, SftConfig, SftError};
use crate::policy::{
    accumulate_response_grads, response_log_probs, sequential_kl, PolicyError,
    PolicyGrads, PolicyParams, PolicyShape, Vocab,
};
use crate::reward::{
    adaptive_beta, rejected_transform, segment_rewards, select_segments, AspectWeights,
    PairedSelection, RejectedRewardMode, RewardError,
};
use crate::segmenter::{align_segments_merging, AlignError, TokenSpan};

pub use config::{ConfigError, Method, TrainingConfig};
pub use evaluate::{evaluate, spearman, EvalReport, PairEval, SegmentEval};
pub use iterate::{iterate_round, IterateError, IterationRound, ResponseScorer, RoundOutcome};
pub use metrics::MetricsRecord;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data error: {0}")]
    Data(String),
    #[error("non-finite loss at step {step} (pairs {pairs:?}); aborting")]
    NonFiniteLoss { step: u64, pairs: Vec<String> },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<SftError> for TrainError {
    fn from(e: SftError) -> Self {
        TrainError::Data(e.to_string())
    }
}

/// Canonical prompt text the policy conditions on: the rendered history plus
/// a trailing newline.
pub fn prompt_text(history: &[Utterance]) -> String {
    if history.is_empty() {
        return String::new();
    }
    let mut text = render_history(history);
    text.push('\n');
    text
}

/// One dataset record tokenized, aligned, and scored, ready for the loop.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub id: String,
    pub prompt: Vec<u32>,
    pub chosen: Vec<u32>,
    pub rejected: Vec<u32>,
    pub chosen_spans: Vec<TokenSpan>,
    pub rejected_spans: Vec<TokenSpan>,
    /// Weighted per-segment rewards of the chosen response.
    pub chosen_rewards: Vec<f64>,
    /// Weighted rejected rewards as annotated (selection ranks by these).
    pub rejected_rewards_annotated: Vec<f64>,
    /// Rejected rewards after the configured transform (the loss uses these).
    pub rejected_rewards: Vec<f64>,
    /// Selection for the grouped objective, rejected side already
    /// transformed.
    pub selection: PairedSelection,
}

fn data_err<'a, E: std::fmt::Display>(
    id: &'a str,
    what: &'a str,
) -> impl FnOnce(E) -> TrainError + 'a {
    move |e| TrainError::Data(format!("{id}: {what}: {e}"))
}

/// Tokenize, align, and score one pair against a vocabulary and weights.
pub fn prepare_pair(
    vocab: &Vocab,
    pair: &PreferencePair,
    weights: &AspectWeights,
    rejected_mode: RejectedRewardMode,
) -> Result<PreparedPair, TrainError> {
    let id = &pair.id;
    let prompt = vocab
        .encode(&prompt_text(&pair.history))
        .map_err(data_err(id, "prompt tokenization"))?;

    let mut sides = Vec::with_capacity(2);
    for (name, resp) in [("chosen", &pair.chosen), ("rejected", &pair.rejected)] {
        if resp.segments.len() != resp.scores.rows() {
            return Err(TrainError::Data(format!(
                "{id}: {name} has {} segments but {} score rows",
                resp.segments.len(),
                resp.scores.rows()
            )));
        }
        let text = resp.full_text();
        let pieces = vocab
            .tokenize(&text)
            .map_err(data_err(id, "response tokenization"))?;
        let ranges = crate::policy::byte_ranges(&pieces);
        let aligned = align_segments_merging(&resp.segments, &ranges)
            .map_err(data_err::<AlignError>(id, "segment alignment"))?;
        let kept_rows = crate::dataset::ScoreMatrix(
            aligned
                .source_indices
                .iter()
                .map(|&k| resp.scores.0[k])
                .collect(),
        );
        let rewards =
            segment_rewards(&kept_rows, weights).map_err(data_err::<RewardError>(id, name))?;
        let ids: Vec<u32> = pieces.iter().map(|p| p.id).collect();
        sides.push((ids, aligned.spans, rewards));
    }
    let (rejected_ids, rejected_spans, rejected_annotated) = sides.pop().expect("two sides");
    let (chosen_ids, chosen_spans, chosen_rewards) = sides.pop().expect("two sides");

    let rejected_rewards: Vec<f64> = rejected_annotated
        .iter()
        .map(|&r| rejected_transform(r, rejected_mode))
        .collect();

    // Selection ranks by the annotated score (top chosen, bottom rejected);
    // the stored rejected reward is the transformed one the loss consumes.
    let mut selection = select_segments(&chosen_rewards, &rejected_annotated)
        .map_err(data_err::<RewardError>(id, "segment selection"))?;
    for p in &mut selection.pairs {
        p.rejected_reward = rejected_transform(p.rejected_reward, rejected_mode);
    }

    Ok(PreparedPair {
        id: id.clone(),
        prompt,
        chosen: chosen_ids,
        rejected: rejected_ids,
        chosen_spans,
        rejected_spans,
        chosen_rewards,
        rejected_rewards_annotated: rejected_annotated,
        rejected_rewards,
        selection,
    })
}

/// Rewards that enter the objective for one pair under a method; the
/// adaptive temperature averages over exactly these.
fn loss_rewards(method: Method, pair: &PreparedPair) -> Vec<f64> {
    match method {
        Method::Dpo => Vec::new(),
        Method::OneDDpo | Method::TwoDDpo => pair
            .chosen_rewards
            .iter()
            .chain(&pair.rejected_rewards)
            .copied()
            .collect(),
        Method::TwoDDpoGrouped => pair
            .selection
            .pairs
            .iter()
            .flat_map(|p| [p.chosen_reward, p.rejected_reward])
            .collect(),
    }
}

fn pair_loss(
    method: Method,
    pair: &PreparedPair,
    ratios: &TokenLogRatios,
    beta: f64,
) -> Result<LossOutput, LossError> {
    match method {
        Method::Dpo => Ok(dpo_loss(ratios, beta)),
        Method::OneDDpo | Method::TwoDDpo => two_d_loss(
            ratios,
            &pair.chosen_spans,
            &pair.rejected_spans,
            &pair.chosen_rewards,
            &pair.rejected_rewards,
            beta,
        ),
        Method::TwoDDpoGrouped => grouped_two_d_loss(
            &pair.selection,
            &pair.chosen_spans,
            &pair.rejected_spans,
            ratios,
            beta,
        ),
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub reference: PolicyParams,
    pub metrics: Vec<MetricsRecord>,
}

/// Mean of the strict chosen-over-rejected indicator.
pub fn reward_accuracy(margins: &[f64]) -> Result<f64, TrainError> {
    if margins.is_empty() {
        return Err(TrainError::Data("empty batch".to_string()));
    }
    let wins = margins.iter().filter(|&&m| m > 0.0).count();
    Ok(wins as f64 / margins.len() as f64)
}

struct BatchEval {
    loss: f64,
    margins: Vec<f64>,
    chosen_reward: f64,
    rejected_reward: f64,
}

/// Forward pass plus gradient accumulation over one effective batch.
/// Gradients are scaled by `1 / batch_len` (the loss is the batch mean);
/// pass `grads = None` for a metrics-only pass.
fn run_batch(
    config: &TrainingConfig,
    params: &PolicyParams,
    reference: &PolicyParams,
    batch: &[&PreparedPair],
    mut grads: Option<&mut PolicyGrads>,
) -> Result<BatchEval, TrainError> {
    // Adaptive temperature over every segment reward in the batch objective.
    let beta = match config.method {
        Method::Dpo => config.beta_target,
        _ => {
            let rewards: Vec<f64> = batch
                .iter()
                .flat_map(|p| loss_rewards(config.method, p))
                .collect();
            adaptive_beta(&rewards, config.beta_target)
                .map_err(|e| TrainError::Data(format!("adaptive temperature: {e}")))?
        }
    };

    let scale = 1.0 / batch.len() as f64;
    let mut total_loss = 0.0;
    let mut margins = Vec::with_capacity(batch.len());
    let mut chosen_sum = 0.0;
    let mut rejected_sum = 0.0;
    for pair in batch {
        let lp_chosen = response_log_probs(params, &pair.prompt, &pair.chosen)?;
        let ratios = TokenLogRatios::new(
            lp_chosen
                .iter()
                .zip(&response_log_probs(reference, &pair.prompt, &pair.chosen)?)
                .map(|(a, b)| a - b)
                .collect(),
            response_log_probs(params, &pair.prompt, &pair.rejected)?
                .iter()
                .zip(&response_log_probs(reference, &pair.prompt, &pair.rejected)?)
                .map(|(a, b)| a - b)
                .collect(),
        );
        let pref = pair_loss(config.method, pair, &ratios, beta)
            .map_err(|e| TrainError::Data(format!("{}: {e}", pair.id)))?;
        let sft = SftLoss::from_log_probs(&lp_chosen);
        let total = combined_loss(&pref, &sft, config.sft_coeff);
        total_loss += total.loss * scale;

        // Indicators at the fixed target temperature, comparable across
        // methods and steps.
        let seq_w = sequence_reward(&ratios.chosen, config.beta_target);
        let seq_l = sequence_reward(&ratios.rejected, config.beta_target);
        margins.push(seq_w - seq_l);
        chosen_sum += seq_w * scale;
        rejected_sum += seq_l * scale;

        if let Some(grads) = grads.as_deref_mut() {
            let coeffs_chosen: Vec<f64> = total.grad_chosen.iter().map(|g| g * scale).collect();
            accumulate_response_grads(params, &pair.prompt, &pair.chosen, &coeffs_chosen, grads)?;
            let coeffs_rejected: Vec<f64> =
                total.grad_rejected.iter().map(|g| g * scale).collect();
            accumulate_response_grads(
                params,
                &pair.prompt,
                &pair.rejected,
                &coeffs_rejected,
                grads,
            )?;
        }
    }
    Ok(BatchEval {
        loss: total_loss,
        margins,
        chosen_reward: chosen_sum,
        rejected_reward: rejected_sum,
    })
}

fn metrics_record(
    params: &PolicyParams,
    reference: &PolicyParams,
    batch: &[&PreparedPair],
    step: u64,
    eval: &BatchEval,
) -> Result<MetricsRecord, TrainError> {
    let mut kl_chosen = 0.0;
    let mut kl_rejected = 0.0;
    for pair in batch {
        kl_chosen += sequential_kl(params, reference, &pair.prompt, &pair.chosen)?;
        kl_rejected += sequential_kl(params, reference, &pair.prompt, &pair.rejected)?;
    }
    kl_chosen /= batch.len() as f64;
    kl_rejected /= batch.len() as f64;
    Ok(MetricsRecord {
        step,
        loss: eval.loss,
        chosen_reward: eval.chosen_reward,
        rejected_reward: eval.rejected_reward,
        reward_margin: eval.chosen_reward - eval.rejected_reward,
        reward_accuracy: reward_accuracy(&eval.margins)?,
        kl_chosen,
        kl_rejected,
    })
}

/// Run the configured objective over a validated dataset.
///
/// Per optimizer step one effective batch of `batch_size * grad_accum` pairs
/// is accumulated serially in dataset order (reshuffled each epoch with the
/// run seed). Emits a metrics record at step 0 (before any update), every
/// `logging_interval` steps, and at the final step. Deterministic in the
/// seed.
pub fn train(
    config: &TrainingConfig,
    vocab: &Vocab,
    dataset: &[PreferencePair],
    init: PolicyParams,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::Data("empty dataset".to_string()));
    }
    for report in validate_dataset(dataset) {
        if !report.is_clean() {
            return Err(TrainError::Data(format!("invalid record: {report}")));
        }
    }
    let weights = config
        .effective_weights()
        .map_err(|e| TrainError::Data(e.to_string()))?;
    let prepared: Vec<PreparedPair> = dataset
        .iter()
        .map(|p| prepare_pair(vocab, p, &weights, config.rejected_mode))
        .collect::<Result<_, _>>()?;

    let reference = init.clone_reference();
    let mut params = init;
    let mut state = OptimizerState::new(
        params.shape,
        OptimizerConfig::new(config.learning_rate, config.steps),
    );

    let per_step = config.batch_size * config.grad_accum;
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let mut next_batch = |order: &mut Vec<usize>, rng: &mut ChaCha20Rng| -> Vec<usize> {
        let mut batch = Vec::with_capacity(per_step);
        while batch.len() < per_step {
            if cursor >= order.len() {
                order.shuffle(rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        batch
    };

    let mut metrics = Vec::new();

    // Step-0 record: the untouched policy on the first batch.
    let first_indices = next_batch(&mut order, &mut rng);
    let first_batch: Vec<&PreparedPair> = first_indices.iter().map(|&i| &prepared[i]).collect();
    let eval0 = run_batch(config, &params, &reference, &first_batch, None)?;
    metrics.push(metrics_record(&params, &reference, &first_batch, 0, &eval0)?);

    let mut pending: Option<Vec<usize>> = Some(first_indices);
    for step in 1..=config.steps {
        let indices = pending
            .take()
            .unwrap_or_else(|| next_batch(&mut order, &mut rng));
        let batch: Vec<&PreparedPair> = indices.iter().map(|&i| &prepared[i]).collect();
        let mut grads = PolicyGrads::zeros(params.shape);
        let eval = run_batch(config, &params, &reference, &batch, Some(&mut grads))?;
        if !eval.loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                step,
                pairs: batch.iter().map(|p| p.id.clone()).collect(),
            });
        }
        optimize_step(&mut params, &grads, &mut state).expect("shapes match");
        if step % config.logging_interval == 0 || step == config.steps {
            let record = metrics_record(&params, &reference, &batch, step, &eval)?;
            metrics.push(record);
        }
    }

    Ok(TrainOutcome {
        params,
        reference,
        metrics,
    })
}

/// Artifacts written by a file-based run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub outcome: TrainOutcome,
    pub policy_path: std::path::PathBuf,
    pub reference_path: std::path::PathBuf,
    pub metrics_path: std::path::PathBuf,
    pub config_path: std::path::PathBuf,
}

/// File-based run: load vocabulary, dataset, and the initial policy (or
/// supervised-train one from the dataset's chosen responses), train, and
/// write the checkpoint, metrics CSV, and resolved config into the output
/// directory. Re-running from the echoed config reproduces the metrics log
/// byte for byte.
pub fn run(config: &TrainingConfig) -> Result<RunArtifacts, TrainError> {
    config.validate()?;
    let vocab_path = config
        .vocab
        .as_ref()
        .ok_or_else(|| TrainError::Data("config has no vocab path".to_string()))?;
    let dataset_path = config
        .dataset
        .as_ref()
        .ok_or_else(|| TrainError::Data("config has no dataset path".to_string()))?;
    let output_dir = config
        .output_dir
        .as_ref()
        .ok_or_else(|| TrainError::Data("config has no output_dir".to_string()))?;

    let vocab = Vocab::load(std::io::BufReader::new(std::fs::File::open(vocab_path)?))
        .map_err(|e| TrainError::Data(format!("vocab: {e}")))?;
    let dataset = crate::dataset::read_dataset(std::io::BufReader::new(std::fs::File::open(
        dataset_path,
    )?))
    .map_err(|e| TrainError::Data(e.to_string()))?;

    let init = initial_params(config, &vocab, &dataset)?;
    let outcome = train(config, &vocab, &dataset, init)?;

    std::fs::create_dir_all(output_dir)?;
    let policy_path = output_dir.join("policy.bin");
    let reference_path = output_dir.join("reference.bin");
    let metrics_path = output_dir.join("metrics.csv");
    let config_path = output_dir.join("resolved_config.toml");
    checkpoint::save(&policy_path, &outcome.params)?;
    checkpoint::save(&reference_path, &outcome.reference)?;
    std::fs::write(&metrics_path, metrics::to_csv(&outcome.metrics))?;
    std::fs::write(&config_path, config.to_resolved_toml())?;

    Ok(RunArtifacts {
        outcome,
        policy_path,
        reference_path,
        metrics_path,
        config_path,
    })
}

/// Initial parameters for a run: a checkpoint when configured, otherwise a
/// supervised warm-up on the dataset's (history, chosen response) pairs.
pub fn initial_params(
    config: &TrainingConfig,
    vocab: &Vocab,
    dataset: &[PreferencePair],
) -> Result<PolicyParams, TrainError> {
    if let Some(path) = &config.init_checkpoint {
        return Ok(checkpoint::load(path)?);
    }
    let shape = PolicyShape {
        vocab: vocab.len(),
        dim: config.dim,
        hidden: config.hidden,
        window: config.window,
    };
    let corpus = sft_corpus(vocab, dataset)?;
    let sft_config = SftConfig {
        epochs: config.sft_epochs,
        batch_size: config.sft_batch_size,
        learning_rate: config.sft_learning_rate,
        seed: config.seed,
    };
    let (params, _) = sft_train(PolicyParams::init(shape, config.seed), &corpus, &sft_config)?;
    Ok(params)
}

/// Tokenized (prompt, chosen response) corpus for supervised warm-up.
pub fn sft_corpus(
    vocab: &Vocab,
    dataset: &[PreferencePair],
) -> Result<Vec<(Vec<u32>, Vec<u32>)>, TrainError> {
    dataset
        .iter()
        .map(|pair| {
            let prompt = vocab
                .encode(&prompt_text(&pair.history))
                .map_err(data_err(&pair.id, "prompt tokenization"))?;
            let chosen = vocab
                .encode(&pair.chosen.full_text())
                .map_err(data_err(&pair.id, "response tokenization"))?;
            Ok((prompt, chosen))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn tiny_config(method: Method, steps: u64) -> TrainingConfig {
        TrainingConfig {
            method,
            steps,
            batch_size: 2,
            grad_accum: 1,
            logging_interval: 5,
            dim: 8,
            hidden: 12,
            window: 4,
            sft_epochs: 2,
            ..TrainingConfig::default()
        }
    }

    fn tiny_world(pairs: usize) -> (Vocab, Vec<PreferencePair>) {
        let vocab = synthetic::vocab();
        let dataset = synthetic::generate(&synthetic::SyntheticConfig {
            pairs,
            seed: 5,
            ..synthetic::SyntheticConfig::default()
        });
        (vocab, dataset)
    }

    #[test]
    fn prepare_pair_aligns_rewards_with_spans() {
        let (vocab, dataset) = tiny_world(3);
        let weights = AspectWeights::default();
        let prepared =
            prepare_pair(&vocab, &dataset[0], &weights, RejectedRewardMode::Raw).unwrap();
        assert_eq!(prepared.chosen_spans.len(), prepared.chosen_rewards.len());
        assert_eq!(prepared.rejected_spans.len(), prepared.rejected_rewards.len());
        // Spans partition the response tokens.
        let total: usize = prepared.chosen_spans.iter().map(|s| s.len).sum();
        assert_eq!(total, prepared.chosen.len());
        assert_eq!(
            prepared.selection.n(),
            prepared
                .chosen_rewards
                .len()
                .min(prepared.rejected_rewards.len())
        );
    }

    #[test]
    fn inverted_mode_flips_loss_rewards_but_not_selection_order() {
        let (vocab, dataset) = tiny_world(3);
        let weights = AspectWeights::default();
        let raw = prepare_pair(&vocab, &dataset[0], &weights, RejectedRewardMode::Raw).unwrap();
        let inv =
            prepare_pair(&vocab, &dataset[0], &weights, RejectedRewardMode::Inverted).unwrap();
        for (a, b) in raw.selection.pairs.iter().zip(&inv.selection.pairs) {
            assert_eq!(a.rejected_segment, b.rejected_segment);
            assert!((b.rejected_reward - (1.0 - a.rejected_reward)).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_accuracy_examples() {
        assert_eq!(reward_accuracy(&[0.5]).unwrap(), 1.0);
        assert_eq!(reward_accuracy(&[0.0, 0.0]).unwrap(), 0.0); // strict inequality
        assert_eq!(reward_accuracy(&[1.0, -0.5, 0.2, -0.1]).unwrap(), 0.5);
        assert!((reward_accuracy(&[1.0, 1.0, 1.0, -1.0]).unwrap() - 0.75).abs() < 1e-12);
        assert!(reward_accuracy(&[]).is_err());
    }

    #[test]
    fn step_zero_metrics_are_identically_zero() {
        let (vocab, dataset) = tiny_world(6);
        let config = tiny_config(Method::TwoDDpo, 3);
        let init = initial_params(&config, &vocab, &dataset).unwrap();
        let outcome = train(&config, &vocab, &dataset, init).unwrap();
        let first = &outcome.metrics[0];
        assert_eq!(first.step, 0);
        assert_eq!(first.chosen_reward, 0.0);
        assert_eq!(first.rejected_reward, 0.0);
        assert_eq!(first.reward_margin, 0.0);
        assert_eq!(first.reward_accuracy, 0.0);
        assert_eq!(first.kl_chosen, 0.0);
        assert_eq!(first.kl_rejected, 0.0);
        // Margin integrity across all records.
        for r in &outcome.metrics {
            assert_eq!(r.reward_margin, r.chosen_reward - r.rejected_reward);
        }
    }

    #[test]
    fn fixed_seed_reproduces_the_metrics_log() {
        let (vocab, dataset) = tiny_world(6);
        let config = tiny_config(Method::TwoDDpoGrouped, 6);
        let run_once = || {
            let init = initial_params(&config, &vocab, &dataset).unwrap();
            train(&config, &vocab, &dataset, init).unwrap()
        };
        let a = run_once();
        let b = run_once();
        assert_eq!(metrics::to_csv(&a.metrics), metrics::to_csv(&b.metrics));
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn margin_grows_on_separable_data() {
        let (vocab, dataset) = tiny_world(12);
        let config = tiny_config(Method::Dpo, 40);
        let init = initial_params(&config, &vocab, &dataset).unwrap();
        let outcome = train(&config, &vocab, &dataset, init).unwrap();
        let first = outcome.metrics.first().unwrap();
        let last = outcome.metrics.last().unwrap();
        assert!(
            last.reward_margin > first.reward_margin,
            "margin should grow: {} -> {}",
            first.reward_margin,
            last.reward_margin
        );
    }

    #[test]
    fn reference_is_never_touched_by_training() {
        let (vocab, dataset) = tiny_world(4);
        let config = tiny_config(Method::TwoDDpoGrouped, 5);
        let init = initial_params(&config, &vocab, &dataset).unwrap();
        let init_hash = init.content_hash();
        let outcome = train(&config, &vocab, &dataset, init).unwrap();
        assert_eq!(outcome.reference.content_hash(), init_hash);
        assert_ne!(outcome.params.content_hash(), init_hash);
    }

    #[test]
    fn single_segment_all_fours_make_weighted_methods_match_dpo() {
        // All scores 4 and one segment per response: the segment-weighted
        // losses reduce to the plain one, so step-1 losses coincide.
        let vocab = synthetic::vocab();
        let dataset = synthetic::generate_single_segment_all_fours(8, 3);
        let mut configs = Vec::new();
        for method in [Method::Dpo, Method::TwoDDpo, Method::TwoDDpoGrouped] {
            configs.push(tiny_config(method, 1));
        }
        let losses: Vec<f64> = configs
            .iter()
            .map(|config| {
                let init = initial_params(config, &vocab, &dataset).unwrap();
                let outcome = train(config, &vocab, &dataset, init).unwrap();
                outcome.metrics[0].loss
            })
            .collect();
        assert_eq!(losses[0], losses[1]);
        assert_eq!(losses[0], losses[2]);
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostics() {
        let (vocab, dataset) = tiny_world(3);
        let mut config = tiny_config(Method::Dpo, 5);
        config.learning_rate = f64::NAN;
        let init = initial_params(&tiny_config(Method::Dpo, 5), &vocab, &dataset).unwrap();
        let err = train(&config, &vocab, &dataset, init).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteLoss { .. }), "{err}");
    }
}
