//! Preference losses and their analytic gradients.
//!
//! All losses are functions of per-token log-ratios
//! `l_t = log pi_theta(a_t|s_t) - log pi_ref(a_t|s_t)` over the response
//! tokens of a chosen/rejected pair (prompt tokens never enter the sums).
//! Gradients are reported with respect to every `l_t`; since the reference
//! model is frozen these coefficients also apply directly to
//! `log pi_theta(a_t|s_t)`.
//!
//! The plain pairwise loss is `-log sigma(R_w - R_l)` with
//! `R = beta * sum_t l_t`. The segment-weighted variant scales each
//! segment's token sum by its scalar reward,
//! `R = beta * sum_k r_k * sum_{t in k} l_t`, and the grouped variant turns
//! the N selected segment pairs into N independent pairwise terms whose
//! losses add; tokens outside the selection get an effective temperature of
//! zero and therefore exactly zero gradient.

use thiserror::Error;

use crate::reward::PairedSelection;
use crate::segmenter::TokenSpan;

/// Per-token log-ratios for the two responses of one preference pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenLogRatios {
    pub chosen: Vec<f64>,
    pub rejected: Vec<f64>,
}

impl TokenLogRatios {
    pub fn new(chosen: Vec<f64>, rejected: Vec<f64>) -> Self {
        TokenLogRatios { chosen, rejected }
    }
}

/// Effective rewards of one pairwise group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupDiagnostics {
    /// `R_w`: temperature-scaled reward of the chosen side of the group.
    pub reward_chosen: f64,
    /// `R_l`: temperature-scaled reward of the rejected side.
    pub reward_rejected: f64,
}

impl GroupDiagnostics {
    pub fn margin(&self) -> f64 {
        self.reward_chosen - self.reward_rejected
    }
}

/// A loss value with gradients aligned to the input log-ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Loss in nats; non-negative for every `-log sigma` form.
    pub loss: f64,
    /// `d loss / d l_t` for each chosen-response token.
    pub grad_chosen: Vec<f64>,
    /// `d loss / d l_t` for each rejected-response token.
    pub grad_rejected: Vec<f64>,
    /// One entry per pairwise group (a single entry except in grouped mode).
    pub groups: Vec<GroupDiagnostics>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("{side}: {spans} spans but {rewards} rewards")]
    SpanRewardMismatch {
        side: &'static str,
        spans: usize,
        rewards: usize,
    },
    #[error("{side}: spans do not partition {tokens} tokens: {detail}")]
    SpanCoverage {
        side: &'static str,
        tokens: usize,
        detail: String,
    },
    #[error("selection contains no pairs")]
    EmptySelection,
    #[error("selection references segment {segment} but {side} has {spans} spans")]
    SelectionOutOfRange {
        side: &'static str,
        segment: usize,
        spans: usize,
    },
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_spans(
    side: &'static str,
    spans: &[TokenSpan],
    rewards: &[f64],
    n_tokens: usize,
) -> Result<(), LossError> {
    if spans.len() != rewards.len() {
        return Err(LossError::SpanRewardMismatch {
            side,
            spans: spans.len(),
            rewards: rewards.len(),
        });
    }
    let mut cursor = 0usize;
    for (k, s) in spans.iter().enumerate() {
        if s.start != cursor || s.len == 0 {
            return Err(LossError::SpanCoverage {
                side,
                tokens: n_tokens,
                detail: format!("span {k} starts at {} with len {}", s.start, s.len),
            });
        }
        cursor += s.len;
    }
    if cursor != n_tokens {
        return Err(LossError::SpanCoverage {
            side,
            tokens: n_tokens,
            detail: format!("spans cover {cursor} tokens"),
        });
    }
    Ok(())
}

/// Plain pairwise preference loss over whole responses:
/// `-log sigma(beta * sum l_w - beta * sum l_l)`.
pub fn dpo_loss(ratios: &TokenLogRatios, beta: f64) -> LossOutput {
    let reward_chosen = beta * ratios.chosen.iter().sum::<f64>();
    let reward_rejected = beta * ratios.rejected.iter().sum::<f64>();
    let margin = reward_chosen - reward_rejected;
    let loss = softplus(-margin);
    let s = sigmoid(-margin);
    LossOutput {
        loss,
        grad_chosen: vec![-beta * s; ratios.chosen.len()],
        grad_rejected: vec![beta * s; ratios.rejected.len()],
        groups: vec![GroupDiagnostics {
            reward_chosen,
            reward_rejected,
        }],
    }
}

/// Segment-weighted pairwise loss: each segment's token sum is scaled by its
/// scalar reward before the sigmoid,
/// `-log sigma(beta * sum_k r_{w,k} * sum_{t in k} l_t^w - beta * sum_k r_{l,k} * sum_{t in k} l_t^l)`.
///
/// Spans must partition each response's tokens, one reward per span.
pub fn two_d_loss(
    ratios: &TokenLogRatios,
    spans_chosen: &[TokenSpan],
    spans_rejected: &[TokenSpan],
    rewards_chosen: &[f64],
    rewards_rejected: &[f64],
    beta: f64,
) -> Result<LossOutput, LossError> {
    check_spans("chosen", spans_chosen, rewards_chosen, ratios.chosen.len())?;
    check_spans(
        "rejected",
        spans_rejected,
        rewards_rejected,
        ratios.rejected.len(),
    )?;

    let side_reward = |values: &[f64], spans: &[TokenSpan], rewards: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (span, &r) in spans.iter().zip(rewards) {
            let span_sum: f64 = values[span.indices()].iter().sum();
            acc += r * span_sum;
        }
        beta * acc
    };
    let reward_chosen = side_reward(&ratios.chosen, spans_chosen, rewards_chosen);
    let reward_rejected = side_reward(&ratios.rejected, spans_rejected, rewards_rejected);
    let margin = reward_chosen - reward_rejected;
    let loss = softplus(-margin);
    let s = sigmoid(-margin);

    let mut grad_chosen = vec![0.0; ratios.chosen.len()];
    for (span, &r) in spans_chosen.iter().zip(rewards_chosen) {
        for t in span.indices() {
            grad_chosen[t] = -beta * r * s;
        }
    }
    let mut grad_rejected = vec![0.0; ratios.rejected.len()];
    for (span, &r) in spans_rejected.iter().zip(rewards_rejected) {
        for t in span.indices() {
            grad_rejected[t] = beta * r * s;
        }
    }
    Ok(LossOutput {
        loss,
        grad_chosen,
        grad_rejected,
        groups: vec![GroupDiagnostics {
            reward_chosen,
            reward_rejected,
        }],
    })
}

/// Grouped objective: the N selected (chosen, rejected) segment pairs form N
/// independent pairwise terms whose losses add,
/// `sum_k -log sigma(R_{w,k} - R_{l,k})` with
/// `R_{.,k} = beta * r_k * sum_{t in span k} l_t`.
///
/// Tokens outside the selected segments receive exactly zero gradient.
pub fn grouped_two_d_loss(
    selection: &PairedSelection,
    spans_chosen: &[TokenSpan],
    spans_rejected: &[TokenSpan],
    ratios: &TokenLogRatios,
    beta: f64,
) -> Result<LossOutput, LossError> {
    if selection.pairs.is_empty() {
        return Err(LossError::EmptySelection);
    }
    let mut loss = 0.0;
    let mut grad_chosen = vec![0.0; ratios.chosen.len()];
    let mut grad_rejected = vec![0.0; ratios.rejected.len()];
    let mut groups = Vec::with_capacity(selection.pairs.len());
    for pair in &selection.pairs {
        let span_w = *spans_chosen.get(pair.chosen_segment).ok_or(
            LossError::SelectionOutOfRange {
                side: "chosen",
                segment: pair.chosen_segment,
                spans: spans_chosen.len(),
            },
        )?;
        let span_l = *spans_rejected.get(pair.rejected_segment).ok_or(
            LossError::SelectionOutOfRange {
                side: "rejected",
                segment: pair.rejected_segment,
                spans: spans_rejected.len(),
            },
        )?;
        let sum_w: f64 = ratios.chosen[span_w.indices()].iter().sum();
        let sum_l: f64 = ratios.rejected[span_l.indices()].iter().sum();
        let reward_chosen = beta * (pair.chosen_reward * sum_w);
        let reward_rejected = beta * (pair.rejected_reward * sum_l);
        let margin = reward_chosen - reward_rejected;
        loss += softplus(-margin);
        let s = sigmoid(-margin);
        for t in span_w.indices() {
            grad_chosen[t] += -beta * pair.chosen_reward * s;
        }
        for t in span_l.indices() {
            grad_rejected[t] += beta * pair.rejected_reward * s;
        }
        groups.push(GroupDiagnostics {
            reward_chosen,
            reward_rejected,
        });
    }
    Ok(LossOutput {
        loss,
        grad_chosen,
        grad_rejected,
        groups,
    })
}

/// Supervised term: mean negative log-likelihood of the chosen response with
/// its gradient coefficients (`-1/N` per token, in the same
/// `d/d log pi_theta` space as the preference gradients).
#[derive(Debug, Clone, PartialEq)]
pub struct SftLoss {
    pub nll: f64,
    pub grad_chosen: Vec<f64>,
}

impl SftLoss {
    /// Build from per-token log-probabilities of the chosen response under
    /// the policy.
    pub fn from_log_probs(log_probs: &[f64]) -> Self {
        let n = log_probs.len().max(1) as f64;
        SftLoss {
            nll: -log_probs.iter().sum::<f64>() / n,
            grad_chosen: vec![-1.0 / n; log_probs.len()],
        }
    }
}

/// Total objective `preference + coeff * sft`; gradients add linearly.
pub fn combined_loss(pref: &LossOutput, sft: &SftLoss, coeff: f64) -> LossOutput {
    let mut out = pref.clone();
    out.loss += coeff * sft.nll;
    debug_assert_eq!(out.grad_chosen.len(), sft.grad_chosen.len());
    for (g, s) in out.grad_chosen.iter_mut().zip(&sft.grad_chosen) {
        *g += coeff * s;
    }
    out
}

/// Implicit per-token rewards `r_t = beta * l_t`.
pub fn implicit_token_rewards(log_ratios: &[f64], beta: f64) -> Vec<f64> {
    log_ratios.iter().map(|l| beta * l).collect()
}

/// Sequence-level implicit reward `beta * sum_t l_t`.
pub fn sequence_reward(log_ratios: &[f64], beta: f64) -> f64 {
    beta * log_ratios.iter().sum::<f64>()
}

/// Per-token effective temperatures `beta_t`.
///
/// In the segment-weighted objective every token of segment k has
/// `beta_t = beta * r_k`; in grouped mode tokens outside the selected
/// segments have `beta_t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTemperatures(pub Vec<f64>);

impl EffectiveTemperatures {
    /// Temperatures for a full segment-weighted response.
    pub fn full(spans: &[TokenSpan], rewards: &[f64], beta: f64, n_tokens: usize) -> Self {
        let mut out = vec![0.0; n_tokens];
        for (span, &r) in spans.iter().zip(rewards) {
            for t in span.indices() {
                out[t] = beta * r;
            }
        }
        EffectiveTemperatures(out)
    }

    /// Temperatures for one side of a grouped selection; non-selected tokens
    /// stay at zero.
    pub fn selected(
        selection: &PairedSelection,
        spans: &[TokenSpan],
        beta: f64,
        n_tokens: usize,
        chosen_side: bool,
    ) -> Self {
        let mut out = vec![0.0; n_tokens];
        for pair in &selection.pairs {
            let (segment, reward) = if chosen_side {
                (pair.chosen_segment, pair.chosen_reward)
            } else {
                (pair.rejected_segment, pair.rejected_reward)
            };
            if let Some(span) = spans.get(segment) {
                for t in span.indices() {
                    out[t] = beta * reward;
                }
            }
        }
        EffectiveTemperatures(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::select_segments;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn full_span(len: usize) -> Vec<TokenSpan> {
        vec![TokenSpan { start: 0, len }]
    }

    #[test]
    fn dpo_loss_at_identity_is_ln_two() {
        let ratios = TokenLogRatios::new(vec![0.0; 4], vec![0.0; 3]);
        let out = dpo_loss(&ratios, 0.2);
        assert!((out.loss - LN_2).abs() < 1e-12);
        assert_eq!(out.groups.len(), 1);
        assert_eq!(out.groups[0].margin(), 0.0);
    }

    #[test]
    fn dpo_loss_saturates_toward_zero() {
        let ratios = TokenLogRatios::new(vec![200.0], vec![-200.0]);
        let out = dpo_loss(&ratios, 0.2);
        assert!(out.loss < 1e-12);
        assert!(out.loss >= 0.0);
    }

    #[test]
    fn dpo_loss_softplus_oracle() {
        // beta = 0.2, sums 1 and -1: loss = softplus(-0.4) = ln(1 + e^-0.4)
        let ratios = TokenLogRatios::new(vec![0.5, 0.5], vec![-0.25, -0.75]);
        let out = dpo_loss(&ratios, 0.2);
        assert!((out.loss - 0.5130152523999526).abs() < 1e-12);
        // gradient: -beta * sigma(-0.4) on every chosen token
        let s = sigmoid(-0.4);
        for g in &out.grad_chosen {
            assert!((g + 0.2 * s).abs() < 1e-15);
        }
        for g in &out.grad_rejected {
            assert!((g - 0.2 * s).abs() < 1e-15);
        }
    }

    #[test]
    fn two_d_with_unit_reward_single_span_reduces_to_dpo() {
        let ratios = TokenLogRatios::new(vec![0.3, -0.1, 0.7], vec![0.2, 0.2]);
        let plain = dpo_loss(&ratios, 0.2);
        let weighted = two_d_loss(
            &ratios,
            &full_span(3),
            &full_span(2),
            &[1.0],
            &[1.0],
            0.2,
        )
        .unwrap();
        assert_eq!(plain.loss, weighted.loss);
        assert_eq!(plain.grad_chosen, weighted.grad_chosen);
        assert_eq!(plain.grad_rejected, weighted.grad_rejected);
    }

    #[test]
    fn two_d_with_zero_rewards_gives_ln_two_and_zero_gradients() {
        let ratios = TokenLogRatios::new(vec![1.0, 2.0], vec![-3.0]);
        let out = two_d_loss(
            &ratios,
            &full_span(2),
            &full_span(1),
            &[0.0],
            &[0.0],
            0.2,
        )
        .unwrap();
        assert!((out.loss - LN_2).abs() < 1e-12);
        assert!(out.grad_chosen.iter().all(|&g| g == 0.0));
        assert!(out.grad_rejected.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn two_d_hand_evaluated_example() {
        // chosen spans: (r=1, sum 0.5) and (r=0.5, sum 1.0); rejected (r=1, sum -1)
        let ratios = TokenLogRatios::new(vec![0.5, 0.4, 0.6], vec![-1.0]);
        let spans_w = vec![TokenSpan { start: 0, len: 1 }, TokenSpan { start: 1, len: 2 }];
        let out = two_d_loss(&ratios, &spans_w, &full_span(1), &[1.0, 0.5], &[1.0], 0.2).unwrap();
        // R_w = 0.2 * (1*0.5 + 0.5*1.0) = 0.2; R_l = -0.2
        assert!((out.groups[0].reward_chosen - 0.2).abs() < 1e-15);
        assert!((out.groups[0].reward_rejected + 0.2).abs() < 1e-15);
        assert!((out.loss - 0.5130152523999526).abs() < 1e-12);
    }

    #[test]
    fn two_d_span_reward_mismatch() {
        let ratios = TokenLogRatios::new(vec![0.0; 2], vec![0.0]);
        assert!(matches!(
            two_d_loss(&ratios, &full_span(2), &full_span(1), &[1.0, 0.5], &[1.0], 0.2),
            Err(LossError::SpanRewardMismatch { .. })
        ));
        let bad_spans = vec![TokenSpan { start: 0, len: 1 }];
        assert!(matches!(
            two_d_loss(&ratios, &bad_spans, &full_span(1), &[1.0], &[1.0], 0.2),
            Err(LossError::SpanCoverage { .. })
        ));
    }

    #[test]
    fn grouped_single_full_pair_reduces_to_dpo() {
        let ratios = TokenLogRatios::new(vec![0.3, -0.2], vec![0.1, 0.1, -0.4]);
        let selection = select_segments(&[1.0], &[1.0]).unwrap();
        let grouped =
            grouped_two_d_loss(&selection, &full_span(2), &full_span(3), &ratios, 0.2).unwrap();
        let plain = dpo_loss(&ratios, 0.2);
        assert_eq!(grouped.loss, plain.loss);
        assert_eq!(grouped.grad_chosen, plain.grad_chosen);
        assert_eq!(grouped.grad_rejected, plain.grad_rejected);
    }

    #[test]
    fn grouped_identity_policy_gives_n_ln_two() {
        let ratios = TokenLogRatios::new(vec![0.0; 5], vec![0.0; 4]);
        let spans_w = vec![
            TokenSpan { start: 0, len: 2 },
            TokenSpan { start: 2, len: 3 },
        ];
        let spans_l = vec![
            TokenSpan { start: 0, len: 1 },
            TokenSpan { start: 1, len: 3 },
        ];
        let selection = select_segments(&[0.9, 0.7], &[0.2, 0.4]).unwrap();
        let out = grouped_two_d_loss(&selection, &spans_w, &spans_l, &ratios, 0.2).unwrap();
        assert!((out.loss - 2.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn grouped_sum_of_independent_terms() {
        // Two groups with hand-set (reward, ratio-sum) values.
        let ratios = TokenLogRatios::new(vec![0.5, 1.0], vec![-0.5, 0.25]);
        let spans_w = vec![
            TokenSpan { start: 0, len: 1 },
            TokenSpan { start: 1, len: 1 },
        ];
        let spans_l = spans_w.clone();
        let selection = select_segments(&[1.0, 0.5], &[0.25, 0.75]).unwrap();
        // pair 0: chosen seg0 (r=1.0, sum .5), rejected seg0 (r=.25, sum -.5)
        //   margin = .2*(.5) - .2*(.25*-.5) = .1 + .025 = .125
        // pair 1: chosen seg1 (r=.5, sum 1.0), rejected seg1 (r=.75, sum .25)
        //   margin = .2*.5 - .2*(.75*.25) = .1 - .0375 = .0625
        let out = grouped_two_d_loss(&selection, &spans_w, &spans_l, &ratios, 0.2).unwrap();
        let want = softplus(-0.125) + softplus(-0.0625);
        assert!((out.loss - want).abs() < 1e-12);
        assert_eq!(out.groups.len(), 2);
        assert!((out.groups[0].margin() - 0.125).abs() < 1e-12);
        assert!((out.groups[1].margin() - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn grouped_empty_selection_is_an_error() {
        let ratios = TokenLogRatios::new(vec![0.0], vec![0.0]);
        assert_eq!(
            grouped_two_d_loss(
                &PairedSelection::default(),
                &full_span(1),
                &full_span(1),
                &ratios,
                0.2
            ),
            Err(LossError::EmptySelection)
        );
    }

    #[test]
    fn combined_loss_examples() {
        let ratios = TokenLogRatios::new(vec![0.0; 3], vec![0.0; 2]);
        let pref = dpo_loss(&ratios, 0.2);
        let sft = SftLoss {
            nll: 2.0,
            grad_chosen: vec![-1.0 / 3.0; 3],
        };
        let zero = combined_loss(&pref, &sft, 0.0);
        assert_eq!(zero.loss, pref.loss);
        assert_eq!(zero.grad_chosen, pref.grad_chosen);

        let mixed = combined_loss(&pref, &sft, 0.1);
        assert!((mixed.loss - (LN_2 + 0.2)).abs() < 1e-12);
        // 0.6931 + 0.1 * 2.0 = 0.8931 with exact ln 2
        assert!((mixed.loss - 0.8931471805599453).abs() < 1e-12);
        for (g, p) in mixed.grad_chosen.iter().zip(&pref.grad_chosen) {
            assert!((g - (p + 0.1 * (-1.0 / 3.0))).abs() < 1e-15);
        }
        assert_eq!(mixed.grad_rejected, pref.grad_rejected);
    }

    #[test]
    fn implicit_rewards_scale_with_beta() {
        assert_eq!(implicit_token_rewards(&[0.0, 0.0], 0.2), vec![0.0, 0.0]);
        let r = implicit_token_rewards(&[0.5], 0.2);
        assert!((r[0] - 0.1).abs() < 1e-15);
        let doubled = implicit_token_rewards(&[0.5, -1.0, 2.0], 0.4);
        let single = implicit_token_rewards(&[0.5, -1.0, 2.0], 0.2);
        for (d, s) in doubled.iter().zip(&single) {
            assert!((d - 2.0 * s).abs() < 1e-15);
        }
    }

    #[test]
    fn sequence_reward_matches_token_sum() {
        assert_eq!(sequence_reward(&[0.0; 8], 0.2), 0.0);
        let l = [1.0, -0.5];
        let seq = sequence_reward(&l, 0.2);
        assert!((seq - 0.1).abs() < 1e-15);
        let token_sum: f64 = implicit_token_rewards(&l, 0.2).iter().sum();
        assert!((seq - token_sum).abs() < 1e-15);
    }

    #[test]
    fn effective_temperatures_masking() {
        let spans = vec![
            TokenSpan { start: 0, len: 2 },
            TokenSpan { start: 2, len: 2 },
        ];
        let full = EffectiveTemperatures::full(&spans, &[1.0, 0.5], 0.2, 4);
        assert_eq!(full.0, vec![0.2, 0.2, 0.1, 0.1]);

        // Selection keeps only chosen segment 0 of a 2-segment response.
        let selection = select_segments(&[0.9, 0.1], &[0.3]).unwrap();
        let sel = EffectiveTemperatures::selected(&selection, &spans, 0.2, 4, true);
        assert_eq!(sel.0[0], 0.2 * 0.9);
        assert_eq!(sel.0[1], 0.2 * 0.9);
        assert_eq!(sel.0[2], 0.0);
        assert_eq!(sel.0[3], 0.0);
    }

    #[test]
    fn loss_decreases_as_margin_grows() {
        let mut prev = f64::INFINITY;
        for m in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let ratios = TokenLogRatios::new(vec![m], vec![0.0]);
            let out = dpo_loss(&ratios, 1.0);
            assert!(out.loss < prev);
            prev = out.loss;
        }
    }

    // Central finite differences over the log-ratio inputs.
    fn finite_diff_check(
        f: &dyn Fn(&TokenLogRatios) -> LossOutput,
        ratios: &TokenLogRatios,
        tol: f64,
    ) {
        let h = 1e-5;
        let out = f(ratios);
        for side in 0..2 {
            let len = if side == 0 {
                ratios.chosen.len()
            } else {
                ratios.rejected.len()
            };
            for t in 0..len {
                let mut plus = ratios.clone();
                let mut minus = ratios.clone();
                if side == 0 {
                    plus.chosen[t] += h;
                    minus.chosen[t] -= h;
                } else {
                    plus.rejected[t] += h;
                    minus.rejected[t] -= h;
                }
                let numeric = (f(&plus).loss - f(&minus).loss) / (2.0 * h);
                let analytic = if side == 0 {
                    out.grad_chosen[t]
                } else {
                    out.grad_rejected[t]
                };
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (analytic - numeric).abs() / denom < tol,
                    "side {side} token {t}: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let n_w = rng.gen_range(1..8);
            let n_l = rng.gen_range(1..8);
            let ratios = TokenLogRatios::new(
                (0..n_w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                (0..n_l).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            finite_diff_check(&|r| dpo_loss(r, 0.2), &ratios, 1e-6);

            let spans_w = full_span(n_w);
            let spans_l = full_span(n_l);
            let r_w = [rng.gen_range(0.1..1.0)];
            let r_l = [rng.gen_range(0.1..1.0)];
            finite_diff_check(
                &|r| two_d_loss(r, &spans_w, &spans_l, &r_w, &r_l, 0.2).unwrap(),
                &ratios,
                1e-6,
            );
        }
    }
}
