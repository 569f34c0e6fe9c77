//! A small autoregressive categorical policy with exact gradients.
//!
//! The model embeds the last `window` tokens, concatenates the embeddings,
//! and pushes them through one tanh hidden layer to a context vector that an
//! output projection maps to logits over the vocabulary. Small enough to
//! finite-difference every parameter, expressive enough to fit the synthetic
//! corpora end to end.

pub mod checkpoint;
pub mod optimizer;
pub mod sft;
pub mod vocab;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::TokenLogRatios;

pub use vocab::{byte_ranges, TokenPiece, Vocab, EOS_ID, EOS_TOKEN};

/// Model dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    /// Vocabulary size (including the reserved end-of-sequence token).
    pub vocab: usize,
    /// Embedding width.
    pub dim: usize,
    /// Hidden layer width.
    pub hidden: usize,
    /// Context window length in tokens.
    pub window: usize,
}

impl PolicyShape {
    pub fn parameter_count(&self) -> usize {
        self.vocab * self.dim          // embedding
            + self.hidden * self.window * self.dim // w1
            + self.hidden                          // b1
            + self.dim * self.hidden               // w2
            + self.dim                             // b2
            + self.vocab * self.dim // projection
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("token id {0} outside the vocabulary")]
    UnknownToken(u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// All learnable parameters, kept in plain `f64` tensors so training and
/// finite differences see exactly the same arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub shape: PolicyShape,
    /// vocab x dim, row-major.
    pub embed: Vec<f64>,
    /// hidden x (window * dim), row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// dim x hidden, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// vocab x dim, row-major; zero-initialized so the initial distribution
    /// is uniform.
    pub proj: Vec<f64>,
}

impl PolicyParams {
    /// Random initialization, deterministic in the seed.
    pub fn init(shape: PolicyShape, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut gauss = |n: usize, std: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * std
                })
                .collect()
        };
        let in_width = (shape.window * shape.dim) as f64;
        PolicyParams {
            embed: gauss(shape.vocab * shape.dim, 0.1),
            w1: gauss(shape.hidden * shape.window * shape.dim, in_width.sqrt().recip()),
            b1: vec![0.0; shape.hidden],
            w2: gauss(shape.dim * shape.hidden, (shape.hidden as f64).sqrt().recip()),
            b2: vec![0.0; shape.dim],
            proj: vec![0.0; shape.vocab * shape.dim],
            shape,
        }
    }

    /// Deep frozen copy used as the reference policy.
    pub fn clone_reference(&self) -> PolicyParams {
        self.clone()
    }

    /// Order-stable content hash, used to assert reference immutability.
    pub fn content_hash(&self) -> u64 {
        let mut hash: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x100000001b3);
            }
        };
        for tensor in self.tensors() {
            for v in tensor {
                eat(&v.to_le_bytes());
            }
        }
        hash
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            &self.embed,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.proj,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.embed,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.proj,
        ]
    }

    pub fn flat_len(&self) -> usize {
        self.shape.parameter_count()
    }

    pub fn get_flat(&self, mut i: usize) -> f64 {
        for tensor in self.tensors() {
            if i < tensor.len() {
                return tensor[i];
            }
            i -= tensor.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut i: usize, value: f64) {
        for tensor in self.tensors_mut() {
            if i < tensor.len() {
                tensor[i] = value;
                return;
            }
            i -= tensor.len();
        }
        panic!("flat index out of range");
    }
}

/// Gradient accumulator mirroring [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrads {
    pub shape: PolicyShape,
    pub embed: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub proj: Vec<f64>,
}

impl PolicyGrads {
    pub fn zeros(shape: PolicyShape) -> Self {
        PolicyGrads {
            embed: vec![0.0; shape.vocab * shape.dim],
            w1: vec![0.0; shape.hidden * shape.window * shape.dim],
            b1: vec![0.0; shape.hidden],
            w2: vec![0.0; shape.dim * shape.hidden],
            b2: vec![0.0; shape.dim],
            proj: vec![0.0; shape.vocab * shape.dim],
            shape,
        }
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            &self.embed,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.proj,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.embed,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.proj,
        ]
    }

    pub fn flat_len(&self) -> usize {
        self.shape.parameter_count()
    }

    pub fn get_flat(&self, mut i: usize) -> f64 {
        for tensor in self.tensors() {
            if i < tensor.len() {
                return tensor[i];
            }
            i -= tensor.len();
        }
        panic!("flat index out of range");
    }

    /// Scale every gradient in place.
    pub fn scale(&mut self, factor: f64) {
        for tensor in self.tensors_mut() {
            for g in tensor.iter_mut() {
                *g *= factor;
            }
        }
    }
}

/// Intermediate activations of one forward step.
struct Forward {
    window_ids: Vec<u32>,
    x: Vec<f64>,
    act: Vec<f64>,
    ctx: Vec<f64>,
    log_probs: Vec<f64>,
    probs: Vec<f64>,
}

fn check_ids(shape: &PolicyShape, ids: &[u32]) -> Result<(), PolicyError> {
    for &id in ids {
        if id as usize >= shape.vocab {
            return Err(PolicyError::UnknownToken(id));
        }
    }
    Ok(())
}

/// The last `window` tokens of `context`, left-padded with the
/// end-of-sequence id.
fn window_of(shape: &PolicyShape, context: &[u32]) -> Vec<u32> {
    let mut window = vec![EOS_ID; shape.window];
    let take = context.len().min(shape.window);
    let offset = shape.window - take;
    window[offset..].copy_from_slice(&context[context.len() - take..]);
    window
}

fn forward(params: &PolicyParams, context: &[u32]) -> Forward {
    let shape = &params.shape;
    let (v, d, h, c) = (shape.vocab, shape.dim, shape.hidden, shape.window);
    let window_ids = window_of(shape, context);

    let mut x = vec![0.0; c * d];
    for (slot, &tok) in window_ids.iter().enumerate() {
        let row = &params.embed[tok as usize * d..(tok as usize + 1) * d];
        x[slot * d..(slot + 1) * d].copy_from_slice(row);
    }

    let mut act = vec![0.0; h];
    for m in 0..h {
        let row = &params.w1[m * c * d..(m + 1) * c * d];
        let mut acc = params.b1[m];
        for i in 0..c * d {
            acc += row[i] * x[i];
        }
        act[m] = acc.tanh();
    }

    let mut ctx = vec![0.0; d];
    for j in 0..d {
        let row = &params.w2[j * h..(j + 1) * h];
        let mut acc = params.b2[j];
        for m in 0..h {
            acc += row[m] * act[m];
        }
        ctx[j] = acc;
    }

    let mut logits = vec![0.0; v];
    for t in 0..v {
        let row = &params.proj[t * d..(t + 1) * d];
        let mut acc = 0.0;
        for j in 0..d {
            acc += row[j] * ctx[j];
        }
        logits[t] = acc;
    }

    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max
        + logits
            .iter()
            .map(|z| (z - max).exp())
            .sum::<f64>()
            .ln();
    let log_probs: Vec<f64> = logits.iter().map(|z| z - log_z).collect();
    let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();

    Forward {
        window_ids,
        x,
        act,
        ctx,
        log_probs,
        probs,
    }
}

/// Log-probabilities over the whole vocabulary for the next token after
/// `context` (only the last `window` tokens matter).
pub fn token_log_probs(params: &PolicyParams, context: &[u32]) -> Result<Vec<f64>, PolicyError> {
    check_ids(&params.shape, context)?;
    Ok(forward(params, context).log_probs)
}

/// Log-probabilities of each response token given the prompt, in order.
pub fn response_log_probs(
    params: &PolicyParams,
    prompt: &[u32],
    response: &[u32],
) -> Result<Vec<f64>, PolicyError> {
    check_ids(&params.shape, prompt)?;
    check_ids(&params.shape, response)?;
    let mut context: Vec<u32> = prompt.to_vec();
    let mut out = Vec::with_capacity(response.len());
    for &target in response {
        let fwd = forward(params, &context);
        out.push(fwd.log_probs[target as usize]);
        context.push(target);
    }
    Ok(out)
}

/// Per-token log-ratios between the policy and the frozen reference for the
/// response region only; prompt tokens are excluded.
pub fn response_log_ratios(
    theta: &PolicyParams,
    reference: &PolicyParams,
    prompt: &[u32],
    response: &[u32],
) -> Result<Vec<f64>, PolicyError> {
    if theta.shape != reference.shape {
        return Err(PolicyError::ShapeMismatch(format!(
            "policy {:?} vs reference {:?}",
            theta.shape, reference.shape
        )));
    }
    let lp_theta = response_log_probs(theta, prompt, response)?;
    let lp_ref = response_log_probs(reference, prompt, response)?;
    Ok(lp_theta
        .iter()
        .zip(&lp_ref)
        .map(|(a, b)| a - b)
        .collect())
}

/// Log-ratios for both sides of a preference pair.
pub fn pair_log_ratios(
    theta: &PolicyParams,
    reference: &PolicyParams,
    prompt: &[u32],
    chosen: &[u32],
    rejected: &[u32],
) -> Result<TokenLogRatios, PolicyError> {
    Ok(TokenLogRatios::new(
        response_log_ratios(theta, reference, prompt, chosen)?,
        response_log_ratios(theta, reference, prompt, rejected)?,
    ))
}

/// Accumulate parameter gradients for one response.
///
/// `coeffs[t]` is `d loss / d log pi_theta(response[t] | context_t)`; the
/// chain rule through the categorical output gives
/// `d loss / d logits = coeff * (onehot(target) - probs)` at every position.
pub fn accumulate_response_grads(
    params: &PolicyParams,
    prompt: &[u32],
    response: &[u32],
    coeffs: &[f64],
    grads: &mut PolicyGrads,
) -> Result<(), PolicyError> {
    if coeffs.len() != response.len() {
        return Err(PolicyError::ShapeMismatch(format!(
            "{} coefficients for {} response tokens",
            coeffs.len(),
            response.len()
        )));
    }
    if grads.shape != params.shape {
        return Err(PolicyError::ShapeMismatch(
            "gradient accumulator shape differs from parameters".to_string(),
        ));
    }
    check_ids(&params.shape, prompt)?;
    check_ids(&params.shape, response)?;
    let shape = &params.shape;
    let (v, d, h, c) = (shape.vocab, shape.dim, shape.hidden, shape.window);

    let mut context: Vec<u32> = prompt.to_vec();
    for (t, &target) in response.iter().enumerate() {
        let coeff = coeffs[t];
        if coeff == 0.0 {
            // Masked tokens contribute exactly nothing.
            context.push(target);
            continue;
        }
        let fwd = forward(params, &context);

        // d loss / d logits
        let mut dz = vec![0.0; v];
        for (tok, z) in dz.iter_mut().enumerate() {
            let onehot = if tok == target as usize { 1.0 } else { 0.0 };
            *z = coeff * (onehot - fwd.probs[tok]);
        }

        // projection and context vector
        let mut dctx = vec![0.0; d];
        for tok in 0..v {
            let g = dz[tok];
            if g == 0.0 {
                continue;
            }
            let proj_row = &params.proj[tok * d..(tok + 1) * d];
            let grad_row = &mut grads.proj[tok * d..(tok + 1) * d];
            for j in 0..d {
                grad_row[j] += g * fwd.ctx[j];
                dctx[j] += g * proj_row[j];
            }
        }

        // second layer
        let mut dact = vec![0.0; h];
        for j in 0..d {
            let g = dctx[j];
            let w_row = &params.w2[j * h..(j + 1) * h];
            let grad_row = &mut grads.w2[j * h..(j + 1) * h];
            for m in 0..h {
                grad_row[m] += g * fwd.act[m];
                dact[m] += g * w_row[m];
            }
            grads.b2[j] += g;
        }

        // tanh and first layer
        let mut dx = vec![0.0; c * d];
        for m in 0..h {
            let dpre = dact[m] * (1.0 - fwd.act[m] * fwd.act[m]);
            if dpre == 0.0 {
                continue;
            }
            let w_row = &params.w1[m * c * d..(m + 1) * c * d];
            let grad_row = &mut grads.w1[m * c * d..(m + 1) * c * d];
            for i in 0..c * d {
                grad_row[i] += dpre * fwd.x[i];
                dx[i] += dpre * w_row[i];
            }
            grads.b1[m] += dpre;
        }

        // embeddings (padding slots feed the end-of-sequence embedding)
        for (slot, &tok) in fwd.window_ids.iter().enumerate() {
            let grad_row = &mut grads.embed[tok as usize * d..(tok as usize + 1) * d];
            for j in 0..d {
                grad_row[j] += dx[slot * d + j];
            }
        }

        context.push(target);
    }
    Ok(())
}

/// Sequential KL divergence: the sum over response positions of the
/// full-vocabulary KL between the policy's and the reference's next-token
/// distributions. Non-negative; zero when the models agree.
pub fn sequential_kl(
    theta: &PolicyParams,
    reference: &PolicyParams,
    prompt: &[u32],
    response: &[u32],
) -> Result<f64, PolicyError> {
    if theta.shape != reference.shape {
        return Err(PolicyError::ShapeMismatch(format!(
            "policy {:?} vs reference {:?}",
            theta.shape, reference.shape
        )));
    }
    check_ids(&theta.shape, prompt)?;
    check_ids(&theta.shape, response)?;
    let mut context: Vec<u32> = prompt.to_vec();
    let mut total = 0.0;
    for &target in response {
        let fwd_theta = forward(theta, &context);
        let fwd_ref = forward(reference, &context);
        let mut kl = 0.0;
        for tok in 0..theta.shape.vocab {
            let p = fwd_theta.probs[tok];
            if p > 0.0 {
                kl += p * (fwd_theta.log_probs[tok] - fwd_ref.log_probs[tok]);
            }
        }
        total += kl.max(0.0);
        context.push(target);
    }
    Ok(total)
}

/// Sampling settings. `top_p` keeps the smallest probability prefix reaching
/// the threshold; the end-of-sequence token is masked until `min_tokens` have
/// been produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleOptions {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub min_tokens: usize,
    pub seed: u64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            temperature: 0.7,
            top_p: 0.8,
            max_tokens: 64,
            min_tokens: 1,
            seed: 0,
        }
    }
}

/// Nucleus-sample a response after the prompt. Deterministic in the seed;
/// stops at the end-of-sequence token (not emitted) or at `max_tokens`.
pub fn sample(
    params: &PolicyParams,
    prompt: &[u32],
    opts: &SampleOptions,
) -> Result<Vec<u32>, PolicyError> {
    assert!(opts.temperature > 0.0, "temperature must be positive");
    assert!(
        opts.top_p > 0.0 && opts.top_p <= 1.0,
        "top_p must be in (0, 1]"
    );
    check_ids(&params.shape, prompt)?;
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut context: Vec<u32> = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < opts.max_tokens {
        let fwd = forward(params, &context);
        let mut adjusted = fwd.log_probs.clone();
        if out.len() < opts.min_tokens {
            adjusted[EOS_ID as usize] = f64::NEG_INFINITY;
        }
        // Shift by the max before tempering so tiny temperatures cannot
        // underflow every weight (softmax is shift-invariant).
        let max_lp = adjusted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = adjusted
            .iter()
            .map(|lp| {
                if lp.is_finite() {
                    ((lp - max_lp) / opts.temperature).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let kept = nucleus_filter(&probs, opts.top_p);
        let kept_total: f64 = kept.iter().map(|&i| probs[i]).sum();
        let mut dart = rng.gen_range(0.0..1.0) * kept_total;
        let mut picked = kept[kept.len() - 1];
        for &i in &kept {
            dart -= probs[i];
            if dart <= 0.0 {
                picked = i;
                break;
            }
        }
        if picked as u32 == EOS_ID {
            break;
        }
        out.push(picked as u32);
        context.push(picked as u32);
    }
    Ok(out)
}

/// Indices of the smallest probability prefix whose mass reaches `top_p`,
/// sorted by descending probability (ties toward the lower index).
pub fn nucleus_filter(probs: &[f64], top_p: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .expect("finite probabilities")
            .then(a.cmp(&b))
    });
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for i in order {
        kept.push(i);
        mass += probs[i];
        if mass >= top_p {
            break;
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_shape() -> PolicyShape {
        PolicyShape {
            vocab: 6,
            dim: 3,
            hidden: 4,
            window: 3,
        }
    }

    #[test]
    fn zero_projection_gives_uniform_distribution() {
        let params = PolicyParams::init(tiny_shape(), 0);
        let lp = token_log_probs(&params, &[1, 2]).unwrap();
        let expected = -(tiny_shape().vocab as f64).ln();
        for v in lp {
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn distributions_normalize_for_random_params() {
        let mut params = PolicyParams::init(tiny_shape(), 1);
        // Give the projection real values.
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for p in params.proj.iter_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
        for ctx_len in 0..4 {
            let context: Vec<u32> = (0..ctx_len).map(|i| (i % 5) as u32).collect();
            let lp = token_log_probs(&params, &context).unwrap();
            let total: f64 = lp.iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-6, "context {context:?}");
        }
    }

    #[test]
    fn perturbing_one_logit_raises_only_that_token() {
        // dim 1 so each projection entry scales one logit directly.
        let shape = PolicyShape {
            vocab: 4,
            dim: 1,
            hidden: 1,
            window: 1,
        };
        let mut params = PolicyParams::init(shape, 2);
        params.embed = vec![0.3, -0.2, 0.5, 0.1];
        params.w1 = vec![1.0];
        params.b1 = vec![0.0];
        params.w2 = vec![1.0];
        params.b2 = vec![0.0];
        params.proj = vec![0.4, -0.3, 0.2, 0.1];

        let ctx = (-0.2f64).tanh(); // context [1]
        let before: Vec<f64> = token_log_probs(&params, &[1]).unwrap();
        // Raise logit of token 2 by exactly delta.
        let delta = 0.05;
        params.proj[2] += delta / ctx;
        let after: Vec<f64> = token_log_probs(&params, &[1]).unwrap();
        for tok in 0..4 {
            let dp = after[tok].exp() - before[tok].exp();
            if tok == 2 {
                assert!(dp > 0.0, "perturbed token probability must rise");
            } else {
                assert!(dp < 0.0, "token {tok} probability must fall");
            }
        }
    }

    #[test]
    fn log_ratios_vanish_when_policy_equals_reference() {
        let params = PolicyParams::init(tiny_shape(), 3);
        let reference = params.clone_reference();
        let ratios = response_log_ratios(&params, &reference, &[1, 2], &[3, 4, 5]).unwrap();
        assert_eq!(ratios.len(), 3);
        assert!(ratios.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn log_ratio_length_matches_response() {
        let params = PolicyParams::init(tiny_shape(), 4);
        let reference = PolicyParams::init(tiny_shape(), 5);
        let ratios = response_log_ratios(&params, &reference, &[0, 1, 2, 3], &[4, 5]).unwrap();
        assert_eq!(ratios.len(), 2);
    }

    #[test]
    fn hand_built_two_token_softmax() {
        // vocab 2, dim 1, hidden 1, window 1; hand-pick weights so the
        // context vector is exactly tanh(x) and logits are (0, ctx).
        let shape = PolicyShape {
            vocab: 2,
            dim: 1,
            hidden: 1,
            window: 1,
        };
        let mut theta = PolicyParams::init(shape, 0);
        theta.embed = vec![0.5, -0.25]; // embedding per token
        theta.w1 = vec![1.0];
        theta.b1 = vec![0.0];
        theta.w2 = vec![1.0];
        theta.b2 = vec![0.0];
        theta.proj = vec![0.0, 1.0]; // logit_0 = 0, logit_1 = ctx

        let mut reference = theta.clone();
        reference.proj = vec![0.0, 0.5];

        // Context [1]: x = -0.25, ctx = tanh(-0.25).
        let c = (-0.25f64).tanh();
        let lp_theta = token_log_probs(&theta, &[1]).unwrap();
        let z = (1.0 + c.exp()).ln();
        assert!((lp_theta[0] - (0.0 - z)).abs() < 1e-12);
        assert!((lp_theta[1] - (c - z)).abs() < 1e-12);

        // Ratio for target token 1 after context [1]:
        let ratios = response_log_ratios(&theta, &reference, &[1], &[1]).unwrap();
        let z_ref = (1.0 + (0.5 * c).exp()).ln();
        let expected = (c - z) - (0.5 * c - z_ref);
        assert!((ratios[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn reference_survives_training_steps() {
        use super::optimizer::{optimize_step, OptimizerConfig, OptimizerState};
        let shape = tiny_shape();
        let mut params = PolicyParams::init(shape, 7);
        let reference = params.clone_reference();
        let hash_before = reference.content_hash();
        let mut state = OptimizerState::new(shape, OptimizerConfig::new(1e-2, 100));
        for _ in 0..100 {
            let mut grads = PolicyGrads::zeros(shape);
            accumulate_response_grads(&params, &[1], &[2, 3], &[-1.0, -1.0], &mut grads).unwrap();
            optimize_step(&mut params, &grads, &mut state).unwrap();
        }
        assert_eq!(reference.content_hash(), hash_before);
        assert_ne!(params.content_hash(), hash_before);
        // At clone time the ratios and KL were zero; they are not any more.
        let kl = sequential_kl(&params, &reference, &[1], &[2, 3]).unwrap();
        assert!(kl > 0.0);
    }

    #[test]
    fn sequential_kl_zero_at_identity_and_non_negative() {
        let params = PolicyParams::init(tiny_shape(), 8);
        let reference = params.clone_reference();
        assert_eq!(
            sequential_kl(&params, &reference, &[0, 1], &[2, 3]).unwrap(),
            0.0
        );
        let other = PolicyParams::init(tiny_shape(), 9);
        let kl = sequential_kl(&other, &reference, &[0, 1], &[2, 3, 4]).unwrap();
        assert!(kl >= 0.0);
    }

    #[test]
    fn hand_evaluated_two_step_kl() {
        // Two fixed distributions per step: theta (0.9, 0.1), ref (0.5, 0.5).
        // KL = 0.9 ln 1.8 + 0.1 ln 0.2 per step; two steps double it.
        let shape = PolicyShape {
            vocab: 2,
            dim: 1,
            hidden: 1,
            window: 1,
        };
        let mut theta = PolicyParams::init(shape, 0);
        theta.embed = vec![0.0, 0.0];
        theta.w1 = vec![0.0];
        theta.b1 = vec![0.0];
        theta.w2 = vec![0.0];
        theta.b2 = vec![1.0]; // ctx = 1 regardless of input
        let gap = (0.9f64 / 0.1).ln();
        theta.proj = vec![gap, 0.0]; // logits (gap, 0) -> probs (0.9, 0.1)

        let mut reference = theta.clone();
        reference.proj = vec![0.0, 0.0]; // uniform

        let kl = sequential_kl(&theta, &reference, &[], &[0, 0]).unwrap();
        let expected = 2.0 * (0.9 * (0.9f64 / 0.5).ln() + 0.1 * (0.1f64 / 0.5).ln());
        assert!((kl - expected).abs() < 1e-12);
        assert!((expected - 0.7361284143369941).abs() < 1e-12);
    }

    #[test]
    fn grads_match_finite_differences_for_nll() {
        let shape = PolicyShape {
            vocab: 5,
            dim: 2,
            hidden: 3,
            window: 2,
        };
        let mut params = PolicyParams::init(shape, 11);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for p in params.proj.iter_mut() {
            *p = rng.gen_range(-0.5..0.5);
        }
        let prompt = [1u32, 2];
        let response = [3u32, 4, 0];
        // loss = -sum log p(target): coefficient -1 per token.
        let coeffs = [-1.0, -1.0, -1.0];
        let mut grads = PolicyGrads::zeros(shape);
        accumulate_response_grads(&params, &prompt, &response, &coeffs, &mut grads).unwrap();

        let loss_of = |p: &PolicyParams| -> f64 {
            -response_log_probs(p, &prompt, &response)
                .unwrap()
                .iter()
                .sum::<f64>()
        };
        let h = 1e-6;
        for i in (0..params.flat_len()).step_by(7) {
            let orig = params.get_flat(i);
            params.set_flat(i, orig + h);
            let up = loss_of(&params);
            params.set_flat(i, orig - h);
            let down = loss_of(&params);
            params.set_flat(i, orig);
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get_flat(i);
            let denom = numeric.abs().max(analytic.abs()).max(1e-6);
            assert!(
                (numeric - analytic).abs() / denom < 1e-4,
                "param {i}: numeric {numeric} analytic {analytic}"
            );
        }
    }

    #[test]
    fn sampling_is_deterministic_and_respects_eos() {
        let params = PolicyParams::init(tiny_shape(), 21);
        let opts = SampleOptions {
            max_tokens: 16,
            seed: 5,
            ..SampleOptions::default()
        };
        let a = sample(&params, &[1, 2], &opts).unwrap();
        let b = sample(&params, &[1, 2], &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 16);
        assert!(a.iter().all(|&t| t != EOS_ID));
    }

    #[test]
    fn tiny_temperature_with_full_nucleus_is_argmax() {
        let mut params = PolicyParams::init(tiny_shape(), 22);
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for p in params.proj.iter_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
        let opts = SampleOptions {
            temperature: 1e-6,
            top_p: 1.0,
            max_tokens: 4,
            min_tokens: 1,
            seed: 1,
        };
        let sampled = sample(&params, &[3], &opts).unwrap();
        // Manual greedy rollout.
        let mut context = vec![3u32];
        let mut greedy = Vec::new();
        for _ in 0..4 {
            let lp = token_log_probs(&params, &context).unwrap();
            let (mut best, mut best_v) = (0usize, f64::NEG_INFINITY);
            for (i, &v) in lp.iter().enumerate() {
                let masked = i == EOS_ID as usize && greedy.is_empty();
                if !masked && v > best_v {
                    best = i;
                    best_v = v;
                }
            }
            if best as u32 == EOS_ID {
                break;
            }
            greedy.push(best as u32);
            context.push(best as u32);
        }
        assert_eq!(sampled, greedy);
    }

    #[test]
    fn nucleus_filter_matches_brute_force_on_five_tokens() {
        let probs = [0.35, 0.05, 0.3, 0.2, 0.1];
        let kept = nucleus_filter(&probs, 0.8);
        // Sorted: 0 (.35), 2 (.3), 3 (.2) reaches 0.85 >= 0.8.
        assert_eq!(kept, vec![0, 2, 3]);
        let all = nucleus_filter(&probs, 1.0);
        assert_eq!(all.len(), 5);
        // Brute force: smallest prefix of the sorted order reaching 0.8.
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
        let mut acc = 0.0;
        let mut brute = Vec::new();
        for i in order {
            brute.push(i);
            acc += probs[i];
            if acc >= 0.8 {
                break;
            }
        }
        assert_eq!(kept, brute);
    }

    #[test]
    fn unknown_token_ids_are_rejected() {
        let params = PolicyParams::init(tiny_shape(), 30);
        assert_eq!(
            token_log_probs(&params, &[99]),
            Err(PolicyError::UnknownToken(99))
        );
        assert!(matches!(
            response_log_probs(&params, &[1], &[99]),
            Err(PolicyError::UnknownToken(99))
        ));
    }
}
