//! Shared input builders for the criterion benchmarks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use twodpo_core::loss::TokenLogRatios;
use twodpo_core::reward::{select_segments, PairedSelection};
use twodpo_core::segmenter::TokenSpan;

/// A mid-sized preference instance: two responses with segment spans,
/// rewards, and the grouped selection.
pub struct LossInstance {
    pub ratios: TokenLogRatios,
    pub spans_chosen: Vec<TokenSpan>,
    pub spans_rejected: Vec<TokenSpan>,
    pub rewards_chosen: Vec<f64>,
    pub rewards_rejected: Vec<f64>,
    pub selection: PairedSelection,
}

fn spans_for(tokens: usize, segments: usize) -> Vec<TokenSpan> {
    let base = tokens / segments;
    let mut spans = Vec::with_capacity(segments);
    let mut start = 0;
    for k in 0..segments {
        let len = if k + 1 == segments { tokens - start } else { base };
        spans.push(TokenSpan { start, len });
        start += len;
    }
    spans
}

pub fn loss_instance(tokens_per_side: usize, segments: usize, seed: u64) -> LossInstance {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let ratios = TokenLogRatios::new(
        (0..tokens_per_side).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        (0..tokens_per_side).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );
    let spans_chosen = spans_for(tokens_per_side, segments);
    let spans_rejected = spans_for(tokens_per_side, segments);
    let rewards_chosen: Vec<f64> = (0..segments).map(|_| rng.gen_range(0.1..1.0)).collect();
    let rewards_rejected: Vec<f64> = (0..segments).map(|_| rng.gen_range(0.1..1.0)).collect();
    let selection = select_segments(&rewards_chosen, &rewards_rejected).expect("non-empty");
    LossInstance {
        ratios,
        spans_chosen,
        spans_rejected,
        rewards_chosen,
        rewards_rejected,
        selection,
    }
}

/// A mixed-markup document for segmentation benchmarks.
pub fn sample_document(paragraphs: usize) -> String {
    let mut out = String::new();
    for i in 0..paragraphs {
        out.push_str("First sentence of the block. A question follows? Yes, it does! ");
        out.push_str("Dr. Smith checks Fig. 3 and Eq. 5; nothing splits there. ");
        if i % 3 == 0 {
            out.push_str("\n```\nlet x = 1. still one segment.\n```\n");
        }
        if i % 4 == 0 {
            out.push_str("| col a | col b |\n| 1 | 2 |\n");
        }
        out.push_str("\n\n");
    }
    out
}
