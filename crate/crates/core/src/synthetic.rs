//! Deterministic synthetic preference world for fixtures and end-to-end
//! tests.
//!
//! Words are grouped into quality pools, one pool per Likert level. Chosen
//! responses draw their sentences from the upper pools (always including at
//! least one top-level segment), rejected responses from the bottom pools,
//! and every segment's score row is derived from its pool level, so the
//! ground truth behind each matrix is known by construction. A scripted
//! scorer recovers those levels from any sampled text, which closes the loop
//! for iterative rounds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dataset::{
    AnnotatedResponse, PreferencePair, ScoreMatrix, Segment, Utterance, MAX_SCORE,
};
use crate::policy::Vocab;
use crate::trainer::iterate::{ResponseScorer, ScorerError};

/// Words per quality level, index = Likert level 0..=4.
pub const LEVEL_POOLS: [[&str; 8]; 5] = [
    [
        "wrong", "broken", "false", "useless", "garbled", "hollow", "bogus", "junk",
    ],
    [
        "weak", "muddled", "shaky", "thin", "patchy", "confused", "sloppy", "stale",
    ],
    [
        "plain", "rough", "partial", "vague", "loose", "middling", "bland", "sparse",
    ],
    [
        "solid", "decent", "useful", "clear", "fair", "steady", "fine", "tidy",
    ],
    [
        "stellar", "lucid", "precise", "thorough", "sound", "elegant", "robust", "faithful",
    ],
];

pub const TOPICS: [&str; 5] = ["alpha", "beta", "gamma", "delta", "omega"];

/// The vocabulary covering everything the synthetic world can utter.
///
/// Built from a corpus so the single-character fallback stays available:
/// sampled token streams may abut two words with no separator, and the
/// resulting fused word must still re-tokenize.
pub fn vocab() -> Vocab {
    let mut corpus = String::new();
    for pool in LEVEL_POOLS {
        for w in pool {
            corpus.push_str(w);
            corpus.push(' ');
        }
    }
    for w in TOPICS
        .iter()
        .chain(["tell", "me", "about", "user", "assistant"].iter())
    {
        corpus.push_str(w);
        corpus.push(' ');
    }
    corpus.push_str(".:,\n");
    Vocab::build([corpus.as_str()])
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub pairs: usize,
    pub seed: u64,
    /// Segments per response (inclusive bounds).
    pub min_segments: usize,
    pub max_segments: usize,
    /// Words per sentence (inclusive bounds).
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            pairs: 200,
            seed: 0,
            min_segments: 2,
            max_segments: 4,
            min_words: 3,
            max_words: 5,
        }
    }
}

/// Score row for a segment of the given pool level: helpfulness,
/// correctness, and clarity carry the level, safety is always pass, and
/// completeness is the running maximum of levels so far (never decreasing).
pub fn score_row(level: i64, completeness: i64) -> [i64; 5] {
    [level, level, MAX_SCORE, completeness, level]
}

fn sentence(rng: &mut ChaCha20Rng, level: usize, config: &SyntheticConfig) -> String {
    let pool = LEVEL_POOLS[level];
    let n = rng.gen_range(config.min_words..=config.max_words);
    let words: Vec<&str> = (0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
    format!("{}.", words.join(" "))
}

fn response(
    rng: &mut ChaCha20Rng,
    levels: &[usize],
    config: &SyntheticConfig,
) -> AnnotatedResponse {
    let mut segments = Vec::with_capacity(levels.len());
    let mut rows = Vec::with_capacity(levels.len());
    let mut completeness = 0i64;
    for (k, &level) in levels.iter().enumerate() {
        let sep = if k + 1 == levels.len() { "" } else { " " };
        segments.push(Segment::new(sentence(rng, level, config), sep));
        completeness = completeness.max(level as i64);
        rows.push(score_row(level as i64, completeness));
    }
    AnnotatedResponse::new(segments, ScoreMatrix(rows))
}

fn chosen_levels(rng: &mut ChaCha20Rng, config: &SyntheticConfig) -> Vec<usize> {
    let n = rng.gen_range(config.min_segments..=config.max_segments);
    let mut levels: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=4)).collect();
    // Guarantee at least one top-level segment.
    let top = rng.gen_range(0..n);
    levels[top] = 4;
    levels
}

fn rejected_levels(rng: &mut ChaCha20Rng, config: &SyntheticConfig) -> Vec<usize> {
    let n = rng.gen_range(config.min_segments..=config.max_segments);
    (0..n).map(|_| rng.gen_range(0..=1)).collect()
}

/// The instruction used for pair `i`.
pub fn instruction(i: usize) -> Vec<Utterance> {
    vec![Utterance::user(format!(
        "tell me about {}.",
        TOPICS[i % TOPICS.len()]
    ))]
}

/// Generate a deterministic synthetic preference dataset.
pub fn generate(config: &SyntheticConfig) -> Vec<PreferencePair> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    (0..config.pairs)
        .map(|i| {
            let levels_w = chosen_levels(&mut rng, config);
            let chosen = response(&mut rng, &levels_w, config);
            let levels_l = rejected_levels(&mut rng, config);
            let rejected = response(&mut rng, &levels_l, config);
            PreferencePair {
                id: format!("syn-{i:04}"),
                history: instruction(i),
                chosen,
                rejected,
                provenance: None,
                extra: serde_json::Map::new(),
            }
        })
        .collect()
}

/// Degenerate variant for reduction tests: single-segment responses whose
/// scores are all 4, so every segment reward is exactly 1.
pub fn generate_single_segment_all_fours(pairs: usize, seed: u64) -> Vec<PreferencePair> {
    let config = SyntheticConfig {
        pairs,
        seed,
        min_segments: 1,
        max_segments: 1,
        ..SyntheticConfig::default()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..pairs)
        .map(|i| {
            let make = |rng: &mut ChaCha20Rng, level: usize| {
                let mut resp = response(rng, &[level], &config);
                resp.scores = ScoreMatrix(vec![[4, 4, 4, 4, 4]]);
                resp
            };
            let chosen = make(&mut rng, 4);
            let rejected = make(&mut rng, 0);
            PreferencePair {
                id: format!("uni-{i:04}"),
                history: instruction(i),
                chosen,
                rejected,
                provenance: None,
                extra: serde_json::Map::new(),
            }
        })
        .collect()
}

/// Ground-truth scorer: recovers each segment's level from its words
/// (majority vote over pooled words, ties toward the lower level, neutral 2
/// when no pooled word appears) and rebuilds the score row exactly as the
/// generator would.
#[derive(Debug, Clone, Default)]
pub struct SyntheticScorer;

/// Pool level of a single word, if any.
pub fn word_level(word: &str) -> Option<usize> {
    LEVEL_POOLS
        .iter()
        .position(|pool| pool.contains(&word))
}

/// Level of one segment text under the majority rule.
pub fn segment_level(text: &str) -> usize {
    let mut counts = [0usize; 5];
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        if let Some(level) = word_level(word) {
            counts[level] += 1;
        }
    }
    let best = counts.iter().max().copied().unwrap_or(0);
    if best == 0 {
        return 2;
    }
    counts.iter().position(|&c| c == best).expect("non-empty")
}

impl ResponseScorer for SyntheticScorer {
    fn score(
        &self,
        _history: &[Utterance],
        segments: &[Segment],
    ) -> Result<ScoreMatrix, ScorerError> {
        if segments.is_empty() {
            return Err(ScorerError("no segments to score".to_string()));
        }
        let mut rows = Vec::with_capacity(segments.len());
        let mut completeness = 0i64;
        for seg in segments {
            let level = segment_level(&seg.text) as i64;
            completeness = completeness.max(level);
            rows.push(score_row(level, completeness));
        }
        Ok(ScoreMatrix(rows))
    }

    fn name(&self) -> String {
        "synthetic-ground-truth".to_string()
    }
}
