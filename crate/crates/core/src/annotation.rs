//! Score-matrix annotation: per-aspect prompt rendering, judge dispatch,
//! reply parsing, and consistency auditing.
//!
//! Each aspect has its own prompt (so the scales cannot cross-influence each
//! other); one prompt covers both responses of a pair. The judge is an
//! abstract client — tests and offline runs use the deterministic
//! [`MockJudge`] / [`ScriptedJudge`], a real HTTP client can live behind the
//! same trait.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    AnnotatedResponse, AnnotationProvenance, Aspect, PreferencePair, ScoreMatrix, Segment,
    Utterance, ValidationReport, MAX_SCORE,
};

const PLACEHOLDERS: [&str; 3] = ["{history}", "{response1}", "{response2}"];

/// The five aspect prompt templates, indexed by aspect.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: [String; 5],
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("missing template for {aspect}: {path}")]
    MissingTemplate { aspect: Aspect, path: String },
    #[error("template for {aspect} must contain {placeholder} exactly once")]
    BadPlaceholder { aspect: Aspect, placeholder: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn check_template(aspect: Aspect, text: &str) -> Result<(), TemplateError> {
    for ph in PLACEHOLDERS {
        if text.matches(ph).count() != 1 {
            return Err(TemplateError::BadPlaceholder {
                aspect,
                placeholder: ph.to_string(),
            });
        }
    }
    Ok(())
}

impl TemplateSet {
    /// The templates shipped with the crate.
    pub fn builtin() -> Self {
        let templates = [
            include_str!("../templates/helpfulness.txt").to_string(),
            include_str!("../templates/correctness.txt").to_string(),
            include_str!("../templates/safety.txt").to_string(),
            include_str!("../templates/completeness.txt").to_string(),
            include_str!("../templates/clarity.txt").to_string(),
        ];
        TemplateSet { templates }
    }

    /// Load `<aspect>.txt` files from a directory, validating placeholders.
    pub fn from_dir(dir: &std::path::Path) -> Result<Self, TemplateError> {
        let mut templates: [String; 5] = Default::default();
        for aspect in Aspect::ALL {
            let path = dir.join(format!("{}.txt", aspect.name()));
            if !path.is_file() {
                return Err(TemplateError::MissingTemplate {
                    aspect,
                    path: path.display().to_string(),
                });
            }
            let text = std::fs::read_to_string(&path)?;
            check_template(aspect, &text)?;
            templates[aspect.index()] = text;
        }
        Ok(TemplateSet { templates })
    }

    pub fn get(&self, aspect: Aspect) -> &str {
        &self.templates[aspect.index()]
    }
}

/// Serialize segments as `<ID>text</ID>` lines with 1-based IDs.
pub fn render_segments(segments: &[Segment]) -> String {
    segments
        .iter()
        .enumerate()
        .map(|(k, s)| format!("<{id}>{}</{id}>", s.text, id = k + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Serialize a conversation history as `role: content` lines; empty history
/// renders as an empty block.
pub fn render_history(history: &[Utterance]) -> String {
    history
        .iter()
        .map(|u| format!("{}: {}", u.role, u.content))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Fill one aspect's template with the history and both segmented responses.
pub fn render_prompt(
    templates: &TemplateSet,
    aspect: Aspect,
    history: &[Utterance],
    response1: &[Segment],
    response2: &[Segment],
) -> String {
    templates
        .get(aspect)
        .replace("{history}", &render_history(history))
        .replace("{response1}", &render_segments(response1))
        .replace("{response2}", &render_segments(response2))
}

/// Transport-level judge failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum JudgeError {
    #[error("judge unavailable: {0}")]
    Unavailable(String),
}

/// Abstract judge: maps a prompt to a raw reply.
pub trait JudgeClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, JudgeError>;

    /// Identifier recorded in provenance.
    fn name(&self) -> String {
        "judge".to_string()
    }
}

/// Connection settings for a judge endpoint. The API key is read from the
/// environment by transport implementations, never stored here.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub retry_budget: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            endpoint: String::new(),
            model: String::new(),
            timeout_secs: 30,
            max_in_flight: 4,
            retry_budget: 2,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Which aspect a rendered prompt asks about, recovered from its
/// `dimension of <name>` line.
pub fn detect_aspect(prompt: &str) -> Option<Aspect> {
    Aspect::ALL
        .into_iter()
        .find(|a| prompt.contains(&format!("dimension of {}", a.name())))
}

fn extract_block<'a>(prompt: &'a str, header: &str) -> Option<&'a str> {
    let start = prompt.find(header)? + header.len();
    let rest = &prompt[start..];
    let end = rest.find("-----").unwrap_or(rest.len());
    Some(&rest[..end])
}

/// Count `<k>` segment tags in the two response blocks of a rendered prompt.
pub fn segment_counts(prompt: &str) -> Option<(usize, usize)> {
    static TAG: OnceLock<Regex> = OnceLock::new();
    let tag = TAG.get_or_init(|| Regex::new(r"<(\d+)>").expect("valid regex"));
    let count = |block: &str| tag.captures_iter(block).count();
    let r1 = extract_block(prompt, "Response 1 to be evaluated:")?;
    let r2 = extract_block(prompt, "Response 2 to be evaluated:")?;
    Some((count(r1), count(r2)))
}

fn aspect_title(aspect: Aspect) -> &'static str {
    match aspect {
        Aspect::Helpfulness => "Helpfulness",
        Aspect::Correctness => "Correctness",
        Aspect::Safety => "Safety",
        Aspect::Completeness => "Completeness",
        Aspect::Clarity => "Clarity",
    }
}

/// Format a reply in the expected evaluation format from two rating columns.
pub fn compose_reply(aspect: Aspect, column1: &[i64], column2: &[i64]) -> String {
    let mut out = String::new();
    for (resp, column) in [(1, column1), (2, column2)] {
        out.push_str(&format!("Response {resp} Evaluation:\n"));
        for (k, v) in column.iter().enumerate() {
            out.push_str(&format!(
                "<{id}> Evaluation: scripted verdict.\n    {} Rating: {v}\n",
                aspect_title(aspect),
                id = k + 1
            ));
        }
    }
    out
}

/// Deterministic offline judge: the reply is a pure function of the prompt
/// text and the seed.
#[derive(Debug, Clone)]
pub struct MockJudge {
    pub seed: u64,
}

impl MockJudge {
    pub fn new(seed: u64) -> Self {
        MockJudge { seed }
    }

    fn rating(&self, aspect: Aspect, response: usize, segment: usize) -> i64 {
        let key = format!("{}:{}:{}:{}", self.seed, aspect.name(), response, segment);
        let h = fnv1a(key.as_bytes());
        match aspect {
            Aspect::Safety => {
                if h % 8 == 0 {
                    0
                } else {
                    MAX_SCORE
                }
            }
            _ => (h % 5) as i64,
        }
    }

    fn column(&self, aspect: Aspect, response: usize, len: usize) -> Vec<i64> {
        let mut col: Vec<i64> = (0..len).map(|k| self.rating(aspect, response, k)).collect();
        if aspect == Aspect::Completeness {
            // The mock plays a well-behaved judge: completeness never drops.
            let mut running = 0;
            for v in &mut col {
                running = running.max(*v);
                *v = running;
            }
        }
        col
    }
}

impl JudgeClient for MockJudge {
    fn complete(&self, prompt: &str) -> Result<String, JudgeError> {
        let aspect = detect_aspect(prompt)
            .ok_or_else(|| JudgeError::Unavailable("prompt names no known aspect".into()))?;
        let (s1, s2) = segment_counts(prompt)
            .ok_or_else(|| JudgeError::Unavailable("prompt is missing response blocks".into()))?;
        Ok(compose_reply(
            aspect,
            &self.column(aspect, 1, s1),
            &self.column(aspect, 2, s2),
        ))
    }

    fn name(&self) -> String {
        format!("mock&seed={}", self.seed)
    }
}

/// Judge that replays fixed rating columns; used to script exact matrices in
/// tests and offline pipelines. Counts how many prompts it answered.
pub struct ScriptedJudge {
    plan: ScriptPlan,
    calls: AtomicUsize,
}

enum ScriptPlan {
    /// Every segment of every response gets this rating (clamped to the
    /// safety scale for the safety aspect).
    Uniform(i64),
    /// Explicit per-aspect columns for (response 1, response 2).
    Columns(Box<[(Vec<i64>, Vec<i64>); 5]>),
}

impl ScriptedJudge {
    pub fn uniform(rating: i64) -> Self {
        ScriptedJudge {
            plan: ScriptPlan::Uniform(rating),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_columns(columns: [(Vec<i64>, Vec<i64>); 5]) -> Self {
        ScriptedJudge {
            plan: ScriptPlan::Columns(Box::new(columns)),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl JudgeClient for ScriptedJudge {
    fn complete(&self, prompt: &str) -> Result<String, JudgeError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let aspect = detect_aspect(prompt)
            .ok_or_else(|| JudgeError::Unavailable("prompt names no known aspect".into()))?;
        match &self.plan {
            ScriptPlan::Uniform(rating) => {
                let (s1, s2) = segment_counts(prompt).ok_or_else(|| {
                    JudgeError::Unavailable("prompt is missing response blocks".into())
                })?;
                let r = if aspect == Aspect::Safety && *rating != 0 {
                    MAX_SCORE
                } else {
                    *rating
                };
                Ok(compose_reply(aspect, &vec![r; s1], &vec![r; s2]))
            }
            ScriptPlan::Columns(cols) => {
                let (c1, c2) = &cols[aspect.index()];
                Ok(compose_reply(aspect, c1, c2))
            }
        }
    }

    fn name(&self) -> String {
        "scripted".to_string()
    }
}

/// Reply-parsing failure classes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotationParseError {
    #[error("parse failure: {0}")]
    ParseFailure(String),
    #[error("response {response}: expected {expected} ratings, found {found}")]
    CountMismatch {
        response: usize,
        expected: usize,
        found: usize,
    },
    #[error("{aspect} rating {value} outside its scale")]
    ScaleViolation { aspect: Aspect, value: i64 },
}

fn parse_section(
    aspect: Aspect,
    section: &str,
    response: usize,
    expected: usize,
) -> Result<Vec<i64>, AnnotationParseError> {
    static TAG: OnceLock<Regex> = OnceLock::new();
    static RATING: OnceLock<Regex> = OnceLock::new();
    let tag = TAG.get_or_init(|| Regex::new(r"<(\d+)>").expect("valid regex"));
    let rating = RATING.get_or_init(|| Regex::new(r"Rating:\s*(-?\d+)").expect("valid regex"));

    let mut blocks: Vec<(usize, usize)> = Vec::new(); // (id, start offset)
    for cap in tag.captures_iter(section) {
        let id: usize = cap[1]
            .parse()
            .map_err(|_| AnnotationParseError::ParseFailure("unreadable segment id".into()))?;
        blocks.push((id, cap.get(0).expect("match").end()));
    }
    if blocks.len() != expected {
        return Err(AnnotationParseError::CountMismatch {
            response,
            expected,
            found: blocks.len(),
        });
    }
    for (i, (id, _)) in blocks.iter().enumerate() {
        if *id != i + 1 {
            return Err(AnnotationParseError::ParseFailure(format!(
                "response {response}: expected segment <{}>, found <{}>",
                i + 1,
                id
            )));
        }
    }
    let mut column = Vec::with_capacity(expected);
    for (i, &(_, start)) in blocks.iter().enumerate() {
        let end = blocks
            .get(i + 1)
            .map(|&(_, next)| next - format!("<{}>", i + 2).len())
            .unwrap_or(section.len())
            .min(section.len());
        let block = &section[start..end.max(start)];
        // The last rating in the block wins; judges often restate scores.
        let value = rating
            .captures_iter(block)
            .last()
            .map(|c| c[1].parse::<i64>())
            .transpose()
            .map_err(|_| AnnotationParseError::ParseFailure("unreadable rating".into()))?
            .ok_or_else(|| {
                AnnotationParseError::ParseFailure(format!(
                    "response {response}: segment <{}> has no rating",
                    i + 1
                ))
            })?;
        let in_scale = match aspect {
            Aspect::Safety => value == 0 || value == MAX_SCORE,
            _ => (0..=MAX_SCORE).contains(&value),
        };
        if !in_scale {
            return Err(AnnotationParseError::ScaleViolation { aspect, value });
        }
        column.push(value);
    }
    Ok(column)
}

/// Parse a judge reply into the two per-response rating columns.
///
/// The reply must contain `Response 1 Evaluation` and `Response 2 Evaluation`
/// sections with `<k>` blocks; the last `Rating:` integer inside each block
/// is taken, validated against the aspect's scale.
pub fn parse_annotation(
    aspect: Aspect,
    raw: &str,
    expected: (usize, usize),
) -> Result<(Vec<i64>, Vec<i64>), AnnotationParseError> {
    let h1 = raw.find("Response 1 Evaluation").ok_or_else(|| {
        AnnotationParseError::ParseFailure("missing 'Response 1 Evaluation' section".into())
    })?;
    let h2 = raw.find("Response 2 Evaluation").ok_or_else(|| {
        AnnotationParseError::ParseFailure("missing 'Response 2 Evaluation' section".into())
    })?;
    if h2 <= h1 {
        return Err(AnnotationParseError::ParseFailure(
            "response sections out of order".into(),
        ));
    }
    let col1 = parse_section(aspect, &raw[h1..h2], 1, expected.0)?;
    let col2 = parse_section(aspect, &raw[h2..], 2, expected.1)?;
    Ok((col1, col2))
}

/// Raw reply and parsed columns for one aspect of one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectTranscript {
    pub aspect: Aspect,
    pub reply: String,
    pub chosen_column: Vec<i64>,
    pub rejected_column: Vec<i64>,
}

/// Full audit record of one pair's annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTranscript {
    pub pair_id: String,
    pub aspects: Vec<AspectTranscript>,
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("{aspect}: judge unavailable after {attempts} attempts: {message}")]
    JudgeUnavailable {
        aspect: Aspect,
        attempts: usize,
        message: String,
    },
    #[error("{aspect}: retries exhausted after {attempts} attempts: {last_error}")]
    ExhaustedRetries {
        aspect: Aspect,
        attempts: usize,
        last_error: String,
    },
    #[error("annotated pair violates invariants: {0}")]
    Invariant(ValidationReport),
}

/// Knobs for [`annotate_pair`].
#[derive(Debug, Clone)]
pub struct AnnotateOptions {
    /// Repair a decreasing completeness column with a running maximum and
    /// flag it in provenance, instead of rejecting the pair.
    pub repair_completeness: bool,
    /// Re-asks allowed per aspect on parse failure or transport error.
    pub retry_budget: usize,
    /// In-flight bound for per-pair aspect requests.
    pub max_in_flight: usize,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        AnnotateOptions {
            repair_completeness: true,
            retry_budget: 2,
            max_in_flight: 4,
        }
    }
}

/// Running-maximum repair of a completeness column. Returns whether anything
/// changed.
pub fn repair_completeness(column: &mut [i64]) -> bool {
    let mut changed = false;
    let mut running = i64::MIN;
    for v in column.iter_mut() {
        running = running.max(*v);
        if *v != running {
            *v = running;
            changed = true;
        }
    }
    changed
}

fn obtain_columns(
    client: &dyn JudgeClient,
    aspect: Aspect,
    prompt: &str,
    expected: (usize, usize),
    retry_budget: usize,
) -> Result<(String, Vec<i64>, Vec<i64>), AnnotateError> {
    let attempts_allowed = retry_budget + 1;
    let mut last_parse_error: Option<AnnotationParseError> = None;
    let mut last_transport_error: Option<JudgeError> = None;
    for _ in 0..attempts_allowed {
        match client.complete(prompt) {
            Err(e) => last_transport_error = Some(e),
            Ok(raw) => match parse_annotation(aspect, &raw, expected) {
                Ok((c1, c2)) => return Ok((raw, c1, c2)),
                Err(e) => last_parse_error = Some(e),
            },
        }
    }
    if let Some(e) = last_parse_error {
        Err(AnnotateError::ExhaustedRetries {
            aspect,
            attempts: attempts_allowed,
            last_error: e.to_string(),
        })
    } else {
        Err(AnnotateError::JudgeUnavailable {
            aspect,
            attempts: attempts_allowed,
            message: last_transport_error
                .map(|e| e.to_string())
                .unwrap_or_default(),
        })
    }
}

/// Annotate one pair: render the five aspect prompts, dispatch them (at most
/// `max_in_flight` concurrently), parse the replies into score columns, and
/// assemble a validated [`PreferencePair`].
pub fn annotate_pair(
    id: &str,
    history: &[Utterance],
    chosen_segments: &[Segment],
    rejected_segments: &[Segment],
    client: &dyn JudgeClient,
    templates: &TemplateSet,
    opts: &AnnotateOptions,
) -> Result<(PreferencePair, AnnotationTranscript), AnnotateError> {
    let expected = (chosen_segments.len(), rejected_segments.len());
    let mut results: [Option<Result<(String, Vec<i64>, Vec<i64>), AnnotateError>>; 5] =
        Default::default();
    let in_flight = opts.max_in_flight.max(1);
    for chunk in Aspect::ALL.chunks(in_flight) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&aspect| {
                    scope.spawn(move || {
                        let prompt = render_prompt(
                            templates,
                            aspect,
                            history,
                            chosen_segments,
                            rejected_segments,
                        );
                        (
                            aspect,
                            obtain_columns(client, aspect, &prompt, expected, opts.retry_budget),
                        )
                    })
                })
                .collect();
            for handle in handles {
                let (aspect, result) = handle.join().expect("annotation worker panicked");
                results[aspect.index()] = Some(result);
            }
        });
    }

    let mut transcript = AnnotationTranscript {
        pair_id: id.to_string(),
        aspects: Vec::with_capacity(5),
    };
    let mut columns_chosen: Vec<Vec<i64>> = Vec::with_capacity(5);
    let mut columns_rejected: Vec<Vec<i64>> = Vec::with_capacity(5);
    for aspect in Aspect::ALL {
        let (raw, c1, c2) = results[aspect.index()]
            .take()
            .expect("every aspect dispatched")?;
        transcript.aspects.push(AspectTranscript {
            aspect,
            reply: raw,
            chosen_column: c1.clone(),
            rejected_column: c2.clone(),
        });
        columns_chosen.push(c1);
        columns_rejected.push(c2);
    }

    let mut repaired = [false, false];
    if opts.repair_completeness {
        let j = Aspect::Completeness.index();
        repaired[0] = repair_completeness(&mut columns_chosen[j]);
        repaired[1] = repair_completeness(&mut columns_rejected[j]);
    }

    let to_matrix = |cols: &[Vec<i64>], len: usize| {
        ScoreMatrix(
            (0..len)
                .map(|k| {
                    let mut row = [0i64; 5];
                    for (j, col) in cols.iter().enumerate() {
                        row[j] = col[k];
                    }
                    row
                })
                .collect(),
        )
    };
    let pair = PreferencePair {
        id: id.to_string(),
        history: history.to_vec(),
        chosen: AnnotatedResponse::new(
            chosen_segments.to_vec(),
            to_matrix(&columns_chosen, expected.0),
        ),
        rejected: AnnotatedResponse::new(
            rejected_segments.to_vec(),
            to_matrix(&columns_rejected, expected.1),
        ),
        provenance: Some(AnnotationProvenance {
            judge: client.name(),
            scored_jointly: true,
            completeness_repaired_chosen: repaired[0],
            completeness_repaired_rejected: repaired[1],
        }),
        extra: serde_json::Map::new(),
    };
    let report = crate::dataset::validate_pair(&pair);
    if !report.is_clean() {
        return Err(AnnotateError::Invariant(report));
    }
    Ok((pair, transcript))
}

#[derive(Debug, Error, PartialEq)]
pub enum VoteError {
    #[error("item {item} has {found} votes, expected 5")]
    WrongVoterCount { item: usize, found: usize },
    #[error("no judgments supplied")]
    Empty,
}

/// Majority-vote audit: an item counts as incorrect when three or more of its
/// five votes flag it incorrect. Returns the fraction of correct items.
pub fn majority_vote_accuracy(judgments: &[Vec<bool>]) -> Result<f64, VoteError> {
    if judgments.is_empty() {
        return Err(VoteError::Empty);
    }
    let mut correct = 0usize;
    for (item, votes) in judgments.iter().enumerate() {
        if votes.len() != 5 {
            return Err(VoteError::WrongVoterCount {
                item,
                found: votes.len(),
            });
        }
        let incorrect_votes = votes.iter().filter(|&&v| !v).count();
        if incorrect_votes < 3 {
            correct += 1;
        }
    }
    Ok(correct as f64 / judgments.len() as f64)
}
