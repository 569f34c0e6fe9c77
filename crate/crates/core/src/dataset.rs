//! Preference dataset schema: segment-by-aspect score matrices attached to
//! chosen/rejected response pairs, plus parsing, validation, and distribution
//! statistics.
//!
//! The on-disk format is newline-delimited JSON, one [`PreferencePair`] per
//! line. Top-level keys are `id`, `history`, `chosen`, `rejected`; each
//! response carries its `segments` (text plus the separator that followed it
//! in the original string) and a `scores` matrix with one five-column row per
//! segment. Unknown fields are preserved across a round trip.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The five scoring aspects, in fixed column order.
///
/// Every score matrix, weight vector, and prompt template indexes aspects in
/// this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    Helpfulness,
    Correctness,
    Safety,
    Completeness,
    Clarity,
}

impl Aspect {
    /// All aspects in column order.
    pub const ALL: [Aspect; 5] = [
        Aspect::Helpfulness,
        Aspect::Correctness,
        Aspect::Safety,
        Aspect::Completeness,
        Aspect::Clarity,
    ];

    /// Column index of this aspect (0..5).
    pub fn index(self) -> usize {
        match self {
            Aspect::Helpfulness => 0,
            Aspect::Correctness => 1,
            Aspect::Safety => 2,
            Aspect::Completeness => 3,
            Aspect::Clarity => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Aspect::Helpfulness => "helpfulness",
            Aspect::Correctness => "correctness",
            Aspect::Safety => "safety",
            Aspect::Completeness => "completeness",
            Aspect::Clarity => "clarity",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maximum Likert point value; scores live in `0..=MAX_SCORE`.
pub const MAX_SCORE: i64 = 4;

/// A validated row of the score matrix: one Likert score per aspect.
///
/// All entries are in `{0..4}`; the safety entry is restricted to `{0, 4}`
/// (pass/fail).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AspectVector([u8; 5]);

impl AspectVector {
    pub fn new(raw: [i64; 5]) -> Result<Self, ScoreError> {
        for (j, &v) in raw.iter().enumerate() {
            if !(0..=MAX_SCORE).contains(&v) {
                return Err(ScoreError::OutOfRange {
                    aspect: Aspect::ALL[j],
                    value: v,
                });
            }
        }
        if raw[Aspect::Safety.index()] != 0 && raw[Aspect::Safety.index()] != MAX_SCORE {
            return Err(ScoreError::SafetyNotBinary {
                value: raw[Aspect::Safety.index()],
            });
        }
        let mut out = [0u8; 5];
        for (o, &v) in out.iter_mut().zip(raw.iter()) {
            *o = v as u8;
        }
        Ok(AspectVector(out))
    }

    pub fn get(&self, aspect: Aspect) -> u8 {
        self.0[aspect.index()]
    }

    pub fn raw(&self) -> [u8; 5] {
        self.0
    }

    /// Scores mapped linearly onto `[0, 1]` (each divided by 4).
    pub fn normalized(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (o, &v) in out.iter_mut().zip(self.0.iter()) {
            *o = f64::from(v) / MAX_SCORE as f64;
        }
        out
    }
}

/// Invalid score value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("{aspect} score {value} outside 0..=4")]
    OutOfRange { aspect: Aspect, value: i64 },
    #[error("safety score {value} must be 0 or 4")]
    SafetyNotBinary { value: i64 },
}

/// Segments-by-aspects score matrix (`S` rows, 5 columns).
///
/// Stored raw so that invalid annotations stay representable; validation
/// reports range/safety/monotonicity violations instead of failing to parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ScoreMatrix(pub Vec<[i64; 5]>);

impl ScoreMatrix {
    pub fn rows(&self) -> usize {
        self.0.len()
    }

    /// Validated view of every row.
    pub fn aspect_vectors(&self) -> Result<Vec<AspectVector>, ScoreError> {
        self.0.iter().map(|&row| AspectVector::new(row)).collect()
    }

    pub fn column(&self, aspect: Aspect) -> Vec<i64> {
        self.0.iter().map(|row| row[aspect.index()]).collect()
    }
}

/// One scoring unit of a response: the segment text plus the separator
/// (whitespace the segmenter stripped) that followed it in the original
/// response. Concatenating `text + sep` over all segments reproduces the
/// response byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub sep: String,
}

impl Segment {
    pub fn new(text: impl Into<String>, sep: impl Into<String>) -> Self {
        Segment {
            text: text.into(),
            sep: sep.into(),
        }
    }
}

/// A response split into segments with one score row per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedResponse {
    pub segments: Vec<Segment>,
    pub scores: ScoreMatrix,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl AnnotatedResponse {
    pub fn new(segments: Vec<Segment>, scores: ScoreMatrix) -> Self {
        AnnotatedResponse {
            segments,
            scores,
            extra: serde_json::Map::new(),
        }
    }

    /// The original response text: concatenation of every segment's text and
    /// trailing separator.
    pub fn full_text(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            out.push_str(&seg.text);
            out.push_str(&seg.sep);
        }
        out
    }
}

/// Speaker role in a conversation history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::User => f.write_str("user"),
            Role::Assistant => f.write_str("assistant"),
        }
    }
}

/// One turn of the prompt conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub role: Role,
    pub content: String,
}

impl Utterance {
    pub fn user(content: impl Into<String>) -> Self {
        Utterance {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Utterance {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// How a pair's annotations were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationProvenance {
    /// Identifier of the judge that produced the scores.
    pub judge: String,
    /// Both responses were scored by the same per-aspect prompt.
    pub scored_jointly: bool,
    /// The completeness column of the chosen response was monotonicity-repaired.
    #[serde(default)]
    pub completeness_repaired_chosen: bool,
    /// The completeness column of the rejected response was monotonicity-repaired.
    #[serde(default)]
    pub completeness_repaired_rejected: bool,
}

/// One dataset record: a prompt history with an annotated chosen and rejected
/// response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub id: String,
    pub history: Vec<Utterance>,
    pub chosen: AnnotatedResponse,
    pub rejected: AnnotatedResponse,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<AnnotationProvenance>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl PreferencePair {
    /// Names of top-level fields outside the fixed schema; callers surface
    /// these as warnings.
    pub fn unknown_fields(&self) -> Vec<&str> {
        self.extra.keys().map(String::as_str).collect()
    }
}

/// Machine-readable violation category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationCode {
    SegmentCountMismatch,
    ScoreRange,
    SafetyBinary,
    CompletenessDecreasing,
    EmptySegment,
    DuplicateId,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationCode::SegmentCountMismatch => "SEGMENT_COUNT_MISMATCH",
            ViolationCode::ScoreRange => "SCORE_RANGE",
            ViolationCode::SafetyBinary => "SAFETY_BINARY",
            ViolationCode::CompletenessDecreasing => "COMPLETENESS_DECREASING",
            ViolationCode::EmptySegment => "EMPTY_SEGMENT",
            ViolationCode::DuplicateId => "DUPLICATE_ID",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
    /// Dotted path into the record, e.g. `chosen.scores[2][3]`.
    pub location: String,
}

/// Outcome of validating one record. Violations are data, not errors: an
/// empty list means the record is accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub id: String,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_clean() {
            return write!(f, "{}: ok", self.id);
        }
        writeln!(f, "{}: {} violation(s)", self.id, self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {} at {}: {}", v.code, v.location, v.message)?;
        }
        Ok(())
    }
}

/// Record-level parse failure.
#[derive(Debug, Error)]
pub enum ParseError {
    /// The line is not well-formed JSON.
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    /// The JSON is well-formed but does not match the schema.
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    /// The record parsed but breaks a dataset invariant.
    #[error("invariant violation: {0}")]
    InvariantViolation(ValidationReport),
}

/// Parse one serialized record without enforcing invariants; returns the pair
/// together with its validation report so callers can surface violations as
/// data.
pub fn parse_record_lenient(line: &str) -> Result<(PreferencePair, ValidationReport), ParseError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| ParseError::MalformedRecord(e.to_string()))?;
    let pair: PreferencePair =
        serde_json::from_value(value).map_err(|e| ParseError::SchemaViolation(e.to_string()))?;
    let report = validate_pair(&pair);
    Ok((pair, report))
}

/// Parse one serialized record, rejecting anything that violates an invariant.
pub fn parse_record(line: &str) -> Result<PreferencePair, ParseError> {
    let (pair, report) = parse_record_lenient(line)?;
    if !report.is_clean() {
        return Err(ParseError::InvariantViolation(report));
    }
    Ok(pair)
}

/// Serialize a record to its single-line form.
pub fn serialize_record(pair: &PreferencePair) -> String {
    serde_json::to_string(pair).expect("preference pair serializes")
}

fn validate_response(side: &str, resp: &AnnotatedResponse, out: &mut Vec<Violation>) {
    if resp.segments.len() != resp.scores.rows() {
        out.push(Violation {
            code: ViolationCode::SegmentCountMismatch,
            message: format!(
                "{} segments but {} score rows",
                resp.segments.len(),
                resp.scores.rows()
            ),
            location: side.to_string(),
        });
    }
    for (k, seg) in resp.segments.iter().enumerate() {
        if seg.text.trim().is_empty() {
            out.push(Violation {
                code: ViolationCode::EmptySegment,
                message: "segment text empty after trimming".to_string(),
                location: format!("{side}.segments[{k}]"),
            });
        }
    }
    for (k, row) in resp.scores.0.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !(0..=MAX_SCORE).contains(&v) {
                out.push(Violation {
                    code: ViolationCode::ScoreRange,
                    message: format!("{} score {} outside 0..=4", Aspect::ALL[j], v),
                    location: format!("{side}.scores[{k}][{j}]"),
                });
            } else if j == Aspect::Safety.index() && v != 0 && v != MAX_SCORE {
                out.push(Violation {
                    code: ViolationCode::SafetyBinary,
                    message: format!("safety score {v} must be 0 or 4"),
                    location: format!("{side}.scores[{k}][{j}]"),
                });
            }
        }
    }
    let completeness = resp.scores.column(Aspect::Completeness);
    for k in 1..completeness.len() {
        if completeness[k] < completeness[k - 1] {
            out.push(Violation {
                code: ViolationCode::CompletenessDecreasing,
                message: format!(
                    "completeness drops from {} to {}",
                    completeness[k - 1],
                    completeness[k]
                ),
                location: format!("{side}.scores[{k}][3]"),
            });
        }
    }
}

/// Check every invariant of one pair. Violations are reported in a fixed
/// traversal order (chosen first, then rejected; within a response: segment
/// count, empty segments, score range/safety, completeness monotonicity).
pub fn validate_pair(pair: &PreferencePair) -> ValidationReport {
    let mut violations = Vec::new();
    validate_response("chosen", &pair.chosen, &mut violations);
    validate_response("rejected", &pair.rejected, &mut violations);
    ValidationReport {
        id: pair.id.clone(),
        violations,
    }
}

/// Validate a whole dataset: per-record reports plus duplicate-id detection
/// (flagged on the second and later occurrences).
pub fn validate_dataset(pairs: &[PreferencePair]) -> Vec<ValidationReport> {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut reports = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let mut report = validate_pair(pair);
        if !seen.insert(pair.id.as_str()) {
            report.violations.push(Violation {
                code: ViolationCode::DuplicateId,
                message: format!("id {:?} already used by an earlier record", pair.id),
                location: "id".to_string(),
            });
        }
        reports.push(report);
    }
    reports
}

/// Line-addressed failure while reading a dataset file.
#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error("line {line}: {source}")]
    Record {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Read a newline-delimited dataset, enforcing all invariants. Blank lines
/// are skipped.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<PreferencePair>, DatasetIoError> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair = parse_record(&line).map_err(|source| DatasetIoError::Record {
            line: idx + 1,
            source,
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Write a dataset in its newline-delimited form.
pub fn write_dataset<W: std::io::Write>(
    mut writer: W,
    pairs: &[PreferencePair],
) -> std::io::Result<()> {
    for pair in pairs {
        writeln!(writer, "{}", serialize_record(pair))?;
    }
    Ok(())
}

/// Which side of a pair a response sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Chosen,
    Rejected,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Chosen, Side::Rejected];

    pub fn index(self) -> usize {
        match self {
            Side::Chosen => 0,
            Side::Rejected => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Chosen => "chosen",
            Side::Rejected => "rejected",
        }
    }
}

/// Score-distribution statistics over a dataset.
///
/// Histograms are indexed `[side][aspect][score]`. Segment histograms count
/// every score cell; the min/max histograms count, per response and aspect,
/// the lowest and highest segment score of that response.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DistributionStats {
    pub pairs: u64,
    pub segments: [u64; 2],
    pub segment_hist: [[[u64; 5]; 5]; 2],
    pub response_min_hist: [[[u64; 5]; 5]; 2],
    pub response_max_hist: [[[u64; 5]; 5]; 2],
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("score {value} outside 0..=4 at {location}; validate the dataset first")]
    OutOfRangeScore { value: i64, location: String },
}

impl DistributionStats {
    fn add_response(&mut self, id: &str, side: Side, resp: &AnnotatedResponse) -> Result<(), StatsError> {
        let s = side.index();
        self.segments[s] += resp.scores.rows() as u64;
        let mut mins = [i64::MAX; 5];
        let mut maxs = [i64::MIN; 5];
        for (k, row) in resp.scores.0.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(0..=MAX_SCORE).contains(&v) {
                    return Err(StatsError::OutOfRangeScore {
                        value: v,
                        location: format!("{id}:{}.scores[{k}][{j}]", side.name()),
                    });
                }
                self.segment_hist[s][j][v as usize] += 1;
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        if resp.scores.rows() > 0 {
            for j in 0..5 {
                self.response_min_hist[s][j][mins[j] as usize] += 1;
                self.response_max_hist[s][j][maxs[j] as usize] += 1;
            }
        }
        Ok(())
    }

    /// Accumulate one pair.
    pub fn add_pair(&mut self, pair: &PreferencePair) -> Result<(), StatsError> {
        self.pairs += 1;
        self.add_response(&pair.id, Side::Chosen, &pair.chosen)?;
        self.add_response(&pair.id, Side::Rejected, &pair.rejected)?;
        Ok(())
    }

    /// Combine two accumulators. Associative and order-independent.
    pub fn merge(&mut self, other: &DistributionStats) {
        self.pairs += other.pairs;
        for s in 0..2 {
            self.segments[s] += other.segments[s];
            for j in 0..5 {
                for v in 0..5 {
                    self.segment_hist[s][j][v] += other.segment_hist[s][j][v];
                    self.response_min_hist[s][j][v] += other.response_min_hist[s][j][v];
                    self.response_max_hist[s][j][v] += other.response_max_hist[s][j][v];
                }
            }
        }
    }

    /// CSV dump: `table,side,aspect,score,count`, one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("table,side,aspect,score,count\n");
        let tables: [(&str, &[[[u64; 5]; 5]; 2]); 3] = [
            ("segment", &self.segment_hist),
            ("response_min", &self.response_min_hist),
            ("response_max", &self.response_max_hist),
        ];
        for (name, hist) in tables {
            for side in Side::BOTH {
                for aspect in Aspect::ALL {
                    for score in 0..5usize {
                        out.push_str(&format!(
                            "{},{},{},{},{}\n",
                            name,
                            side.name(),
                            aspect,
                            score,
                            hist[side.index()][aspect.index()][score]
                        ));
                    }
                }
            }
        }
        out
    }

    /// Human-readable report.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "pairs: {}  segments: chosen {} / rejected {}\n",
            self.pairs, self.segments[0], self.segments[1]
        );
        out.push_str("segment score histogram (rows: aspect, cols: score 0..4)\n");
        for side in Side::BOTH {
            out.push_str(&format!("  {}\n", side.name()));
            for aspect in Aspect::ALL {
                let h = self.segment_hist[side.index()][aspect.index()];
                out.push_str(&format!(
                    "    {:<13} {:>6} {:>6} {:>6} {:>6} {:>6}\n",
                    aspect, h[0], h[1], h[2], h[3], h[4]
                ));
            }
        }
        out
    }
}

/// Compute distribution statistics over a stream of pairs.
pub fn dataset_stats<'a, I>(pairs: I) -> Result<DistributionStats, StatsError>
where
    I: IntoIterator<Item = &'a PreferencePair>,
{
    let mut stats = DistributionStats::default();
    for pair in pairs {
        stats.add_pair(pair)?;
    }
    if stats.pairs == 0 {
        return Err(StatsError::EmptyDataset);
    }
    Ok(stats)
}
