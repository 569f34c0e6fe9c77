//! Response segmentation and token-span alignment.
//!
//! A response is split into scoring units: fenced code blocks and runs of
//! table rows stay whole, everything else splits after sentence-ending
//! punctuation or on blank lines. Splitting is byte-exact — each segment
//! records the separator that followed it, so concatenating `text + sep`
//! over all segments reproduces the input.

use thiserror::Error;

use crate::dataset::Segment;

/// Sentence-ending punctuation. A boundary requires one of these followed by
/// whitespace or end of text.
const TERMINATORS: [char; 7] = ['.', '!', '?', ';', '。', '！', '？'];

/// Words that keep a trailing period from ending a sentence. Matched
/// case-insensitively against the whitespace-delimited word ending at the
/// period, after stripping leading non-alphanumeric characters.
const ABBREVIATIONS: [&str; 9] = [
    "dr.", "mr.", "mrs.", "e.g.", "i.e.", "etc.", "vs.", "fig.", "eq.",
];

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("text is empty or whitespace-only")]
    EmptyText,
}

/// Contiguous run of token indices covering one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpan {
    /// First token index (inclusive).
    pub start: usize,
    /// Number of tokens.
    pub len: usize,
}

impl TokenSpan {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    /// Token indices in this span.
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }
}

/// Byte extent of one token inside the response text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteRange {
    pub start: usize,
    pub len: usize,
}

impl ByteRange {
    pub fn new(start: usize, len: usize) -> Self {
        ByteRange { start, len }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    /// Tokens do not tile the reconstructed response text.
    #[error("token offsets do not reconstruct the response: {0}")]
    Mismatch(String),
    /// A segment received no tokens under the first-byte rule.
    #[error("segment {segment} received zero tokens")]
    EmptySegmentSpan { segment: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BlockKind {
    Prose,
    Fence,
    Table,
}

#[derive(Debug)]
struct Block {
    kind: BlockKind,
    start: usize,
    end: usize, // exclusive, excludes the trailing newline of the last line
}

/// One line of the input with its byte extent. `end` excludes the newline.
struct Line {
    start: usize,
    end: usize,
}

fn scan_lines(text: &str) -> Vec<Line> {
    let mut lines = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\n' {
            lines.push(Line { start, end: i });
            start = i + 1;
        }
        i += 1;
    }
    if start < bytes.len() {
        lines.push(Line {
            start,
            end: bytes.len(),
        });
    }
    lines
}

fn classify_line(text: &str, line: &Line) -> LineKind {
    let content = &text[line.start..line.end];
    let trimmed = content.trim_start();
    if trimmed.is_empty() {
        LineKind::Blank
    } else if trimmed.starts_with("```") {
        LineKind::Fence
    } else if trimmed.starts_with('|') {
        LineKind::Table
    } else {
        LineKind::Prose
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LineKind {
    Blank,
    Fence,
    Table,
    Prose,
}

/// Group lines into prose / fence / table blocks. Bytes between blocks
/// (blank lines, trailing newlines) are not part of any block; they later
/// become separators.
fn scan_blocks(text: &str) -> Vec<Block> {
    let lines = scan_lines(text);
    let mut blocks: Vec<Block> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        match classify_line(text, &lines[i]) {
            LineKind::Blank => {
                i += 1;
            }
            LineKind::Fence => {
                let start = lines[i].start;
                let mut j = i + 1;
                while j < lines.len() && classify_line(text, &lines[j]) != LineKind::Fence {
                    j += 1;
                }
                let last = if j < lines.len() { j } else { lines.len() - 1 };
                blocks.push(Block {
                    kind: BlockKind::Fence,
                    start,
                    end: lines[last].end,
                });
                i = last + 1;
            }
            LineKind::Table => {
                let start = lines[i].start;
                let mut j = i;
                while j + 1 < lines.len() && classify_line(text, &lines[j + 1]) == LineKind::Table {
                    j += 1;
                }
                blocks.push(Block {
                    kind: BlockKind::Table,
                    start,
                    end: lines[j].end,
                });
                i = j + 1;
            }
            LineKind::Prose => {
                let start = lines[i].start;
                let mut j = i;
                while j + 1 < lines.len() && classify_line(text, &lines[j + 1]) == LineKind::Prose {
                    j += 1;
                }
                blocks.push(Block {
                    kind: BlockKind::Prose,
                    start,
                    end: lines[j].end,
                });
                i = j + 1;
            }
        }
    }
    blocks
}

/// Check the abbreviation guard for a period ending at byte `dot_end`
/// (exclusive). The guarded word is the maximal non-whitespace run ending at
/// the period, with leading non-alphanumeric characters stripped.
fn is_abbreviation(text: &str, dot_end: usize) -> bool {
    let prefix = &text[..dot_end];
    let word_start = prefix
        .rfind(|c: char| c.is_whitespace())
        .map(|p| p + text[p..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let word = &prefix[word_start..];
    let stripped = word.trim_start_matches(|c: char| !c.is_ascii_alphanumeric());
    ABBREVIATIONS
        .iter()
        .any(|a| stripped.eq_ignore_ascii_case(a))
}

/// Split one prose block (given by its byte range) into sentences, pushing
/// `(text_range, sep_range)` pairs.
fn split_prose(text: &str, start: usize, end: usize, out: &mut Vec<(usize, usize, usize)>) {
    // out entries: (text_start, text_end, sep_end)
    let block = &text[start..end];
    let mut sent_start = 0usize; // relative to block
    let mut chars = block.char_indices().peekable();
    while let Some((idx, ch)) = chars.next() {
        if !TERMINATORS.contains(&ch) {
            continue;
        }
        // Extend over a run of terminator characters.
        let mut run_end = idx + ch.len_utf8();
        let mut run_len = 1usize;
        let mut only_dots = ch == '.';
        while let Some(&(j, c2)) = chars.peek() {
            if TERMINATORS.contains(&c2) {
                run_end = j + c2.len_utf8();
                run_len += 1;
                only_dots &= c2 == '.';
                chars.next();
            } else {
                break;
            }
        }
        let followed_by_ws_or_end = block[run_end..]
            .chars()
            .next()
            .map_or(true, char::is_whitespace);
        if !followed_by_ws_or_end {
            continue;
        }
        if run_len == 1 && only_dots && is_abbreviation(block, run_end) {
            continue;
        }
        // Boundary: sentence text is [sent_start, run_end); separator is the
        // whitespace run that follows.
        let mut sep_end = run_end;
        for (j, c2) in block[run_end..].char_indices() {
            if c2.is_whitespace() {
                sep_end = run_end + j + c2.len_utf8();
            } else {
                break;
            }
        }
        out.push((start + sent_start, start + run_end, start + sep_end));
        sent_start = sep_end;
        // Skip chars consumed as separator.
        while let Some(&(j, _)) = chars.peek() {
            if j < sep_end {
                chars.next();
            } else {
                break;
            }
        }
    }
    if sent_start < block.len() {
        out.push((start + sent_start, start + block.len(), start + block.len()));
    }
}

/// Split a response into scoring-unit segments.
///
/// Fenced code blocks and contiguous table-row lines each form a single
/// segment; prose splits after sentence-ending punctuation followed by
/// whitespace (with an abbreviation guard) and on blank lines. Segments that
/// contain no alphanumeric characters are merged into the following segment
/// (the preceding one at end of text). Concatenating `text + sep` over the
/// result reproduces the input exactly.
pub fn segment_response(text: &str) -> Result<Vec<Segment>, SegmentError> {
    if text.trim().is_empty() {
        return Err(SegmentError::EmptyText);
    }
    let blocks = scan_blocks(text);
    // (text_start, text_end, sep_end) triples over the whole input.
    let mut ranges: Vec<(usize, usize, usize)> = Vec::new();
    for block in &blocks {
        match block.kind {
            BlockKind::Fence | BlockKind::Table => {
                ranges.push((block.start, block.end, block.end));
            }
            BlockKind::Prose => split_prose(text, block.start, block.end, &mut ranges),
        }
    }
    debug_assert!(!ranges.is_empty());
    // Stretch separators over inter-block gaps: each segment's sep extends to
    // the start of the next segment's text; the last extends to end of input.
    // A leading gap joins the first segment's text.
    for i in 0..ranges.len() {
        let next_start = ranges.get(i + 1).map_or(text.len(), |r| r.0);
        ranges[i].2 = next_start;
    }
    ranges[0].0 = 0;

    let mut segments: Vec<Segment> = Vec::with_capacity(ranges.len());
    for (text_start, text_end, sep_end) in ranges {
        segments.push(Segment::new(
            &text[text_start..text_end],
            &text[text_end..sep_end],
        ));
    }

    // Merge segments with no alphanumeric content into their neighbor.
    let mut merged: Vec<Segment> = Vec::with_capacity(segments.len());
    let mut carry = String::new();
    for seg in segments {
        let mut seg = seg;
        if !carry.is_empty() {
            seg.text = format!("{carry}{}", seg.text);
            carry.clear();
        }
        if seg.text.chars().any(char::is_alphanumeric) {
            merged.push(seg);
        } else {
            carry = format!("{}{}", seg.text, seg.sep);
        }
    }
    if !carry.is_empty() {
        if let Some(last) = merged.last_mut() {
            // Fold the dangling punctuation tail into the previous segment,
            // then recover the trailing whitespace as its separator.
            last.text = format!("{}{}{carry}", last.text, last.sep);
            let trimmed_len = last.text.trim_end().len();
            let sep = last.text.split_off(trimmed_len);
            last.sep = sep;
        } else {
            // Whole input had no alphanumeric characters: keep it as one
            // segment rather than dropping bytes.
            let trimmed_len = carry.trim_end().len();
            let sep = carry.split_off(trimmed_len);
            merged.push(Segment::new(carry, sep));
        }
    }
    Ok(merged)
}

/// Byte offsets of each segment's text within the reconstructed response:
/// `(text_start, text_len, sep_len)`.
pub fn segment_byte_ranges(segments: &[Segment]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::with_capacity(segments.len());
    let mut pos = 0;
    for seg in segments {
        out.push((pos, seg.text.len(), seg.sep.len()));
        pos += seg.text.len() + seg.sep.len();
    }
    out
}

/// Assign tokens to segments by the byte at which each token starts.
///
/// Tokens must tile the reconstructed response text contiguously from byte 0.
/// A token belongs to the segment whose region (text plus trailing separator)
/// contains its first byte, so separator tokens attach to the preceding
/// segment. Errors with [`AlignError::EmptySegmentSpan`] if any segment ends
/// up with no tokens; see [`align_segments_merging`] for the resolving
/// variant.
pub fn align_segments(
    segments: &[Segment],
    tokens: &[ByteRange],
) -> Result<Vec<TokenSpan>, AlignError> {
    let counts = segment_token_counts(segments, tokens)?;
    let mut spans = Vec::with_capacity(counts.len());
    let mut start = 0;
    for (k, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(AlignError::EmptySegmentSpan { segment: k });
        }
        spans.push(TokenSpan { start, len: count });
        start += count;
    }
    Ok(spans)
}

/// Alignment with empty-span resolution applied: a segment that received no
/// tokens is merged into its predecessor (or successor if it is first).
#[derive(Debug, Clone, PartialEq)]
pub struct MergedAlignment {
    /// Segments after merging; still reconstruct the response byte-exactly.
    pub segments: Vec<Segment>,
    /// One span per merged segment; spans partition the token sequence.
    pub spans: Vec<TokenSpan>,
    /// For each merged segment, the index of the original segment whose
    /// tokens it carries (used to pick score rows).
    pub source_indices: Vec<usize>,
}

/// Like [`align_segments`], but resolves zero-token segments by merging them
/// into a neighbor instead of failing.
pub fn align_segments_merging(
    segments: &[Segment],
    tokens: &[ByteRange],
) -> Result<MergedAlignment, AlignError> {
    let counts = segment_token_counts(segments, tokens)?;
    let mut merged_segments: Vec<Segment> = Vec::new();
    let mut spans: Vec<TokenSpan> = Vec::new();
    let mut source_indices: Vec<usize> = Vec::new();
    let mut pending: Option<Segment> = None; // leading zero-token run
    let mut start = 0usize;
    for (k, &count) in counts.iter().enumerate() {
        let seg = segments[k].clone();
        if count == 0 {
            if let Some(last) = merged_segments.last_mut() {
                last.text = format!("{}{}{}", last.text, last.sep, seg.text);
                last.sep = seg.sep;
            } else {
                pending = Some(match pending.take() {
                    None => seg,
                    Some(mut p) => {
                        p.text = format!("{}{}{}", p.text, p.sep, seg.text);
                        p.sep = seg.sep;
                        p
                    }
                });
            }
            continue;
        }
        let mut seg = seg;
        if let Some(p) = pending.take() {
            seg.text = format!("{}{}{}", p.text, p.sep, seg.text);
        }
        merged_segments.push(seg);
        spans.push(TokenSpan { start, len: count });
        source_indices.push(k);
        start += count;
    }
    if pending.is_some() {
        // Every segment had zero tokens, which contradicts token tiling of a
        // non-empty text; tiling was already checked.
        return Err(AlignError::Mismatch(
            "no segment received any token".to_string(),
        ));
    }
    Ok(MergedAlignment {
        segments: merged_segments,
        spans,
        source_indices,
    })
}

fn segment_token_counts(
    segments: &[Segment],
    tokens: &[ByteRange],
) -> Result<Vec<usize>, AlignError> {
    let total_len: usize = segments.iter().map(|s| s.text.len() + s.sep.len()).sum();
    let mut cursor = 0usize;
    for (i, t) in tokens.iter().enumerate() {
        if t.start != cursor {
            return Err(AlignError::Mismatch(format!(
                "token {i} starts at byte {} but previous token ended at {cursor}",
                t.start
            )));
        }
        if t.len == 0 {
            return Err(AlignError::Mismatch(format!("token {i} has zero length")));
        }
        cursor += t.len;
    }
    if cursor != total_len {
        return Err(AlignError::Mismatch(format!(
            "tokens cover {cursor} bytes but the response has {total_len}"
        )));
    }
    let regions = segment_byte_ranges(segments);
    let mut counts = vec![0usize; segments.len()];
    let mut k = 0usize;
    for t in tokens {
        while k + 1 < regions.len() && t.start >= regions[k + 1].0 {
            k += 1;
        }
        counts[k] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(text: &str, sep: &str) -> Segment {
        Segment::new(text, sep)
    }

    fn reconstruct(segments: &[Segment]) -> String {
        segments
            .iter()
            .map(|s| format!("{}{}", s.text, s.sep))
            .collect()
    }

    #[test]
    fn two_terminal_punctuations() {
        let got = segment_response("Hello. World!").unwrap();
        assert_eq!(got, vec![seg("Hello.", " "), seg("World!", "")]);
    }

    #[test]
    fn code_fence_is_one_segment() {
        let got = segment_response("Use:\n```\nx = 1. y = 2.\n```\nDone.").unwrap();
        assert_eq!(
            got,
            vec![
                seg("Use:", "\n"),
                seg("```\nx = 1. y = 2.\n```", "\n"),
                seg("Done.", ""),
            ]
        );
    }

    #[test]
    fn abbreviation_guard() {
        let got = segment_response("Dr. Smith arrived. He left.").unwrap();
        assert_eq!(got, vec![seg("Dr. Smith arrived.", " "), seg("He left.", "")]);
    }

    #[test]
    fn empty_text_is_an_error() {
        assert_eq!(segment_response(""), Err(SegmentError::EmptyText));
        assert_eq!(segment_response("  \n "), Err(SegmentError::EmptyText));
    }

    #[test]
    fn reconstruction_is_byte_exact() {
        let inputs = [
            "Hello. World!",
            "a\n\nb\n\nc.",
            "Text before.\n| a |\n| b |\nAfter...",
            "One.  Two!  Three?",
            "```\ncode\n```",
        ];
        for input in inputs {
            let segs = segment_response(input).unwrap();
            assert_eq!(reconstruct(&segs), input, "input: {input:?}");
        }
    }

    #[test]
    fn idempotent_on_own_output() {
        let input = "First. Second!\n\n| t |\nLast one.";
        let first = segment_response(input).unwrap();
        let again = segment_response(&reconstruct(&first)).unwrap();
        assert_eq!(first, again);
    }

    fn tile(lens: &[usize]) -> Vec<ByteRange> {
        let mut out = Vec::new();
        let mut pos = 0;
        for &l in lens {
            out.push(ByteRange::new(pos, l));
            pos += l;
        }
        out
    }

    #[test]
    fn single_segment_gets_all_tokens() {
        let segs = vec![seg("hello world", "")];
        let tokens = tile(&[5, 1, 5]); // "hello", " ", "world"
        let spans = align_segments(&segs, &tokens).unwrap();
        assert_eq!(spans, vec![TokenSpan { start: 0, len: 3 }]);
    }

    #[test]
    fn boundary_split_gives_symmetric_spans() {
        let segs = vec![seg("abc", ""), seg("def", "")];
        let tokens = tile(&[1, 1, 1, 1, 1, 1]);
        let spans = align_segments(&segs, &tokens).unwrap();
        assert_eq!(
            spans,
            vec![TokenSpan { start: 0, len: 3 }, TokenSpan { start: 3, len: 3 }]
        );
    }

    #[test]
    fn separator_token_goes_to_preceding_segment() {
        let segs = vec![seg("Hi.", " "), seg("Yo.", "")];
        // "Hi." -> one token, " " -> one token, "Yo." -> one token
        let tokens = tile(&[3, 1, 3]);
        let spans = align_segments(&segs, &tokens).unwrap();
        assert_eq!(
            spans,
            vec![TokenSpan { start: 0, len: 2 }, TokenSpan { start: 2, len: 1 }]
        );
    }

    #[test]
    fn mismatched_tokens_rejected() {
        let segs = vec![seg("abcd", "")];
        assert!(matches!(
            align_segments(&segs, &tile(&[2, 1])),
            Err(AlignError::Mismatch(_))
        ));
        let gap = vec![ByteRange::new(0, 2), ByteRange::new(3, 1)];
        assert!(matches!(
            align_segments(&segs, &gap),
            Err(AlignError::Mismatch(_))
        ));
    }

    #[test]
    fn zero_token_segment_errors_strictly_and_merges_leniently() {
        // Token "ab" straddles both segments; segment 1's only byte is inside
        // the straddling token, so it receives nothing.
        let segs = vec![seg("a", ""), seg("b", "")];
        let tokens = vec![ByteRange::new(0, 2)];
        assert_eq!(
            align_segments(&segs, &tokens),
            Err(AlignError::EmptySegmentSpan { segment: 1 })
        );
        let merged = align_segments_merging(&segs, &tokens).unwrap();
        assert_eq!(merged.segments, vec![seg("ab", "")]);
        assert_eq!(merged.spans, vec![TokenSpan { start: 0, len: 1 }]);
        assert_eq!(merged.source_indices, vec![0]);
    }

    #[test]
    fn middle_zero_token_segment_folds_into_predecessor() {
        let segs = vec![seg("a", ""), seg("b", ""), seg("c", "")];
        let tokens = vec![ByteRange::new(0, 2), ByteRange::new(2, 1)];
        let merged = align_segments_merging(&segs, &tokens).unwrap();
        assert_eq!(merged.segments, vec![seg("ab", ""), seg("c", "")]);
        assert_eq!(
            merged.spans,
            vec![TokenSpan { start: 0, len: 1 }, TokenSpan { start: 1, len: 1 }]
        );
        assert_eq!(merged.source_indices, vec![0, 2]);
    }

    #[test]
    fn spans_partition_tokens() {
        let input = "First one. Second two! Third three?";
        let segs = segment_response(input).unwrap();
        // Character-level tokens.
        let text = reconstruct(&segs);
        let tokens: Vec<ByteRange> = text
            .char_indices()
            .map(|(i, c)| ByteRange::new(i, c.len_utf8()))
            .collect();
        let spans = align_segments(&segs, &tokens).unwrap();
        let mut covered = 0;
        for (i, s) in spans.iter().enumerate() {
            assert_eq!(s.start, covered, "span {i} out of order");
            covered += s.len;
        }
        assert_eq!(covered, tokens.len());
    }
}
