//! Word-level tokenizer with byte offsets and a reserved end-of-sequence id.
//!
//! Alphanumeric runs become one token when the vocabulary knows them and fall
//! back to single characters otherwise; every other character (punctuation,
//! whitespace) is always its own token. Concatenating the token strings
//! reproduces the input bytes exactly, which segment alignment relies on.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::segmenter::ByteRange;

/// Reserved end-of-sequence token id.
pub const EOS_ID: u32 = 0;
/// Display string of the reserved token. It can never be produced by the
/// tokenizer: its characters tokenize individually.
pub const EOS_TOKEN: &str = "<eos>";

#[derive(Debug, Error, PartialEq)]
pub enum TokenizerError {
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("duplicate vocabulary entry {0:?}")]
    DuplicateToken(String),
    #[error("token id {0} out of range")]
    UnknownId(u32),
}

/// One tokenized piece with its byte extent in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenPiece {
    pub id: u32,
    pub start: usize,
    pub len: usize,
}

impl TokenPiece {
    pub fn byte_range(&self) -> ByteRange {
        ByteRange::new(self.start, self.len)
    }
}

/// Byte ranges of a token sequence, for segment alignment.
pub fn byte_ranges(pieces: &[TokenPiece]) -> Vec<ByteRange> {
    pieces.iter().map(TokenPiece::byte_range).collect()
}

/// Ordered token list with a bijective string-to-id index.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Build a vocabulary from explicit tokens. The end-of-sequence token is
    /// always id 0 and must not be listed.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list = vec![EOS_TOKEN.to_string()];
        let mut index = HashMap::new();
        index.insert(EOS_TOKEN.to_string(), EOS_ID);
        for token in tokens {
            let token = token.into();
            if index.contains_key(&token) {
                return Err(TokenizerError::DuplicateToken(token));
            }
            index.insert(token.clone(), list.len() as u32);
            list.push(token);
        }
        Ok(Vocab {
            tokens: list,
            index,
        })
    }

    /// Build from a text corpus: every alphanumeric run plus every other
    /// single character, sorted for a deterministic ordering.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(corpus: I) -> Self {
        let mut seen: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        for text in corpus {
            for piece in split_pieces(text) {
                match piece {
                    Piece::Word(w) => {
                        seen.insert(w.to_string());
                        // Character fallback must stay available for unseen
                        // words built from seen characters.
                        for c in w.chars() {
                            seen.insert(c.to_string());
                        }
                    }
                    Piece::Char(c) => {
                        seen.insert(c.to_string());
                    }
                }
            }
        }
        Vocab::from_tokens(seen).expect("sorted set has no duplicates")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Tokenize with byte offsets. Unknown words fall back to characters;
    /// an unknown character is an error.
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenPiece>, TokenizerError> {
        let mut out = Vec::new();
        let mut pos = 0usize;
        for piece in split_pieces(text) {
            match piece {
                Piece::Word(w) => {
                    if let Some(id) = self.id(w) {
                        out.push(TokenPiece {
                            id,
                            start: pos,
                            len: w.len(),
                        });
                        pos += w.len();
                    } else {
                        for c in w.chars() {
                            let s = c.to_string();
                            let id = self
                                .id(&s)
                                .ok_or_else(|| TokenizerError::UnknownToken(s.clone()))?;
                            out.push(TokenPiece {
                                id,
                                start: pos,
                                len: c.len_utf8(),
                            });
                            pos += c.len_utf8();
                        }
                    }
                }
                Piece::Char(c) => {
                    let s = c.to_string();
                    let id = self
                        .id(&s)
                        .ok_or_else(|| TokenizerError::UnknownToken(s))?;
                    out.push(TokenPiece {
                        id,
                        start: pos,
                        len: c.len_utf8(),
                    });
                    pos += c.len_utf8();
                }
            }
        }
        Ok(out)
    }

    /// Token ids only.
    pub fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        Ok(self.tokenize(text)?.into_iter().map(|p| p.id).collect())
    }

    /// Concatenate token strings back into text. The end-of-sequence id
    /// renders as nothing.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut out = String::new();
        for &id in ids {
            if id == EOS_ID {
                continue;
            }
            out.push_str(
                self.token(id)
                    .ok_or(TokenizerError::UnknownId(id))?,
            );
        }
        Ok(out)
    }

    /// Write one token per line, JSON-escaped so whitespace tokens survive.
    pub fn save<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for token in &self.tokens {
            writeln!(
                writer,
                "{}",
                serde_json::to_string(token).expect("strings serialize")
            )?;
        }
        Ok(())
    }

    /// Read a vocabulary saved by [`Vocab::save`].
    pub fn load<R: BufRead>(reader: R) -> Result<Self, VocabLoadError> {
        let mut tokens = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let token: String =
                serde_json::from_str(&line).map_err(|e| VocabLoadError::BadLine {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            tokens.push(token);
        }
        if tokens.first().map(String::as_str) != Some(EOS_TOKEN) {
            return Err(VocabLoadError::MissingEos);
        }
        Vocab::from_tokens(tokens.into_iter().skip(1))
            .map_err(|e| VocabLoadError::BadLine {
                line: 0,
                message: e.to_string(),
            })
    }
}

#[derive(Debug, Error)]
pub enum VocabLoadError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    BadLine { line: usize, message: String },
    #[error("vocabulary file does not start with the end-of-sequence token")]
    MissingEos,
}

enum Piece<'a> {
    Word(&'a str),
    Char(char),
}

fn split_pieces(text: &str) -> impl Iterator<Item = Piece<'_>> {
    let mut pieces = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if word_start.is_none() {
                word_start = Some(i);
            }
        } else {
            if let Some(start) = word_start.take() {
                pieces.push(Piece::Word(&text[start..i]));
            }
            pieces.push(Piece::Char(c));
        }
    }
    if let Some(start) = word_start {
        pieces.push(Piece::Word(&text[start..]));
    }
    pieces.into_iter()
}
