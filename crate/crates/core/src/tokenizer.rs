//! WordPiece vocabulary and the marker-aware encoder that turns a record into
//! a fixed-length id sequence.
//!
//! Layout of an encoded example:
//!
//! ```text
//! [CLS] left… [TAR] target… [TAR] right… [SEP] [PAD]…
//! ```
//!
//! The three segments are tokenized separately so that a target's subword
//! boundaries never depend on its neighbours. Without markers the `[TAR]`
//! tokens are simply absent.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::data::{self, DataError, LabelKind, LabeledRecord, SentimentLabel};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const TAR: &str = "[TAR]";
pub const RESERVED: [&str; 5] = [PAD, UNK, CLS, SEP, TAR];

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;
pub const TAR_ID: usize = 4;

pub const CONTINUATION: &str = "##";
const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("vocabulary size {size} too small: need at least {needed}")]
    SizeTooSmall { size: usize, needed: usize },
    #[error("vocabulary line {line}: expected reserved token {expected}, found {found:?}")]
    MissingReserved {
        line: usize,
        expected: &'static str,
        found: String,
    },
    #[error("duplicate vocabulary token {0:?}")]
    DuplicateToken(String),
    #[error("target needs {needed} positions but max_len is {max_len}")]
    TargetTooLong { needed: usize, max_len: usize },
    #[error("target tokenizes to nothing")]
    EmptyTarget,
    #[error("span ({start}, {end}) invalid for text of {len} characters")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token ↔ id table with the five reserved tokens at ids 0–4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        for (line, &expected) in RESERVED.iter().enumerate() {
            let found = tokens.get(line).map(String::as_str).unwrap_or("");
            if found != expected {
                return Err(TokenizerError::MissingReserved {
                    line,
                    expected,
                    found: found.to_string(),
                });
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), id).is_some() {
                return Err(TokenizerError::DuplicateToken(t.clone()));
            }
        }
        Ok(Self { tokens, index })
    }

    /// One token per line; the line number is the id.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TokenizerError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Greedy longest-match WordPiece over whitespace-separated words.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            self.tokenize_word(word, &mut out);
        }
        out
    }

    pub fn tokenize_ids(&self, text: &str) -> Vec<usize> {
        self.tokenize(text)
            .iter()
            .map(|t| self.id(t).unwrap_or(UNK_ID))
            .collect()
    }

    fn tokenize_word(&self, word: &str, out: &mut Vec<String>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_WORD_CHARS {
            out.push(UNK.to_string());
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut matched = None;
            for end in (start + 1..=chars.len()).rev() {
                let body: String = chars[start..end].iter().collect();
                let piece = if start > 0 {
                    format!("{CONTINUATION}{body}")
                } else {
                    body
                };
                if self.contains(&piece) {
                    matched = Some((end, piece));
                    break;
                }
            }
            match matched {
                Some((end, piece)) => {
                    pieces.push(piece);
                    start = end;
                }
                None => {
                    out.push(UNK.to_string());
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

/// Reserved tokens, then every character of the corpus, then the most
/// frequent whole words and `##` suffix pieces until `size` is reached.
/// Frequency ties keep first-appearance order.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], size: usize) -> Result<Vocabulary, TokenizerError> {
    let mut alphabet: Vec<char> = Vec::new();
    let mut word_counts: Vec<(String, usize)> = Vec::new();
    let mut word_pos: HashMap<String, usize> = HashMap::new();
    for line in corpus {
        for word in line.as_ref().split_whitespace() {
            for c in word.chars() {
                if !alphabet.contains(&c) {
                    alphabet.push(c);
                }
            }
            match word_pos.get(word) {
                Some(&p) => word_counts[p].1 += 1,
                None => {
                    word_pos.insert(word.to_string(), word_counts.len());
                    word_counts.push((word.to_string(), 1));
                }
            }
        }
    }
    let needed = RESERVED.len() + alphabet.len();
    if size < needed {
        return Err(TokenizerError::SizeTooSmall { size, needed });
    }

    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(alphabet.iter().map(|c| c.to_string()));

    // candidate → (count, first appearance)
    let mut candidates: Vec<(String, usize)> = Vec::new();
    let mut cand_pos: HashMap<String, usize> = HashMap::new();
    let mut bump = |piece: String, count: usize| match cand_pos.get(&piece) {
        Some(&p) => candidates[p].1 += count,
        None => {
            cand_pos.insert(piece.clone(), candidates.len());
            candidates.push((piece, count));
        }
    };
    for (word, count) in &word_counts {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > 1 {
            bump(word.clone(), *count);
        }
        for i in 1..chars.len() {
            let suffix: String = chars[i..].iter().collect();
            bump(format!("{CONTINUATION}{suffix}"), *count);
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].1.cmp(&candidates[a].1).then(a.cmp(&b)));
    for i in order {
        if tokens.len() >= size {
            break;
        }
        let piece = &candidates[i].0;
        if !tokens.contains(piece) {
            tokens.push(piece.clone());
        }
    }
    Vocabulary::from_tokens(tokens)
}

/// A record encoded to exactly `max_len` ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    pub ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
    /// Inclusive token positions of the target; includes the markers when
    /// `marked`.
    pub target_range: (usize, usize),
    pub first_marker_pos: Option<usize>,
    pub marked: bool,
    pub label: SentimentLabel,
}

impl EncodedExample {
    /// Number of non-pad positions.
    pub fn seq_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Ids strictly between the markers (or the whole range when unmarked).
    pub fn target_ids(&self) -> &[usize] {
        let (first, last) = self.target_range;
        let m = usize::from(self.marked);
        &self.ids[first + m..=last - m]
    }

    /// Structural checks: `[CLS]` first and `[SEP]` last among the unmasked
    /// prefix, pads exactly where the mask is 0, two `[TAR]` markers bracketing
    /// the target when marked and none otherwise.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.seq_len();
        if self.ids.len() != self.attention_mask.len() {
            return Err("ids and mask lengths differ".into());
        }
        if self.attention_mask[..n].iter().any(|&m| m != 1) {
            return Err("mask is not a 1-prefix".into());
        }
        for (i, (&id, &m)) in self.ids.iter().zip(&self.attention_mask).enumerate() {
            if (m == 0) != (id == PAD_ID) {
                return Err(format!("pad/mask disagree at {i}"));
            }
        }
        if n < 3 || self.ids[0] != CLS_ID || self.ids[n - 1] != SEP_ID {
            return Err("missing [CLS] or [SEP]".into());
        }
        let (first, last) = self.target_range;
        if !(0 < first && first <= last && last < n - 1) {
            return Err(format!("target range {first}..={last} outside 1..{}", n - 1));
        }
        let markers: Vec<usize> = (0..n).filter(|&i| self.ids[i] == TAR_ID).collect();
        if self.marked {
            if markers != [first, last] || first + 2 > last || self.first_marker_pos != Some(first) {
                return Err(format!("markers at {markers:?}, range {first}..={last}"));
            }
        } else if !markers.is_empty() || self.first_marker_pos.is_some() {
            return Err("unmarked example carries markers".into());
        }
        Ok(())
    }
}

/// Encodes `text` (already preprocessed) whose target occupies character
/// span `span`.
pub fn encode(
    text: &str,
    span: (usize, usize),
    label: SentimentLabel,
    vocab: &Vocabulary,
    max_len: usize,
    marked: bool,
) -> Result<EncodedExample, TokenizerError> {
    let len = text.chars().count();
    let (start, end) = span;
    if start >= end || end > len {
        return Err(TokenizerError::InvalidSpan { start, end, len });
    }
    let left = vocab.tokenize_ids(&data::char_slice(text, 0, start));
    let target = vocab.tokenize_ids(&data::char_slice(text, start, end));
    let right = vocab.tokenize_ids(&data::char_slice(text, end, len));
    if target.is_empty() {
        return Err(TokenizerError::EmptyTarget);
    }

    let markers = if marked { 2 } else { 0 };
    let fixed = 2 + markers + target.len();
    if fixed > max_len || max_len < 4 {
        return Err(TokenizerError::TargetTooLong {
            needed: fixed.max(4),
            max_len,
        });
    }
    // Window centred on the target: split the remaining budget between the
    // nearest left and right context.
    let budget = max_len - fixed;
    let half = budget / 2;
    let left_keep = left.len().min(half.max(budget.saturating_sub(right.len())));
    let right_keep = right.len().min(budget - left_keep);

    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS_ID);
    ids.extend_from_slice(&left[left.len() - left_keep..]);
    let first = ids.len();
    if marked {
        ids.push(TAR_ID);
    }
    ids.extend_from_slice(&target);
    if marked {
        ids.push(TAR_ID);
    }
    let last = ids.len() - 1;
    ids.extend_from_slice(&right[..right_keep]);
    ids.push(SEP_ID);
    let used = ids.len();
    ids.resize(max_len, PAD_ID);
    let mut attention_mask = vec![1u8; used];
    attention_mask.resize(max_len, 0);

    Ok(EncodedExample {
        ids,
        attention_mask,
        target_range: (first, last),
        first_marker_pos: marked.then_some(first),
        marked,
        label,
    })
}

/// Cleans the record, locates its target in the cleaned text and encodes it
/// with the label selected by `kind`.
pub fn encode_record(
    record: &LabeledRecord,
    vocab: &Vocabulary,
    max_len: usize,
    marked: bool,
    kind: LabelKind,
) -> Result<EncodedExample, TokenizerError> {
    let pre = data::preprocess(&record.text);
    let span = data::remap_span(record, &pre)?;
    encode(&pre.clean, span, record.label(kind), vocab, max_len, marked)
}
