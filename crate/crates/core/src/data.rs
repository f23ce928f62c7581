//! Labeled records, tweet cleaning with offset tracking, JSONL I/O and
//! stratified splitting.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: cannot parse record: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: invalid field `{field}`: {message}")]
    InvariantViolation {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("record {id}: target {target:?} does not survive preprocessing")]
    SpanLost { id: String, target: String },
    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),
    #[error("split would leave the {0} subset empty")]
    DegenerateSplit(&'static str),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Three-way polarity. The integer encoding is fixed: positive=0,
/// negative=1, neutral=2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [Self::Positive, Self::Negative, Self::Neutral];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            Self::Positive => 0,
            Self::Negative => 1,
            Self::Neutral => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Negative => "negative",
            Self::Neutral => "neutral",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(Self::Positive),
            "negative" => Ok(Self::Negative),
            "neutral" => Ok(Self::Neutral),
            other => Err(DataError::UnknownLabel(other.to_string())),
        }
    }
}

/// Which of the two annotations of a record to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Sentence,
    #[default]
    Targeted,
}

impl FromStr for LabelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sentence" => Ok(Self::Sentence),
            "targeted" => Ok(Self::Targeted),
            other => Err(format!("expected `sentence` or `targeted`, got {other:?}")),
        }
    }
}

/// One text with a single target span and its sentence-level and targeted
/// sentiment. Offsets count unicode scalar values; `target_end` is exclusive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub id: String,
    pub text: String,
    pub target: String,
    pub target_start: usize,
    pub target_end: usize,
    pub sentence_sentiment: SentimentLabel,
    pub targeted_sentiment: SentimentLabel,
}

impl LabeledRecord {
    pub fn label(&self, kind: LabelKind) -> SentimentLabel {
        match kind {
            LabelKind::Sentence => self.sentence_sentiment,
            LabelKind::Targeted => self.targeted_sentiment,
        }
    }

    pub fn is_divergent(&self) -> bool {
        self.sentence_sentiment != self.targeted_sentiment
    }

    /// Checks the span invariants, reporting the offending field.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let len = self.text.chars().count();
        if self.target_start >= self.target_end {
            return Err((
                "target_start",
                format!("start {} not before end {}", self.target_start, self.target_end),
            ));
        }
        if self.target_end > len {
            return Err((
                "target_end",
                format!("end {} beyond text length {len}", self.target_end),
            ));
        }
        let slice = char_slice(&self.text, self.target_start, self.target_end);
        if slice != self.target {
            return Err((
                "target",
                format!("text slice {slice:?} differs from target {:?}", self.target),
            ));
        }
        Ok(())
    }
}

/// Substring by unicode scalar offsets.
pub fn char_slice(s: &str, start: usize, end: usize) -> String {
    s.chars().skip(start).take(end.saturating_sub(start)).collect()
}

/// For each character of a cleaned text, the index of the raw character it
/// came from. Separator spaces map one past the previous kept character.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct OffsetMap(Vec<usize>);

impl OffsetMap {
    pub fn get(&self, clean_index: usize) -> Option<usize> {
        self.0.get(clean_index).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Preprocessed {
    pub clean: String,
    pub map: OffsetMap,
}

fn is_url(token: &str) -> bool {
    token.starts_with("http://") || token.starts_with("https://") || token.starts_with("www.")
}

/// Removes URLs and @-mentions, strips `#` while keeping hashtag words, and
/// collapses whitespace.
///
/// Prefix tests run after `#` removal, so `#@x` is treated as a mention; this
/// keeps the function idempotent.
pub fn preprocess(raw: &str) -> Preprocessed {
    let chars: Vec<char> = raw.chars().collect();
    let mut clean = String::new();
    let mut map = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let kept: Vec<(usize, char)> = (start..i).filter(|&j| chars[j] != '#').map(|j| (j, chars[j])).collect();
        if kept.is_empty() {
            continue;
        }
        let word: String = kept.iter().map(|&(_, c)| c).collect();
        if is_url(&word) || word.starts_with('@') {
            continue;
        }
        if let Some(&prev) = map.last() {
            clean.push(' ');
            map.push(prev + 1);
        }
        for (j, c) in kept {
            clean.push(c);
            map.push(j);
        }
    }
    Preprocessed {
        clean,
        map: OffsetMap(map),
    }
}

/// Locates the record's target inside its preprocessed text.
///
/// Returns character offsets `(start, end)` into `preprocess(record.text).clean`.
pub fn remap_span(record: &LabeledRecord, pre: &Preprocessed) -> Result<(usize, usize), DataError> {
    let lost = || DataError::SpanLost {
        id: record.id.clone(),
        target: record.target.clone(),
    };
    let clean_chars: Vec<char> = pre.clean.chars().collect();
    let inside: Vec<usize> = pre
        .map
        .as_slice()
        .iter()
        .enumerate()
        .filter(|&(i, &raw)| raw >= record.target_start && raw < record.target_end && clean_chars[i] != ' ')
        .map(|(i, _)| i)
        .collect();
    let (first, last) = match (inside.first(), inside.last()) {
        (Some(&f), Some(&l)) => (f, l + 1),
        _ => return Err(lost()),
    };
    let expected = preprocess(&record.target).clean;
    let got: String = clean_chars[first..last].iter().collect();
    if expected.is_empty() || got != expected {
        return Err(lost());
    }
    Ok((first, last))
}

/// Rewrites a record onto its cleaned text with remapped offsets.
pub fn clean_record(record: &LabeledRecord) -> Result<LabeledRecord, DataError> {
    let pre = preprocess(&record.text);
    let (start, end) = remap_span(record, &pre)?;
    let target = char_slice(&pre.clean, start, end);
    Ok(LabeledRecord {
        id: record.id.clone(),
        text: pre.clean,
        target,
        target_start: start,
        target_end: end,
        sentence_sentiment: record.sentence_sentiment,
        targeted_sentiment: record.targeted_sentiment,
    })
}

/// Reads one JSON record per line. Blank lines are skipped; reported line
/// numbers are 1-based.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledRecord>, DataError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn parse_record_line(line: &str, line_no: usize) -> Result<LabeledRecord, DataError> {
    let record: LabeledRecord = serde_json::from_str(line).map_err(|e| DataError::ParseError {
        line: line_no,
        message: e.to_string(),
    })?;
    record
        .validate()
        .map_err(|(field, message)| DataError::InvariantViolation {
            line: line_no,
            field,
            message,
        })?;
    Ok(record)
}

pub fn save_dataset(path: impl AsRef<Path>, records: &[LabeledRecord]) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, records)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(w: &mut W, records: &[LabeledRecord]) -> Result<(), DataError> {
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Counts per class in label-index order (positive, negative, neutral).
pub fn class_distribution(records: &[LabeledRecord], kind: LabelKind) -> [usize; 3] {
    let mut counts = [0; 3];
    for r in records {
        counts[r.label(kind).index()] += 1;
    }
    counts
}

/// Train/test/validation fractions plus the shuffle seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    train: f64,
    test: f64,
    val: f64,
    seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, test: f64, val: f64, seed: u64) -> Result<Self, DataError> {
        for (name, f) in [("train", train), ("test", test), ("val", val)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(DataError::InvalidSplit(format!("{name} fraction {f} not in (0, 1)")));
            }
        }
        let sum = train + test + val;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidSplit(format!("fractions sum to {sum}, not 1")));
        }
        Ok(Self { train, test, val, seed })
    }

    pub fn fractions(&self) -> [f64; 3] {
        [self.train, self.test, self.val]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<LabeledRecord>,
    pub test: Vec<LabeledRecord>,
    pub val: Vec<LabeledRecord>,
}

/// Hare–Niemeyer apportionment of `n` items to `fracs`. Remainder ties go to
/// the earlier subset.
pub fn largest_remainder(n: usize, fracs: &[f64; 3]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    let mut rems = [0f64; 3];
    for k in 0..3 {
        let q = n as f64 * fracs[k];
        // Products like 20 × 0.15 land a hair below the integer.
        let q = if (q - q.round()).abs() < 1e-9 { q.round() } else { q };
        counts[k] = q.floor() as usize;
        rems[k] = q - q.floor();
    }
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| rems[b].partial_cmp(&rems[a]).unwrap().then(a.cmp(&b)));
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Per-class largest-remainder split with a seeded shuffle inside each class.
/// Subsets keep the input order of their records.
pub fn stratified_split(records: &[LabeledRecord], spec: &SplitSpec, kind: LabelKind) -> Result<Split, DataError> {
    let fracs = spec.fractions();
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_class.entry(r.label(kind).index()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut assignment: [Vec<usize>; 3] = Default::default();
    for indices in by_class.values_mut() {
        indices.shuffle(&mut rng);
        let counts = largest_remainder(indices.len(), &fracs);
        let mut offset = 0;
        for (subset, &c) in assignment.iter_mut().zip(&counts) {
            subset.extend_from_slice(&indices[offset..offset + c]);
            offset += c;
        }
    }
    for (subset, name) in assignment.iter_mut().zip(["train", "test", "validation"]) {
        if subset.is_empty() {
            return Err(DataError::DegenerateSplit(name));
        }
        subset.sort_unstable();
    }
    let take = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: take(&assignment[0]),
        test: take(&assignment[1]),
        val: take(&assignment[2]),
    })
}
