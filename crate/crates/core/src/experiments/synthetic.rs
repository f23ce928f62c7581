//! Synthetic targeted-sentiment corpus.
//!
//! Every sentence holds one brand-like target, a cue word right after it that
//! fixes the targeted label, and a second cue somewhere not adjacent to the
//! target pair that fixes the sentence label. Local cues are target-directed
//! predicates ("çöktü"); global cues are speaker-state words ("rahatladım").

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{preprocess, remap_span, LabeledRecord, SentimentLabel};

pub const TARGETS: [&str; 12] = [
    "whatsapp",
    "cocacola",
    "turkcell",
    "vodafone",
    "netflix",
    "spotify",
    "trendyol",
    "getir",
    "youtube",
    "instagram",
    "hepsiburada",
    "yemeksepeti",
];

/// Cues placed right after the target, indexed by [`SentimentLabel::index`].
pub const LOCAL_CUES: [&[&str]; 3] = [
    &["harika", "süper", "güzel", "mükemmel"],
    &["çöktü", "berbat", "rezalet", "kötü"],
    &["açıkladı", "duyurdu", "güncelledi", "söyledi"],
];

/// Sentence-level cues placed away from the target.
pub const GLOBAL_CUES: [&[&str]; 3] = [
    &["rahatladım", "sevindim", "mutluyum"],
    &["sinirlendim", "bıktım", "üzgünüm"],
    &["bilmiyorum", "neyse", "bakalım"],
];

/// Real function words that seed the filler lexicon.
const FUNCTION_WORDS: [&str; 14] = [
    "de", "da", "biraz", "ama", "bugün", "yine", "çok", "bir", "ve", "şimdi", "galiba", "herhalde", "sonra", "artık",
];

const SYLLABLES: [&str; 24] = [
    "ka", "le", "mi", "so", "tu", "ra", "ne", "bi", "da", "yo", "ze", "gü", "şa", "çe", "lı", "po", "ver", "tan",
    "mek", "sin", "dar", "kol", "ye", "hu",
];

/// Sentence labels follow the 19/58/23 positive/negative/neutral mix.
pub const SENTENCE_PRIORS: [f64; 3] = [0.19, 0.58, 0.23];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_examples: usize,
    /// Probability that the targeted label differs from the sentence label.
    pub divergence_rate: f64,
    /// Number of distinct filler words.
    pub vocab_size: usize,
    /// Inclusive word-count range of a sentence, cues and target included.
    pub sentence_length: (usize, usize),
    /// Probability of adding tweet noise (a mention, a URL or a hashtag target).
    pub noise_rate: f64,
    /// Probability of a second brand with its own cue, away from the target.
    pub distractor_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_examples: 3000,
            divergence_rate: 0.3,
            vocab_size: 200,
            sentence_length: (6, 12),
            noise_rate: 0.1,
            distractor_rate: 0.25,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), String> {
        let (lo, hi) = self.sentence_length;
        if !(0.0..=1.0).contains(&self.divergence_rate) {
            Err("divergence_rate must lie in [0, 1]".into())
        } else if !(0.0..=1.0).contains(&self.noise_rate) {
            Err("noise_rate must lie in [0, 1]".into())
        } else if !(0.0..=1.0).contains(&self.distractor_rate) {
            Err("distractor_rate must lie in [0, 1]".into())
        } else if lo < 4 || hi < lo {
            Err("sentence_length must satisfy 4 <= min <= max".into())
        } else if self.distractor_rate > 0.0 && lo < 6 {
            Err("distractors need sentence_length min >= 6".into())
        } else if self.vocab_size == 0 {
            Err("vocab_size must be at least 1".into())
        } else if self.n_examples == 0 {
            Err("n_examples must be at least 1".into())
        } else {
            Ok(())
        }
    }
}

fn pool_label(pools: &[&[&str]; 3], word: &str) -> Option<SentimentLabel> {
    pools
        .iter()
        .position(|pool| pool.contains(&word))
        .and_then(SentimentLabel::from_index)
}

/// The class a cue word of either kind signals, if it is one.
pub fn cue_label(word: &str) -> Option<SentimentLabel> {
    pool_label(&LOCAL_CUES, word).or_else(|| pool_label(&GLOBAL_CUES, word))
}

/// Function words first, then syllable compounds, skipping anything that
/// collides with a cue or target.
pub fn filler_lexicon(size: usize, seed: u64) -> Vec<String> {
    let reserved: BTreeSet<&str> = LOCAL_CUES
        .iter()
        .chain(&GLOBAL_CUES)
        .flat_map(|p| p.iter().copied())
        .chain(TARGETS)
        .collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(size);
    for w in FUNCTION_WORDS.iter().take(size) {
        seen.insert(w.to_string());
        out.push(w.to_string());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0f11_1e55);
    let mut attempts = 0usize;
    while out.len() < size {
        let n = rng.random_range(2..=3 + attempts / 10_000);
        let w: String = (0..n)
            .map(|_| *SYLLABLES.choose(&mut rng).expect("non-empty"))
            .collect();
        attempts += 1;
        if !reserved.contains(w.as_str()) && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn draw_class(rng: &mut ChaCha8Rng, priors: &[f64; 3]) -> SentimentLabel {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in priors.iter().enumerate() {
        acc += p;
        if u < acc {
            return SentimentLabel::from_index(i).expect("class index");
        }
    }
    SentimentLabel::from_index(priors.len() - 1).expect("class index")
}

#[derive(PartialEq)]
enum Slot {
    Filler,
    Pair,
    Global,
    Distractor,
}

/// Deterministic given `cfg`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Vec<LabeledRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fillers = filler_lexicon(cfg.vocab_size, cfg.seed);
    let (lo, hi) = cfg.sentence_length;
    (0..cfg.n_examples)
        .map(|i| {
            let sentence = draw_class(&mut rng, &SENTENCE_PRIORS);
            let targeted = if rng.random::<f64>() < cfg.divergence_rate {
                let shift = rng.random_range(1..3);
                SentimentLabel::from_index((sentence.index() + shift) % 3).expect("class index")
            } else {
                sentence
            };
            let target = *TARGETS.choose(&mut rng).expect("non-empty");
            let local = *LOCAL_CUES[targeted.index()].choose(&mut rng).expect("non-empty");
            let global = *GLOBAL_CUES[sentence.index()].choose(&mut rng).expect("non-empty");

            // Layout: fillers with the target pair and the global cue inserted
            // so that at least one filler separates them.
            let len = rng.random_range(lo..=hi);
            let distractor = rng.random::<f64>() < cfg.distractor_rate;
            let n_fillers = len - if distractor { 5 } else { 3 };
            let mut slots: Vec<Slot> = (0..n_fillers).map(|_| Slot::Filler).collect();
            let pair_at = rng.random_range(0..=slots.len());
            slots.insert(pair_at, Slot::Pair);
            for extra in [Slot::Global, Slot::Distractor] {
                if extra == Slot::Distractor && !distractor {
                    continue;
                }
                let at = slots.iter().position(|s| *s == Slot::Pair).expect("pair placed");
                let allowed: Vec<usize> = (0..=slots.len()).filter(|&k| k != at && k != at + 1).collect();
                let k = *allowed.choose(&mut rng).expect("at least one filler");
                slots.insert(k, extra);
            }
            let other = distractor.then(|| {
                let brand = loop {
                    let b = *TARGETS.choose(&mut rng).expect("non-empty");
                    if b != target {
                        break b;
                    }
                };
                (
                    brand,
                    *LOCAL_CUES[rng.random_range(0..3)].choose(&mut rng).expect("non-empty"),
                )
            });

            let noise_kind = if rng.random::<f64>() < cfg.noise_rate {
                Some(rng.random_range(0..3))
            } else {
                None
            };
            let mut words: Vec<String> = Vec::with_capacity(len + 1);
            if noise_kind == Some(0) {
                words.push(format!("@kullanici{}", rng.random_range(0..100)));
            }
            let mut target_word = 0;
            for slot in &slots {
                match slot {
                    Slot::Filler => words.push(fillers.choose(&mut rng).expect("non-empty").clone()),
                    Slot::Global => words.push(global.to_string()),
                    Slot::Distractor => {
                        let (brand, cue) = other.expect("distractor drawn");
                        words.push(brand.to_string());
                        words.push(cue.to_string());
                    }
                    Slot::Pair => {
                        target_word = words.len();
                        let hash = if noise_kind == Some(2) { "#" } else { "" };
                        words.push(format!("{hash}{target}"));
                        words.push(local.to_string());
                    }
                }
            }
            if noise_kind == Some(1) {
                words.push(format!("https://t.co/{:x}", rng.random::<u32>()));
            }
            let prefix: usize = words[..target_word].iter().map(|w| w.chars().count() + 1).sum();
            let start = prefix + usize::from(noise_kind == Some(2));
            let text = words.join(" ");
            LabeledRecord {
                id: format!("syn-{:05}", i),
                text,
                target: target.to_string(),
                target_start: start,
                target_end: start + target.chars().count(),
                sentence_sentiment: sentence,
                targeted_sentiment: targeted,
            }
        })
        .collect()
}

/// Reads both labels straight off the cue words: the word after the target
/// gives the targeted label, the first global cue gives the sentence label.
pub fn oracle_labels(record: &LabeledRecord) -> Option<(SentimentLabel, SentimentLabel)> {
    let pre = preprocess(&record.text);
    let (start, end) = remap_span(record, &pre).ok()?;
    let chars: Vec<char> = pre.clean.chars().collect();
    let after: String = chars[end..].iter().collect();
    let before: String = chars[..start].iter().collect();
    let mut rest = after.split_whitespace();
    let targeted = pool_label(&LOCAL_CUES, rest.next()?)?;
    let sentence = before
        .split_whitespace()
        .chain(rest)
        .find_map(|w| pool_label(&GLOBAL_CUES, w))?;
    Some((sentence, targeted))
}
