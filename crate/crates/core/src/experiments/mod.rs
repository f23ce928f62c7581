//! Synthetic corpus, benchmark runner and result tables.

mod synthetic;

pub use synthetic::{
    cue_label, filler_lexicon, generate_synthetic, oracle_labels, SyntheticConfig, GLOBAL_CUES, LOCAL_CUES,
    SENTENCE_PRIORS, TARGETS,
};

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{self, ConfigError};
use crate::data::{preprocess, stratified_split, DataError, LabelKind, Split, SplitSpec};
use crate::encoder::EncoderConfig;
use crate::metrics::SubsetTag;
use crate::model::{Model, ModelVariant};
use crate::tokenizer::{build_vocab, TokenizerError};
use crate::train::{evaluate_model, train, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid benchmark config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Encoder shape shared by every variant; the vocabulary size and seed are
/// filled in per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSettings {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    pub max_len: usize,
    pub dropout_rate: f64,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        let d = EncoderConfig::desk(0);
        Self {
            hidden_size: d.hidden_size,
            num_layers: d.num_layers,
            num_heads: d.num_heads,
            ffn_size: d.ffn_size,
            max_len: d.max_len,
            dropout_rate: d.dropout_rate,
        }
    }
}

impl EncoderSettings {
    pub fn config(&self, vocab_size: usize, seed: u64) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            hidden_size: self.hidden_size,
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            ffn_size: self.ffn_size,
            max_len: self.max_len,
            dropout_rate: self.dropout_rate,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
    pub encoder: EncoderSettings,
    pub tokenizer_vocab_size: usize,
    /// train/test/val fractions.
    pub split: [f64; 3],
    /// Each seed drives the split, initialisation, shuffling and dropout of
    /// one full round over all variants. The corpus itself comes from
    /// `synthetic.seed`.
    pub seeds: Vec<u64>,
    pub variants: Vec<ModelVariant>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig::default(),
            train: TrainConfig::default(),
            encoder: EncoderSettings::default(),
            tokenizer_vocab_size: 1000,
            split: [0.65, 0.20, 0.15],
            seeds: vec![0, 1, 2],
            variants: ModelVariant::ALL.to_vec(),
        }
    }
}

impl BenchmarkConfig {
    /// Training keys plus `n_examples`, `divergence_rate`, `vocab_size`,
    /// `sentence_length`, `noise_rate`, `distractor_rate`, `data_seed`, the encoder shape keys,
    /// `tokenizer_vocab_size`, `split`, `seeds` and `variants`. The training
    /// `seed` key is rejected because `seeds` replaces it.
    pub fn from_kv(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg = Self::default();
        for e in config::parse_entries(text)? {
            if e.key == "seed" {
                return Err(ConfigError {
                    line: e.line,
                    message: "use `seeds` in a benchmark config".into(),
                }
                .into());
            }
            if cfg.train.apply(&e)? {
                continue;
            }
            let s = &mut cfg.synthetic;
            let enc = &mut cfg.encoder;
            match e.key.as_str() {
                "n_examples" => s.n_examples = e.parse()?,
                "divergence_rate" => s.divergence_rate = e.parse()?,
                "vocab_size" => s.vocab_size = e.parse()?,
                "noise_rate" => s.noise_rate = e.parse()?,
                "distractor_rate" => s.distractor_rate = e.parse()?,
                "data_seed" => s.seed = e.parse()?,
                "sentence_length" => match e.parse_list::<usize>()?.as_slice() {
                    &[lo, hi] => s.sentence_length = (lo, hi),
                    _ => return Err(pair_error(&e, "sentence_length").into()),
                },
                "hidden_size" => enc.hidden_size = e.parse()?,
                "num_layers" => enc.num_layers = e.parse()?,
                "num_heads" => enc.num_heads = e.parse()?,
                "ffn_size" => enc.ffn_size = e.parse()?,
                "max_len" => enc.max_len = e.parse()?,
                "dropout_rate" => enc.dropout_rate = e.parse()?,
                "tokenizer_vocab_size" => cfg.tokenizer_vocab_size = e.parse()?,
                "split" => match e.parse_list::<f64>()?.as_slice() {
                    &[a, b, c] => cfg.split = [a, b, c],
                    _ => {
                        return Err(ConfigError {
                            line: e.line,
                            message: "split takes three comma-separated fractions".into(),
                        }
                        .into())
                    }
                },
                "seeds" => cfg.seeds = e.parse_list()?,
                "variants" => cfg.variants = e.parse_list()?,
                _ => return Err(e.unknown().into()),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        self.train.validate()?;
        if let Err(m) = self.synthetic.validate() {
            return bad(m);
        }
        if let Err(e) = self.encoder.config(self.tokenizer_vocab_size, 0).validate() {
            return bad(e.to_string());
        }
        SplitSpec::new(self.split[0], self.split[1], self.split[2], 0)?;
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.variants.is_empty() {
            return bad("at least one variant is required".into());
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields `self` again.
    pub fn to_kv(&self) -> String {
        let t = &self.train;
        let s = &self.synthetic;
        let e = &self.encoder;
        let join = |v: Vec<String>| v.join(",");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("batch_size", t.batch_size.to_string());
        kv("base_lr", t.base_lr.to_string());
        kv("weight_decay", t.weight_decay.to_string());
        kv("warmup_steps", t.warmup_steps.to_string());
        kv("max_epochs", t.max_epochs.to_string());
        kv("patience", t.patience.to_string());
        kv("betas", format!("{},{}", t.betas.0, t.betas.1));
        kv("eps", t.eps.to_string());
        kv("n_examples", s.n_examples.to_string());
        kv("divergence_rate", s.divergence_rate.to_string());
        kv("vocab_size", s.vocab_size.to_string());
        kv(
            "sentence_length",
            format!("{},{}", s.sentence_length.0, s.sentence_length.1),
        );
        kv("noise_rate", s.noise_rate.to_string());
        kv("distractor_rate", s.distractor_rate.to_string());
        kv("data_seed", s.seed.to_string());
        kv("hidden_size", e.hidden_size.to_string());
        kv("num_layers", e.num_layers.to_string());
        kv("num_heads", e.num_heads.to_string());
        kv("ffn_size", e.ffn_size.to_string());
        kv("max_len", e.max_len.to_string());
        kv("dropout_rate", e.dropout_rate.to_string());
        kv("tokenizer_vocab_size", self.tokenizer_vocab_size.to_string());
        kv("split", join(self.split.iter().map(f64::to_string).collect()));
        kv("seeds", join(self.seeds.iter().map(u64::to_string).collect()));
        kv(
            "variants",
            join(self.variants.iter().map(|v| v.cli_name().to_string()).collect()),
        );
        out
    }

    /// Hex SHA-256 of [`Self::to_kv`].
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_kv().as_bytes())
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }
}

fn pair_error(e: &config::Entry, key: &str) -> ConfigError {
    ConfigError {
        line: e.line,
        message: format!("{key} takes two comma-separated values"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub f1_full: f64,
    pub f1_divergent: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub n_test: usize,
    pub n_divergent: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: ModelVariant,
    /// Means over seeds; absent if any seed failed.
    pub f1_full: Option<f64>,
    pub f1_divergent: Option<f64>,
    pub per_seed: Vec<SeedScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub results: Vec<VariantResult>,
}

impl BenchmarkReport {
    pub fn result(&self, variant: ModelVariant) -> Option<&VariantResult> {
        self.results.iter().find(|r| r.variant == variant)
    }
}

/// Trains `variant` from scratch on `split.train` (using its own label source)
/// and scores targeted-label macro-F1 on the full test set and its
/// divergent subset.
pub fn run_variant(
    split: &Split,
    variant: ModelVariant,
    encoder: &EncoderConfig,
    vocab: &crate::tokenizer::Vocabulary,
    train_cfg: &TrainConfig,
) -> Result<SeedScore, TrainError> {
    let mut model = Model::<f64>::build(variant, encoder.clone(), vocab.clone())?;
    let history = train(&mut model, &split.train, &split.val, train_cfg)?;
    let full = evaluate_model(&model, &split.test, LabelKind::Targeted, SubsetTag::Full)?;
    let divergent = evaluate_model(&model, &split.test, LabelKind::Targeted, SubsetTag::Divergent)?;
    Ok(SeedScore {
        seed: train_cfg.seed,
        f1_full: full.macro_f1,
        f1_divergent: divergent.macro_f1,
        best_epoch: history.best_epoch,
        epochs_run: history.epochs.len(),
        n_test: full.n_examples,
        n_divergent: divergent.n_examples,
    })
}

/// Builds the WordPiece vocabulary from the cleaned training texts.
pub fn vocab_for(split: &Split, size: usize) -> Result<crate::tokenizer::Vocabulary, TokenizerError> {
    let texts: Vec<String> = split.train.iter().map(|r| preprocess(&r.text).clean).collect();
    build_vocab(&texts, size)
}

/// Generates the corpus once, then for each seed splits it, builds the
/// vocabulary from the training part and runs every variant. `progress`
/// receives one line per finished training run.
pub fn run_benchmark(
    cfg: &BenchmarkConfig,
    mut progress: impl FnMut(&str),
) -> Result<BenchmarkReport, ExperimentError> {
    cfg.validate()?;
    let corpus = generate_synthetic(&cfg.synthetic);
    let mut per_variant: Vec<(Vec<SeedScore>, Option<String>)> = vec![(Vec::new(), None); cfg.variants.len()];
    for &seed in &cfg.seeds {
        let [a, b, c] = cfg.split;
        let split = stratified_split(&corpus, &SplitSpec::new(a, b, c, seed)?, LabelKind::Targeted)?;
        let vocab = vocab_for(&split, cfg.tokenizer_vocab_size)?;
        let encoder = cfg.encoder.config(vocab.len(), seed);
        let train_cfg = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        for (slot, &variant) in per_variant.iter_mut().zip(&cfg.variants) {
            if slot.1.is_some() {
                continue;
            }
            match run_variant(&split, variant, &encoder, &vocab, &train_cfg) {
                Ok(score) => {
                    progress(&format!(
                        "seed {seed} {variant}: full {:.4} divergent {:.4} (best epoch {}/{})",
                        score.f1_full, score.f1_divergent, score.best_epoch, score.epochs_run
                    ));
                    slot.0.push(score);
                }
                Err(e) => {
                    progress(&format!("seed {seed} {variant}: failed: {e}"));
                    slot.1 = Some(format!("seed {seed}: {e}"));
                }
            }
        }
    }
    let results = cfg
        .variants
        .iter()
        .zip(per_variant)
        .map(|(&variant, (per_seed, error))| {
            let mean = |f: fn(&SeedScore) -> f64| {
                (error.is_none()).then(|| per_seed.iter().map(f).sum::<f64>() / per_seed.len() as f64)
            };
            VariantResult {
                variant,
                f1_full: mean(|s| s.f1_full),
                f1_divergent: mean(|s| s.f1_divergent),
                per_seed,
                error,
            }
        })
        .collect();
    Ok(BenchmarkReport {
        config_digest: cfg.digest(),
        seeds: cfg.seeds.clone(),
        results,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(format!("expected `markdown` or `csv`, got {other:?}")),
        }
    }
}

pub const CSV_HEADER: &str = "model,f1_full,f1_divergent";

/// One row per variant. Markdown rounds to four decimals; CSV keeps the
/// shortest exact representation so it parses back to identical values.
/// Failed variants show `failed` (markdown) or empty fields (CSV).
pub fn render_report(report: &BenchmarkReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            out.push_str("| Model | F1 (full) | F1 (divergent) |\n|---|---|---|\n");
            let cell = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |v| format!("{v:.4}"));
            for r in &report.results {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} |",
                    r.variant.display_name(),
                    cell(r.f1_full),
                    cell(r.f1_divergent)
                );
            }
        }
        ReportFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            let cell = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
            for r in &report.results {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    r.variant.cli_name(),
                    cell(r.f1_full),
                    cell(r.f1_divergent)
                );
            }
        }
    }
    out
}

pub fn emit_report(
    report: &BenchmarkReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<(), ExperimentError> {
    std::fs::write(path, render_report(report, format))?;
    Ok(())
}

/// Model, full F1 and divergent F1 as read back from a CSV report.
pub type ReportRow = (ModelVariant, Option<f64>, Option<f64>);

/// Parses a CSV written by [`render_report`].
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("missing header".into());
    }
    lines
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            let [name, full, div] = cols.as_slice() else {
                return Err(format!("expected 3 columns: {line:?}"));
            };
            let num = |s: &str| -> Result<Option<f64>, String> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|e| format!("{s:?}: {e}"))
                }
            };
            Ok((name.parse()?, num(full)?, num(div)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> BenchmarkReport {
        let score = |v: f64| SeedScore {
            seed: 0,
            f1_full: v,
            f1_divergent: v / 3.0,
            best_epoch: 1,
            epochs_run: 2,
            n_test: 10,
            n_divergent: 3,
        };
        BenchmarkReport {
            config_digest: "x".into(),
            seeds: vec![0],
            results: ModelVariant::ALL
                .iter()
                .enumerate()
                .map(|(i, &variant)| VariantResult {
                    variant,
                    f1_full: Some(0.5 + i as f64 / 7.0),
                    f1_divergent: Some((0.5 + i as f64 / 7.0) / 3.0),
                    per_seed: vec![score(0.5 + i as f64 / 7.0)],
                    error: None,
                })
                .collect(),
        }
    }

    #[test]
    fn markdown_layout() {
        let md = render_report(&report(), ReportFormat::Markdown);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "| Model | F1 (full) | F1 (divergent) |");
        assert!(lines[2].starts_with("| Baseline"));
        assert_eq!(md, render_report(&report(), ReportFormat::Markdown));
    }

    #[test]
    fn csv_round_trip() {
        let mut r = report();
        r.results[1].f1_full = None;
        r.results[1].f1_divergent = None;
        let csv = render_report(&r, ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 6);
        let rows = parse_report_csv(&csv).unwrap();
        for (row, res) in rows.iter().zip(&r.results) {
            assert_eq!(*row, (res.variant, res.f1_full, res.f1_divergent));
        }
    }

    #[test]
    fn config_kv_round_trip() {
        let cfg = BenchmarkConfig {
            seeds: vec![4, 5],
            variants: vec![ModelVariant::BaselineSentence, ModelVariant::TBertMarkedMp],
            ..BenchmarkConfig::default()
        };
        let back = BenchmarkConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        assert_eq!(cfg.digest().len(), 64);
        assert_ne!(cfg.digest(), BenchmarkConfig::default().digest());
    }

    #[test]
    fn config_rejects_unknown_and_seed() {
        assert!(matches!(
            BenchmarkConfig::from_kv("n_examples = 10\nfoo = 1"),
            Err(ExperimentError::Config(ConfigError { line: 2, .. }))
        ));
        assert!(BenchmarkConfig::from_kv("seed = 3").is_err());
        assert!(BenchmarkConfig::from_kv("divergence_rate = 2").is_err());
        assert!(BenchmarkConfig::from_kv("variants = t-bert, nope").is_err());
    }

    #[test]
    fn tiny_benchmark_runs_and_is_deterministic() {
        let cfg = BenchmarkConfig::from_kv(
            "n_examples = 120\nmax_epochs = 2\nwarmup_steps = 2\nbatch_size = 8\nhidden_size = 8\nnum_layers = 1\nnum_heads = 2\nffn_size = 16\nmax_len = 24\nseeds = 1\nvariants = baseline, t-bert-marked-mp\ntokenizer_vocab_size = 150\n",
        )
        .unwrap();
        let mut lines = Vec::new();
        let a = run_benchmark(&cfg, |l| lines.push(l.to_string())).unwrap();
        let b = run_benchmark(&cfg, |_| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(lines.len(), 2);
        assert_eq!(a.results.len(), 2);
        for r in &a.results {
            let (f, d) = (r.f1_full.unwrap(), r.f1_divergent.unwrap());
            assert!((0.0..=1.0).contains(&f) && (0.0..=1.0).contains(&d));
        }
    }
}
