//! `tsa` command-line pipeline.
//!
//! Exit codes: 0 success, 1 usage error (bad flags or config files),
//! 2 data error (unreadable or invalid input), 3 runtime error.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tsa_core::config::ConfigError;
use tsa_core::data::{self, LabelKind, LabeledRecord, SentimentLabel, SplitSpec};
use tsa_core::experiments::{self, BenchmarkConfig, BenchmarkReport, ExperimentError, ReportFormat, SyntheticConfig};
use tsa_core::metrics::{self, PredictionRow, SubsetTag};
use tsa_core::model::{Model, ModelVariant};
use tsa_core::tokenizer::{build_vocab, Vocabulary};
use tsa_core::train::{self, load_checkpoint, save_checkpoint, TrainConfig, TrainError};
use tsa_core::EncoderConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Data(_) => EXIT_DATA,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Data(m) => write!(f, "data error: {m}"),
            Self::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(m: impl fmt::Display) -> CliError {
    CliError::Usage(m.to_string())
}

fn data_err(m: impl fmt::Display) -> CliError {
    CliError::Data(m.to_string())
}

fn runtime(m: impl fmt::Display) -> CliError {
    CliError::Runtime(m.to_string())
}

fn context<E: fmt::Display>(path: &Path) -> impl Fn(E) -> String + '_ {
    move |e| format!("{}: {e}", path.display())
}

#[derive(Parser, Debug)]
#[command(name = "tsa", version, about = "Targeted sentiment analysis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean tweet noise and remap target spans.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified train/test/val split.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        /// train,test,val fractions.
        #[arg(long, default_value = "0.65,0.20,0.15")]
        ratios: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "targeted")]
        stratify: LabelKind,
        /// Defaults to the input's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Build a WordPiece vocabulary from the texts of a dataset.
    BuildVocab {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 400)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one variant and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset, or a prediction file.
    Eval {
        #[arg(long, required_unless_present = "pred", conflicts_with = "pred")]
        ckpt: Option<PathBuf>,
        #[arg(long, requires = "ckpt")]
        test: Option<PathBuf>,
        /// JSONL prediction file with id, gold and pred.
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long, default_value = "full")]
        subset: SubsetTag,
        /// Label field scored against.
        #[arg(long, default_value = "targeted")]
        labels: LabelKind,
    },
    /// Predict labels for a dataset or a single text.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in", conflicts_with_all = ["text", "target"])]
        input: Option<PathBuf>,
        #[arg(long, requires = "target")]
        text: Option<String>,
        #[arg(long, requires = "text")]
        target: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cohen's kappa between two label files (one label per line).
    Agreement { a: PathBuf, b: PathBuf },
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long, default_value_t = 3000)]
        n_examples: usize,
        #[arg(long, default_value_t = 0.3)]
        divergence_rate: f64,
        #[arg(long, default_value_t = 200)]
        vocab_size: usize,
        /// min,max words per sentence.
        #[arg(long, default_value = "6,12")]
        sentence_length: String,
        #[arg(long, default_value_t = 0.1)]
        noise_rate: f64,
        #[arg(long, default_value_t = 0.25)]
        distractor_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and score every variant on a synthetic corpus.
    Benchmark {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report JSON.
        #[arg(long)]
        out: PathBuf,
        /// Also write a markdown table here.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Render a benchmark report as a table.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    variant: ModelVariant,
    /// Training config (key = value); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Vocabulary file; built from the training texts when omitted.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    vocab_size: usize,
    #[arg(long, default_value_t = 64)]
    hidden_size: usize,
    #[arg(long, default_value_t = 2)]
    num_layers: usize,
    #[arg(long, default_value_t = 4)]
    num_heads: usize,
    #[arg(long, default_value_t = 128)]
    ffn_size: usize,
    #[arg(long, default_value_t = 48)]
    max_len: usize,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    /// Also write the training history JSON here.
    #[arg(long)]
    history: Option<PathBuf>,
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("tsa: {e}");
            e.code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Preprocess { input, out } => preprocess(&input, &out),
        Command::Split {
            input,
            ratios,
            seed,
            stratify,
            out_dir,
        } => split(&input, &ratios, seed, stratify, out_dir),
        Command::BuildVocab { input, size, out } => build_vocab_cmd(&input, size, &out),
        Command::Train(args) => train_cmd(args),
        Command::Eval {
            ckpt,
            test,
            pred,
            subset,
            labels,
        } => eval(ckpt, test, pred, subset, labels),
        Command::Predict {
            ckpt,
            input,
            text,
            target,
            out,
        } => predict(&ckpt, input, text, target, out),
        Command::Agreement { a, b } => agreement(&a, &b),
        Command::Synth {
            n_examples,
            divergence_rate,
            vocab_size,
            sentence_length,
            noise_rate,
            distractor_rate,
            seed,
            out,
        } => {
            let (lo, hi) = parse_pair(&sentence_length).ok_or_else(|| usage("--sentence-length takes min,max"))?;
            let cfg = SyntheticConfig {
                n_examples,
                divergence_rate,
                vocab_size,
                sentence_length: (lo, hi),
                noise_rate,
                distractor_rate,
                seed,
            };
            cfg.validate().map_err(usage)?;
            let records = experiments::generate_synthetic(&cfg);
            write_records(&out, &records)
        }
        Command::Benchmark { config, out, table } => benchmark(config, &out, table),
        Command::Report { input, format, out } => {
            let text = fs::read_to_string(&input).map_err(context(&input)).map_err(data_err)?;
            let report: BenchmarkReport = serde_json::from_str(&text).map_err(context(&input)).map_err(data_err)?;
            emit(out.as_deref(), &experiments::render_report(&report, format))
        }
    }
}

fn parse_pair(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn load_records(path: &Path) -> Result<Vec<LabeledRecord>> {
    data::load_dataset(path).map_err(context(path)).map_err(data_err)
}

fn write_records(path: &Path, records: &[LabeledRecord]) -> Result<()> {
    data::save_dataset(path, records)
        .map_err(context(path))
        .map_err(runtime)
}

/// Writes `text` to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(context(p)).map_err(runtime),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(context(path)).map_err(usage)
}

fn config_error(path: &Path) -> impl Fn(ConfigError) -> CliError + '_ {
    move |e| usage(format!("{}: {e}", path.display()))
}

fn preprocess(input: &Path, out: &Path) -> Result<()> {
    let records = load_records(input)?;
    let cleaned = records
        .iter()
        .map(data::clean_record)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(context(input))
        .map_err(data_err)?;
    write_records(out, &cleaned)
}

fn split(input: &Path, ratios: &str, seed: u64, stratify: LabelKind, out_dir: Option<PathBuf>) -> Result<()> {
    let fr: Vec<f64> = ratios
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| usage(format!("--ratios: {e}")))?;
    let [a, b, c] = fr[..] else {
        return Err(usage("--ratios takes three comma-separated fractions"));
    };
    let spec = SplitSpec::new(a, b, c, seed).map_err(|e| usage(format!("--ratios: {e}")))?;
    let dir = out_dir.unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| usage("--in has no file name"))?
        .to_string();
    let records = load_records(input)?;
    let split = data::stratified_split(&records, &spec, stratify).map_err(data_err)?;
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(&dir).map_err(context(&dir)).map_err(runtime)?;
    }
    for (name, part) in [("train", &split.train), ("test", &split.test), ("val", &split.val)] {
        write_records(&dir.join(format!("{stem}.{name}.jsonl")), part)?;
    }
    eprintln!(
        "split {} records: train {}, test {}, val {}",
        records.len(),
        split.train.len(),
        split.test.len(),
        split.val.len()
    );
    Ok(())
}

fn clean_texts(records: &[LabeledRecord]) -> Vec<String> {
    records.iter().map(|r| data::preprocess(&r.text).clean).collect()
}

fn build_vocab_cmd(input: &Path, size: usize, out: &Path) -> Result<()> {
    let records = load_records(input)?;
    let vocab = build_vocab(&clean_texts(&records), size).map_err(usage)?;
    vocab.save(out).map_err(context(out)).map_err(runtime)
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => TrainConfig::from_kv(&read_config(p)?).map_err(config_error(p))?,
        None => TrainConfig::default(),
    };
    let mut encoder = EncoderConfig {
        vocab_size: args.vocab_size,
        hidden_size: args.hidden_size,
        num_layers: args.num_layers,
        num_heads: args.num_heads,
        ffn_size: args.ffn_size,
        max_len: args.max_len,
        dropout_rate: args.dropout,
        seed: cfg.seed,
    };
    encoder.validate().map_err(usage)?;

    let train_set = load_records(&args.train)?;
    let val_set = load_records(&args.val)?;
    let vocab = match &args.vocab {
        Some(p) => Vocabulary::load(p).map_err(context(p)).map_err(data_err)?,
        None => build_vocab(&clean_texts(&train_set), args.vocab_size).map_err(data_err)?,
    };
    encoder.vocab_size = vocab.len();
    let mut model = Model::<f64>::build(args.variant, encoder, vocab).map_err(data_err)?;
    let history = train::train(&mut model, &train_set, &val_set, &cfg).map_err(train_error)?;
    save_checkpoint(&model, &args.out)
        .map_err(context(&args.out))
        .map_err(runtime)?;
    let json = to_json(&history);
    if let Some(p) = &args.history {
        fs::write(p, &json).map_err(context(p)).map_err(runtime)?;
    }
    eprintln!(
        "{}: best val macro-F1 {:.4} at epoch {} of {}",
        args.variant,
        history.best_val_macro_f1,
        history.best_epoch,
        history.epochs.len()
    );
    print!("{json}");
    Ok(())
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::EmptyClass(_) | TrainError::EmptyDataset(_) | TrainError::Model(_) => data_err(e),
        TrainError::InvalidConfig(_) => usage(e),
        _ => runtime(e),
    }
}

fn load_model(path: &Path) -> Result<Model<f64>> {
    load_checkpoint(path).map_err(context(path)).map_err(data_err)
}

fn eval(
    ckpt: Option<PathBuf>,
    test: Option<PathBuf>,
    pred: Option<PathBuf>,
    subset: SubsetTag,
    labels: LabelKind,
) -> Result<()> {
    let report = match (ckpt, test, pred) {
        (Some(ckpt), Some(test), None) => {
            let model = load_model(&ckpt)?;
            let records = load_records(&test)?;
            train::evaluate_model(&model, &records, labels, subset).map_err(|e| match e {
                TrainError::Metrics(_) | TrainError::Model(_) => data_err(e),
                other => runtime(other),
            })?
        }
        (None, None, Some(pred)) => {
            if subset == SubsetTag::Divergent {
                return Err(usage("--subset divergent needs --ckpt and --test"));
            }
            let rows = metrics::read_predictions(&pred)
                .map_err(context(&pred))
                .map_err(data_err)?;
            let gold: Vec<SentimentLabel> = rows.iter().map(|r| r.gold).collect();
            let p: Vec<SentimentLabel> = rows.iter().map(|r| r.pred).collect();
            metrics::evaluate(&gold, &p, subset).map_err(data_err)?
        }
        _ => return Err(usage("eval takes either --ckpt with --test, or --pred")),
    };
    print!("{}", to_json(&report));
    Ok(())
}

fn predict(
    ckpt: &Path,
    input: Option<PathBuf>,
    text: Option<String>,
    target: Option<String>,
    out: Option<PathBuf>,
) -> Result<()> {
    let records = match (input, text, target) {
        (Some(p), None, None) => Some(p),
        (None, Some(text), Some(target)) => {
            let model = load_model(ckpt)?;
            let byte = text
                .find(&target)
                .ok_or_else(|| usage(format!("target {target:?} does not occur in the text")))?;
            let start = text[..byte].chars().count();
            let record = LabeledRecord {
                id: "input".into(),
                target_start: start,
                target_end: start + target.chars().count(),
                text,
                target,
                sentence_sentiment: SentimentLabel::Neutral,
                targeted_sentiment: SentimentLabel::Neutral,
            };
            let p = model.predict(&record).map_err(data_err)?;
            #[derive(Serialize)]
            struct Single {
                label: SentimentLabel,
                probs: [f64; 3],
            }
            return emit(
                out.as_deref(),
                &format!(
                    "{}\n",
                    serde_json::to_string(&Single {
                        label: p.label,
                        probs: p.probs
                    })
                    .expect("serializable")
                ),
            );
        }
        _ => None,
    };
    let input = records.ok_or_else(|| usage("predict takes --in, or --text with --target"))?;
    let model = load_model(ckpt)?;
    let records = load_records(&input)?;
    let mut rows = Vec::with_capacity(records.len());
    for r in &records {
        let p = model
            .predict(r)
            .map_err(|e| data_err(format!("record {}: {e}", r.id)))?;
        rows.push(PredictionRow {
            id: r.id.clone(),
            gold: r.targeted_sentiment,
            pred: p.label,
            probs: Some(p.probs),
        });
    }
    let mut buf = Vec::new();
    metrics::write_predictions(&mut buf, &rows).map_err(runtime)?;
    emit(out.as_deref(), &String::from_utf8(buf).expect("utf-8 json"))
}

fn read_labels(path: &Path) -> Result<Vec<SentimentLabel>> {
    let text = fs::read_to_string(path).map_err(context(path)).map_err(data_err)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|e| data_err(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn agreement(a: &Path, b: &Path) -> Result<()> {
    let (a, b) = (read_labels(a)?, read_labels(b)?);
    let result = metrics::agreement(&a, &b).map_err(data_err)?;
    print!("{}", to_json(&result));
    Ok(())
}

fn benchmark(config: Option<PathBuf>, out: &Path, table: Option<PathBuf>) -> Result<()> {
    let cfg = match &config {
        Some(p) => BenchmarkConfig::from_kv(&read_config(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => BenchmarkConfig::default(),
    };
    let report = experiments::run_benchmark(&cfg, |line| eprintln!("{line}")).map_err(|e| match e {
        ExperimentError::Io(_) | ExperimentError::Train(_) => runtime(e),
        ExperimentError::Config(_) | ExperimentError::InvalidConfig(_) => usage(e),
        _ => data_err(e),
    })?;
    fs::write(out, to_json(&report))
        .map_err(context(out))
        .map_err(runtime)?;
    if let Some(t) = &table {
        experiments::emit_report(&report, t, ReportFormat::Markdown).map_err(runtime)?;
    }
    eprint!("{}", experiments::render_report(&report, ReportFormat::Markdown));
    Ok(())
}
