//! Weighted cross-entropy training with AdamW, warmup/decay schedule and
//! early stopping on validation macro-F1.

mod checkpoint;
mod optim;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_VERSION,
};
pub use optim::{adamw_step, class_weights, lr_schedule, OptimizerState};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{self, ConfigError, Entry};
use crate::data::{class_distribution, LabelKind, LabeledRecord, SentimentLabel};
use crate::metrics::{self, MetricsError, MetricsReport, SubsetTag};
use crate::model::{Model, ModelError};
use crate::scalar::Scalar;
use crate::tensor::{Graph, TensorError};
use crate::tokenizer::EncodedExample;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("class {0} has no training examples")]
    EmptyClass(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty {0} set")]
    EmptyDataset(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss {loss} at epoch {epoch}, step {step} (example {example})")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        example: usize,
        loss: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl Default for TrainConfig {
    /// Desk-scale defaults: learning rate 1e-3 for from-scratch models.
    fn default() -> Self {
        Self {
            batch_size: 24,
            base_lr: 1e-3,
            weight_decay: 0.1,
            warmup_steps: 300,
            max_epochs: 20,
            patience: 3,
            seed: 0,
            betas: (0.9, 0.999),
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Fine-tuning scale: learning rate 1e-5.
    pub fn fine_tuning() -> Self {
        Self {
            base_lr: 1e-5,
            ..Self::default()
        }
    }

    pub const KEYS: [&'static str; 9] = [
        "batch_size",
        "base_lr",
        "weight_decay",
        "warmup_steps",
        "max_epochs",
        "patience",
        "seed",
        "betas",
        "eps",
    ];

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        let (b1, b2) = self.betas;
        if self.batch_size == 0 {
            bad("batch_size must be at least 1")
        } else if self.patience == 0 {
            bad("patience must be at least 1")
        } else if self.max_epochs == 0 {
            bad("max_epochs must be at least 1")
        } else if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            bad("weight_decay must be a non-negative number")
        } else if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            bad("base_lr must be a non-negative number")
        } else if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            bad("betas must lie in [0, 1)")
        } else if self.eps.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            bad("eps must be positive")
        } else {
            Ok(())
        }
    }

    /// Applies one config entry. Returns `Ok(false)` when the key is not a
    /// training key so callers can route it elsewhere.
    pub fn apply(&mut self, e: &Entry) -> Result<bool, ConfigError> {
        match e.key.as_str() {
            "batch_size" => self.batch_size = e.parse()?,
            "base_lr" => self.base_lr = e.parse()?,
            "weight_decay" => self.weight_decay = e.parse()?,
            "warmup_steps" => self.warmup_steps = e.parse()?,
            "max_epochs" => self.max_epochs = e.parse()?,
            "patience" => self.patience = e.parse()?,
            "seed" => self.seed = e.parse()?,
            "eps" => self.eps = e.parse()?,
            "betas" => match e.parse_list::<f64>()?.as_slice() {
                &[b1, b2] => self.betas = (b1, b2),
                _ => {
                    return Err(ConfigError {
                        line: e.line,
                        message: "betas takes two comma-separated values".into(),
                    })
                }
            },
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parses a config file body on top of the defaults.
    pub fn from_kv(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for e in config::parse_entries(text)? {
            if !cfg.apply(&e)? {
                return Err(e.unknown());
            }
        }
        cfg.validate().map_err(|err| ConfigError {
            line: 0,
            message: err.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        format!(
            "batch_size = {}\nbase_lr = {}\nweight_decay = {}\nwarmup_steps = {}\nmax_epochs = {}\npatience = {}\nseed = {}\nbetas = {},{}\neps = {}\n",
            self.batch_size,
            self.base_lr,
            self.weight_decay,
            self.warmup_steps,
            self.max_epochs,
            self.patience,
            self.seed,
            self.betas.0,
            self.betas.1,
            self.eps
        )
    }

    pub fn steps_per_epoch(&self, n_examples: usize) -> usize {
        n_examples.div_ceil(self.batch_size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Class-weighted mean cross-entropy over the epoch's examples.
    pub train_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub stopped_early: bool,
    pub class_weights: [f64; 3],
    pub steps: usize,
}

/// Labels of `records` under `kind`, in order.
pub fn gold_labels(records: &[LabeledRecord], kind: LabelKind) -> Vec<SentimentLabel> {
    records.iter().map(|r| r.label(kind)).collect()
}

pub fn predict_labels<T: Scalar>(
    model: &Model<T>,
    records: &[LabeledRecord],
) -> Result<Vec<SentimentLabel>, ModelError> {
    records.iter().map(|r| model.predict(r).map(|p| p.label)).collect()
}

/// Scores `model` on `records` against the labels of `kind`.
pub fn evaluate_model<T: Scalar>(
    model: &Model<T>,
    records: &[LabeledRecord],
    kind: LabelKind,
    subset: SubsetTag,
) -> Result<MetricsReport, TrainError> {
    let selected = subset.select(records);
    let pred = predict_labels(model, &selected)?;
    Ok(metrics::evaluate(&gold_labels(&selected, kind), &pred, subset)?)
}

/// Trains `model` in place on its variant's label source. On return the
/// model holds the parameters of the best validation epoch.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    train_set: &[LabeledRecord],
    val_set: &[LabeledRecord],
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let kind = model.variant.label_kind();
    let weights = class_weights(class_distribution(train_set, kind))?;
    let weights_t = weights.map(T::lit);
    let examples: Vec<EncodedExample> = train_set.iter().map(|r| model.encode(r)).collect::<Result<_, _>>()?;
    let val_encoded: Vec<EncodedExample> = val_set.iter().map(|r| model.encode(r)).collect::<Result<_, _>>()?;
    let val_gold: Vec<SentimentLabel> = val_encoded.iter().map(|e| e.label).collect();

    let decay: Vec<bool> = model.named_params().iter().map(|p| p.kind.decays()).collect();
    let total_steps = cfg.steps_per_epoch(examples.len()) * cfg.max_epochs;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d20b_0a11_ce00);
    let mut state = OptimizerState::new();

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_macro_f1: f64::NEG_INFINITY,
        stopped_early: false,
        class_weights: weights,
        steps: 0,
    };
    let mut best = model.clone();
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            let inv_b = T::one() / T::lit(batch.len() as f64);
            for &idx in batch {
                let ex = &examples[idx];
                let (loss, grads) = {
                    let mut g = Graph::new();
                    let z = model.logits_on(&mut g, ex, Some(&mut dropout_rng))?;
                    let ce = g.weighted_cross_entropy(z, &[ex.label.index()], &weights_t)?;
                    let loss = g.value(ce)[0].as_f64();
                    let scaled = g.scale(ce, inv_b);
                    (loss, g.backward(scaled)?.into_slots())
                };
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        step: history.steps,
                        example: idx,
                        loss,
                    });
                }
                loss_sum += loss;
                let mut params = model.tensors_mut();
                for (slot, grad) in grads {
                    params[slot].accumulate_grad(&grad)?;
                }
            }
            let lr = lr_schedule(history.steps, cfg.warmup_steps, total_steps, cfg.base_lr);
            adamw_step(&mut model.tensors_mut(), &decay, &mut state, lr, cfg)?;
            history.steps += 1;
        }
        model.zero_grad();

        let pred: Vec<SentimentLabel> = val_encoded
            .iter()
            .map(|e| model.predict_encoded(e).map(|p| p.label))
            .collect::<Result<_, _>>()?;
        let val_f1 = metrics::macro_f1(&metrics::confusion_matrix(&val_gold, &pred)?)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / examples.len() as f64,
            val_macro_f1: val_f1,
        });
        if val_f1 > history.best_val_macro_f1 {
            history.best_val_macro_f1 = val_f1;
            history.best_epoch = epoch;
            best.clone_from(model);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                history.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    *model = best;
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::model::ModelVariant;
    use crate::tokenizer::build_vocab;

    fn record(id: usize, text: &str, target: &str, label: SentimentLabel) -> LabeledRecord {
        let start = text.find(target).unwrap();
        let cs = text[..start].chars().count();
        LabeledRecord {
            id: id.to_string(),
            text: text.into(),
            target: target.into(),
            target_start: cs,
            target_end: cs + target.chars().count(),
            sentence_sentiment: label,
            targeted_sentiment: label,
        }
    }

    fn tiny_set() -> Vec<LabeledRecord> {
        use SentimentLabel::*;
        vec![
            record(0, "whatsapp harika bugün", "whatsapp", Positive),
            record(1, "netflix süper oldu", "netflix", Positive),
            record(2, "vodafone güzel çekiyor", "vodafone", Positive),
            record(3, "turkcell çöktü yine", "turkcell", Negative),
            record(4, "whatsapp berbat oldu", "whatsapp", Negative),
            record(5, "netflix rezalet bugün", "netflix", Negative),
            record(6, "vodafone açıkladı bugün", "vodafone", Neutral),
            record(7, "turkcell duyurdu yeni", "turkcell", Neutral),
            record(8, "netflix söyledi yine", "netflix", Neutral),
            record(9, "whatsapp güncelledi oldu", "whatsapp", Neutral),
        ]
    }

    fn tiny_model(variant: ModelVariant, data: &[LabeledRecord]) -> Model<f64> {
        let texts: Vec<&str> = data.iter().map(|r| r.text.as_str()).collect();
        let vocab = build_vocab(&texts, 120).unwrap();
        let config = EncoderConfig {
            hidden_size: 16,
            num_layers: 1,
            num_heads: 2,
            ffn_size: 32,
            max_len: 12,
            dropout_rate: 0.0,
            ..EncoderConfig::desk(vocab.len())
        };
        Model::build(variant, config, vocab).unwrap()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            warmup_steps: 2,
            max_epochs: 3,
            patience: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn kv_round_trip_and_unknown_keys() {
        let cfg = TrainConfig {
            seed: 9,
            betas: (0.8, 0.99),
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        let err = TrainConfig::from_kv("batch_size = 8\nlearning_rate = 1").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(TrainConfig::from_kv("batch_size = 0").is_err());
        assert!(TrainConfig::from_kv("betas = 0.9").is_err());
        assert_eq!(TrainConfig::fine_tuning().base_lr, 1e-5);
    }

    #[test]
    fn deterministic_history() {
        let data = tiny_set();
        let run = || {
            let mut m = tiny_model(ModelVariant::TBertMarkedMp, &data);
            let h = train(&mut m, &data, &data, &quick_cfg()).unwrap();
            (h, m)
        };
        let (h1, m1) = run();
        let (h2, m2) = run();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        assert_eq!(h1.epochs.len(), 3);
        assert_eq!(h1.steps, 9);
    }

    #[test]
    fn frozen_lr_stops_after_two_epochs() {
        let data = tiny_set();
        let mut m = tiny_model(ModelVariant::TBert, &data);
        let before = m.clone();
        let cfg = TrainConfig {
            base_lr: 0.0,
            patience: 1,
            max_epochs: 10,
            weight_decay: 0.0,
            ..quick_cfg()
        };
        let h = train(&mut m, &data, &data, &cfg).unwrap();
        assert_eq!(h.epochs.len(), 2);
        assert!(h.stopped_early);
        assert_eq!(h.best_epoch, 1);
        assert_eq!(m, before);
    }

    #[test]
    fn best_is_max_of_history() {
        let data = tiny_set();
        let mut m = tiny_model(ModelVariant::TBertMarkedTs, &data);
        let h = train(&mut m, &data, &data, &quick_cfg()).unwrap();
        let max = h
            .epochs
            .iter()
            .map(|e| e.val_macro_f1)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(h.best_val_macro_f1, max);
        let report = evaluate_model(&m, &data, LabelKind::Targeted, SubsetTag::Full).unwrap();
        assert_eq!(report.macro_f1, h.best_val_macro_f1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = tiny_set();
        let mut m = tiny_model(ModelVariant::TBert, &data);
        assert!(matches!(
            train(&mut m, &[], &data, &quick_cfg()),
            Err(TrainError::EmptyDataset(_))
        ));
        assert!(matches!(
            train(&mut m, &data, &[], &quick_cfg()),
            Err(TrainError::EmptyDataset(_))
        ));
        assert!(matches!(
            train(&mut m, &data[..3], &data, &quick_cfg()),
            Err(TrainError::EmptyClass(1))
        ));
        let mut cfg = quick_cfg();
        cfg.batch_size = 0;
        assert!(matches!(
            train(&mut m, &data, &data, &cfg),
            Err(TrainError::InvalidConfig(_))
        ));
    }
}
