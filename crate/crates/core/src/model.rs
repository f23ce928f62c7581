//! Output heads and the five assembled model variants.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{LabelKind, LabeledRecord, SentimentLabel};
use crate::encoder::{
    truncated_normal, EncoderConfig, EncoderError, EncoderParameters, NamedParam, ParamKind, INIT_STD,
};
use crate::scalar::Scalar;
use crate::tensor::gradcheck::{compare_finite_differences, GradCheck};
use crate::tensor::{kernels, Graph, Tensor, TensorError, Var};
use crate::tokenizer::{self, EncodedExample, TokenizerError, Vocabulary};

pub const NUM_CLASSES: usize = SentimentLabel::COUNT;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("first-marker head needs a marked example")]
    NotMarked,
    #[error("config vocab_size {config} differs from vocabulary size {vocab}")]
    VocabMismatch { config: usize, vocab: usize },
    #[error(transparent)]
    Encode(#[from] TokenizerError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which hidden state(s) feed the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeadKind {
    /// Row 0, the `[CLS]` position.
    Cls,
    /// The first `[TAR]` marker.
    FirstMarker,
    /// Elementwise max over the target span, markers included.
    MaxPool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "baseline")]
    BaselineSentence,
    #[serde(rename = "t-bert")]
    TBert,
    #[serde(rename = "t-bert-marked")]
    TBertMarked,
    #[serde(rename = "t-bert-marked-ts")]
    TBertMarkedTs,
    #[serde(rename = "t-bert-marked-mp")]
    TBertMarkedMp,
}

/// Input, head and supervision chosen by a variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Wiring {
    pub marked: bool,
    pub head: HeadKind,
    pub label: LabelKind,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 5] = [
        Self::BaselineSentence,
        Self::TBert,
        Self::TBertMarked,
        Self::TBertMarkedTs,
        Self::TBertMarkedMp,
    ];

    pub fn wiring(self) -> Wiring {
        let (marked, head, label) = match self {
            Self::BaselineSentence => (false, HeadKind::Cls, LabelKind::Sentence),
            Self::TBert => (false, HeadKind::Cls, LabelKind::Targeted),
            Self::TBertMarked => (true, HeadKind::Cls, LabelKind::Targeted),
            Self::TBertMarkedTs => (true, HeadKind::FirstMarker, LabelKind::Targeted),
            Self::TBertMarkedMp => (true, HeadKind::MaxPool, LabelKind::Targeted),
        };
        Wiring { marked, head, label }
    }

    pub fn marked(self) -> bool {
        self.wiring().marked
    }

    pub fn head(self) -> HeadKind {
        self.wiring().head
    }

    pub fn label_kind(self) -> LabelKind {
        self.wiring().label
    }

    /// Name accepted on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            Self::BaselineSentence => "baseline",
            Self::TBert => "t-bert",
            Self::TBertMarked => "t-bert-marked",
            Self::TBertMarkedTs => "t-bert-marked-ts",
            Self::TBertMarkedMp => "t-bert-marked-mp",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Self::BaselineSentence => "Baseline",
            Self::TBert => "T-BERT",
            Self::TBertMarked => "T-BERT-marked",
            Self::TBertMarkedTs => "T-BERT-marked-TS",
            Self::TBertMarkedMp => "T-BERT-marked-MP",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|v| v.cli_name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|v| v.cli_name()).collect();
            format!("unknown variant {s:?}; expected one of {}", names.join(", "))
        })
    }
}

/// Single linear layer mapping a hidden vector to three logits.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ClassifierHead<T> {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[hidden, NUM_CLASSES]),
            bias: Tensor::zeros(&[NUM_CLASSES]),
        }
    }

    fn init(hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: truncated_normal(rng, &[hidden, NUM_CLASSES], INIT_STD),
            bias: Tensor::zeros(&[NUM_CLASSES]),
        }
    }
}

/// Pools `h` according to `kind` and applies the linear head. Parameter slots
/// for the head are `slot_base` (weight) and `slot_base + 1` (bias).
fn head_logits<'a, T: Scalar>(
    g: &mut Graph<'a, T>,
    h: Var,
    kind: HeadKind,
    example: &EncodedExample,
    head: &'a ClassifierHead<T>,
    slot_base: usize,
) -> Result<Var, ModelError> {
    let pooled = match kind {
        HeadKind::Cls => g.select_row(h, 0)?,
        HeadKind::FirstMarker => {
            let pos = example
                .first_marker_pos
                .filter(|_| example.marked)
                .ok_or(ModelError::NotMarked)?;
            g.select_row(h, pos)?
        }
        HeadKind::MaxPool => {
            let (first, last) = example.target_range;
            g.masked_max_pool(h, first, last)?
        }
    };
    let w = g.param(&head.weight, slot_base);
    let b = g.param(&head.bias, slot_base + 1);
    let z = g.matmul(pooled, w)?;
    Ok(g.add_row(z, b)?)
}

fn logits_from_hidden<T: Scalar>(
    hidden: &Tensor<T>,
    kind: HeadKind,
    example: &EncodedExample,
    head: &ClassifierHead<T>,
) -> Result<Tensor<T>, ModelError> {
    let mut g = Graph::new();
    let h = g.constant(hidden.clone());
    let z = head_logits(&mut g, h, kind, example, head, 0)?;
    Ok(g.tensor(z))
}

fn bare_example(first_marker_pos: Option<usize>, target_range: (usize, usize)) -> EncodedExample {
    EncodedExample {
        ids: Vec::new(),
        attention_mask: Vec::new(),
        target_range,
        first_marker_pos,
        marked: first_marker_pos.is_some(),
        label: SentimentLabel::Positive,
    }
}

/// `W·H[0] + b`
pub fn cls_head<T: Scalar>(hidden: &Tensor<T>, head: &ClassifierHead<T>) -> Result<Tensor<T>, ModelError> {
    logits_from_hidden(hidden, HeadKind::Cls, &bare_example(None, (0, 0)), head)
}

/// `W·H[first_marker_pos] + b`; `None` means the example carried no markers.
pub fn marker_head<T: Scalar>(
    hidden: &Tensor<T>,
    first_marker_pos: Option<usize>,
    head: &ClassifierHead<T>,
) -> Result<Tensor<T>, ModelError> {
    let pos = first_marker_pos.ok_or(ModelError::NotMarked)?;
    logits_from_hidden(
        hidden,
        HeadKind::FirstMarker,
        &bare_example(Some(pos), (pos, pos)),
        head,
    )
}

/// `W·maxpool(H[first..=last]) + b`
pub fn maxpool_head<T: Scalar>(
    hidden: &Tensor<T>,
    target_range: (usize, usize),
    head: &ClassifierHead<T>,
) -> Result<Tensor<T>, ModelError> {
    logits_from_hidden(hidden, HeadKind::MaxPool, &bare_example(None, target_range), head)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: SentimentLabel,
    pub probs: [f64; NUM_CLASSES],
}

/// Encoder plus head, wired per [`ModelVariant`].
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub variant: ModelVariant,
    pub config: EncoderConfig,
    pub vocab: Vocabulary,
    pub encoder: EncoderParameters<T>,
    pub head: ClassifierHead<T>,
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters drawn from `config.seed`.
    pub fn build(variant: ModelVariant, config: EncoderConfig, vocab: Vocabulary) -> Result<Self, ModelError> {
        if config.vocab_size != vocab.len() {
            return Err(ModelError::VocabMismatch {
                config: config.vocab_size,
                vocab: vocab.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = EncoderParameters::init(&config, &mut rng)?;
        let head = ClassifierHead::init(config.hidden_size, &mut rng);
        Ok(Self {
            variant,
            config,
            vocab,
            encoder,
            head,
        })
    }

    pub fn wiring(&self) -> Wiring {
        self.variant.wiring()
    }

    /// Every parameter in checkpoint order: encoder tensors, then head weight
    /// and bias. The position in this list is the parameter's graph slot.
    pub fn named_params(&self) -> Vec<NamedParam<'_, T>> {
        let mut out = self.encoder.named();
        out.push(NamedParam {
            name: "head.weight".into(),
            tensor: &self.head.weight,
            kind: ParamKind::Weight,
        });
        out.push(NamedParam {
            name: "head.bias".into(),
            tensor: &self.head.bias,
            kind: ParamKind::Bias,
        });
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.encoder.tensors_mut();
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_params().iter().map(|p| p.tensor.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in self.tensors_mut() {
            t.zero_grad();
        }
    }

    /// Encodes a raw record with this variant's marker setting and label source.
    pub fn encode(&self, record: &LabeledRecord) -> Result<EncodedExample, ModelError> {
        let w = self.wiring();
        Ok(tokenizer::encode_record(
            record,
            &self.vocab,
            self.config.max_len,
            w.marked,
            w.label,
        )?)
    }

    /// Records the forward pass up to the logits. Only the non-pad prefix is
    /// run through the encoder.
    pub fn logits_on<'a>(
        &'a self,
        g: &mut Graph<'a, T>,
        example: &EncodedExample,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, ModelError> {
        let n = example.seq_len();
        let h = self.encoder.forward(
            g,
            &self.config,
            &example.ids[..n],
            &example.attention_mask[..n],
            dropout,
            None,
        )?;
        let slot = self.encoder.num_tensors();
        head_logits(g, h, self.wiring().head, example, &self.head, slot)
    }

    /// Eval-mode logits.
    pub fn logits(&self, example: &EncodedExample) -> Result<Tensor<T>, ModelError> {
        let mut g = Graph::new();
        let z = self.logits_on(&mut g, example, None)?;
        Ok(g.tensor(z))
    }

    pub fn predict_encoded(&self, example: &EncodedExample) -> Result<Prediction, ModelError> {
        Ok(prediction_from_logits(&self.logits(example)?))
    }

    /// preprocess → encode → encoder → head → softmax → argmax.
    pub fn predict(&self, record: &LabeledRecord) -> Result<Prediction, ModelError> {
        self.predict_encoded(&self.encode(record)?)
    }
}

impl Model<f64> {
    /// Weighted cross-entropy of one example in eval mode.
    pub fn loss(&self, example: &EncodedExample, weights: &[f64; NUM_CLASSES]) -> Result<f64, ModelError> {
        let mut g = Graph::new();
        let z = self.logits_on(&mut g, example, None)?;
        let l = g.weighted_cross_entropy(z, &[example.label.index()], weights)?;
        Ok(g.value(l)[0])
    }

    /// Compares backprop gradients of [`Self::loss`] with central finite
    /// differences at `n_probes` random parameter coordinates.
    pub fn gradient_check(
        &self,
        example: &EncodedExample,
        weights: &[f64; NUM_CLASSES],
        n_probes: usize,
        step: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<GradCheck, ModelError> {
        let analytic = {
            let mut g = Graph::new();
            let z = self.logits_on(&mut g, example, None)?;
            let l = g.weighted_cross_entropy(z, &[example.label.index()], weights)?;
            let mut grads: Vec<Vec<f64>> = self.named_params().iter().map(|p| vec![0.0; p.tensor.len()]).collect();
            for (slot, grad) in g.backward(l)?.into_slots() {
                grads[slot] = grad;
            }
            grads
        };
        let mut probe = self.clone();
        let mut failure = None;
        let check = compare_finite_differences(&analytic, n_probes, step, rng, |t, i, d| {
            let orig = probe.tensors_mut()[t].data()[i];
            probe.tensors_mut()[t].data_mut()[i] = orig + d;
            let l = probe.loss(example, weights);
            probe.tensors_mut()[t].data_mut()[i] = orig;
            l.unwrap_or_else(|e| {
                failure = Some(e);
                f64::NAN
            })
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(check),
        }
    }
}

/// Softmax probabilities and the arg-max label; ties go to the lowest index.
pub fn prediction_from_logits<T: Scalar>(logits: &Tensor<T>) -> Prediction {
    let mut p: Vec<f64> = logits.data().iter().map(|v| v.as_f64()).collect();
    kernels::softmax_in_place(&mut p);
    let idx = kernels::argmax(&p).unwrap_or(0);
    Prediction {
        label: SentimentLabel::from_index(idx).expect("three classes"),
        probs: [p[0], p[1], p[2]],
    }
}
