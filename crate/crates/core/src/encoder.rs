//! BERT-style post-norm transformer encoder.
//!
//! Token and position embeddings are summed, then each layer applies
//! multi-head self-attention (pad keys masked with `−∞`), residual +
//! layer norm, a GELU feed-forward block, and a second residual + layer norm.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, TensorError, Var};
use crate::tokenizer::EncodedExample;

pub const LAYER_NORM_EPS: f64 = 1e-12;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    IdOutOfRange { id: usize, vocab_size: usize },
    #[error("sequence of {len} positions exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    pub max_len: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl EncoderConfig {
    /// 2 layers, hidden 64, 4 heads, ffn 128, max_len 48, dropout 0.1.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            hidden_size: 64,
            num_layers: 2,
            num_heads: 4,
            ffn_size: 128,
            max_len: 48,
            dropout_rate: 0.1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: String| Err(EncoderError::InvalidConfig(m));
        if self.vocab_size == 0 || self.hidden_size == 0 || self.num_heads == 0 || self.ffn_size == 0 {
            return bad("sizes must be positive".into());
        }
        if !self.hidden_size.is_multiple_of(self.num_heads) {
            return bad(format!(
                "hidden_size {} not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            ));
        }
        if self.max_len < 4 {
            return bad(format!("max_len {} below 4", self.max_len));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} not in [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }
}

/// How AdamW treats a parameter: only `Weight` tensors are decayed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Norm,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParameters<T> {
    pub query_w: Tensor<T>,
    pub query_b: Tensor<T>,
    pub key_w: Tensor<T>,
    pub key_b: Tensor<T>,
    pub value_w: Tensor<T>,
    pub value_b: Tensor<T>,
    pub output_w: Tensor<T>,
    pub output_b: Tensor<T>,
    pub attn_norm_gamma: Tensor<T>,
    pub attn_norm_beta: Tensor<T>,
    pub ffn_in_w: Tensor<T>,
    pub ffn_in_b: Tensor<T>,
    pub ffn_out_w: Tensor<T>,
    pub ffn_out_b: Tensor<T>,
    pub ffn_norm_gamma: Tensor<T>,
    pub ffn_norm_beta: Tensor<T>,
}

pub const PARAMS_PER_LAYER: usize = 16;

impl<T: Scalar> LayerParameters<T> {
    fn named(&self) -> [(&'static str, &Tensor<T>, ParamKind); PARAMS_PER_LAYER] {
        use ParamKind::*;
        [
            ("query_w", &self.query_w, Weight),
            ("query_b", &self.query_b, Bias),
            ("key_w", &self.key_w, Weight),
            ("key_b", &self.key_b, Bias),
            ("value_w", &self.value_w, Weight),
            ("value_b", &self.value_b, Bias),
            ("output_w", &self.output_w, Weight),
            ("output_b", &self.output_b, Bias),
            ("attn_norm_gamma", &self.attn_norm_gamma, Norm),
            ("attn_norm_beta", &self.attn_norm_beta, Norm),
            ("ffn_in_w", &self.ffn_in_w, Weight),
            ("ffn_in_b", &self.ffn_in_b, Bias),
            ("ffn_out_w", &self.ffn_out_w, Weight),
            ("ffn_out_b", &self.ffn_out_b, Bias),
            ("ffn_norm_gamma", &self.ffn_norm_gamma, Norm),
            ("ffn_norm_beta", &self.ffn_norm_beta, Norm),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; PARAMS_PER_LAYER] {
        [
            &mut self.query_w,
            &mut self.query_b,
            &mut self.key_w,
            &mut self.key_b,
            &mut self.value_w,
            &mut self.value_b,
            &mut self.output_w,
            &mut self.output_b,
            &mut self.attn_norm_gamma,
            &mut self.attn_norm_beta,
            &mut self.ffn_in_w,
            &mut self.ffn_in_b,
            &mut self.ffn_out_w,
            &mut self.ffn_out_b,
            &mut self.ffn_norm_gamma,
            &mut self.ffn_norm_beta,
        ]
    }
}

/// A parameter with its stable name and decay group.
pub struct NamedParam<'p, T> {
    pub name: String,
    pub tensor: &'p Tensor<T>,
    pub kind: ParamKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParameters<T> {
    pub token_embedding: Tensor<T>,
    pub position_embedding: Tensor<T>,
    pub layers: Vec<LayerParameters<T>>,
}

/// Std of a unit normal truncated to ±2.
const TRUNCATION_STD_FACTOR: f64 = 0.879_625_661_034_239_8;

/// Samples a normal truncated at ±2 of its own σ, with σ widened so the
/// resulting std equals `std`.
pub(crate) fn truncated_normal<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor<T> {
    let std = std / TRUNCATION_STD_FACTOR;
    let normal = Normal::new(0.0, std).expect("valid std");
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= 2.0 * std {
                break T::lit(v);
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

impl<T: Scalar> EncoderParameters<T> {
    /// Weights from a ±2σ truncated normal with std 0.02, biases 0, norm gains 1. The
    /// caller's rng is consumed in parameter order.
    pub fn init(config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self, EncoderError> {
        config.validate()?;
        let h = config.hidden_size;
        let f = config.ffn_size;
        let token_embedding = truncated_normal(rng, &[config.vocab_size, h], INIT_STD);
        let position_embedding = truncated_normal(rng, &[config.max_len, h], INIT_STD);
        let layers = (0..config.num_layers)
            .map(|_| LayerParameters {
                query_w: truncated_normal(rng, &[h, h], INIT_STD),
                query_b: Tensor::zeros(&[h]),
                key_w: truncated_normal(rng, &[h, h], INIT_STD),
                key_b: Tensor::zeros(&[h]),
                value_w: truncated_normal(rng, &[h, h], INIT_STD),
                value_b: Tensor::zeros(&[h]),
                output_w: truncated_normal(rng, &[h, h], INIT_STD),
                output_b: Tensor::zeros(&[h]),
                attn_norm_gamma: Tensor::filled(&[h], T::one()),
                attn_norm_beta: Tensor::zeros(&[h]),
                ffn_in_w: truncated_normal(rng, &[h, f], INIT_STD),
                ffn_in_b: Tensor::zeros(&[f]),
                ffn_out_w: truncated_normal(rng, &[f, h], INIT_STD),
                ffn_out_b: Tensor::zeros(&[h]),
                ffn_norm_gamma: Tensor::filled(&[h], T::one()),
                ffn_norm_beta: Tensor::zeros(&[h]),
            })
            .collect();
        Ok(Self {
            token_embedding,
            position_embedding,
            layers,
        })
    }

    /// All tensors in checkpoint order.
    pub fn named(&self) -> Vec<NamedParam<'_, T>> {
        let mut out = vec![
            NamedParam {
                name: "token_embedding".into(),
                tensor: &self.token_embedding,
                kind: ParamKind::Weight,
            },
            NamedParam {
                name: "position_embedding".into(),
                tensor: &self.position_embedding,
                kind: ParamKind::Weight,
            },
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, tensor, kind) in layer.named() {
                out.push(NamedParam {
                    name: format!("layer{l}.{name}"),
                    tensor,
                    kind,
                });
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.token_embedding, &mut self.position_embedding];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out
    }

    pub fn num_tensors(&self) -> usize {
        2 + PARAMS_PER_LAYER * self.layers.len()
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|p| p.tensor.all_finite())
    }

    /// Records the encoder on `g` over the first `ids.len()` positions and
    /// returns the final hidden states `[ids.len() × hidden]`.
    ///
    /// Parameter slots are `0..num_tensors()` in [`Self::named`] order.
    /// `dropout` enables training-mode dropout. When `trace` is given, every
    /// attention probability matrix (layer-major, then head) is appended.
    pub fn forward<'a>(
        &'a self,
        g: &mut Graph<'a, T>,
        config: &EncoderConfig,
        ids: &[usize],
        mask: &[u8],
        mut dropout: Option<&mut ChaCha8Rng>,
        mut trace: Option<&mut Vec<Tensor<T>>>,
    ) -> Result<Var, EncoderError> {
        let n = ids.len();
        if n > config.max_len {
            return Err(EncoderError::SequenceTooLong {
                len: n,
                max_len: config.max_len,
            });
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= config.vocab_size) {
            return Err(EncoderError::IdOutOfRange {
                id,
                vocab_size: config.vocab_size,
            });
        }
        let h = config.hidden_size;
        let heads = config.num_heads;
        let dh = config.head_dim();
        let rate = config.dropout_rate;

        let tok = g.param(&self.token_embedding, 0);
        let pos = g.param(&self.position_embedding, 1);
        let tok_rows = g.gather_rows(tok, ids)?;
        let positions: Vec<usize> = (0..n).collect();
        let pos_rows = g.gather_rows(pos, &positions)?;
        let mut x = g.add(tok_rows, pos_rows)?;

        let key_mask = if mask[..n].contains(&0) {
            let row: Vec<T> = mask[..n]
                .iter()
                .map(|&m| if m == 1 { T::zero() } else { T::neg_infinity() })
                .collect();
            let data: Vec<T> = (0..n).flat_map(|_| row.iter().copied()).collect();
            Some(g.constant(Tensor::new(vec![n, n], data)?))
        } else {
            None
        };
        let inv_sqrt = T::one() / T::from_usize(dh).unwrap().sqrt();
        let eps = T::lit(LAYER_NORM_EPS);

        for (l, layer) in self.layers.iter().enumerate() {
            let base = 2 + l * PARAMS_PER_LAYER;
            let p: Vec<Var> = layer
                .named()
                .iter()
                .enumerate()
                .map(|(i, (_, t, _))| g.param(t, base + i))
                .collect();

            let q = g.matmul(x, p[0])?;
            let q = g.add_row(q, p[1])?;
            let k = g.matmul(x, p[2])?;
            let k = g.add_row(k, p[3])?;
            let v = g.matmul(x, p[4])?;
            let v = g.add_row(v, p[5])?;

            let mut contexts = Vec::with_capacity(heads);
            for head in 0..heads {
                let qh = g.slice_cols(q, head * dh, dh)?;
                let kh = g.slice_cols(k, head * dh, dh)?;
                let vh = g.slice_cols(v, head * dh, dh)?;
                let kt = g.transpose(kh)?;
                let scores = g.matmul(qh, kt)?;
                let mut scores = g.scale(scores, inv_sqrt);
                if let Some(m) = key_mask {
                    scores = g.add(scores, m)?;
                }
                let mut probs = g.softmax(scores);
                if let Some(t) = trace.as_deref_mut() {
                    t.push(g.tensor(probs));
                }
                if let Some(rng) = dropout.as_deref_mut() {
                    probs = apply_dropout(g, probs, rate, rng)?;
                }
                contexts.push(g.matmul(probs, vh)?);
            }
            let ctx = g.concat_cols(&contexts)?;
            let attn = g.matmul(ctx, p[6])?;
            let attn = g.add_row(attn, p[7])?;
            let res = g.add(x, attn)?;
            x = g.layer_norm(res, p[8], p[9], eps)?;

            let ff = g.matmul(x, p[10])?;
            let ff = g.add_row(ff, p[11])?;
            let mut ff = g.gelu(ff);
            if let Some(rng) = dropout.as_deref_mut() {
                ff = apply_dropout(g, ff, rate, rng)?;
            }
            let ff = g.matmul(ff, p[12])?;
            let ff = g.add_row(ff, p[13])?;
            let res = g.add(x, ff)?;
            x = g.layer_norm(res, p[14], p[15], eps)?;
        }
        debug_assert_eq!(g.shape(x), &[n, h]);
        Ok(x)
    }
}

/// Inverted dropout with a freshly sampled constant mask.
fn apply_dropout<T: Scalar>(g: &mut Graph<'_, T>, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Result<Var, TensorError> {
    if rate == 0.0 {
        return Ok(x);
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    let shape = g.shape(x).to_vec();
    let n = g.value(x).len();
    let mask: Vec<T> = (0..n)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let m = g.constant(Tensor::new(shape, mask)?);
    g.mul(x, m)
}

/// Full-length forward pass: hidden states for all `max_len` positions,
/// including padding.
pub fn encoder_forward<T: Scalar>(
    example: &EncodedExample,
    params: &EncoderParameters<T>,
    config: &EncoderConfig,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<Tensor<T>, EncoderError> {
    let mut g = Graph::new();
    let h = params.forward(&mut g, config, &example.ids, &example.attention_mask, dropout, None)?;
    Ok(g.tensor(h))
}

/// Like [`encoder_forward`] but also returns every attention matrix.
pub fn encoder_forward_traced<T: Scalar>(
    example: &EncodedExample,
    params: &EncoderParameters<T>,
    config: &EncoderConfig,
) -> Result<(Tensor<T>, Vec<Tensor<T>>), EncoderError> {
    let mut g = Graph::new();
    let mut trace = Vec::new();
    let h = params.forward(
        &mut g,
        config,
        &example.ids,
        &example.attention_mask,
        None,
        Some(&mut trace),
    )?;
    Ok((g.tensor(h), trace))
}
