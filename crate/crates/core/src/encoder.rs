//! BERT-shaped transformer encoder with optional cross-layer parameter sharing.
//!
//! Token, segment and position embeddings are summed and layer-normalized,
//! then passed through `layers` post-norm self-attention blocks. With
//! `share_layers` a single block is registered and applied `layers` times.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{truncated_normal, Bound, ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::tokenizer::Encoding;

/// Additive attention bias for padded keys; `exp` of it underflows to exactly zero.
pub const MASK_BIAS: f64 = -1e9;

pub const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ff: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub segments: usize,
    pub share_layers: bool,
    pub dropout: f64,
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 2,
            hidden: 64,
            heads: 2,
            ff: 128,
            vocab_size: 30522,
            max_positions: 512,
            segments: 2,
            share_layers: false,
            dropout: 0.0,
            init_std: 0.02,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden == 0 || self.heads == 0 || self.ff == 0 {
            return bad("hidden, heads and ff must be at least 1".into());
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return bad(format!(
                "hidden {} is not divisible by heads {}",
                self.hidden, self.heads
            ));
        }
        if self.vocab_size == 0 || self.max_positions == 0 || self.segments == 0 {
            return bad("vocab_size, max_positions and segments must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Number of distinct layer blocks holding parameters.
    pub fn blocks(&self) -> usize {
        if self.share_layers {
            self.layers.min(1)
        } else {
            self.layers
        }
    }
}

/// Closed-form scalar parameter count of an encoder with this config.
pub fn param_count(config: &EncoderConfig) -> usize {
    let h = config.hidden;
    let f = config.ff;
    let embeddings = (config.vocab_size + config.segments + config.max_positions) * h + 2 * h;
    let attention = 4 * (h * h + h);
    let feed_forward = (h * f + f) + (f * h + h);
    let norms = 4 * h;
    embeddings + config.blocks() * (attention + feed_forward + norms)
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        inp: usize,
        out: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        Linear {
            weight: store.add(format!("{name}.weight"), truncated_normal(&[inp, out], std, rng)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[out])),
        }
    }

    pub fn apply(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(x, p[self.weight])?;
        tape.add(y, p[self.bias])
    }
}

#[derive(Debug, Clone)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    fn new(store: &mut ParamStore, name: &str, n: usize) -> Self {
        Norm {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[n], 1.0)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[n])),
        }
    }

    pub fn apply(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        tape.layer_norm(x, p[self.gain], p[self.bias], LAYER_NORM_EPS)
    }
}

#[derive(Debug, Clone)]
pub struct LayerBlock {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub attention_norm: Norm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub output_norm: Norm,
}

/// Outputs of one attention sublayer, with intermediates kept for inspection.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// Output-projected result, `[seq×H]`.
    pub output: Var,
    /// Concatenated per-head contexts before the output projection.
    pub heads: Var,
    /// Per-head attention weights, each `[seq×seq]`.
    pub weights: Vec<Var>,
}

/// Inverted dropout driven by a seeded generator.
pub struct Dropout<'a, R: Rng> {
    pub p: f64,
    pub rng: &'a mut R,
}

impl<R: Rng> Dropout<'_, R> {
    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        if self.p <= 0.0 {
            return Ok(x);
        }
        let shape = tape.value(x).shape().to_vec();
        let keep = 1.0 / (1.0 - self.p);
        let n: usize = shape.iter().product();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.random::<f64>() < self.p { 0.0 } else { keep })
            .collect();
        let m = tape.constant(Tensor::new(shape, mask)?);
        tape.mul(x, m)
    }
}

pub(crate) fn apply_dropout<R: Rng>(
    d: &mut Option<&mut Dropout<'_, R>>,
    tape: &mut Tape,
    x: Var,
) -> Result<Var> {
    match d {
        Some(d) => d.apply(tape, x),
        None => Ok(x),
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub token_embedding: ParamId,
    pub segment_embedding: ParamId,
    pub position_embedding: ParamId,
    pub embedding_norm: Norm,
    pub blocks: Vec<LayerBlock>,
}

impl Encoder {
    pub fn new<R: Rng>(config: EncoderConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (h, f, std) = (config.hidden, config.ff, config.init_std);
        let token_embedding = store.add(
            "encoder.embeddings.token",
            truncated_normal(&[config.vocab_size, h], std, rng),
        );
        let segment_embedding = store.add(
            "encoder.embeddings.segment",
            truncated_normal(&[config.segments, h], std, rng),
        );
        let position_embedding = store.add(
            "encoder.embeddings.position",
            truncated_normal(&[config.max_positions, h], std, rng),
        );
        let embedding_norm = Norm::new(store, "encoder.embeddings.norm", h);

        let blocks = (0..config.blocks())
            .map(|i| {
                let name = if config.share_layers {
                    "encoder.layer.shared".to_string()
                } else {
                    format!("encoder.layer.{i}")
                };
                LayerBlock {
                    query: Linear::new(store, &format!("{name}.attention.query"), h, h, std, rng),
                    key: Linear::new(store, &format!("{name}.attention.key"), h, h, std, rng),
                    value: Linear::new(store, &format!("{name}.attention.value"), h, h, std, rng),
                    output: Linear::new(store, &format!("{name}.attention.output"), h, h, std, rng),
                    attention_norm: Norm::new(store, &format!("{name}.attention.norm"), h),
                    ff_in: Linear::new(store, &format!("{name}.ff.in"), h, f, std, rng),
                    ff_out: Linear::new(store, &format!("{name}.ff.out"), f, h, std, rng),
                    output_norm: Norm::new(store, &format!("{name}.ff.norm"), h),
                }
            })
            .collect();

        Ok(Encoder {
            config,
            token_embedding,
            segment_embedding,
            position_embedding,
            embedding_norm,
            blocks,
        })
    }

    /// The block applied at layer `index`.
    pub fn block(&self, index: usize) -> &LayerBlock {
        if self.config.share_layers {
            &self.blocks[0]
        } else {
            &self.blocks[index]
        }
    }

    /// `layer_norm(token[id] + segment[seg] + position[pos])`, shape `[seq×H]`.
    pub fn embed(&self, tape: &mut Tape, p: &Bound, ids: &[u32], segments: &[u8]) -> Result<Var> {
        if ids.len() != segments.len() {
            return Err(Error::Shape {
                op: "embed",
                lhs: vec![ids.len()],
                rhs: vec![segments.len()],
            });
        }
        if ids.len() > self.config.max_positions {
            return Err(Error::Index {
                op: "embed position",
                index: ids.len() - 1,
                extent: self.config.max_positions,
            });
        }
        let ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let segs: Vec<usize> = segments.iter().map(|&s| s as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok = tape.gather(p[self.token_embedding], &ids)?;
        let seg = tape.gather(p[self.segment_embedding], &segs)?;
        let pos = tape.gather(p[self.position_embedding], &positions)?;
        let sum = tape.add(tok, seg)?;
        let sum = tape.add(sum, pos)?;
        self.embedding_norm.apply(tape, p, sum)
    }

    pub fn attention(
        &self,
        tape: &mut Tape,
        p: &Bound,
        block: &LayerBlock,
        x: Var,
        pad_mask: &[u8],
    ) -> Result<AttentionOutput> {
        let seq = tape.value(x).rows();
        if pad_mask.len() != seq {
            return Err(Error::Shape {
                op: "attention mask",
                lhs: tape.value(x).shape().to_vec(),
                rhs: vec![pad_mask.len()],
            });
        }
        let d = self.config.head_dim();
        let scale = 1.0 / (d as f64).sqrt();
        let q = block.query.apply(tape, p, x)?;
        let k = block.key.apply(tape, p, x)?;
        let v = block.value.apply(tape, p, x)?;
        let bias = tape.constant(Tensor::vector(
            pad_mask
                .iter()
                .map(|&m| if m == 1 { 0.0 } else { MASK_BIAS })
                .collect(),
        ));

        let mut heads = Vec::with_capacity(self.config.heads);
        let mut weights = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let qh = tape.slice_cols(q, h * d, d)?;
            let kh = tape.slice_cols(k, h * d, d)?;
            let vh = tape.slice_cols(v, h * d, d)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let scores = tape.add(scores, bias)?;
            let w = tape.softmax(scores, 1)?;
            heads.push(tape.matmul(w, vh)?);
            weights.push(w);
        }
        let heads = tape.concat_cols(&heads)?;
        let output = block.output.apply(tape, p, heads)?;
        Ok(AttentionOutput {
            output,
            heads,
            weights,
        })
    }

    /// Post-norm block: `LN(x + Attn(x))`, then `LN(h + FFN(h))` with a GELU FFN.
    pub fn layer<R: Rng>(
        &self,
        tape: &mut Tape,
        p: &Bound,
        block: &LayerBlock,
        x: Var,
        pad_mask: &[u8],
        mut dropout: Option<&mut Dropout<'_, R>>,
    ) -> Result<Var> {
        let attn = self.attention(tape, p, block, x, pad_mask)?.output;
        let attn = apply_dropout(&mut dropout, tape, attn)?;
        let h = tape.add(x, attn)?;
        let h = block.attention_norm.apply(tape, p, h)?;
        let f = block.ff_in.apply(tape, p, h)?;
        let f = tape.gelu(f);
        let f = block.ff_out.apply(tape, p, f)?;
        let f = apply_dropout(&mut dropout, tape, f)?;
        let out = tape.add(h, f)?;
        block.output_norm.apply(tape, p, out)
    }

    pub fn encode<R: Rng>(
        &self,
        tape: &mut Tape,
        p: &Bound,
        enc: &Encoding,
        mut dropout: Option<&mut Dropout<'_, R>>,
    ) -> Result<Var> {
        let mut x = self.embed(tape, p, &enc.ids, &enc.segment_ids)?;
        x = apply_dropout(&mut dropout, tape, x)?;
        for l in 0..self.config.layers {
            x = self.layer(tape, p, self.block(l), x, &enc.pad_mask, dropout.as_deref_mut())?;
        }
        Ok(x)
    }
}

/// Stand-in generator type for calls that pass no dropout.
pub type NoRng = rand_chacha::ChaCha8Rng;
