//! Encoder (+ optional BiLSTM) with the start/end span head.
//!
//! Start and end logits are dot products of each token representation with
//! learned vectors `S` and `E_end`. A span `(i, j)` scores
//! `start[i] + end[j]`; the null (unanswerable) score sits at `[CLS]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::encoder::{self, Dropout, Encoder, EncoderConfig, NoRng, MASK_BIAS};
use crate::error::{Error, Result};
use crate::params::{truncated_normal, Bound, ParamId, ParamStore};
use crate::recurrent::{BiLstm, OutputActivation};
use crate::tokenizer::{decode_span, Encoding};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub use_bilstm: bool,
    /// BiLSTM cell width; 0 means `hidden / 2`.
    pub lstm_hidden: usize,
    pub activation: OutputActivation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            use_bilstm: false,
            lstm_hidden: 0,
            activation: OutputActivation::Tanh,
        }
    }
}

impl ModelConfig {
    pub fn lstm_width(&self) -> usize {
        if self.lstm_hidden == 0 {
            (self.encoder.hidden / 2).max(1)
        } else {
            self.lstm_hidden
        }
    }
}

#[derive(Debug, Clone)]
pub struct QaModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub bilstm: Option<BiLstm>,
    pub start: ParamId,
    pub end: ParamId,
}

/// Logit nodes for one encoding; padded positions hold [`MASK_BIAS`].
#[derive(Debug, Clone, Copy)]
pub struct SpanLogits {
    pub start: Var,
    pub end: Var,
}

impl QaModel {
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let mut params = ParamStore::new();
        let encoder = Encoder::new(config.encoder.clone(), &mut params, rng)?;
        let h = config.encoder.hidden;
        let std = config.encoder.init_std;
        let bilstm = if config.use_bilstm {
            Some(BiLstm::new(
                &mut params,
                h,
                config.lstm_width(),
                h,
                config.activation,
                std,
                rng,
            )?)
        } else {
            None
        };
        let start = params.add("head.start", truncated_normal(&[h, 1], std, rng));
        let end = params.add("head.end", truncated_normal(&[h, 1], std, rng));
        Ok(QaModel {
            config,
            params,
            encoder,
            bilstm,
            start,
            end,
        })
    }

    pub fn seeded(config: ModelConfig, seed: u64) -> Result<Self> {
        QaModel::new(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Token representations reaching the head, `[seq×H]`.
    pub fn representations<R: Rng>(
        &self,
        tape: &mut Tape,
        p: &Bound,
        enc: &Encoding,
        mut dropout: Option<&mut Dropout<'_, R>>,
    ) -> Result<Var> {
        let t = self.encoder.encode(tape, p, enc, dropout.as_deref_mut())?;
        match &self.bilstm {
            Some(layer) => {
                let (fwd, bwd) = layer.run(tape, p, t, &enc.pad_mask)?;
                let y = layer.project(tape, p, fwd, bwd)?;
                encoder::apply_dropout(&mut dropout, tape, y)
            }
            None => Ok(t),
        }
    }

    pub fn logits_on<R: Rng>(
        &self,
        tape: &mut Tape,
        p: &Bound,
        enc: &Encoding,
        dropout: Option<&mut Dropout<'_, R>>,
    ) -> Result<SpanLogits> {
        let t = self.representations(tape, p, enc, dropout)?;
        let seq = enc.len();
        let keep: Vec<bool> = enc.pad_mask.iter().map(|&m| m == 1).collect();
        let mut head = |v: ParamId| -> Result<Var> {
            let l = tape.matmul(t, p[v])?;
            let l = tape.reshape(l, &[seq])?;
            tape.mask_fill(l, &keep, MASK_BIAS)
        };
        let start = head(self.start)?;
        let end = head(self.end)?;
        Ok(SpanLogits { start, end })
    }

    /// Inference forward pass: `(start_logits, end_logits)`, one per position of `enc`.
    pub fn forward(&self, enc: &Encoding) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let l = self.logits_on::<NoRng>(&mut tape, &p, &enc.trimmed(), None)?;
        let pad = |v: Var| {
            let mut out = tape.value(v).data().to_vec();
            out.resize(enc.len(), MASK_BIAS);
            out
        };
        Ok((pad(l.start), pad(l.end)))
    }
}

/// Mean of the start and end cross-entropies.
pub fn qa_loss(
    tape: &mut Tape,
    logits: SpanLogits,
    gold_start: usize,
    gold_end: usize,
) -> Result<Var> {
    let ls = tape.cross_entropy(logits.start, gold_start)?;
    let le = tape.cross_entropy(logits.end, gold_end)?;
    let both = tape.add(ls, le)?;
    Ok(tape.scale(both, 0.5))
}

fn masked_softmax(logits: &[f64], pad_mask: &[u8]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(pad_mask)
        .filter(|(_, &m)| m == 1)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .zip(pad_mask)
        .map(|(&v, &m)| if m == 1 { (v - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Start/end probabilities over unpadded positions; padded positions get 0.
pub fn distributions(start: &[f64], end: &[f64], pad_mask: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
    if start.len() != pad_mask.len() || end.len() != pad_mask.len() {
        return Err(Error::Shape {
            op: "distributions",
            lhs: vec![start.len(), end.len()],
            rhs: vec![pad_mask.len()],
        });
    }
    if !pad_mask.contains(&1) {
        return Err(Error::Decode("every position is padding".into()));
    }
    Ok((masked_softmax(start, pad_mask), masked_softmax(end, pad_mask)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub max_answer_len: usize,
    /// τ: null wins when `null_score > best_span_score − τ`.
    pub null_threshold: f64,
    pub n_best: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            max_answer_len: 30,
            null_threshold: 0.0,
            n_best: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanCandidate {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

/// Highest `start[i] + end[j]` over candidate positions with `j ≥ i` and
/// `j − i + 1 ≤ max_len`. Ties go to the smallest `i`, then the smallest `j`.
pub fn best_span(
    start: &[f64],
    end: &[f64],
    candidate: &[bool],
    max_len: usize,
) -> Option<SpanCandidate> {
    let mut best: Option<SpanCandidate> = None;
    for i in (0..start.len()).filter(|&i| candidate[i]) {
        let last = (i + max_len).min(end.len());
        for j in (i..last).filter(|&j| candidate[j]) {
            let score = start[i] + end[j];
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(SpanCandidate {
                    start: i,
                    end: j,
                    score,
                });
            }
        }
    }
    best
}

fn top_spans(
    start: &[f64],
    end: &[f64],
    candidate: &[bool],
    max_len: usize,
    n: usize,
) -> Vec<SpanCandidate> {
    let mut all = Vec::new();
    for i in (0..start.len()).filter(|&i| candidate[i]) {
        for j in (i..(i + max_len).min(end.len())).filter(|&j| candidate[j]) {
            all.push(SpanCandidate {
                start: i,
                end: j,
                score: start[i] + end[j],
            });
        }
    }
    all.sort_by(|a, b| b.score.total_cmp(&a.score));
    all.truncate(n);
    all
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanPrediction {
    pub start: usize,
    pub end: usize,
    /// `start[i] + end[j]`, or the null score when `is_null`.
    pub score: f64,
    pub null_score: f64,
    pub text: String,
    pub is_null: bool,
    /// Char span `[start, end)` of `text` in the original context.
    pub char_span: Option<(usize, usize)>,
    /// Index of the window the prediction came from.
    pub window: usize,
    pub n_best: Vec<SpanCandidate>,
}

impl SpanPrediction {
    fn null(null_score: f64, window: usize, n_best: Vec<SpanCandidate>) -> Self {
        SpanPrediction {
            start: 0,
            end: 0,
            score: null_score,
            null_score,
            text: String::new(),
            is_null: true,
            char_span: None,
            window,
            n_best,
        }
    }
}

/// Best span of one window, or null when the `[CLS]` score beats it by more than τ.
pub fn decode_best_span(
    start: &[f64],
    end: &[f64],
    enc: &Encoding,
    context: &str,
    cfg: &DecodeConfig,
) -> Result<SpanPrediction> {
    if cfg.max_answer_len == 0 {
        return Err(Error::Config("max_answer_len must be at least 1".into()));
    }
    if start.len() != enc.len() || end.len() != enc.len() {
        return Err(Error::Shape {
            op: "decode_best_span",
            lhs: vec![start.len(), end.len()],
            rhs: vec![enc.len()],
        });
    }
    let candidate: Vec<bool> = (0..enc.len()).map(|p| enc.offsets[p].is_some()).collect();
    let best = best_span(start, end, &candidate, cfg.max_answer_len)
        .ok_or_else(|| Error::Decode("no context token in window".into()))?;
    let n_best = top_spans(start, end, &candidate, cfg.max_answer_len, cfg.n_best);
    let null_score = start[0] + end[0];

    if null_score > best.score - cfg.null_threshold {
        return Ok(SpanPrediction::null(null_score, 0, n_best));
    }
    let text = decode_span(enc, best.start, best.end, context)?;
    let char_span = Some((
        enc.offsets[best.start].unwrap().0,
        enc.offsets[best.end].unwrap().1,
    ));
    Ok(SpanPrediction {
        start: best.start,
        end: best.end,
        score: best.score,
        null_score,
        text,
        is_null: false,
        char_span,
        window: 0,
        n_best,
    })
}

/// Picks one prediction across the windows of an example: the non-null window
/// with the largest `score − null_score` wins; null only if every window is null.
pub fn aggregate_windows(per_window: Vec<SpanPrediction>) -> Option<SpanPrediction> {
    let mut best_span: Option<SpanPrediction> = None;
    let mut best_null: Option<SpanPrediction> = None;
    for (w, mut p) in per_window.into_iter().enumerate() {
        p.window = w;
        let margin = p.score - p.null_score;
        let slot = if p.is_null {
            &mut best_null
        } else {
            &mut best_span
        };
        let better = match slot {
            None => true,
            Some(b) if p.is_null => p.null_score > b.null_score,
            Some(b) => margin > b.score - b.null_score,
        };
        if better {
            *slot = Some(p);
        }
    }
    best_span.or(best_null)
}

/// Serialized prediction record; ids map to these in a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub text: String,
    pub start_char: Option<usize>,
    pub end_char: Option<usize>,
    pub is_null: bool,
    pub score: f64,
}

impl From<&SpanPrediction> for PredictionRecord {
    fn from(p: &SpanPrediction) -> Self {
        PredictionRecord {
            text: p.text.clone(),
            start_char: p.char_span.map(|s| s.0),
            end_char: p.char_span.map(|s| s.1),
            is_null: p.is_null,
            score: p.score,
        }
    }
}

/// The model the full gradient check runs on: L=2, H=16, A=2, F=32, BiLSTM on.
pub fn gradcheck_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            layers: 2,
            hidden: 16,
            heads: 2,
            ff: 32,
            vocab_size: 20,
            max_positions: 8,
            ..EncoderConfig::default()
        },
        use_bilstm: true,
        ..ModelConfig::default()
    }
}

/// Central-difference check of `qa_loss` through the whole model, over every
/// parameter, on one seq-8 input with a padded tail.
pub fn model_grad_check(config: ModelConfig, seed: u64) -> Result<crate::gradcheck::GradCheck> {
    let model = QaModel::seeded(config, seed)?;
    let seq = model.config.encoder.max_positions.min(8);
    let vocab = model.config.encoder.vocab_size as u32;
    let real = seq - 1;
    let q_end = 2.min(real - 1);
    let ids: Vec<u32> = (0..seq)
        .map(|k| match k {
            0 => crate::tokenizer::CLS_ID,
            _ if k >= real => crate::tokenizer::PAD_ID,
            _ => 5 + (k as u32 * 7) % vocab.saturating_sub(5).max(1),
        })
        .collect();
    let enc = Encoding {
        ids,
        segment_ids: (0..seq).map(|k| u8::from(k > q_end && k < real)).collect(),
        pad_mask: (0..seq).map(|k| u8::from(k < real)).collect(),
        offsets: (0..seq)
            .map(|k| (k > q_end && k < real).then_some((k, k + 1)))
            .collect(),
        window_start: 0,
        context: q_end + 1..real,
    };
    let (gs, ge) = (q_end + 1, real - 1);
    crate::gradcheck::grad_check(
        |tape, vars| {
            let p = Bound::from_vars(vars.to_vec());
            let l = model.logits_on::<NoRng>(tape, &p, &enc, None)?;
            qa_loss(tape, l, gs, ge)
        },
        model.params.tensors(),
        crate::gradcheck::DEFAULT_STEP,
    )
}
