//! Minibatch Adam on the span loss, and corpus-wide prediction.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::data::{build_features, QaExample, TrainFeature};
use crate::encoder::Dropout;
use crate::error::{Error, Result};
use crate::optim::{adam_step, AdamState, DEFAULT_LR};
use crate::span::{aggregate_windows, decode_best_span, qa_loss, DecodeConfig, ModelConfig, QaModel, SpanPrediction};
use crate::tensor::Tensor;
use crate::tokenizer::{encode_pair, Vocab, DEFAULT_MAX_LEN, DEFAULT_OVERLAP};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_len: usize,
    pub overlap: usize,
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: DEFAULT_LR,
            epochs: 3,
            batch_size: 8,
            max_len: DEFAULT_MAX_LEN,
            overlap: DEFAULT_OVERLAP,
            shuffle: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.max_len == 0 {
            return Err(Error::Config("epochs, batch_size and max_len must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    /// 1-based optimizer step.
    pub step: usize,
    /// 1-based epoch.
    pub epoch: usize,
    pub loss: f64,
}

pub fn write_loss_csv(path: impl AsRef<Path>, history: &[LossRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("step,epoch,loss\n");
    for r in history {
        text.push_str(&format!("{},{},{}\n", r.step, r.epoch, r.loss));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Features of every example, in example order.
pub fn features_for(
    examples: &[QaExample],
    vocab: &Vocab,
    max_len: usize,
    overlap: usize,
) -> Result<Vec<TrainFeature>> {
    let mut out = Vec::new();
    for ex in examples {
        out.extend(build_features(ex, vocab, max_len, overlap)?);
    }
    Ok(out)
}

/// Mean span loss of one batch; returns the loss and parameter gradients.
fn batch_gradients(
    model: &QaModel,
    batch: &[&TrainFeature],
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape);
    let mut dropout = Dropout {
        p: model.config.encoder.dropout,
        rng,
    };
    let mut total = None;
    for f in batch {
        let enc = f.encoding.trimmed();
        let logits = model.logits_on(&mut tape, &p, &enc, Some(&mut dropout))?;
        let loss = qa_loss(&mut tape, logits, f.start_pos, f.end_pos)?;
        total = Some(match total {
            None => loss,
            Some(t) => tape.add(t, loss)?,
        });
    }
    let total = total.expect("non-empty batch");
    let mean = tape.scale(total, 1.0 / batch.len() as f64);
    let value = tape.value(mean).item();
    let grads = tape.backward(mean)?;
    Ok((value, p.vars().iter().map(|&v| grads.wrt(v)).collect()))
}

/// Trains in place; `on_epoch(epoch, model)` runs after each epoch and may
/// return `false` to stop early. Returns the per-step loss history.
pub fn train_with<F>(
    model: &mut QaModel,
    features: &[TrainFeature],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    mut on_epoch: F,
) -> Result<Vec<LossRecord>>
where
    F: FnMut(usize, &QaModel) -> bool,
{
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::Config("no training features".into()));
    }
    let mut adam = AdamState::new(model.params.tensors(), cfg.lr);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut history = Vec::new();
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(rng);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainFeature> = chunk.iter().map(|&k| &features[k]).collect();
            let step = history.len() + 1;
            let (loss, grads) = batch_gradients(model, &batch, rng)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite { step });
            }
            adam_step(model.params.tensors_mut(), &grads, &mut adam)?;
            log::debug!("step {step} epoch {epoch} loss {loss:.6}");
            history.push(LossRecord { step, epoch, loss });
        }
        if !on_epoch(epoch, model) {
            break;
        }
    }
    Ok(history)
}

pub fn train(
    model: &mut QaModel,
    features: &[TrainFeature],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<LossRecord>> {
    train_with(model, features, cfg, rng, |_, _| true)
}

/// Initializes a model and trains it, all from one generator seeded by `cfg.seed`.
pub fn fit(
    model_cfg: ModelConfig,
    features: &[TrainFeature],
    cfg: &TrainConfig,
) -> Result<(QaModel, Vec<LossRecord>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = QaModel::new(model_cfg, &mut rng)?;
    let history = train(&mut model, features, cfg, &mut rng)?;
    Ok((model, history))
}

/// Best prediction for one example across its windows.
pub fn predict_example(
    model: &QaModel,
    example: &QaExample,
    vocab: &Vocab,
    decode: &DecodeConfig,
    max_len: usize,
    overlap: usize,
) -> Result<SpanPrediction> {
    let encodings = encode_pair(&example.question, &example.context, vocab, max_len, overlap)?;
    let mut per_window = Vec::with_capacity(encodings.len());
    for enc in &encodings {
        let (start, end) = model.forward(enc)?;
        per_window.push(decode_best_span(&start, &end, enc, &example.context, decode)?);
    }
    aggregate_windows(per_window).ok_or_else(|| Error::Example {
        id: example.id.clone(),
        msg: "no windows".into(),
    })
}

/// One prediction per example id. Examples are split across threads; the
/// result does not depend on the split.
pub fn predict_dataset(
    model: &QaModel,
    examples: &[QaExample],
    vocab: &Vocab,
    decode: &DecodeConfig,
    max_len: usize,
    overlap: usize,
) -> Result<BTreeMap<String, SpanPrediction>> {
    let threads = std::thread::available_parallelism().map_or(1, usize::from).min(8);
    let chunk = examples.len().div_ceil(threads).max(1);
    let parts: Vec<Result<Vec<(String, SpanPrediction)>>> = std::thread::scope(|s| {
        let handles: Vec<_> = examples
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|ex| {
                            predict_example(model, ex, vocab, decode, max_len, overlap)
                                .map(|p| (ex.id.clone(), p))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("prediction thread")).collect()
    });
    let mut out = BTreeMap::new();
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Id to answer text, the form `evaluate` consumes.
pub fn prediction_texts(preds: &BTreeMap<String, SpanPrediction>) -> BTreeMap<String, String> {
    preds.iter().map(|(k, p)| (k.clone(), p.text.clone())).collect()
}
