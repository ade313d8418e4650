//! Flat `key=value` configuration with dotted sections. Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::recurrent::OutputActivation;
use crate::span::{DecodeConfig, ModelConfig};
use crate::train::TrainConfig;

/// Dataset columns in report order.
pub const DATASETS: [&str; 4] = ["NewsQA", "SQuAD", "QuAC", "CovidQA"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchConfig {
    pub models: Vec<String>,
    /// Per-model `model.*` overrides, keyed by model name.
    pub model_overrides: BTreeMap<String, Vec<(String, String)>>,
    pub train: BTreeMap<String, String>,
    pub eval: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub synth: SyntheticSpec,
    /// Held-out data for `train` to report on after fitting.
    pub data_eval: Option<String>,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            synth: SyntheticSpec {
                seed: 0,
                ..SyntheticSpec::default()
            },
            data_eval: None,
            bench: BenchConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}={value}: {e}")))
}

fn unknown(key: &str) -> Error {
    Error::Config(format!("unknown key {key:?}"))
}

/// Shortest round-trippable text for a float, with e-notation for small magnitudes.
pub fn format_float(v: f64) -> String {
    if v != 0.0 && v.is_finite() && v.abs() < 1e-3 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Sets one `model.*` key (without the prefix).
pub fn set_model_key(m: &mut ModelConfig, key: &str, value: &str) -> Result<()> {
    let full = format!("model.{key}");
    let e = &mut m.encoder;
    match key {
        "layers" => e.layers = parse(&full, value)?,
        "hidden" => e.hidden = parse(&full, value)?,
        "heads" => e.heads = parse(&full, value)?,
        "ff" => e.ff = parse(&full, value)?,
        "max_positions" => e.max_positions = parse(&full, value)?,
        "vocab_size" => e.vocab_size = parse(&full, value)?,
        "share_layers" => e.share_layers = parse(&full, value)?,
        "dropout" => e.dropout = parse(&full, value)?,
        "init_std" => e.init_std = parse(&full, value)?,
        "use_bilstm" => m.use_bilstm = parse(&full, value)?,
        "lstm_hidden" => m.lstm_hidden = parse(&full, value)?,
        "output_activation" => m.activation = OutputActivation::parse(value)?,
        _ => return Err(unknown(&full)),
    }
    Ok(())
}

/// `model.*` entries in a fixed order.
pub fn model_entries(m: &ModelConfig) -> Vec<(String, String)> {
    let e = &m.encoder;
    [
        ("layers", e.layers.to_string()),
        ("hidden", e.hidden.to_string()),
        ("heads", e.heads.to_string()),
        ("ff", e.ff.to_string()),
        ("max_positions", e.max_positions.to_string()),
        ("vocab_size", e.vocab_size.to_string()),
        ("share_layers", e.share_layers.to_string()),
        ("dropout", format_float(e.dropout)),
        ("init_std", format_float(e.init_std)),
        ("use_bilstm", m.use_bilstm.to_string()),
        ("lstm_hidden", m.lstm_hidden.to_string()),
        ("output_activation", m.activation.name().to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (format!("model.{k}"), v))
    .collect()
}

fn split_line(line: &str) -> Option<Result<(&str, &str)>> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return None;
    }
    Some(match line.split_once('=') {
        Some((k, v)) => Ok((k.trim(), v.trim())),
        None => Err(Error::Config(format!("expected key=value, got {line:?}"))),
    })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(k) = key.strip_prefix("model.") {
            return set_model_key(&mut self.model, k, value);
        }
        if let Some(rest) = key.strip_prefix("bench.") {
            return self.set_bench(key, rest, value);
        }
        match key {
            "seed" => {
                self.seed = parse(key, value)?;
                self.train.seed = self.seed;
                self.synth.seed = self.seed;
            }
            "train.lr" => self.train.lr = parse(key, value)?,
            "train.epochs" => self.train.epochs = parse(key, value)?,
            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.max_len" => self.train.max_len = parse(key, value)?,
            "train.overlap" => self.train.overlap = parse(key, value)?,
            "train.shuffle" => self.train.shuffle = parse(key, value)?,
            "decode.max_answer_len" => self.decode.max_answer_len = parse(key, value)?,
            "decode.null_threshold" => self.decode.null_threshold = parse(key, value)?,
            "decode.n_best" => self.decode.n_best = parse(key, value)?,
            "synth.vocab_size" => self.synth.vocab_size = parse(key, value)?,
            "synth.context_len" => self.synth.context_len = parse(key, value)?,
            "synth.examples" => self.synth.examples = parse(key, value)?,
            "synth.pairs" => self.synth.pairs = parse(key, value)?,
            "synth.max_answer_len" => self.synth.max_answer_len = parse(key, value)?,
            "data.eval" => self.data_eval = Some(value.to_string()),
            _ => return Err(unknown(key)),
        }
        Ok(())
    }

    fn set_bench(&mut self, key: &str, rest: &str, value: &str) -> Result<()> {
        let b = &mut self.bench;
        if rest == "models" {
            b.models = value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            return Ok(());
        }
        if let Some(spec) = rest.strip_prefix("model.") {
            // bench.model.<name>.<model key>
            let (name, k) = spec.split_once('.').ok_or_else(|| unknown(key))?;
            set_model_key(&mut ModelConfig::default(), k, value)?;
            b.model_overrides
                .entry(name.to_string())
                .or_default()
                .push((k.to_string(), value.to_string()));
            return Ok(());
        }
        let (table, dataset) = rest.split_once('.').ok_or_else(|| unknown(key))?;
        let slot = match table {
            "train" => &mut b.train,
            "eval" => &mut b.eval,
            _ => return Err(unknown(key)),
        };
        slot.insert(dataset.to_string(), value.to_string());
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for line in text.lines() {
            if let Some(kv) = split_line(line) {
                let (k, v) = kv?;
                self.set(k, v)?;
            }
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        match split_line(kv) {
            Some(r) => {
                let (k, v) = r?;
                self.set(k, v)
            }
            None => Err(Error::Config(format!("empty override {kv:?}"))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = RunConfig::default();
        c.apply_text(&text)?;
        Ok(c)
    }

    /// The model for one bench row: `model.*` with that row's overrides on top.
    /// A name ending in `-BiLSTM` turns on the BiLSTM head and `ALBERT`
    /// turns on layer sharing before the overrides apply.
    pub fn bench_model(&self, name: &str) -> Result<ModelConfig> {
        let mut m = self.model.clone();
        if name.ends_with("-BiLSTM") {
            m.use_bilstm = true;
        }
        if name == "ALBERT" {
            m.encoder.share_layers = true;
        }
        for (k, v) in self.bench.model_overrides.get(name).into_iter().flatten() {
            set_model_key(&mut m, k, v)?;
        }
        Ok(m)
    }

    /// Every resolved key, one `key=value` per line, sorted.
    pub fn render(&self) -> String {
        let t = &self.train;
        let d = &self.decode;
        let s = &self.synth;
        let mut entries: Vec<(String, String)> = model_entries(&self.model);
        entries.extend(
            [
                ("seed", self.seed.to_string()),
                ("train.lr", format_float(t.lr)),
                ("train.epochs", t.epochs.to_string()),
                ("train.batch_size", t.batch_size.to_string()),
                ("train.max_len", t.max_len.to_string()),
                ("train.overlap", t.overlap.to_string()),
                ("train.shuffle", t.shuffle.to_string()),
                ("decode.max_answer_len", d.max_answer_len.to_string()),
                ("decode.null_threshold", format_float(d.null_threshold)),
                ("decode.n_best", d.n_best.to_string()),
                ("synth.vocab_size", s.vocab_size.to_string()),
                ("synth.context_len", s.context_len.to_string()),
                ("synth.examples", s.examples.to_string()),
                ("synth.pairs", s.pairs.to_string()),
                ("synth.max_answer_len", s.max_answer_len.to_string()),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v)),
        );
        if let Some(p) = &self.data_eval {
            entries.push(("data.eval".into(), p.clone()));
        }
        if !self.bench.models.is_empty() {
            entries.push(("bench.models".into(), self.bench.models.join(",")));
        }
        for (name, kvs) in &self.bench.model_overrides {
            for (k, v) in kvs {
                entries.push((format!("bench.model.{name}.{k}"), v.clone()));
            }
        }
        for (table, map) in [("train", &self.bench.train), ("eval", &self.bench.eval)] {
            for (ds, p) in map {
                entries.push((format!("bench.{table}.{ds}"), p.clone()));
            }
        }
        entries.sort();
        entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_override_echoes_in_e_notation() {
        let mut c = RunConfig::default();
        c.apply_override("train.lr=5e-5").unwrap();
        assert_eq!(c.train.lr, 5e-5);
        assert!(c.render().contains("train.lr=5e-5\n"));
        c.apply_override("train.lr=0.001").unwrap();
        assert!(c.render().contains("train.lr=0.001\n"));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        let mut c = RunConfig::default();
        assert!(c.apply_override("train.lrr=1").is_err());
        assert!(c.apply_override("model.layers=two").is_err());
        assert!(c.apply_override("noequals").is_err());
        assert!(c.apply_override("bench.model.X.bogus=1").is_err());
    }

    #[test]
    fn file_text_with_comments() {
        let mut c = RunConfig::default();
        c.apply_text("# desk\nmodel.layers = 1\n\nseed=9\nmodel.use_bilstm=true\n")
            .unwrap();
        assert_eq!(c.model.encoder.layers, 1);
        assert!(c.model.use_bilstm);
        assert_eq!((c.seed, c.train.seed, c.synth.seed), (9, 9, 9));
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("bench.models=BERT,BERT-BiLSTM\nbench.model.BERT-BiLSTM.use_bilstm=true\nbench.eval.SQuAD=d.jsonl\ndecode.null_threshold=-1.5\n")
            .unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.render()).unwrap();
        assert_eq!(c, d);
        assert!(d.bench_model("BERT-BiLSTM").unwrap().use_bilstm);
        assert!(!d.bench_model("BERT").unwrap().use_bilstm);
    }

    #[test]
    fn row_names_pick_variants() {
        let mut c = RunConfig::default();
        assert!(c.bench_model("RoBERTa-BiLSTM").unwrap().use_bilstm);
        assert!(c.bench_model("ALBERT").unwrap().encoder.share_layers);
        c.apply_override("bench.model.ALBERT.share_layers=false").unwrap();
        assert!(!c.bench_model("ALBERT").unwrap().encoder.share_layers);
    }
}
