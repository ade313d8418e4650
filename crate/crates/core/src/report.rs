//! Model-by-dataset F1 grid, benchmark runs and the baseline/BiLSTM comparison.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::DATASETS;
use crate::data::{load_examples, QaExample};
use crate::error::Result;
use crate::metrics::{evaluate, MetricResult};
use crate::span::{DecodeConfig, ModelConfig};
use crate::tokenizer::Vocab;
use crate::train::{features_for, fit, predict_dataset, prediction_texts, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub f1: f64,
    pub em: f64,
    pub n: usize,
}

impl From<&MetricResult> for CellSummary {
    fn from(m: &MetricResult) -> Self {
        CellSummary {
            f1: m.f1,
            em: m.exact_match,
            n: m.n_examples,
        }
    }
}

/// Rows are models, columns datasets; a missing cell renders as absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    cells: BTreeMap<(String, String), CellSummary>,
    /// Cells that failed, with the reason.
    pub failures: Vec<(String, String, String)>,
}

pub const ABSENT: &str = "—";

impl EvalReport {
    /// Empty grid with the standard dataset columns followed by any extras.
    pub fn new(models: Vec<String>, extra_datasets: &[String]) -> Self {
        let mut datasets: Vec<String> = DATASETS.iter().map(|s| s.to_string()).collect();
        for d in extra_datasets {
            if !datasets.contains(d) {
                datasets.push(d.clone());
            }
        }
        EvalReport {
            models,
            datasets,
            ..EvalReport::default()
        }
    }

    pub fn set(&mut self, model: &str, dataset: &str, cell: CellSummary) {
        if !self.models.iter().any(|m| m == model) {
            self.models.push(model.to_string());
        }
        if !self.datasets.iter().any(|d| d == dataset) {
            self.datasets.push(dataset.to_string());
        }
        self.cells.insert((model.to_string(), dataset.to_string()), cell);
    }

    pub fn get(&self, model: &str, dataset: &str) -> Option<&CellSummary> {
        self.cells.get(&(model.to_string(), dataset.to_string()))
    }

    pub fn fail(&mut self, model: &str, dataset: &str, reason: String) {
        self.failures.push((model.to_string(), dataset.to_string(), reason));
    }

    /// Plain-text grid, F1 × 100 with one decimal.
    pub fn render(&self) -> String {
        let mut rows: Vec<Vec<String>> = vec![std::iter::once("Model".to_string())
            .chain(self.datasets.iter().cloned())
            .collect()];
        for m in &self.models {
            let mut row = vec![m.clone()];
            for d in &self.datasets {
                row.push(match self.get(m, d) {
                    Some(c) => format!("{:.1}", c.f1 * 100.0),
                    None => ABSENT.to_string(),
                });
            }
            rows.push(row);
        }
        let cols = rows[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                let pad = widths[c] - cell.chars().count();
                if c == 0 {
                    line.push_str(cell);
                    line.push_str(&" ".repeat(pad));
                } else {
                    line.push_str("  ");
                    line.push_str(&" ".repeat(pad));
                    line.push_str(cell);
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }

    /// `{model: {dataset: {f1, em, n}}}`, present cells only.
    pub fn to_json(&self) -> serde_json::Value {
        let mut root = serde_json::Map::new();
        for m in &self.models {
            let mut row = serde_json::Map::new();
            for d in &self.datasets {
                if let Some(c) = self.get(m, d) {
                    row.insert(d.clone(), serde_json::to_value(c).expect("plain struct"));
                }
            }
            root.insert(m.clone(), serde_json::Value::Object(row));
        }
        serde_json::Value::Object(root)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Everything one train-then-evaluate run needs besides the model config.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    /// Cap on the vocabulary built from training text.
    pub vocab_cap: usize,
}

/// Trains on `train`, predicts `eval`, and scores it.
pub fn train_and_evaluate(
    model: &ModelConfig,
    train: &[QaExample],
    eval: &[QaExample],
    vocab: &Vocab,
    s: &RunSettings,
) -> Result<MetricResult> {
    let mut model = model.clone();
    model.encoder.vocab_size = vocab.len();
    let feats = features_for(train, vocab, s.train.max_len, s.train.overlap)?;
    let (m, _) = fit(model, &feats, &s.train)?;
    let preds = predict_dataset(&m, eval, vocab, &s.decode, s.train.max_len, s.train.overlap)?;
    evaluate(&prediction_texts(&preds), eval)
}

pub fn corpus_vocab(examples: &[QaExample], cap: usize) -> Vocab {
    Vocab::build(
        examples
            .iter()
            .flat_map(|e| [e.question.as_str(), e.context.as_str()]),
        cap,
    )
}

/// One benchmark dataset: where to train and where to evaluate.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub name: String,
    pub train_path: String,
    pub eval_path: String,
}

/// Fills the grid; a failing cell is recorded and left absent.
pub fn benchmark(
    models: &[(String, ModelConfig)],
    datasets: &[DatasetSpec],
    s: &RunSettings,
) -> EvalReport {
    let extra: Vec<String> = datasets.iter().map(|d| d.name.clone()).collect();
    let mut report = EvalReport::new(models.iter().map(|m| m.0.clone()).collect(), &extra);
    for d in datasets {
        let loaded = load_examples(&d.train_path)
            .and_then(|t| Ok((t, load_examples(&d.eval_path)?)));
        let (train, eval) = match loaded {
            Ok(x) => x,
            Err(e) => {
                for (name, _) in models {
                    report.fail(name, &d.name, e.to_string());
                }
                continue;
            }
        };
        let vocab = corpus_vocab(&train, s.vocab_cap);
        for (name, cfg) in models {
            log::info!("bench {name} on {}", d.name);
            match train_and_evaluate(cfg, &train, &eval, &vocab, s) {
                Ok(r) => report.set(name, &d.name, CellSummary::from(&r)),
                Err(e) => report.fail(name, &d.name, e.to_string()),
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub baseline: f64,
    pub bilstm: f64,
}

impl Comparison {
    /// Signed F1 difference in percentage points.
    pub fn delta_pp(&self) -> f64 {
        (self.bilstm - self.baseline) * 100.0
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.delta_pp();
        // keep the sign on a zero delta
        let sign = if d < 0.0 { "-" } else { "+" };
        write!(
            f,
            "baseline={:.3} bilstm={:.3} delta={sign}{:.1} pp",
            self.baseline,
            self.bilstm,
            d.abs()
        )
    }
}

/// Trains both configs with the same seed and data and reports their F1.
pub fn compare(
    baseline: &ModelConfig,
    bilstm: &ModelConfig,
    train: &[QaExample],
    eval: &[QaExample],
    vocab: &Vocab,
    s: &RunSettings,
) -> Result<Comparison> {
    Ok(Comparison {
        baseline: train_and_evaluate(baseline, train, eval, vocab, s)?.f1,
        bilstm: train_and_evaluate(bilstm, train, eval, vocab, s)?.f1,
    })
}
