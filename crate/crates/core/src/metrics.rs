//! Token-overlap F1 and exact match.
//!
//! Exact match compares fully normalized strings (lowercase, no ASCII
//! punctuation, no articles, collapsed whitespace). F1 token bags are
//! lowercased and stripped of punctuation but keep articles, so
//! "cat sat down" against "the cat sat" counts TP=2, FP=1, FN=1.

use std::collections::{BTreeMap, HashMap};

use crate::data::QaExample;
use crate::error::{Error, Result};

/// Lowercase, drop ASCII punctuation and the articles a/an/the, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let stripped: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercase and drop ASCII punctuation, keeping every word.
pub fn f1_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .split_whitespace()
        .map(String::from)
        .collect()
}

fn bag(text: &str) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for w in f1_tokens(text) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

/// F1 over one gold, from multiset overlap of normalized tokens.
fn f1_single(pred: &str, gold: &str) -> f64 {
    let (p, g) = (bag(pred), bag(gold));
    let (np, ng): (usize, usize) = (p.values().sum(), g.values().sum());
    if np == 0 || ng == 0 {
        return if np == ng { 1.0 } else { 0.0 };
    }
    let tp: usize = p.iter().map(|(w, &c)| c.min(g.get(w).copied().unwrap_or(0))).sum();
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / np as f64;
    let recall = tp as f64 / ng as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Empty gold list means unanswerable and scores against the empty answer.
fn golds_or_empty<'a>(golds: &'a [&'a str]) -> Vec<&'a str> {
    if golds.is_empty() {
        vec![""]
    } else {
        golds.to_vec()
    }
}

/// Maximum F1 over the gold answers.
pub fn token_f1(prediction: &str, golds: &[&str]) -> f64 {
    golds_or_empty(golds)
        .into_iter()
        .map(|g| f1_single(prediction, g))
        .fold(0.0, f64::max)
}

pub fn exact_match(prediction: &str, golds: &[&str]) -> f64 {
    let p = normalize_answer(prediction);
    let hit = golds_or_empty(golds)
        .into_iter()
        .any(|g| normalize_answer(g) == p);
    if hit {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleScore {
    pub id: String,
    pub f1: f64,
    pub exact_match: f64,
    /// False when the example had no prediction.
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub f1: f64,
    pub exact_match: f64,
    pub n_examples: usize,
    pub per_example: Vec<ExampleScore>,
}

/// Mean F1/EM over `examples`. `predictions` maps id to answer text, empty
/// for a null answer; examples without a prediction score 0.
pub fn evaluate(predictions: &BTreeMap<String, String>, examples: &[QaExample]) -> Result<MetricResult> {
    let known: std::collections::HashSet<&str> = examples.iter().map(|e| e.id.as_str()).collect();
    if let Some(id) = predictions.keys().find(|id| !known.contains(id.as_str())) {
        return Err(Error::Example {
            id: id.clone(),
            msg: "prediction for an unknown example".into(),
        });
    }
    let per_example: Vec<ExampleScore> = examples
        .iter()
        .map(|ex| match predictions.get(&ex.id) {
            Some(text) => {
                let golds = ex.gold_texts();
                ExampleScore {
                    id: ex.id.clone(),
                    f1: token_f1(text, &golds),
                    exact_match: exact_match(text, &golds),
                    predicted: true,
                }
            }
            None => ExampleScore {
                id: ex.id.clone(),
                f1: 0.0,
                exact_match: 0.0,
                predicted: false,
            },
        })
        .collect();
    let n = per_example.len();
    let mean = |f: fn(&ExampleScore) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_example.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Ok(MetricResult {
        f1: mean(|s| s.f1),
        exact_match: mean(|s| s.exact_match),
        n_examples: n,
        per_example,
    })
}
