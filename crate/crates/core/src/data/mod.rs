//! Dataset ingestion, feature construction, synthetic data and pre-training examples.

mod features;
mod pretrain;
mod squad;
mod synthetic;
mod triplets;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use features::{build_features, TrainFeature};
pub use pretrain::{mlm_mask, nsp_pairs, MaskRatios, NspPair};
pub use squad::{load_squad_json, parse_squad};
pub use synthetic::{make_synthetic, synthetic_vocab, SyntheticSpec};
pub use triplets::{
    load_triplets, load_triplets_permissive, parse_triplets, write_triplets, LineError,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    /// Offset in chars (not bytes) into the context.
    pub char_start: usize,
}

impl Answer {
    /// Char span `[start, end)`.
    pub fn char_span(&self) -> (usize, usize) {
        (self.char_start, self.char_start + self.text.chars().count())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answers: Vec<Answer>,
    pub unanswerable: bool,
}

impl QaExample {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Error::Example {
            id: self.id.clone(),
            msg,
        };
        if self.unanswerable && !self.answers.is_empty() {
            return Err(err("unanswerable example carries answers".into()));
        }
        if !self.unanswerable && self.answers.is_empty() {
            return Err(err("answerable example has no answers".into()));
        }
        let n = self.context.chars().count();
        for a in &self.answers {
            let (s, e) = a.char_span();
            if a.text.is_empty() || e > n {
                return Err(err(format!("answer {:?} at {s} is outside the context", a.text)));
            }
            let found: String = self.context.chars().skip(s).take(e - s).collect();
            if found != a.text {
                return Err(err(format!(
                    "answer {:?} does not match context text {found:?} at char {s}",
                    a.text
                )));
            }
        }
        Ok(())
    }

    pub fn gold_texts(&self) -> Vec<&str> {
        self.answers.iter().map(|a| a.text.as_str()).collect()
    }
}

/// Errors on repeated ids.
pub(crate) fn check_unique_ids(examples: &[QaExample]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for ex in examples {
        if !seen.insert(ex.id.as_str()) {
            return Err(Error::Example {
                id: ex.id.clone(),
                msg: "duplicate id".into(),
            });
        }
    }
    Ok(())
}

/// SQuAD JSON for `.json` paths, line-delimited triplets otherwise.
pub fn load_examples(path: impl AsRef<std::path::Path>) -> Result<Vec<QaExample>> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "json") {
        load_squad_json(path)
    } else {
        load_triplets(path)
    }
}
