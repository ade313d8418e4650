use crate::error::Result;
use crate::tokenizer::{encode_tokens, tokenize_context, tokenize_ids, ContextToken, Encoding, Vocab};

use super::QaExample;

/// One window of an example with its span labels. Label 0 is the `[CLS]` position.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainFeature {
    pub example_id: String,
    pub window: usize,
    pub encoding: Encoding,
    pub start_pos: usize,
    pub end_pos: usize,
}

impl TrainFeature {
    pub fn is_null(&self) -> bool {
        self.start_pos == 0 && self.end_pos == 0
    }
}

/// Context tokens `[first, last]` touched by the char span `[s, e)`.
fn token_span(tokens: &[ContextToken], s: usize, e: usize) -> Option<(usize, usize)> {
    let first = tokens.iter().position(|t| t.end > s)?;
    let last = tokens.iter().rposition(|t| t.start < e)?;
    (first <= last).then_some((first, last))
}

/// Windows of `example` labelled with its first gold answer.
pub fn build_features(
    example: &QaExample,
    vocab: &Vocab,
    max_len: usize,
    overlap: usize,
) -> Result<Vec<TrainFeature>> {
    let q = tokenize_ids(&example.question, vocab);
    let ctx = tokenize_context(&example.context, vocab);
    let encodings = encode_tokens(&q, &ctx, max_len, overlap)?;

    let gold = match (example.unanswerable, example.answers.first()) {
        (false, Some(a)) => {
            let (s, e) = a.char_span();
            token_span(&ctx, s, e)
        }
        _ => None,
    };

    Ok(encodings
        .into_iter()
        .enumerate()
        .map(|(window, encoding)| {
            let (start_pos, end_pos) = gold
                .and_then(|(a, b)| Some((encoding.position_of(a)?, encoding.position_of(b)?)))
                .unwrap_or((0, 0));
            TrainFeature {
                example_id: example.id.clone(),
                window,
                encoding,
                start_pos,
                end_pos,
            }
        })
        .collect())
}
