use std::ops::Range;

use crate::error::{Error, Result};

use super::basic::{basic_tokenize, lowercase_origins};
use super::vocab::{Vocab, CLS_ID, PAD_ID, SEP_ID};
use super::wordpiece::wordpiece_pieces;

pub const DEFAULT_MAX_LEN: usize = 512;
pub const DEFAULT_OVERLAP: usize = 128;

/// A context subword with its char span in the original context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextToken {
    pub id: u32,
    pub start: usize,
    pub end: usize,
}

/// One packed `[CLS] question [SEP] context-window [SEP] [PAD]*` sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub ids: Vec<u32>,
    /// 0 for `[CLS]`, question and first `[SEP]` (and padding); 1 for context and final `[SEP]`.
    pub segment_ids: Vec<u8>,
    /// 1 for real tokens, 0 for padding.
    pub pad_mask: Vec<u8>,
    /// Char span into the original context; `None` for specials, question tokens and padding.
    pub offsets: Vec<Option<(usize, usize)>>,
    /// Index of the first context token (in the full context token list) covered by this window.
    pub window_start: usize,
    /// Sequence positions holding context tokens.
    pub context: Range<usize>,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of unpadded positions; padding is always a suffix.
    pub fn real_len(&self) -> usize {
        self.pad_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn is_context(&self, pos: usize) -> bool {
        self.context.contains(&pos)
    }

    pub fn is_real(&self, pos: usize) -> bool {
        self.pad_mask.get(pos) == Some(&1)
    }

    /// Context tokens covered, as a range into the full context token list.
    pub fn window(&self) -> Range<usize> {
        self.window_start..self.window_start + self.context.len()
    }

    /// Copy without the padding suffix. Padded positions contribute exact zeros
    /// everywhere downstream, so running on the trimmed copy gives the same
    /// real-position values at a fraction of the cost.
    pub fn trimmed(&self) -> Encoding {
        let n = self.real_len();
        Encoding {
            ids: self.ids[..n].to_vec(),
            segment_ids: self.segment_ids[..n].to_vec(),
            pad_mask: self.pad_mask[..n].to_vec(),
            offsets: self.offsets[..n].to_vec(),
            window_start: self.window_start,
            context: self.context.clone(),
        }
    }

    /// Sequence position of global context token `tok`, if this window covers it.
    pub fn position_of(&self, tok: usize) -> Option<usize> {
        self.window()
            .contains(&tok)
            .then(|| self.context.start + tok - self.window_start)
    }
}

pub fn tokenize_ids(text: &str, vocab: &Vocab) -> Vec<u32> {
    basic_tokenize(text)
        .iter()
        .flat_map(|w| wordpiece_pieces(&w.text, vocab))
        .map(|p| p.id)
        .collect()
}

/// Subword tokens of `context` with char offsets that are non-overlapping and increasing.
pub fn tokenize_context(context: &str, vocab: &Vocab) -> Vec<ContextToken> {
    let chars: Vec<char> = context.chars().collect();
    let mut out = Vec::new();
    let mut prev_end = 0;
    for word in basic_tokenize(context) {
        let origins = lowercase_origins(&chars, &word);
        for p in wordpiece_pieces(&word.text, vocab) {
            let start = origins[p.start].max(prev_end);
            let end = (origins[p.end - 1] + 1).max(start);
            out.push(ContextToken {
                id: p.id,
                start,
                end,
            });
            prev_end = end;
        }
    }
    out
}

/// Window start indices over `n` context tokens so consecutive windows share `overlap` tokens.
pub fn window_starts(n: usize, capacity: usize, overlap: usize) -> Result<Vec<usize>> {
    if n <= capacity {
        return Ok(vec![0]);
    }
    if overlap >= capacity {
        return Err(Error::Tokenize(format!(
            "overlap {overlap} must be smaller than the window capacity {capacity}"
        )));
    }
    let step = capacity - overlap;
    let mut starts = Vec::new();
    let mut s = 0;
    loop {
        starts.push(s);
        if s + capacity >= n {
            break;
        }
        s += step;
    }
    Ok(starts)
}

/// Packs a question with every window of `context`.
pub fn encode_pair(
    question: &str,
    context: &str,
    vocab: &Vocab,
    max_len: usize,
    overlap: usize,
) -> Result<Vec<Encoding>> {
    let q = tokenize_ids(question, vocab);
    let ctx = tokenize_context(context, vocab);
    encode_tokens(&q, &ctx, max_len, overlap)
}

pub(crate) fn encode_tokens(
    q: &[u32],
    ctx: &[ContextToken],
    max_len: usize,
    overlap: usize,
) -> Result<Vec<Encoding>> {
    if max_len < q.len() + 4 {
        return Err(Error::Tokenize(format!(
            "question of {} tokens does not fit max_len {max_len}",
            q.len()
        )));
    }
    let capacity = max_len - q.len() - 3;
    let ctx_start = q.len() + 2;

    window_starts(ctx.len(), capacity, overlap)?
        .into_iter()
        .map(|ws| {
            let window = &ctx[ws..(ws + capacity).min(ctx.len())];
            let mut ids = Vec::with_capacity(max_len);
            let mut segment_ids = Vec::with_capacity(max_len);
            let mut offsets = Vec::with_capacity(max_len);

            ids.push(CLS_ID);
            ids.extend_from_slice(q);
            ids.push(SEP_ID);
            segment_ids.resize(ids.len(), 0);
            offsets.resize(ids.len(), None);

            for t in window {
                ids.push(t.id);
                segment_ids.push(1);
                offsets.push(Some((t.start, t.end)));
            }
            ids.push(SEP_ID);
            segment_ids.push(1);
            offsets.push(None);

            let real = ids.len();
            let mut pad_mask = vec![1u8; real];
            ids.resize(max_len, PAD_ID);
            segment_ids.resize(max_len, 0);
            offsets.resize(max_len, None);
            pad_mask.resize(max_len, 0);

            Ok(Encoding {
                ids,
                segment_ids,
                pad_mask,
                offsets,
                window_start: ws,
                context: ctx_start..ctx_start + window.len(),
            })
        })
        .collect()
}

/// Original-context substring covered by sequence positions `i..=j`.
pub fn decode_span(enc: &Encoding, i: usize, j: usize, context: &str) -> Result<String> {
    if i > j {
        return Err(Error::Decode(format!("span start {i} after end {j}")));
    }
    let span = |p: usize| {
        enc.offsets
            .get(p)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Decode(format!("position {p} is not a context token")))
    };
    let (start, _) = span(i)?;
    let (_, end) = span(j)?;
    Ok(context.chars().skip(start).take(end - start).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::vocab::SPECIALS;

    fn vocab(extra: &[&str]) -> Vocab {
        let mut t: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        t.extend(extra.iter().map(|s| s.to_string()));
        Vocab::from_tokens(t).unwrap()
    }

    #[test]
    fn paper_defaults() {
        assert_eq!(DEFAULT_MAX_LEN, 512);
        assert_eq!(DEFAULT_OVERLAP, 128);
    }

    #[test]
    fn window_stepping_rule() {
        assert_eq!(window_starts(10, 7, 3).unwrap(), vec![0, 4]);
        assert_eq!(window_starts(5, 7, 3).unwrap(), vec![0]);
        assert_eq!(window_starts(0, 7, 3).unwrap(), vec![0]);
        assert!(window_starts(10, 3, 3).is_err());
    }

    #[test]
    fn ten_token_context_gives_two_windows() {
        let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let v = vocab(&[&refs[..], &["q"]].concat());
        // max_len = 1 (question) + 3 specials + 7 context
        let encs = encode_pair("q", &words.join(" "), &v, 11, 3).unwrap();
        assert_eq!(
            encs.iter().map(|e| e.window_start).collect::<Vec<_>>(),
            vec![0, 4]
        );
        assert_eq!(encs[0].context.len(), 7);
        assert_eq!(encs[1].context.len(), 6);
    }

    #[test]
    fn short_context_single_padded_window() {
        let v = vocab(&["the", "cat", "sat", "who"]);
        let encs = encode_pair("who", "the cat sat", &v, 12, 4).unwrap();
        assert_eq!(encs.len(), 1);
        let e = &encs[0];
        assert_eq!(e.ids[..7], [CLS_ID, 8, SEP_ID, 5, 6, 7, SEP_ID]);
        assert_eq!(e.ids[7..], [PAD_ID; 5]);
        assert_eq!(e.segment_ids[..7], [0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(e.pad_mask, vec![1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0]);
        assert_eq!(e.offsets[3], Some((0, 3)));
        assert_eq!(e.offsets[0], None);
        assert_eq!(e.real_len(), 7);
        assert_eq!(e.context, 3..6);
    }

    #[test]
    fn question_too_long_is_an_error() {
        let v = vocab(&["a"]);
        assert!(encode_pair("a a a a a", "a", &v, 8, 2).is_err());
    }

    #[test]
    fn decode_single_and_wordpiece_spans() {
        let v = vocab(&["the", "cat", "play", "##ing", "q"]);
        let ctx = "The Playing cat";
        let e = &encode_pair("q", ctx, &v, 16, 2).unwrap()[0];
        // [CLS] q [SEP] the play ##ing cat [SEP]
        assert_eq!(decode_span(e, 3, 3, ctx).unwrap(), "The");
        assert_eq!(e.offsets[4], Some((4, 8)));
        assert_eq!(e.offsets[5], Some((8, 11)));
        assert_eq!(decode_span(e, 4, 5, ctx).unwrap(), "Playing");
        assert_eq!(decode_span(e, 4, 6, ctx).unwrap(), "Playing cat");
    }

    #[test]
    fn decode_rejects_non_context_positions() {
        let v = vocab(&["cat", "q"]);
        let e = &encode_pair("q", "cat", &v, 8, 2).unwrap()[0];
        assert!(decode_span(e, 0, 3, "cat").is_err());
        assert!(decode_span(e, 1, 3, "cat").is_err());
        assert!(decode_span(e, 3, 4, "cat").is_err());
        assert!(decode_span(e, 3, 2, "cat").is_err());
    }
}
