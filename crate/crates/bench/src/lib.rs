//! Shared inputs for the criterion benches.

use spanqa_core::encoder::EncoderConfig;
use spanqa_core::tokenizer::{encode_pair, SPECIALS};
use spanqa_core::{Encoding, ModelConfig, Vocab};

const WORDS: [&str; 12] = [
    "the", "river", "carries", "water", "from", "mountains", "to", "sea", "over", "many", "long",
    "years",
];

/// `n` words of filler prose, with a few words the vocab only knows as pieces.
pub fn sample_text(n: usize) -> String {
    (0..n)
        .map(|i| match i % 7 {
            3 => "unflowing",
            5 => "riverbanks",
            _ => WORDS[i % WORDS.len()],
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn sample_vocab() -> Vocab {
    let mut t: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    t.extend(WORDS.iter().map(|w| w.to_string()));
    t.extend(["un", "##flow", "##ing", "##bank", "##s"].map(String::from));
    Vocab::from_tokens(t).expect("bench vocab is well formed")
}

/// Desk-scale model: L=2, H=64, A=2, F=128.
pub fn desk_model(vocab: usize, use_bilstm: bool) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            layers: 2,
            hidden: 64,
            heads: 2,
            ff: 128,
            vocab_size: vocab,
            max_positions: 128,
            ..EncoderConfig::default()
        },
        use_bilstm,
        ..ModelConfig::default()
    }
}

/// One encoding of `context_words` words padded to `max_len`.
pub fn sample_encoding(vocab: &Vocab, context_words: usize, max_len: usize) -> Encoding {
    let ctx = sample_text(context_words);
    encode_pair("where does the river go", &ctx, vocab, max_len, 0)
        .expect("sample fits")
        .remove(0)
}
