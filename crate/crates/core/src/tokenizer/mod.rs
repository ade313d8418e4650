//! Lowercasing basic tokenizer, WordPiece, and question/context packing.

mod basic;
mod encode;
mod vocab;
mod wordpiece;

pub use basic::{basic_tokenize, Word};
pub use encode::{
    decode_span, encode_pair, tokenize_context, tokenize_ids, window_starts, ContextToken,
    Encoding, DEFAULT_MAX_LEN, DEFAULT_OVERLAP,
};
pub(crate) use encode::encode_tokens;
pub use vocab::{
    Vocab, CLS, CLS_ID, CONTINUATION, MASK, MASK_ID, PAD, PAD_ID, SEP, SEP_ID, SPECIALS, UNK,
    UNK_ID,
};
pub use wordpiece::{wordpiece_tokenize, MAX_WORD_CHARS};
