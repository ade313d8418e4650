use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::basic::basic_tokenize;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;

pub const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

pub const CONTINUATION: &str = "##";

/// Token ↔ id table with the five reserved specials at ids 0–4.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, special) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(Error::Vocab(format!(
                    "missing special {special} at line {i}"
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Vocab(format!("invalid token {tok:?} at line {i}")));
            }
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate token {tok:?} at line {i}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// One token per line; the zero-based line number is the id.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocab::from_tokens(text.lines().map(str::to_owned).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Frequency-ranked vocabulary for a corpus: specials, then whole words,
    /// then single-character pieces (initial and `##` forms), capped at `max_size`.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>, max_size: usize) -> Self {
        let mut words: BTreeMap<String, usize> = BTreeMap::new();
        for text in corpus {
            for w in basic_tokenize(text) {
                *words.entry(w.text).or_default() += 1;
            }
        }
        let mut pieces: BTreeMap<String, usize> = BTreeMap::new();
        for (w, &n) in &words {
            for (k, c) in w.chars().enumerate() {
                let piece = if k == 0 {
                    c.to_string()
                } else {
                    format!("{CONTINUATION}{c}")
                };
                *pieces.entry(piece).or_default() += n;
            }
        }

        let by_freq = |m: BTreeMap<String, usize>| {
            let mut v: Vec<(String, usize)> = m.into_iter().collect();
            // stable sort keeps lexical order among equal counts
            v.sort_by_key(|e| std::cmp::Reverse(e.1));
            v.into_iter().map(|(t, _)| t)
        };

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        for tok in by_freq(words).chain(by_freq(pieces)) {
            if tokens.len() >= max_size.max(SPECIALS.len()) {
                break;
            }
            if seen.insert(tok.clone()) {
                tokens.push(tok);
            }
        }
        Vocab::from_tokens(tokens).expect("built vocab is valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIALS.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        let mut text = lines.join("\n");
        if !lines.is_empty() {
            text.push('\n');
        }
        fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn loads_seven_line_vocab() {
        let f = write(&["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "play", "##ing"]);
        let v = Vocab::load(f.path()).unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(v.id("##ing"), Some(6));
        assert_eq!(v.token(2), Some("[CLS]"));
    }

    #[test]
    fn duplicate_token_is_an_error() {
        let f = write(&["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "play", "play"]);
        let err = Vocab::load(f.path()).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn empty_file_misses_specials() {
        let f = write(&[]);
        let err = Vocab::load(f.path()).unwrap_err().to_string();
        assert!(err.contains("missing special"), "{err}");
    }

    #[test]
    fn specials_out_of_order_are_rejected() {
        let f = write(&["[UNK]", "[PAD]", "[CLS]", "[SEP]", "[MASK]"]);
        assert!(Vocab::load(f.path()).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let v = Vocab::build(["the cat sat on the mat"], 100);
        let f = tempfile::NamedTempFile::new().unwrap();
        v.save(f.path()).unwrap();
        assert_eq!(Vocab::load(f.path()).unwrap(), v);
    }

    #[test]
    fn build_ranks_words_before_pieces_and_respects_cap() {
        let v = Vocab::build(["the cat the dog the cat"], 8);
        assert_eq!(v.len(), 8);
        assert_eq!(&v.tokens()[5..], &["the", "cat", "dog"]);

        let big = Vocab::build(["abc"], 100);
        assert!(big.id("abc").is_some());
        assert!(big.id("a").is_some());
        assert!(big.id("##c").is_some());
    }
}
