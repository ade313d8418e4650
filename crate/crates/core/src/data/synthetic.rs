//! Marker task: the context hides one answer between each pair of marker
//! tokens, and the single-token question names the pair to extract.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tokenizer::{Vocab, SPECIALS};

use super::{Answer, QaExample};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub vocab_size: usize,
    /// Context length in words, markers included.
    pub context_len: usize,
    pub examples: usize,
    pub seed: u64,
    /// Marker pairs per context (at most 26).
    pub pairs: usize,
    pub max_answer_len: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            vocab_size: 64,
            context_len: 24,
            examples: 64,
            seed: 7,
            pairs: 2,
            max_answer_len: 3,
        }
    }
}

fn letter(k: usize) -> char {
    (b'a' + k as u8) as char
}

impl SyntheticSpec {
    fn fillers(&self) -> usize {
        self.vocab_size.saturating_sub(SPECIALS.len() + 3 * self.pairs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic: {m}")));
        if self.pairs == 0 || self.pairs > 26 {
            return bad(format!("pairs must be in 1..=26, got {}", self.pairs));
        }
        if self.max_answer_len == 0 {
            return bad("max_answer_len must be at least 1".into());
        }
        let needed = self.pairs * (2 + self.max_answer_len);
        if self.context_len < needed {
            return bad(format!(
                "context of {} words is too short for {} marker pairs with answers up to {}",
                self.context_len, self.pairs, self.max_answer_len
            ));
        }
        if self.fillers() < self.context_len - 2 * self.pairs {
            return bad(format!(
                "vocab {} leaves {} filler words, need {}",
                self.vocab_size,
                self.fillers(),
                self.context_len - 2 * self.pairs
            ));
        }
        Ok(())
    }

    fn start_marker(k: usize) -> String {
        format!("s{}", letter(k))
    }

    fn end_marker(k: usize) -> String {
        format!("e{}", letter(k))
    }

    fn query(k: usize) -> String {
        format!("q{}", letter(k))
    }
}

/// Exactly `vocab_size` tokens: specials, markers, queries, then fillers `w0..`.
pub fn synthetic_vocab(spec: &SyntheticSpec) -> Result<Vocab> {
    spec.validate()?;
    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    for k in 0..spec.pairs {
        tokens.push(SyntheticSpec::start_marker(k));
        tokens.push(SyntheticSpec::end_marker(k));
    }
    tokens.extend((0..spec.pairs).map(SyntheticSpec::query));
    tokens.extend((0..spec.fillers()).map(|i| format!("w{i}")));
    Vocab::from_tokens(tokens)
}

fn one_example(spec: &SyntheticSpec, rng: &mut ChaCha8Rng, id: String) -> QaExample {
    let lens: Vec<usize> = (0..spec.pairs)
        .map(|_| rng.random_range(1..=spec.max_answer_len))
        .collect();
    let content = spec.context_len - 2 * spec.pairs;

    // distinct words so each answer occurs once in its context
    let mut pool: Vec<usize> = (0..spec.fillers()).collect();
    pool.shuffle(rng);
    let mut words = pool[..content].iter().map(|i| format!("w{i}"));

    let mut units: Vec<Vec<String>> = Vec::new();
    for (k, &len) in lens.iter().enumerate() {
        let mut block = vec![SyntheticSpec::start_marker(k)];
        block.extend(words.by_ref().take(len));
        block.push(SyntheticSpec::end_marker(k));
        units.push(block);
    }
    units.extend(words.map(|w| vec![w]));
    units.shuffle(rng);

    let asked = rng.random_range(0..spec.pairs);
    let flat: Vec<String> = units.concat();
    let open = SyntheticSpec::start_marker(asked);
    let at = flat.iter().position(|w| *w == open).unwrap() + 1;
    let answer_words = &flat[at..at + lens[asked]];
    let char_start: usize = flat[..at].iter().map(|w| w.len() + 1).sum();

    QaExample {
        id,
        context: flat.join(" "),
        question: SyntheticSpec::query(asked),
        answers: vec![Answer {
            text: answer_words.join(" "),
            char_start,
        }],
        unanswerable: false,
    }
}

/// Deterministic `(train, dev)` split, 80/20 rounded down for train.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<(Vec<QaExample>, Vec<QaExample>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut all: Vec<QaExample> = (0..spec.examples)
        .map(|i| one_example(spec, &mut rng, format!("synth-{}-{i:04}", spec.seed)))
        .collect();
    let dev = all.split_off(spec.examples * 4 / 5);
    Ok((all, dev))
}
