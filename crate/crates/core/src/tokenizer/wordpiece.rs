use super::vocab::{Vocab, CONTINUATION, UNK, UNK_ID};

/// Words longer than this many chars become `[UNK]` outright.
pub const MAX_WORD_CHARS: usize = 100;

/// A vocabulary piece covering chars `[start, end)` of the lowercased word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Piece {
    pub id: u32,
    pub start: usize,
    pub end: usize,
}

/// Greedy longest-match-first segmentation. Falls back to a single `[UNK]`
/// covering the whole word when any remainder has no matching piece.
pub(crate) fn wordpiece_pieces(word: &str, vocab: &Vocab) -> Vec<Piece> {
    let chars: Vec<char> = word.chars().collect();
    let unk = vec![Piece {
        id: UNK_ID,
        start: 0,
        end: chars.len(),
    }];
    if chars.len() > MAX_WORD_CHARS {
        return unk;
    }

    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while end > start {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.extend(&chars[start..end]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some(id);
                break;
            }
            end -= 1;
        }
        match found {
            Some(id) => pieces.push(Piece { id, start, end }),
            None => return unk,
        }
        start = end;
    }
    pieces
}

pub fn wordpiece_tokenize(word: &str, vocab: &Vocab) -> Vec<String> {
    wordpiece_pieces(word, vocab)
        .into_iter()
        .map(|p| vocab.token(p.id).unwrap_or(UNK).to_owned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(extra: &[&str]) -> Vocab {
        let mut t: Vec<String> = super::super::vocab::SPECIALS
            .iter()
            .map(|s| s.to_string())
            .collect();
        t.extend(extra.iter().map(|s| s.to_string()));
        Vocab::from_tokens(t).unwrap()
    }

    #[test]
    fn greedy_longest_match() {
        let v = vocab(&["play", "##ing"]);
        assert_eq!(wordpiece_tokenize("playing", &v), vec!["play", "##ing"]);
    }

    #[test]
    fn prefers_longest_prefix() {
        let v = vocab(&["p", "pl", "play", "##i", "##in", "##ing", "##s"]);
        assert_eq!(wordpiece_tokenize("playings", &v), vec!["play", "##ing", "##s"]);
    }

    #[test]
    fn verbatim_word() {
        let v = vocab(&["cat", "ca", "##t"]);
        assert_eq!(wordpiece_tokenize("cat", &v), vec!["cat"]);
    }

    #[test]
    fn no_decomposition_is_unk() {
        let v = vocab(&["play", "##ing"]);
        assert_eq!(wordpiece_tokenize("zzz", &v), vec!["[UNK]"]);
        // partial match still fails as a whole
        assert_eq!(wordpiece_tokenize("playzz", &v), vec!["[UNK]"]);
    }

    #[test]
    fn overlong_word_is_unk() {
        let v = vocab(&["a", "##a"]);
        let long = "a".repeat(MAX_WORD_CHARS + 1);
        assert_eq!(wordpiece_tokenize(&long, &v), vec!["[UNK]"]);
    }

    #[test]
    fn piece_spans_tile_the_word() {
        let v = vocab(&["play", "##ing"]);
        let p = wordpiece_pieces("playing", &v);
        assert_eq!((p[0].start, p[0].end, p[1].start, p[1].end), (0, 4, 4, 7));
    }
}
