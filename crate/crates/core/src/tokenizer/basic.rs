/// A lowercased word with its character span `[start, end)` in the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Word {
    pub fn new(text: &str, start: usize, end: usize) -> Self {
        Word {
            text: text.to_owned(),
            start,
            end,
        }
    }
}

pub(crate) fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || !(c.is_alphanumeric() || c.is_whitespace() || c.is_control())
}

/// Lowercases, splits on whitespace and isolates punctuation characters.
/// Offsets count `char`s of the original text.
pub fn basic_tokenize(text: &str) -> Vec<Word> {
    let mut words = Vec::new();
    let mut current = String::new();
    let mut start = 0;

    let flush = |current: &mut String, start: usize, end: usize, words: &mut Vec<Word>| {
        if !current.is_empty() {
            words.push(Word {
                text: std::mem::take(current),
                start,
                end,
            });
        }
    };

    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() || c.is_control() {
            flush(&mut current, start, i, &mut words);
        } else if is_punctuation(c) {
            flush(&mut current, start, i, &mut words);
            words.push(Word {
                text: c.to_lowercase().collect(),
                start: i,
                end: i + 1,
            });
        } else {
            if current.is_empty() {
                start = i;
            }
            current.extend(c.to_lowercase());
        }
    }
    let n = text.chars().count();
    flush(&mut current, start, n, &mut words);
    words
}

/// For each char of the lowercased `word`, the original char index it came from.
pub(crate) fn lowercase_origins(original: &[char], word: &Word) -> Vec<usize> {
    let mut origins = Vec::with_capacity(word.end - word.start);
    for (i, c) in original[word.start..word.end].iter().enumerate() {
        for _ in c.to_lowercase() {
            origins.push(word.start + i);
        }
    }
    origins
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_with_original_offsets() {
        assert_eq!(
            basic_tokenize("The cat."),
            vec![
                Word::new("the", 0, 3),
                Word::new("cat", 4, 7),
                Word::new(".", 7, 8)
            ]
        );
    }

    #[test]
    fn empty_text() {
        assert!(basic_tokenize("").is_empty());
        assert!(basic_tokenize("  \t\n ").is_empty());
    }

    #[test]
    fn lowercases_without_stripping_accents() {
        assert_eq!(basic_tokenize("héllo"), vec![Word::new("héllo", 0, 5)]);
        assert_eq!(basic_tokenize("HÉLLO"), vec![Word::new("héllo", 0, 5)]);
    }

    #[test]
    fn expanding_lowercase_keeps_original_span() {
        // 'İ' lowercases to two chars
        let text = "xİy";
        let words = basic_tokenize(text);
        assert_eq!(words.len(), 1);
        assert_eq!((words[0].start, words[0].end), (0, 3));
        let chars: Vec<char> = text.chars().collect();
        assert_eq!(lowercase_origins(&chars, &words[0]), vec![0, 1, 1, 2]);
    }
}
