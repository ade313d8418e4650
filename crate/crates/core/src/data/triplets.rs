use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{check_unique_ids, QaExample};

/// A line that failed to parse or validate in permissive loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub msg: String,
}

fn parse_line(line: &str) -> std::result::Result<QaExample, String> {
    let ex: QaExample = serde_json::from_str(line).map_err(|e| e.to_string())?;
    ex.validate().map_err(|e| e.to_string())?;
    Ok(ex)
}

/// Parses every non-blank line, collecting failures instead of stopping.
pub fn parse_triplets(text: &str) -> (Vec<QaExample>, Vec<LineError>) {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(ex) => ok.push(ex),
            Err(msg) => bad.push(LineError { line: k + 1, msg }),
        }
    }
    (ok, bad)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Strict loading: the first bad line is an error.
pub fn load_triplets(path: impl AsRef<Path>) -> Result<Vec<QaExample>> {
    let path = path.as_ref();
    let (ok, bad) = parse_triplets(&read(path)?);
    if let Some(b) = bad.into_iter().next() {
        return Err(Error::Line {
            path: PathBuf::from(path),
            line: b.line,
            msg: b.msg,
        });
    }
    check_unique_ids(&ok)?;
    Ok(ok)
}

pub fn load_triplets_permissive(
    path: impl AsRef<Path>,
) -> Result<(Vec<QaExample>, Vec<LineError>)> {
    Ok(parse_triplets(&read(path.as_ref())?))
}

pub fn write_triplets(path: impl AsRef<Path>, examples: &[QaExample]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for ex in examples {
        serde_json::to_writer(&mut buf, ex)?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"id":"a","context":"the cat sat","question":"who","answers":[{"text":"cat","char_start":4}],"unanswerable":false}"#;

    #[test]
    fn three_valid_lines() {
        let text = [GOOD, &GOOD.replace("\"a\"", "\"b\""), &GOOD.replace("\"a\"", "\"c\"")].join("\n");
        let (ok, bad) = parse_triplets(&text);
        assert_eq!(ok.len(), 3);
        assert!(bad.is_empty());
    }

    #[test]
    fn missing_context_is_reported_by_line() {
        let broken = r#"{"id":"z","question":"who","answers":[],"unanswerable":true}"#;
        let (ok, bad) = parse_triplets(&format!("{GOOD}\n{broken}\n"));
        assert_eq!(ok.len(), 1);
        assert_eq!(bad[0].line, 2);
        assert!(bad[0].msg.contains("context"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, format!("{GOOD}\n{broken}\n")).unwrap();
        match load_triplets(&path) {
            Err(Error::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_and_round_trip() {
        assert!(parse_triplets("").0.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let (ok, _) = parse_triplets(GOOD);
        write_triplets(&path, &ok).unwrap();
        assert_eq!(load_triplets(&path).unwrap(), ok);
        assert_eq!(std::fs::read_to_string(&path).unwrap().trim_end(), GOOD);
    }
}
