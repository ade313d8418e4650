use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

use super::{check_unique_ids, Answer, QaExample};

#[derive(Deserialize)]
struct File {
    data: Vec<Article>,
}

#[derive(Deserialize)]
struct Article {
    paragraphs: Vec<Paragraph>,
}

#[derive(Deserialize)]
struct Paragraph {
    context: String,
    qas: Vec<Qa>,
}

#[derive(Deserialize)]
struct Qa {
    id: String,
    question: String,
    #[serde(default)]
    answers: Vec<SquadAnswer>,
    #[serde(default)]
    is_impossible: bool,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

pub fn parse_squad(text: &str) -> Result<Vec<QaExample>> {
    let file: File = serde_json::from_str(text)?;
    let mut out = Vec::new();
    for article in file.data {
        for para in article.paragraphs {
            for qa in para.qas {
                let answers = if qa.is_impossible {
                    Vec::new()
                } else {
                    qa.answers
                        .into_iter()
                        .map(|a| Answer {
                            text: a.text,
                            char_start: a.answer_start,
                        })
                        .collect()
                };
                let ex = QaExample {
                    id: qa.id,
                    context: para.context.clone(),
                    question: qa.question,
                    answers,
                    unanswerable: qa.is_impossible,
                };
                ex.validate()?;
                out.push(ex);
            }
        }
    }
    check_unique_ids(&out)?;
    Ok(out)
}

pub fn load_squad_json(path: impl AsRef<Path>) -> Result<Vec<QaExample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_squad(&text)
}
