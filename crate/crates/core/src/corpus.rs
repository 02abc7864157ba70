//! SQuAD 2.0 ingestion and answer-string normalization.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Identifier of a paragraph: its position in ingestion order.
pub type ParagraphId = u32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub id: ParagraphId,
    pub text: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionExample {
    pub qid: String,
    pub question: String,
    pub answerable: bool,
    pub gold_answers: Vec<String>,
    pub source_paragraph: ParagraphId,
}

/// Parsed corpus: paragraphs in ingestion order plus every question.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub paragraphs: Vec<Paragraph>,
    pub questions: Vec<QuestionExample>,
}

/// Counts written to the optional corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub paragraphs: usize,
    pub questions: usize,
    pub answerable: usize,
    pub unanswerable: usize,
}

impl Corpus {
    pub fn manifest(&self) -> CorpusManifest {
        let answerable = self.questions.iter().filter(|q| q.answerable).count();
        CorpusManifest {
            paragraphs: self.paragraphs.len(),
            questions: self.questions.len(),
            answerable,
            unanswerable: self.questions.len() - answerable,
        }
    }

    pub fn paragraph(&self, id: ParagraphId) -> Option<&Paragraph> {
        self.paragraphs.get(id as usize)
    }
}

fn schema(path: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

fn field<'a>(obj: &'a Value, key: &str, path: &str) -> Result<&'a Value, CorpusError> {
    let map = obj
        .as_object()
        .ok_or_else(|| schema(path, "expected an object"))?;
    map.get(key)
        .ok_or_else(|| schema(&format!("{path}.{key}"), "missing required field"))
}

fn array<'a>(obj: &'a Value, key: &str, path: &str) -> Result<&'a Vec<Value>, CorpusError> {
    field(obj, key, path)?
        .as_array()
        .ok_or_else(|| schema(&format!("{path}.{key}"), "expected an array"))
}

fn string<'a>(obj: &'a Value, key: &str, path: &str) -> Result<&'a str, CorpusError> {
    field(obj, key, path)?
        .as_str()
        .ok_or_else(|| schema(&format!("{path}.{key}"), "expected a string"))
}

/// Parses a SQuAD 2.0 JSON document into paragraphs and questions.
///
/// Gold answers are deduplicated by normalized form (first raw spelling wins)
/// and whitespace-only answers are dropped. A question left with no usable
/// gold answer is treated as unanswerable.
pub fn parse_squad(raw: &[u8]) -> Result<Corpus, CorpusError> {
    let root: Value = serde_json::from_slice(raw).map_err(|e| CorpusError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut corpus = Corpus::default();
    for (ai, article) in array(&root, "data", "$")?.iter().enumerate() {
        let apath = format!("$.data[{ai}]");
        let title = match article.get("title") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(schema(&format!("{apath}.title"), "expected a string")),
            None => String::new(),
        };
        for (pi, para) in array(article, "paragraphs", &apath)?.iter().enumerate() {
            let ppath = format!("{apath}.paragraphs[{pi}]");
            let context = string(para, "context", &ppath)?;
            if context.trim().is_empty() {
                return Err(schema(&format!("{ppath}.context"), "empty paragraph text"));
            }
            let id = corpus.paragraphs.len() as ParagraphId;
            corpus.paragraphs.push(Paragraph {
                id,
                text: context.to_string(),
                title: title.clone(),
            });

            for (qi, qa) in array(para, "qas", &ppath)?.iter().enumerate() {
                let qpath = format!("{ppath}.qas[{qi}]");
                let qid = string(qa, "id", &qpath)?.to_string();
                let question = string(qa, "question", &qpath)?.to_string();
                let impossible = field(qa, "is_impossible", &qpath)?
                    .as_bool()
                    .ok_or_else(|| schema(&format!("{qpath}.is_impossible"), "expected a bool"))?;

                let mut gold_answers = Vec::new();
                let mut seen = HashSet::new();
                if !impossible {
                    for (xi, ans) in array(qa, "answers", &qpath)?.iter().enumerate() {
                        let text = string(ans, "text", &format!("{qpath}.answers[{xi}]"))?;
                        if text.trim().is_empty() {
                            continue;
                        }
                        if seen.insert(normalize_text(text)) {
                            gold_answers.push(text.to_string());
                        }
                    }
                }
                corpus.questions.push(QuestionExample {
                    qid,
                    question,
                    answerable: !gold_answers.is_empty(),
                    gold_answers,
                    source_paragraph: id,
                });
            }
        }
    }
    Ok(corpus)
}

/// SQuAD-style answer normalization: lowercase, drop ASCII punctuation,
/// drop the articles "a", "an", "the", collapse whitespace.
pub fn normalize_text(s: &str) -> String {
    let lowered: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lowered
        .split_whitespace()
        .filter(|tok| !matches!(*tok, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalized exact match against any gold answer. False for an empty gold set.
pub fn em_match<S: AsRef<str>>(prediction: &str, golds: &[S]) -> bool {
    let pred = normalize_text(prediction);
    golds.iter().any(|g| normalize_text(g.as_ref()) == pred)
}

/// True when `text` contains some gold answer as a substring, comparing
/// normalized forms. Golds that normalize to nothing never match.
pub fn contains_answer<S: AsRef<str>>(text: &str, golds: &[S]) -> bool {
    let golds: Vec<String> = golds
        .iter()
        .map(|g| normalize_text(g.as_ref()))
        .filter(|g| !g.is_empty())
        .collect();
    if golds.is_empty() {
        return false;
    }
    let hay = normalize_text(text);
    golds.iter().any(|g| hay.contains(g.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SMALL: &str = r#"{
      "version": "v2.0",
      "data": [{
        "title": "Paris",
        "paragraphs": [
          {"context": "Paris is the capital of France.",
           "qas": [
             {"id": "q1", "question": "What is the capital of France?", "is_impossible": false,
              "answers": [{"text": "Paris", "answer_start": 0}, {"text": "paris", "answer_start": 0}, {"text": "  ", "answer_start": 0}]},
             {"id": "q2", "question": "What is the capital of Mars?", "is_impossible": true,
              "answers": [], "plausible_answers": [{"text": "Paris", "answer_start": 0}]}
           ]},
          {"context": "The Eiffel Tower is in Paris.",
           "qas": [
             {"id": "q3", "question": "Where is the Eiffel Tower?", "is_impossible": false,
              "answers": [{"text": "Paris", "answer_start": 23}]}
           ]}
        ]
      }]
    }"#;

    #[test]
    fn parses_counts_and_fields() {
        let c = parse_squad(SMALL.as_bytes()).unwrap();
        assert_eq!(c.paragraphs.len(), 2);
        assert_eq!(c.questions.len(), 3);
        assert_eq!(c.paragraphs[1].id, 1);
        assert_eq!(c.paragraphs[1].title, "Paris");
        assert_eq!(c.questions[0].gold_answers, vec!["Paris".to_string()]);
        assert!(!c.questions[1].answerable);
        assert!(c.questions[1].gold_answers.is_empty());
        assert_eq!(c.questions[2].source_paragraph, 1);
        let m = c.manifest();
        assert_eq!((m.answerable, m.unanswerable), (2, 1));
    }

    #[test]
    fn whitespace_only_answers_make_question_unanswerable() {
        let raw = r#"{"data":[{"title":"t","paragraphs":[{"context":"x","qas":[
            {"id":"a","question":"?","is_impossible":false,"answers":[{"text":"   "}]}]}]}]}"#;
        let c = parse_squad(raw.as_bytes()).unwrap();
        assert!(!c.questions[0].answerable);
    }

    #[test]
    fn missing_field_names_path() {
        let raw = r#"{"data":[{"title":"t","paragraphs":[{"context":"x","qas":[{"id":"a","is_impossible":true}]}]}]}"#;
        match parse_squad(raw.as_bytes()) {
            Err(CorpusError::Schema { path, .. }) => {
                assert_eq!(path, "$.data[0].paragraphs[0].qas[0].question")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        match parse_squad(b"{\"data\": [\n  {,}]}") {
            Err(CorpusError::Json { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_text("The Eiffel Tower!"), "eiffel tower");
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("An  apple,  a day."), "apple day");
    }

    #[test]
    fn em_examples() {
        assert!(em_match("eiffel tower", &["The Eiffel Tower"]));
        assert!(!em_match::<&str>("anything", &[]));
        assert!(!em_match("the answer is 42", &["42"]));
    }

    #[test]
    fn contains_answer_ignores_empty_golds() {
        assert!(!contains_answer("anything at all", &["The"]));
        assert!(contains_answer("Built in 1889, the tower...", &["1889"]));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn em_is_symmetric(p in "[a-zA-Z .,!']{0,20}", g in "[a-zA-Z .,!']{0,20}") {
            prop_assert_eq!(em_match(&p, &[g.as_str()]), em_match(&g, &[p.as_str()]));
        }
    }
}
