//! Canonical JSONL interchange: one `{"kind": ...}` object per line.
//!
//! ```text
//! {"kind":"article","id":"a1","title":"t","body":"b","attributes":{"position":"engineer"}}
//! {"kind":"impression","id":"i1","user":"u1","timestamp":0,"history":[],"candidates":[["a1",1]]}
//! {"kind":"user","id":"u1","attributes":{"position":"engineer"}}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::types::{Article, Corpus, Dataset, Impression, Parsed, RecordError, UserInfo};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Record {
    Article(Article),
    Impression(Impression),
    User(UserInfo),
}

/// Everything read from a JSONL stream, with record-level errors.
#[derive(Debug, Default)]
pub struct JsonlContents {
    pub articles: Vec<Article>,
    pub impressions: Vec<Impression>,
    pub users: Vec<UserInfo>,
    pub errors: Vec<RecordError>,
    pub lines: usize,
}

fn validate(record: &Record) -> std::result::Result<(), String> {
    match record {
        Record::Article(a) => {
            if a.id.is_empty() {
                return Err("article id is empty".into());
            }
            if a.title.trim().is_empty() {
                return Err(format!("article `{}` has an empty title", a.id));
            }
        }
        Record::Impression(i) => {
            if let Some((id, y)) = i.candidates.iter().find(|(_, y)| *y > 1) {
                return Err(format!("candidate `{id}` has label {y}, expected 0 or 1"));
            }
        }
        Record::User(u) => {
            if u.id.is_empty() {
                return Err("user id is empty".into());
            }
        }
    }
    Ok(())
}

pub fn parse_jsonl<R: BufRead>(reader: R) -> JsonlContents {
    let mut out = JsonlContents::default();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                out.errors.push(RecordError {
                    line: line_no,
                    message: format!("read error: {e}"),
                });
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        out.lines += 1;
        let record = serde_json::from_str::<Record>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| validate(&r).map(|_| r));
        match record {
            Ok(Record::Article(a)) => {
                if seen.insert(a.id.clone()) {
                    out.articles.push(a);
                } else {
                    out.errors.push(RecordError {
                        line: line_no,
                        message: format!("duplicate article id `{}`", a.id),
                    });
                }
            }
            Ok(Record::Impression(imp)) => out.impressions.push(imp),
            Ok(Record::User(u)) => out.users.push(u),
            Err(message) => out.errors.push(RecordError {
                line: line_no,
                message,
            }),
        }
    }
    out
}

/// `(articles, impressions)` view used where user records are not needed.
pub fn parse_ata_jsonl<R: BufRead>(reader: R) -> (Parsed<Article>, Parsed<Impression>) {
    let contents = parse_jsonl(reader);
    let errors = contents.errors;
    (
        Parsed {
            records: contents.articles,
            errors: errors.clone(),
            lines: contents.lines,
        },
        Parsed {
            records: contents.impressions,
            errors,
            lines: contents.lines,
        },
    )
}

pub fn write_record<W: Write>(out: &mut W, record: &Record) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
        .map_err(|e| Error::Format(format!("write failed: {e}")))
}

/// Writes articles, then users, then impressions, each in stored order.
pub fn write_dataset<W: Write>(out: &mut W, dataset: &Dataset) -> Result<()> {
    for a in dataset.corpus.articles() {
        write_record(out, &Record::Article(a.clone()))?;
    }
    for u in dataset.users.values() {
        write_record(out, &Record::User(u.clone()))?;
    }
    for imp in &dataset.impressions {
        write_record(out, &Record::Impression(imp.clone()))?;
    }
    Ok(())
}

/// Reads a JSONL dataset, failing on the first record error.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let contents = parse_jsonl(reader);
    if let Some(e) = contents.errors.into_iter().next() {
        return Err(e.into());
    }
    let corpus = Corpus::new(contents.articles)?;
    corpus.check_impressions(&contents.impressions)?;
    Ok(Dataset {
        corpus,
        impressions: contents.impressions,
        users: contents.users.into_iter().map(|u| (u.id.clone(), u)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn article_record() {
        let line =
            r#"{"kind":"article","id":"a1","title":"t","body":"b","attributes":{"position":"engineer"}}"#;
        let (articles, impressions) = parse_ata_jsonl(line.as_bytes());
        assert!(articles.is_clean());
        assert_eq!(articles.records.len(), 1);
        assert!(impressions.records.is_empty());
        assert_eq!(articles.records[0].attributes["position"], "engineer");
    }

    #[test]
    fn impression_record() {
        let line = r#"{"kind":"impression","id":"i1","user":"u1","timestamp":0,"history":[],"candidates":[["a1",1]]}"#;
        let (_, impressions) = parse_ata_jsonl(line.as_bytes());
        assert!(impressions.is_clean());
        assert_eq!(impressions.records[0].candidates, vec![("a1".to_string(), 1)]);
    }

    #[test]
    fn unknown_kind_is_record_error() {
        let input = "{\"kind\":\"x\"}\n{\"kind\":\"user\",\"id\":\"u\"}\n";
        let contents = parse_jsonl(input.as_bytes());
        assert_eq!(contents.errors.len(), 1);
        assert_eq!(contents.errors[0].line, 1);
        assert_eq!(contents.users.len(), 1);
    }

    #[test]
    fn label_two_is_rejected() {
        let line = r#"{"kind":"impression","id":"i1","user":"u1","timestamp":0,"history":[],"candidates":[["a1",2]]}"#;
        assert_eq!(parse_jsonl(line.as_bytes()).errors.len(), 1);
    }

    #[test]
    fn unresolved_history_fails_dataset_read() {
        let input = concat!(
            r#"{"kind":"article","id":"a1","title":"t","body":"b"}"#,
            "\n",
            r#"{"kind":"impression","id":"i1","user":"u1","timestamp":0,"history":["zz"],"candidates":[["a1",1]]}"#,
        );
        assert!(matches!(
            read_dataset(input.as_bytes()),
            Err(Error::UnknownArticle(id)) if id == "zz"
        ));
    }
}
