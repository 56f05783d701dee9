//! MIND `news.tsv` / `behaviors.tsv` readers.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use chrono::NaiveDateTime;

use super::types::{Article, Impression, Parsed, RecordError};

const MIND_TIME_FORMAT: &str = "%m/%d/%Y %I:%M:%S %p";

fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader.lines().enumerate().map(|(i, l)| (i + 1, l))
}

/// Parses `news.tsv`: id, category, subcategory, title, abstract, url, entities...
///
/// The abstract becomes the article body; url and entity columns are ignored.
pub fn parse_mind_news<R: BufRead>(reader: R) -> Parsed<Article> {
    let mut out = Parsed::default();
    let mut seen = HashSet::new();
    for (line_no, line) in lines(reader) {
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
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 5 {
            out.errors.push(RecordError {
                line: line_no,
                message: format!("expected at least 5 tab-separated fields, found {}", fields.len()),
            });
            continue;
        }
        let id = fields[0].trim();
        let title = fields[3].trim();
        if id.is_empty() || title.is_empty() {
            out.errors.push(RecordError {
                line: line_no,
                message: "empty article id or title".into(),
            });
            continue;
        }
        if !seen.insert(id.to_string()) {
            out.errors.push(RecordError {
                line: line_no,
                message: format!("duplicate article id `{id}`"),
            });
            continue;
        }
        let mut attributes = BTreeMap::new();
        for (name, value) in [("category", fields[1]), ("subcategory", fields[2])] {
            let value = value.trim();
            if !value.is_empty() {
                attributes.insert(name.to_string(), value.to_string());
            }
        }
        out.records.push(Article {
            id: id.to_string(),
            title: title.to_string(),
            body: fields[4].trim().to_string(),
            summary: None,
            attributes,
        });
    }
    out
}

/// Parses a MIND timestamp such as `11/11/2019 9:05:58 AM` into epoch seconds.
/// Plain integers are accepted too.
pub fn parse_mind_time(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    NaiveDateTime::parse_from_str(s, MIND_TIME_FORMAT)
        .ok()
        .map(|t| t.and_utc().timestamp())
}

fn parse_candidate(token: &str) -> Result<(String, u8), String> {
    let (id, label) = token
        .rsplit_once('-')
        .ok_or_else(|| format!("candidate `{token}` lacks a -0/-1 label suffix"))?;
    let label = match label {
        "0" => 0,
        "1" => 1,
        other => {
            return Err(format!(
                "candidate `{token}` has label `{other}`, expected 0 or 1"
            ))
        }
    };
    if id.is_empty() {
        return Err(format!("candidate `{token}` has an empty id"));
    }
    Ok((id.to_string(), label))
}

/// Parses `behaviors.tsv`: impression id, user id, time, history, candidates.
pub fn parse_mind_behaviors<R: BufRead>(reader: R) -> Parsed<Impression> {
    let mut out = Parsed::default();
    for (line_no, line) in lines(reader) {
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
        match parse_behavior_line(&line) {
            Ok(imp) => out.records.push(imp),
            Err(message) => out.errors.push(RecordError {
                line: line_no,
                message,
            }),
        }
    }
    out
}

fn parse_behavior_line(line: &str) -> Result<Impression, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 5 {
        return Err(format!("expected 5 tab-separated fields, found {}", fields.len()));
    }
    let timestamp = parse_mind_time(fields[2]).ok_or_else(|| format!("unparseable time `{}`", fields[2]))?;
    let history = fields[3].split_whitespace().map(str::to_string).collect();
    let candidates = fields[4]
        .split_whitespace()
        .map(parse_candidate)
        .collect::<Result<Vec<_>, _>>()?;
    if candidates.is_empty() {
        return Err("impression has no candidates".into());
    }
    Ok(Impression {
        id: fields[0].trim().to_string(),
        user: fields[1].trim().to_string(),
        timestamp,
        history,
        candidates,
    })
}
