//! Dataset ingestion: MIND TSV logs, the canonical JSONL format, and
//! seeded synthetic corpora.

pub mod jsonl;
pub mod mind;
pub mod split;
pub mod synthetic;
mod types;

pub use jsonl::{parse_ata_jsonl, parse_jsonl, read_dataset, write_dataset, Record};
pub use mind::{parse_mind_behaviors, parse_mind_news};
pub use split::{split_by_time, split_indices_by_time, subsample_users};
pub use synthetic::{generate_synthetic, ClickRule, PlantedTruth, Synthetic, SyntheticSpec};
pub use types::{Article, Corpus, Dataset, DatasetStats, Impression, Parsed, RecordError, UserInfo};

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};

/// Reads MIND `news.tsv` + `behaviors.tsv`, keeping well-formed records.
///
/// Returns the dataset plus every record-level error encountered. Impressions
/// that reference unknown articles are dropped and reported.
pub fn load_mind(news: &Path, behaviors: &Path) -> Result<(Dataset, Vec<RecordError>)> {
    let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| Error::io(p, e));
    let news = parse_mind_news(open(news)?);
    let behaviors = parse_mind_behaviors(open(behaviors)?);
    let mut errors = news.errors;
    errors.extend(behaviors.errors);
    assemble(news.records, behaviors.records, Vec::new(), errors)
}

/// Reads a JSONL dataset tolerantly: malformed records and impressions with
/// unknown article references are skipped and reported.
pub fn load_jsonl_tolerant(path: &Path) -> Result<(Dataset, Vec<RecordError>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let c = parse_jsonl(BufReader::new(file));
    assemble(c.articles, c.impressions, c.users, c.errors)
}

fn assemble(
    articles: Vec<Article>,
    raw: Vec<Impression>,
    users: Vec<UserInfo>,
    mut errors: Vec<RecordError>,
) -> Result<(Dataset, Vec<RecordError>)> {
    let corpus = Corpus::new(articles)?;
    let mut impressions = Vec::with_capacity(raw.len());
    for (i, imp) in raw.into_iter().enumerate() {
        match corpus.check_impressions(std::slice::from_ref(&imp)) {
            Ok(()) => impressions.push(imp),
            Err(e) => errors.push(RecordError {
                line: i + 1,
                message: format!("impression {}: {e}", imp.id),
            }),
        }
    }
    Ok((
        Dataset {
            corpus,
            impressions,
            users: users.into_iter().map(|u| (u.id.clone(), u)).collect(),
        },
        errors,
    ))
}

/// Reads a canonical JSONL dataset from disk.
pub fn load_jsonl(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file))
}

pub fn save_jsonl(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_dataset(&mut w, dataset)?;
    use std::io::Write;
    w.flush().map_err(|e| Error::io(path, e))
}
