//! Frozen text embedders. Nothing here is ever touched by training.

use std::collections::HashMap;
use std::fs::File;
use std::hash::Hasher;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::text::content_tokens;

/// A text to embed plus the stable key a precomputed table would use,
/// e.g. `A00012#title` or `profile#<key>`.
#[derive(Debug, Clone, Copy)]
pub struct EmbedItem<'a> {
    pub key: &'a str,
    pub text: &'a str,
}

pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, item: EmbedItem<'_>) -> Result<Vec<f64>>;
}

/// Feature hashing of lowercased, stopword-filtered tokens with FNV-1a (64-bit),
/// bucket `hash % dim`, counts L2-normalized. Empty text maps to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedEmbedder {
    dim: usize,
}

impl HashedEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(Self { dim })
    }

    pub fn bucket(&self, token: &str) -> usize {
        let mut h = FnvHasher::default();
        h.write(token.as_bytes());
        (h.finish() % self.dim as u64) as usize
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in content_tokens(text) {
            v[self.bucket(&tok)] += 1.0;
        }
        let n = crate::linalg::norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    }
}

impl TextEmbedder for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, item: EmbedItem<'_>) -> Result<Vec<f64>> {
        Ok(self.embed_text(item.text))
    }
}

/// Vectors produced offline by any sentence encoder, looked up by key.
///
/// File layout (little-endian): `count u64 | dim u32`, then per record
/// `id_len u32 | id bytes | f32 × dim`.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedEmbeddings {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl PrecomputedEmbeddings {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            table: HashMap::new(),
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Dimension {
                context: "precomputed embedding",
                expected: self.dim,
                actual: v.len(),
            });
        }
        self.table.insert(key.into(), v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut keys: Vec<&String> = self.table.keys().collect();
        keys.sort();
        let err = |e: std::io::Error| Error::Format(format!("write failed: {e}"));
        w.write_all(&(keys.len() as u64).to_le_bytes()).map_err(err)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(err)?;
        for k in keys {
            w.write_all(&(k.len() as u32).to_le_bytes()).map_err(err)?;
            w.write_all(k.as_bytes()).map_err(err)?;
            for &x in &self.table[k] {
                w.write_all(&(x as f32).to_le_bytes()).map_err(err)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut take = |n: usize| -> Result<Vec<u8>> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf)
                .map_err(|e| Error::Format(format!("truncated embedding file: {e}")))?;
            Ok(buf)
        };
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut out = Self::new(dim);
        for _ in 0..count {
            let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let id = String::from_utf8(take(len)?)
                .map_err(|e| Error::Format(format!("embedding id is not utf-8: {e}")))?;
            let v = take(4 * dim)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            out.table.insert(id, v);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}

impl TextEmbedder for PrecomputedEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, item: EmbedItem<'_>) -> Result<Vec<f64>> {
        self.table
            .get(item.key)
            .cloned()
            .ok_or_else(|| Error::MissingEmbedding(item.key.to_string()))
    }
}
