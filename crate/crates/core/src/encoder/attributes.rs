use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::Article;

pub const UNK: &str = "<unk>";

/// Token vocabulary for one attribute; index 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut v = Self {
            tokens: vec![UNK.to_string()],
            index: HashMap::new(),
        };
        for t in tokens {
            if t != UNK && !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Tokens in index order, excluding UNK.
    pub fn known(&self) -> &[String] {
        &self.tokens[1..]
    }
}

/// One attribute column: either categorical tokens or a numeric value
/// bucketized by ascending edges (`b0` below the first edge, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buckets: Option<Vec<f64>>,
}

impl AttributeSpec {
    pub fn categorical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            buckets: None,
        }
    }

    /// Token this attribute contributes for `article`, if any.
    pub fn token(&self, article: &Article) -> Option<String> {
        let raw = article.attributes.get(&self.name)?;
        match &self.buckets {
            None => Some(raw.clone()),
            Some(edges) => {
                let x: f64 = raw.trim().parse().ok()?;
                let b = edges.iter().take_while(|&&e| x >= e).count();
                Some(format!("b{b}"))
            }
        }
    }
}

/// Fixed attribute layout: which attributes are read and their vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSchema {
    pub specs: Vec<AttributeSpec>,
    pub vocabs: Vec<Vocab>,
}

impl AttributeSchema {
    /// Builds vocabularies from the tokens present in `articles`, sorted.
    pub fn fit<'a, I>(specs: Vec<AttributeSpec>, articles: I) -> Self
    where
        I: IntoIterator<Item = &'a Article>,
    {
        let mut seen: Vec<BTreeSet<String>> = vec![BTreeSet::new(); specs.len()];
        for a in articles {
            for (spec, set) in specs.iter().zip(seen.iter_mut()) {
                if let Some(t) = spec.token(a) {
                    set.insert(t);
                }
            }
        }
        let vocabs = seen.into_iter().map(Vocab::new).collect();
        Self { specs, vocabs }
    }

    pub fn from_parts(specs: Vec<AttributeSpec>, vocabs: Vec<Vocab>) -> Self {
        assert_eq!(specs.len(), vocabs.len());
        Self { specs, vocabs }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Vocabulary index per attribute (0 for missing or unseen tokens).
    pub fn encode(&self, article: &Article) -> Vec<usize> {
        self.specs
            .iter()
            .zip(&self.vocabs)
            .map(|(s, v)| s.token(article).map_or(0, |t| v.lookup(&t)))
            .collect()
    }

    /// Indices from a raw attribute map, for callers without an `Article`.
    pub fn encode_map(&self, attrs: &BTreeMap<String, String>) -> Vec<usize> {
        let probe = Article {
            id: String::new(),
            title: String::new(),
            body: String::new(),
            summary: None,
            attributes: attrs.clone(),
        };
        self.encode(&probe)
    }
}
