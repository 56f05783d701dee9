//! Completion backends: a remote chat endpoint, a deterministic extractive
//! stub, and a replay table of recorded completions.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::prompt::PromptTemplate;
use crate::error::{Error, Result};
use crate::text::{content_tokens, token_count};

pub const ENDPOINT_ENV: &str = "VIEWFLOW_LLM_ENDPOINT";
pub const MODEL_ENV: &str = "VIEWFLOW_LLM_MODEL";
pub const API_KEY_ENV: &str = "VIEWFLOW_LLM_API_KEY";

/// Structured inputs behind a prompt, for clients that do not read prose.
#[derive(Debug, Clone)]
pub enum CompletionTask {
    Article { title: String, body: String },
    UserProfile { titles: Vec<String> },
}

#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub template: PromptTemplate,
    pub prompt: String,
    pub task: CompletionTask,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientError {
    /// Worth retrying (timeouts, 5xx).
    Transient(String),
    Fatal(String),
}

impl std::fmt::Display for ClientError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClientError::Transient(m) => write!(f, "transient: {m}"),
            ClientError::Fatal(m) => f.write_str(m),
        }
    }
}

pub trait CompletionClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError>;

    fn name(&self) -> &'static str;
}

pub fn prompt_sha(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Extractive stand-in for an LLM.
///
/// Articles: bodies within budget are returned verbatim; longer bodies become
/// the title followed by the leading body text, cut at the last sentence end
/// that keeps at least 80% of the budget, else at the budget.
/// Profiles: the most frequent non-stopword title tokens.
#[derive(Debug, Clone)]
pub struct StubClient {
    pub summary_budget: usize,
    pub profile_terms: usize,
}

impl Default for StubClient {
    fn default() -> Self {
        Self {
            summary_budget: 260,
            profile_terms: 8,
        }
    }
}

impl StubClient {
    pub fn summarize(&self, title: &str, body: &str) -> String {
        let budget = self.summary_budget.max(1);
        if token_count(body) <= budget {
            return body.to_string();
        }
        let words: Vec<&str> = title
            .split_whitespace()
            .chain(body.split_whitespace())
            .take(budget)
            .collect();
        let title_len = token_count(title).min(words.len());
        let floor = (budget * 4).div_ceil(5);
        let cut = (title_len..words.len())
            .rev()
            .find(|&i| i + 1 >= floor && ends_sentence(words[i]))
            .map(|i| i + 1)
            .unwrap_or(words.len());
        let mut out = String::new();
        for (i, w) in words[..cut].iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(w);
            if i + 1 == title_len && title_len < cut && !ends_sentence(w) {
                out.push('.');
            }
        }
        out
    }

    pub fn profile(&self, titles: &[String]) -> String {
        let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
        let mut order = 0;
        for t in titles {
            for tok in content_tokens(t) {
                let e = counts.entry(tok).or_insert((0, order));
                e.0 += 1;
                order += 1;
            }
        }
        let mut ranked: Vec<(String, (usize, usize))> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
        let terms: Vec<String> = ranked
            .into_iter()
            .take(self.profile_terms)
            .map(|(t, _)| t)
            .collect();
        if terms.is_empty() {
            String::new()
        } else {
            format!("Reader interested in {}.", terms.join(", "))
        }
    }
}

fn ends_sentence(word: &str) -> bool {
    word.ends_with(['.', '!', '?'])
}

impl CompletionClient for StubClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        Ok(match &request.task {
            CompletionTask::Article { title, body } => self.summarize(title, body),
            CompletionTask::UserProfile { titles } => self.profile(titles),
        })
    }

    fn name(&self) -> &'static str {
        "stub"
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureLine {
    #[serde(default)]
    prompt_sha: Option<String>,
    #[serde(default)]
    prompt: Option<String>,
    completion: String,
}

/// Serves recorded completions keyed by the SHA-256 of the prompt.
#[derive(Debug, Clone, Default)]
pub struct ReplayClient {
    table: BTreeMap<String, String>,
}

impl ReplayClient {
    pub fn new(table: BTreeMap<String, String>) -> Self {
        Self { table }
    }

    /// Loads JSONL lines of `{prompt_sha | prompt, completion}`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = BTreeMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureLine = serde_json::from_str(&line).map_err(|e| Error::Record {
                line: i + 1,
                message: e.to_string(),
            })?;
            let key = match (rec.prompt_sha, rec.prompt) {
                (Some(sha), _) => sha,
                (None, Some(p)) => prompt_sha(&p),
                (None, None) => {
                    return Err(Error::Record {
                        line: i + 1,
                        message: "fixture needs prompt_sha or prompt".into(),
                    })
                }
            };
            table.insert(key, rec.completion);
        }
        Ok(Self { table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl CompletionClient for ReplayClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let sha = prompt_sha(&request.prompt);
        self.table
            .get(&sha)
            .cloned()
            .ok_or_else(|| ClientError::Fatal(format!("no recorded completion for prompt {sha}")))
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}

/// JSON-over-HTTP chat completion client configured from the environment.
pub struct RemoteClient {
    endpoint: String,
    model: String,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for RemoteClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClient")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl RemoteClient {
    /// Reads endpoint, model and credential from the environment. A missing
    /// endpoint or credential is a configuration error; nothing is sent.
    pub fn from_env() -> Result<Self> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        let api_key = var(API_KEY_ENV).ok_or_else(|| Error::Config(format!("{API_KEY_ENV} is not set")))?;
        let endpoint =
            var(ENDPOINT_ENV).ok_or_else(|| Error::Config(format!("{ENDPOINT_ENV} is not set")))?;
        let model = var(MODEL_ENV).unwrap_or_else(|| "gpt-3.5-turbo".to_string());
        Self::new(endpoint, model, api_key)
    }

    pub fn new(endpoint: String, model: String, api_key: String) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            endpoint,
            model,
            api_key,
            http,
        })
    }
}

/// Accepts `{text}` or the common `choices[0].message.content` shape.
fn extract_text(body: &serde_json::Value) -> Option<String> {
    if let Some(t) = body.get("text").and_then(|t| t.as_str()) {
        return Some(t.to_string());
    }
    body.pointer("/choices/0/message/content")
        .and_then(|t| t.as_str())
        .map(str::to_string)
}

impl CompletionClient for RemoteClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let payload = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let resp = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&payload)
            .send()
            .map_err(|e| ClientError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(ClientError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(ClientError::Fatal(format!("HTTP {status}")));
        }
        let body: serde_json::Value = resp
            .json()
            .map_err(|e| ClientError::Fatal(format!("bad response body: {e}")))?;
        extract_text(&body).ok_or_else(|| ClientError::Fatal("response has no text".into()))
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_body_is_returned_verbatim() {
        let stub = StubClient {
            summary_budget: 50,
            profile_terms: 4,
        };
        assert_eq!(stub.summarize("Title", "Short body. Two."), "Short body. Two.");
    }

    #[test]
    fn long_body_is_prefixed_and_bounded() {
        let stub = StubClient {
            summary_budget: 10,
            profile_terms: 4,
        };
        let body = "One two three four. Five six seven eight. Nine ten eleven twelve.";
        let s = stub.summarize("Head line", body);
        assert!(s.starts_with("Head line. One"), "{s}");
        assert!(token_count(&s) <= 10);
        assert_eq!(s, "Head line. One two three four. Five six seven eight.");
    }

    #[test]
    fn profile_ranks_by_frequency() {
        let stub = StubClient::default();
        let titles = vec!["rust compiler notes".to_string(); 3];
        let p = stub.profile(&titles);
        assert!(p.contains("rust") && p.contains("compiler"), "{p}");
    }

    #[test]
    fn response_shapes_are_understood() {
        assert_eq!(extract_text(&json!({"text": "hi"})).as_deref(), Some("hi"));
        assert_eq!(
            extract_text(&json!({"choices": [{"message": {"content": "yo"}}]})).as_deref(),
            Some("yo")
        );
        assert_eq!(extract_text(&json!({"x": 1})), None);
    }
}
