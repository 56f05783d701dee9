//! LLM-backed text condensation: article body summaries and constant-interest
//! user profiles, behind a pluggable completion client and a persistent cache.

pub mod cache;
pub mod client;
pub mod prompt;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use sha2::{Digest, Sha256};

pub use cache::{cache_key, SummaryCache};
pub use client::{
    prompt_sha, ClientError, CompletionClient, CompletionRequest, CompletionTask, RemoteClient, ReplayClient,
    StubClient,
};
pub use prompt::{render_article_prompt, render_user_profile_prompt, PromptTemplate};

use crate::data::Article;
use crate::error::{Error, Result};

pub struct Summarizer {
    client: Arc<dyn CompletionClient>,
    cache: SummaryCache,
    retries: usize,
    max_in_flight: usize,
    invocations: AtomicUsize,
    /// Include summaries next to titles in the visited-articles list.
    pub profile_with_summaries: bool,
}

impl Summarizer {
    pub fn new(client: Arc<dyn CompletionClient>, cache: SummaryCache) -> Self {
        Self {
            client,
            cache,
            retries: 3,
            max_in_flight: 4,
            invocations: AtomicUsize::new(0),
            profile_with_summaries: false,
        }
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    /// Client calls made so far (cache hits excluded).
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::SeqCst)
    }

    pub fn client_name(&self) -> &'static str {
        self.client.name()
    }

    fn run(&self, request: CompletionRequest, subject: &str) -> Result<String> {
        let key = cache_key(request.template, &request.prompt);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let mut attempt = 0;
        let text = loop {
            self.invocations.fetch_add(1, Ordering::SeqCst);
            match self.client.complete(&request) {
                Ok(t) => break t,
                Err(ClientError::Transient(m)) if attempt < self.retries => {
                    attempt += 1;
                    tracing::warn!(subject, attempt, "retrying completion: {m}");
                    std::thread::sleep(std::time::Duration::from_millis(200 << attempt.min(5)));
                }
                Err(e) => {
                    return Err(Error::Completion {
                        subject: subject.to_string(),
                        message: e.to_string(),
                    })
                }
            }
        };
        if text.trim().is_empty() {
            return Err(Error::Completion {
                subject: subject.to_string(),
                message: "empty completion".into(),
            });
        }
        self.cache.insert(&key, &request.prompt, &text)?;
        Ok(text)
    }

    /// Condenses the article body.
    pub fn summarize_article(&self, article: &Article, template: PromptTemplate) -> Result<String> {
        if article.body.trim().is_empty() {
            return Err(Error::Invalid(format!(
                "article `{}` has an empty body",
                article.id
            )));
        }
        let prompt = render_article_prompt(article, template)?;
        self.run(
            CompletionRequest {
                template,
                prompt,
                task: CompletionTask::Article {
                    title: article.title.clone(),
                    body: article.body.clone(),
                },
            },
            &format!("article {}", article.id),
        )
    }

    /// Writes the user's constant-interest profile from their click history.
    pub fn summarize_user(
        &self,
        user: &str,
        history: &[&Article],
        user_attrs: &BTreeMap<String, String>,
        template: PromptTemplate,
    ) -> Result<String> {
        let prompt = render_user_profile_prompt(history, user_attrs, template, self.profile_with_summaries)?;
        self.run(
            CompletionRequest {
                template,
                prompt,
                task: CompletionTask::UserProfile {
                    titles: history.iter().map(|a| a.title.clone()).collect(),
                },
            },
            &format!("user {user}"),
        )
    }

    /// Summarizes many articles with at most `max_in_flight` concurrent client
    /// calls. Output order matches input order.
    pub fn summarize_many(&self, articles: &[&Article], template: PromptTemplate) -> Vec<Result<String>> {
        let next = AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<Result<String>>>> =
            articles.iter().map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..self.max_in_flight.min(articles.len().max(1)) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= articles.len() {
                        break;
                    }
                    let r = self.summarize_article(articles[i], template);
                    *slots[i].lock().expect("slot") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot").expect("every slot filled"))
            .collect()
    }
}

/// Profiles are keyed by user and the exact history they summarize.
pub fn profile_key(user: &str, history: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(user.as_bytes());
    for id in history {
        h.update([0u8]);
        h.update(id.as_bytes());
    }
    hex::encode(&h.finalize()[..16])
}

/// Profile text when LLM profiling is disabled: the raw titles, concatenated.
pub fn raw_profile_text(history: &[&Article]) -> String {
    history
        .iter()
        .map(|a| a.title.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Counting(AtomicUsize, &'static str);

    impl CompletionClient for Counting {
        fn complete(&self, _: &CompletionRequest) -> Result<String, ClientError> {
            let n = self.0.fetch_add(1, Ordering::SeqCst);
            if n == 0 && self.1 == "flaky" {
                return Err(ClientError::Transient("503".into()));
            }
            Ok(self.1.to_string())
        }
        fn name(&self) -> &'static str {
            "counting"
        }
    }

    fn article(id: &str, title: &str, body: &str) -> Article {
        Article {
            id: id.into(),
            title: title.into(),
            body: body.into(),
            summary: None,
            attributes: Default::default(),
        }
    }

    #[test]
    fn second_call_is_cached() {
        let s = Summarizer::new(Arc::new(StubClient::default()), SummaryCache::in_memory());
        let a = article("a", "T", "Some body text.");
        let first = s
            .summarize_article(&a, PromptTemplate::ArticleSummaryAta)
            .unwrap();
        let second = s
            .summarize_article(&a, PromptTemplate::ArticleSummaryAta)
            .unwrap();
        assert_eq!(first, second);
        assert_eq!(s.invocations(), 1);
    }

    #[test]
    fn empty_completion_is_an_error() {
        let s = Summarizer::new(
            Arc::new(Counting(AtomicUsize::new(0), "  ")),
            SummaryCache::in_memory(),
        );
        let err = s
            .summarize_article(&article("x9", "T", "b"), PromptTemplate::ArticleSummaryAta)
            .unwrap_err();
        assert!(err.to_string().contains("x9"), "{err}");
    }

    #[test]
    fn transient_failures_are_retried() {
        let s = Summarizer::new(
            Arc::new(Counting(AtomicUsize::new(0), "flaky")),
            SummaryCache::in_memory(),
        )
        .with_retries(2);
        let out = s
            .summarize_article(&article("a", "T", "b"), PromptTemplate::ArticleSummaryAta)
            .unwrap();
        assert_eq!(out, "flaky");
        assert_eq!(s.invocations(), 2);
    }

    #[test]
    fn empty_body_is_rejected() {
        let s = Summarizer::new(Arc::new(StubClient::default()), SummaryCache::in_memory());
        assert!(s
            .summarize_article(&article("a", "T", " "), PromptTemplate::ArticleSummaryAta)
            .is_err());
    }

    #[test]
    fn summarize_many_keeps_order() {
        let s =
            Summarizer::new(Arc::new(StubClient::default()), SummaryCache::in_memory()).with_max_in_flight(3);
        let arts: Vec<Article> = (0..10)
            .map(|i| article(&format!("a{i}"), "T", &format!("body number {i}.")))
            .collect();
        let refs: Vec<&Article> = arts.iter().collect();
        let out = s.summarize_many(&refs, PromptTemplate::ArticleSummaryAta);
        for (i, r) in out.into_iter().enumerate() {
            assert_eq!(r.unwrap(), format!("body number {i}."));
        }
    }

    #[test]
    fn profile_key_tracks_history() {
        let a = profile_key("u", &["x".into(), "y".into()]);
        assert_eq!(a, profile_key("u", &["x".into(), "y".into()]));
        assert_ne!(a, profile_key("u", &["x".into()]));
        assert_ne!(a, profile_key("v", &["x".into(), "y".into()]));
    }
}
