use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Article;
use crate::error::{Error, Result};

/// The four instruction templates: article summarization and user profiling,
/// for news (MIND) and technical-community (ATA) corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTemplate {
    ArticleSummaryMind,
    UserProfileMind,
    ArticleSummaryAta,
    UserProfileAta,
}

impl PromptTemplate {
    pub fn name(self) -> &'static str {
        match self {
            PromptTemplate::ArticleSummaryMind => "article_summary_mind",
            PromptTemplate::UserProfileMind => "user_profile_mind",
            PromptTemplate::ArticleSummaryAta => "article_summary_ata",
            PromptTemplate::UserProfileAta => "user_profile_ata",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            PromptTemplate::ArticleSummaryMind => {
                "This is an article about [category], please summarize it in a short sentence \
                 by piquing the reader's interest: [article_body]"
            }
            PromptTemplate::UserProfileMind => {
                "Please summarize the user's news browsing content. \
                 Here is the browsing history: [visited_articles]"
            }
            PromptTemplate::ArticleSummaryAta => {
                "Given an article, the title is [article_title] and the article content is \
                 [article_body], please generate a 200-word summarization according to the article."
            }
            PromptTemplate::UserProfileAta => {
                "Given the visited articles: [visited_articles], I am a [position] from \
                 [organization], and my skills are [skill]. Please write a summary of about \
                 150 words based on the visited articles."
            }
        }
    }

    pub fn is_article_template(self) -> bool {
        matches!(
            self,
            PromptTemplate::ArticleSummaryMind | PromptTemplate::ArticleSummaryAta
        )
    }

    /// Placeholder names in order of appearance.
    pub fn placeholders(self) -> Vec<&'static str> {
        let text = self.text();
        let mut out = Vec::new();
        let mut rest = text;
        while let Some(start) = rest.find('[') {
            let Some(len) = rest[start..].find(']') else { break };
            out.push(&rest[start + 1..start + len]);
            rest = &rest[start + len + 1..];
        }
        out
    }

    /// Substitutes every `[name]` placeholder; a missing value is an error
    /// naming the placeholder. Values are inserted verbatim and never rescanned.
    pub fn render(self, values: &BTreeMap<&str, String>) -> Result<String> {
        let text = self.text();
        let mut out = String::with_capacity(text.len() + 256);
        let mut rest = text;
        while let Some(start) = rest.find('[') {
            let Some(len) = rest[start..].find(']') else { break };
            let name = &rest[start + 1..start + len];
            let value = values
                .get(name)
                .ok_or_else(|| Error::MissingPlaceholder(name.to_string()))?;
            out.push_str(&rest[..start]);
            out.push_str(value);
            rest = &rest[start + len + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            PromptTemplate::ArticleSummaryMind,
            PromptTemplate::UserProfileMind,
            PromptTemplate::ArticleSummaryAta,
            PromptTemplate::UserProfileAta,
        ]
        .into_iter()
        .find(|t| t.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown prompt template `{s}`")))
    }
}

/// Renders the article-summary prompt for `article`.
pub fn render_article_prompt(article: &Article, template: PromptTemplate) -> Result<String> {
    let mut values = BTreeMap::new();
    values.insert("article_title", article.title.clone());
    values.insert("article_body", article.body.clone());
    if let Some(c) = article.category() {
        values.insert("category", c.to_string());
    }
    template.render(&values)
}

/// Newline-joined titles, optionally followed by `: summary`.
pub fn visited_articles(history: &[&Article], with_summaries: bool) -> String {
    history
        .iter()
        .map(|a| match (&a.summary, with_summaries) {
            (Some(s), true) => format!("{}: {}", a.title, s),
            _ => a.title.clone(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Renders the user-profile prompt. `user_attrs` supplies position,
/// organization and skill for templates that need them.
pub fn render_user_profile_prompt(
    history: &[&Article],
    user_attrs: &BTreeMap<String, String>,
    template: PromptTemplate,
    with_summaries: bool,
) -> Result<String> {
    if history.is_empty() {
        return Err(Error::Invalid(
            "user profile prompt needs a non-empty history".into(),
        ));
    }
    let mut values: BTreeMap<&str, String> = BTreeMap::new();
    values.insert("visited_articles", visited_articles(history, with_summaries));
    for (k, v) in user_attrs {
        values.insert(k.as_str(), v.clone());
    }
    template.render(&values)
}
