//! Tokenization shared by the hashed embedder and the stub summarizer.

const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have", "he",
    "her", "his", "i", "in", "is", "it", "its", "of", "on", "or", "our", "she", "that", "the", "their",
    "them", "they", "this", "to", "was", "we", "were", "what", "when", "which", "who", "will", "with", "you",
    "your",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Lowercased alphanumeric runs with stopwords removed.
pub fn content_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    tokenize(text).filter(|t| !is_stopword(t))
}

/// Whitespace token count, the unit for summary budgets.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopword_list_is_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn tokenize_lowercases_and_splits_punctuation() {
        let t: Vec<String> = tokenize("Rust's compiler, v2!").collect();
        assert_eq!(t, vec!["rust", "s", "compiler", "v2"]);
    }

    #[test]
    fn content_tokens_drop_stopwords() {
        let t: Vec<String> = content_tokens("The state of the art").collect();
        assert_eq!(t, vec!["state", "art"]);
    }
}
