//! Tokenization shared by the goal retriever, the knowledge base and the
//! operational question translator.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

const STOPWORDS: &[&str] = &[
    "a", "about", "am", "an", "and", "any", "are", "as", "at", "be", "by", "can", "could", "did",
    "do", "does", "for", "from", "had", "has", "have", "how", "i", "in", "into", "is", "it",
    "its", "me", "my", "of", "on", "or", "our", "please", "s", "should", "so", "that", "the",
    "their", "them", "then", "there", "these", "this", "those", "to", "was", "we", "what",
    "when", "where", "which", "who", "why", "will", "with", "would", "you", "your",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Lowercased alphanumeric runs, in order, stopwords included.
pub fn raw_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Lowercased, punctuation-stripped tokens with stopwords removed.
pub fn content_tokens(text: &str) -> Vec<String> {
    raw_tokens(text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    content_tokens(text).into_iter().collect()
}

/// Share of the query's distinct content tokens that also occur in the
/// target. Zero when the query has no content tokens.
pub fn overlap_score(query: &BTreeSet<String>, target: &BTreeSet<String>) -> f64 {
    if query.is_empty() {
        return 0.0;
    }
    let shared = query.iter().filter(|t| target.contains(*t)).count();
    shared as f64 / query.len() as f64
}

/// Lowercase, map non-alphanumerics to `-`, collapse runs, trim dashes and
/// truncate to 64 characters.
pub fn slugify(text: &str) -> String {
    let mut slug = String::new();
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            slug.push(ch.to_ascii_lowercase());
        } else if !slug.ends_with('-') && !slug.is_empty() {
            slug.push('-');
        }
    }
    let mut slug: String = slug.chars().take(64).collect();
    while slug.ends_with('-') {
        slug.pop();
    }
    slug
}

pub fn is_valid_slug(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

/// Words for keyword matching: lowercased, apostrophes kept inside words,
/// everything else treated as a separator.
pub fn phrase_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ((ch == '\'' || ch == '\u{2019}') && !cur.is_empty()) {
            if ch == '\u{2019}' {
                cur.push('\'');
            } else {
                cur.extend(ch.to_lowercase());
            }
        } else if !cur.is_empty() {
            out.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    for w in out.iter_mut() {
        while w.ends_with('\'') {
            w.pop();
        }
    }
    out
}

/// Strip one trailing sentence terminator.
pub fn trim_terminator(text: &str) -> &str {
    text.trim()
        .trim_end_matches(['.', '!', '?', ';', ':'])
        .trim_end()
}

pub fn capitalize_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
