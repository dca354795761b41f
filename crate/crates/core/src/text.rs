//! Tokenization helpers shared by the feature extractors.
//!
//! Tokens are produced by whitespace splitting followed by splitting off
//! punctuation characters as their own tokens. Equality comparisons between
//! tokens use lowercase folding because ASR transcripts carry no reliable
//! casing.

/// Splits text into word and punctuation tokens, preserving case.
///
/// Apostrophes and hyphens inside a word stay attached ("don't", "ice-cream").
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let inner_joiner = (c == '\'' || c == '-')
                && i > 0
                && i + 1 < chars.len()
                && chars[i - 1].is_alphanumeric()
                && chars[i + 1].is_alphanumeric();
            if c.is_alphanumeric() || inner_joiner {
                current.push(c);
            } else {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

/// Lowercased tokens, the unit of comparison for alignment and WER.
pub fn folded_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.to_lowercase()).collect()
}

/// Number of whitespace-delimited words.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn is_punct(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| !c.is_alphanumeric())
}

/// Collapses whitespace runs and lowercases.
pub fn fold(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Splits text into sentences at `.`, `!` and `?` boundaries.
///
/// Each returned sentence is trimmed and keeps its terminal punctuation;
/// a trailing fragment without terminal punctuation is also a sentence.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        current.push(c);
        let terminal = matches!(c, '.' | '!' | '?');
        let boundary = chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if terminal && boundary {
            let s = current.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            current.clear();
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

/// Vowel-cluster syllable estimate; never less than one for a word.
pub fn syllable_count(word: &str) -> usize {
    let w: Vec<char> = word
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphabetic())
        .collect();
    if w.is_empty() {
        return 0;
    }
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut count: usize = 0;
    let mut prev = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev {
            count += 1;
        }
        prev = v;
    }
    // silent final e ("make"), but not "le" endings ("table")
    if w.len() > 2 && w[w.len() - 1] == 'e' && !is_vowel(w[w.len() - 2]) && w[w.len() - 2] != 'l' {
        count = count.saturating_sub(1);
    }
    count.max(1)
}

/// Content words used by the lexical-overlap heuristics.
pub fn content_words(text: &str) -> Vec<String> {
    folded_tokens(text)
        .into_iter()
        .filter(|t| !is_punct(t) && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

pub const STOPWORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "am", "do", "does", "did", "to", "of", "in",
    "on", "at", "for", "with", "and", "or", "but", "it", "its", "this", "that", "these", "those", "there",
    "i", "you", "he", "she", "we", "they", "me", "him", "her", "us", "them", "my", "your", "his", "our",
    "their", "what", "which", "who", "how", "why", "when", "where", "will", "would", "can", "could",
    "should", "so", "then", "than", "very", "think", "picture", "image", "see",
];
