//! Text normalisation and feature extraction.

use std::collections::BTreeMap;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "any", "are", "as", "at", "be", "by", "for", "from", "in", "is", "it", "its", "of", "on", "or",
    "the", "their", "them", "they", "this", "to", "was", "were",
];

/// ASCII-folds, splits camel case and non-alphanumerics, and lowercases.
pub fn words(text: &str) -> Vec<String> {
    let folded = deunicode::deunicode(text);
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut prev: Option<char> = None;
    for ch in folded.chars() {
        if !ch.is_ascii_alphanumeric() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev = None;
            continue;
        }
        let boundary =
            matches!(prev, Some(p) if (p.is_ascii_lowercase() || p.is_ascii_digit()) && ch.is_ascii_uppercase());
        if boundary && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        cur.push(ch.to_ascii_lowercase());
        prev = Some(ch);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Canonical form used for exact-name comparison.
pub fn normalize(text: &str) -> String {
    words(text).join(" ")
}

/// Content words: [`words`] without stopwords.
pub fn tokens(text: &str) -> Vec<String> {
    words(text)
        .into_iter()
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

/// Term frequencies of word features (`w:`) and boundary-padded character
/// trigrams (`t:`).
pub fn features(text: &str) -> BTreeMap<String, u32> {
    let mut tf = BTreeMap::new();
    for tok in tokens(text) {
        let padded: Vec<char> = format!("#{tok}#").chars().collect();
        for w in padded.windows(3) {
            *tf.entry(format!("t:{}", w.iter().collect::<String>())).or_insert(0) += 1;
        }
        *tf.entry(format!("w:{tok}")).or_insert(0) += 1;
    }
    tf
}
