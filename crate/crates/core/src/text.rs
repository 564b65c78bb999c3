//! Text normalization shared by the classifiers, the ROUGE metrics and the
//! phrase normalizer.

/// Version tag recorded in evaluation and cluster reports.
pub const TOKENIZER_VERSION: &str = "ws-lower-edgepunct/1";

/// Collapses every run of Unicode whitespace into a single space and trims
/// both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercases, splits on Unicode whitespace and strips non-alphanumeric
/// characters from both edges of each token. Interior punctuation survives
/// (`8:1:1` stays one token); tokens that end up empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_lowercase())
            }
        })
        .collect()
}

/// Keeps at most `max_tokens` whitespace-delimited tokens of `text`.
/// Returns the (normalized) text and whether anything was cut.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> (String, bool) {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= max_tokens {
        (words.join(" "), false)
    } else {
        (words[..max_tokens].join(" "), true)
    }
}
