/// Built-in English stop words.
pub const STOP_WORDS: [&str; 52] = [
    "a", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "for", "from", "had",
    "has", "have", "he", "her", "his", "i", "if", "in", "into", "is", "it", "its", "not", "of",
    "on", "or", "our", "she", "so", "such", "that", "the", "their", "then", "there", "these",
    "they", "this", "to", "was", "we", "were", "which", "will", "with", "would", "you", "your",
];

fn is_stop_word(t: &str) -> bool {
    STOP_WORDS.binary_search(&t).is_ok()
}

/// Lowercases, splits on anything that is not alphanumeric, drops stop words
/// and applies [`stem`].
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !is_stop_word(w))
        .map(|w| stem(&w))
        .filter(|w| !w.is_empty())
        .collect()
}

/// Light plural and verb-suffix normalizer.
///
/// Plurals: `ies` becomes `y`; `sses`, `shes`, `ches`, `xes`, `zes` lose
/// `es`; any other trailing `s` is dropped unless the word ends in `ss`, `us`
/// or `is`. Then `ing` or `ed` is removed when at least three characters
/// remain, and a resulting double consonant (other than `l`, `s`, `z`) is
/// collapsed.
pub fn stem(word: &str) -> String {
    if !word.is_ascii() {
        return word.to_string();
    }
    let mut w = word.to_string();
    let len = w.len();
    if len > 4 && w.ends_with("ies") {
        w.truncate(len - 3);
        w.push('y');
    } else if len > 4 && ["sses", "shes", "ches", "xes", "zes"].iter().any(|s| w.ends_with(s)) {
        w.truncate(len - 2);
    } else if len > 3 && w.ends_with('s') && !["ss", "us", "is"].iter().any(|s| w.ends_with(s)) {
        w.truncate(len - 1);
    }

    let stripped = if w.len() >= 6 && w.ends_with("ing") {
        w.truncate(w.len() - 3);
        true
    } else if w.len() >= 5 && w.ends_with("ed") {
        w.truncate(w.len() - 2);
        true
    } else {
        false
    };
    if stripped {
        let b = w.as_bytes();
        let n = b.len();
        if n >= 2 && b[n - 1] == b[n - 2] && is_consonant(b[n - 1]) && !b"lsz".contains(&b[n - 1]) {
            w.truncate(n - 1);
        }
    }
    w
}

fn is_consonant(c: u8) -> bool {
    c.is_ascii_alphabetic() && !b"aeiou".contains(&c)
}
