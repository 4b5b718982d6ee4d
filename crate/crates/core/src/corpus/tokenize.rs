use std::sync::LazyLock;

use regex::Regex;

static PUNCTUATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}").unwrap());

/// Lowercases, strips Unicode punctuation and splits on whitespace runs.
pub fn tokenize(headline: &str) -> Vec<String> {
    let lowered = headline.to_lowercase();
    let stripped = PUNCTUATION.replace_all(&lowered, "");
    stripped.split_whitespace().map(str::to_owned).collect()
}
