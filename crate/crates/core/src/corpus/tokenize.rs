/// Splits caption text into lowercase word tokens.
///
/// Tokens are whitespace-separated; leading and trailing punctuation is
/// stripped, internal hyphens and apostrophes are kept ("rose-pink",
/// "anna's"). Tokens that are pure punctuation disappear.
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
