//! Small text helpers shared by keyword scoring and the mock backend.

/// Characters that count as part of a word for boundary checks.
fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Case-insensitive search for `keyword` in `haystack` where the occurrence
/// is not glued to surrounding word characters.
///
/// Both sides are lowercased before searching, so `keyword` may be passed in
/// any case. An empty keyword never matches.
pub fn contains_keyword(haystack: &str, keyword: &str) -> bool {
    let needle = keyword.to_lowercase();
    if needle.is_empty() {
        return false;
    }
    let hay = haystack.to_lowercase();
    contains_keyword_lowered(&hay, &needle)
}

/// Same as [`contains_keyword`] but assumes both inputs are already lowercase.
pub(crate) fn contains_keyword_lowered(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(rel) = hay[from..].find(needle) {
        let start = from + rel;
        let end = start + needle.len();
        let before_ok = hay[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after_ok = hay[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            return true;
        }
        // Advance by one character to allow overlapping occurrences.
        from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Truncate `s` to at most `max_chars` characters.
pub fn clip_chars(s: &str, max_chars: usize) -> String {
    match s.char_indices().nth(max_chars) {
        Some((idx, _)) => s[..idx].to_string(),
        None => s.to_string(),
    }
}

/// Strip a Markdown code fence and any text around the outermost JSON object.
pub(crate) fn extract_json_object(raw: &str) -> &str {
    let trimmed = raw.trim();
    match (trimmed.find('{'), trimmed.rfind('}')) {
        (Some(start), Some(end)) if end > start => &trimmed[start..=end],
        _ => trimmed,
    }
}
