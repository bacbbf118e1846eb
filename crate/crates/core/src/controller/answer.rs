use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unparseable final answer: {0:?}")]
pub struct UnparseableAnswer(pub String);

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '_'
}

/// Option letters that stand alone, i.e. are not part of a longer word.
fn standalone_letters(text: &str) -> impl Iterator<Item = char> + '_ {
    let chars: Vec<char> = text.chars().collect();
    (0..chars.len()).filter_map(move |i| {
        let c = chars[i];
        let isolated = !i.checked_sub(1).is_some_and(|p| is_word_char(chars[p]))
            && !chars.get(i + 1).is_some_and(|&n| is_word_char(n));
        (isolated && matches!(c.to_ascii_uppercase(), 'A'..='D')).then_some(c)
    })
}

/// Extracts the chosen option letter from a model reply.
///
/// Takes the first standalone `A`-`D`, so `"B"`, `"(B)"`, `"B."` and
/// `"Answer: B"` all work. Upper-case letters win over lower-case ones,
/// which keeps articles like "a" from shadowing the real answer; a reply
/// with only lower-case candidates, such as `"the answer is (c)."`, still
/// parses.
pub fn parse_answer(text: &str) -> Result<char, UnparseableAnswer> {
    let mut lower = None;
    for c in standalone_letters(text) {
        if c.is_ascii_uppercase() {
            return Ok(c);
        }
        lower.get_or_insert(c.to_ascii_uppercase());
    }
    lower.ok_or_else(|| {
        let mut shown: String = text.chars().take(80).collect();
        if shown.len() < text.len() {
            shown.push_str("...");
        }
        UnparseableAnswer(shown)
    })
}
