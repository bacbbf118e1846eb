use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unparseable analysis: {0}")]
pub struct UnparseableAnalysis(pub String);

/// Answer and confidence extracted from a clip-analysis response.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAnalysis {
    pub answer: String,
    /// Always within `[0, 1]`.
    pub confidence: f64,
    /// Set when the confidence was missing, unparseable or clamped.
    pub warning: Option<String>,
}

/// Case-insensitive `label:` prefix match; returns the text after the colon.
fn labelled<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let trimmed = line.trim_start().trim_start_matches(['*', '#', '-', ' ']);
    let head = trimmed.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    let rest = trimmed[label.len()..].trim_start_matches('*').trim_start();
    rest.strip_prefix(':').map(|r| r.trim_start_matches('*').trim())
}

/// Leading decimal number such as `0.9`, `.6` or `1`.
fn leading_decimal(text: &str) -> Option<f64> {
    let text = text.trim_start_matches(['[', '(', ' ']);
    let end = text
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || (i == 0 && (c == '-' || c == '+'))))
        .map_or(text.len(), |(i, _)| i);
    text[..end].parse().ok()
}

/// Extracts the last `Answer:` and `Confidence:` lines from a response.
///
/// An empty `Answer:` line takes the following lines up to the next
/// `Confidence:` line. Confidence is clamped into `[0, 1]`; a missing or
/// unparseable confidence becomes 0.0 with a warning.
pub fn parse_analysis(text: &str) -> Result<ParsedAnalysis, UnparseableAnalysis> {
    let lines: Vec<&str> = text.lines().collect();
    let answer_at = lines
        .iter()
        .rposition(|l| labelled(l, "answer").is_some())
        .ok_or_else(|| UnparseableAnalysis("no `Answer:` line".into()))?;

    let mut answer = labelled(lines[answer_at], "answer").unwrap_or_default().to_owned();
    if answer.is_empty() {
        answer = lines[answer_at + 1..]
            .iter()
            .take_while(|l| labelled(l, "confidence").is_none())
            .map(|l| l.trim())
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
    }
    if answer.is_empty() {
        return Err(UnparseableAnalysis("empty answer".into()));
    }

    let raw_conf = lines.iter().rev().find_map(|l| labelled(l, "confidence"));
    let (confidence, warning) = match raw_conf.map(|c| (c, leading_decimal(c))) {
        None => (0.0, Some("missing confidence; recorded as 0.0".to_owned())),
        Some((c, None)) => (0.0, Some(format!("unparseable confidence `{c}`; recorded as 0.0"))),
        Some((_, Some(v))) if v.is_nan() => (0.0, Some("confidence is NaN; recorded as 0.0".into())),
        Some((_, Some(v))) if !(0.0..=1.0).contains(&v) => {
            let clamped = v.clamp(0.0, 1.0);
            (clamped, Some(format!("confidence {v} clamped to {clamped}")))
        }
        Some((_, Some(v))) => (v, None),
    };
    Ok(ParsedAnalysis { answer, confidence, warning })
}

/// Renders an analysis the way the clip-analyzer prompt asks for it.
pub fn format_analysis(answer: &str, confidence: f64) -> String {
    format!("Answer: {answer}\nConfidence: {confidence:.3}")
}
