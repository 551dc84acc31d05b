//! Rule-based sentence splitting on terminal punctuation.
//!
//! Used only by the `Essay` view to extend unit spans to their covering
//! sentence(s). A `.` `!` or `?` ends a sentence when followed by whitespace
//! or end of text, unless it sits between digits (decimals) or the word
//! before it is a known abbreviation. Newlines always end a sentence, which
//! also closes essay titles that carry no terminal punctuation.

use serde::{Deserialize, Serialize};

/// Configurable splitting policy. The default abbreviation list guards the
/// forms that actually occur in student essays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePolicy {
    pub abbreviations: Vec<String>,
}

impl Default for SentencePolicy {
    fn default() -> Self {
        let abbreviations = [
            "e.g", "i.e", "etc", "cf", "vs", "mr", "mrs", "ms", "dr", "prof", "st", "no", "fig",
            "inc", "ltd", "co", "approx",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        SentencePolicy { abbreviations }
    }
}

impl SentencePolicy {
    fn is_abbreviation(&self, word: &str) -> bool {
        let w = word.trim_start_matches(|c: char| !c.is_alphanumeric());
        self.abbreviations.iter().any(|a| a.eq_ignore_ascii_case(w))
    }
}

/// Return trimmed sentence spans as `(start, end)` code-point offsets,
/// in order, non-overlapping.
pub fn sentence_spans(text: &str, policy: &SentencePolicy) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut spans = Vec::new();
    let mut sent_start = 0usize;

    let push = |start: usize, end: usize, spans: &mut Vec<(usize, usize)>| {
        // Trim whitespace from both edges of the raw span.
        let mut s = start;
        let mut e = end;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            spans.push((s, e));
        }
    };

    let mut i = 0usize;
    while i < n {
        let c = chars[i];
        if c == '\n' {
            push(sent_start, i, &mut spans);
            sent_start = i + 1;
            i += 1;
            continue;
        }
        if c == '.' || c == '!' || c == '?' {
            // Closing punctuation rides along with the ender.
            let mut end = i + 1;
            while end < n && (chars[end] == '"' || chars[end] == '\'' || chars[end] == ')') {
                end += 1;
            }
            // Decimals like 3.5 are safe: the digit after the dot fails this check.
            let mut boundary = end >= n || chars[end].is_whitespace();
            if boundary && c == '.' {
                // Word immediately before the period, without its own dots.
                let mut w_start = i;
                while w_start > 0 && !chars[w_start - 1].is_whitespace() {
                    w_start -= 1;
                }
                let word: String = chars[w_start..i].iter().collect();
                let word = word.trim_end_matches('.');
                if policy.is_abbreviation(word) {
                    boundary = false;
                }
            }
            if boundary {
                push(sent_start, end, &mut spans);
                sent_start = end;
                i = end;
                continue;
            }
        }
        i += 1;
    }
    push(sent_start, n, &mut spans);
    spans
}
