//! Minimal-pair construction.
//!
//! Each relation instance is rewritten into two candidate discourse texts of
//! the form `<Target>. <Marker> <source>.` that differ only in the marker:
//! one marker signals support, the other attack. The reading whose marker
//! matches the gold label is the plausible member `r+`, the other `r-`.
//! Every token carries a span tag (target / connector / source) and its
//! code-point offsets in the reconstructed text; offsets, not token indices,
//! are the alignment key for downstream tokenizers.

use crate::corpus::{Document, RelationLabel, ViewInstance};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error)]
pub enum ReconstructError {
    #[error("{rel_id}: {which} unit text is empty after normalization")]
    EmptyUnit { rel_id: String, which: &'static str },
    #[error("unknown connector pair {0:?}")]
    UnknownConnector(String),
}

/// A (support marker, attack marker) pair of sentence adverbials, plus the
/// non-linguistic placeholder pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectorPair {
    pub abbreviation: String,
    pub support_marker: String,
    pub attack_marker: String,
    pub linguistic: bool,
}

impl ConnectorPair {
    pub fn marker_for(&self, label: RelationLabel) -> &str {
        match label {
            RelationLabel::Support => &self.support_marker,
            RelationLabel::Attack => &self.attack_marker,
        }
    }
}

/// The full marker registry: four linguistic pairs plus the placeholder
/// `+` / `-` pair.
pub fn connector_registry() -> Vec<ConnectorPair> {
    let pair = |abbr: &str, sup: &str, att: &str, linguistic: bool| ConnectorPair {
        abbreviation: abbr.to_string(),
        support_marker: sup.to_string(),
        attack_marker: att.to_string(),
        linguistic,
    };
    vec![
        pair("A/A", "Additionally,", "Admittedly,", true),
        pair("A/D", "I agree,", "I disagree,", true),
        pair("M/H", "Moreover,", "However,", true),
        pair("Y/N", "Yes,", "No,", true),
        pair("NO-DISC", "+", "-", false),
    ]
}

/// Look up a pair by abbreviation; accepts `M/H`, `MH`, `mh`, and `NODISC`
/// spellings.
pub fn connector_by_abbrev(abbrev: &str) -> Result<ConnectorPair, ReconstructError> {
    let norm = abbrev.to_ascii_uppercase().replace(['/', '-', '_'], "");
    connector_registry()
        .into_iter()
        .find(|p| p.abbreviation.replace(['/', '-'], "") == norm)
        .ok_or_else(|| ReconstructError::UnknownConnector(abbrev.to_string()))
}

/// Per-token role within a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanTag {
    Target,
    Connector,
    Source,
}

impl SpanTag {
    /// Stable byte encoding used by the embedding cache file format.
    pub fn to_byte(self) -> u8 {
        match self {
            SpanTag::Target => 0,
            SpanTag::Connector => 1,
            SpanTag::Source => 2,
        }
    }

    pub fn from_byte(b: u8) -> Option<SpanTag> {
        match b {
            0 => Some(SpanTag::Target),
            1 => Some(SpanTag::Connector),
            2 => Some(SpanTag::Source),
            _ => None,
        }
    }
}

/// Which relation class the inserted marker signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    SupportMarked,
    AttackMarked,
}

impl Polarity {
    pub fn label(self) -> RelationLabel {
        match self {
            Polarity::SupportMarked => RelationLabel::Support,
            Polarity::AttackMarked => RelationLabel::Attack,
        }
    }
}

/// A token with its code-point offsets in the reconstruction text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// One synthesized reading: `<Target>. <Marker> <source>.` with per-token
/// span tags. Tags always form a contiguous target block, then the connector
/// block, then the source block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub text: String,
    pub tokens: Vec<Token>,
    pub span_tags: Vec<SpanTag>,
    pub polarity: Polarity,
}

impl Reconstruction {
    /// The three contiguous code-point ranges (target, connector, source)
    /// covering the text, for providers that retokenize.
    pub fn span_char_ranges(&self) -> [(usize, usize); 3] {
        let first_of = |tag: SpanTag| {
            self.span_tags
                .iter()
                .position(|t| *t == tag)
                .map(|i| self.tokens[i].start)
        };
        let total = self.text.chars().count();
        let conn_start = first_of(SpanTag::Connector).unwrap_or(total);
        let src_start = first_of(SpanTag::Source).unwrap_or(total);
        [(0, conn_start), (conn_start, src_start), (src_start, total)]
    }
}

/// The plausible/implausible pair for one relation instance. Both members
/// share every non-connector token; only the marker block differs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub rel_id: String,
    pub gold: RelationLabel,
    pub connector_abbrev: String,
    pub r_plus: Reconstruction,
    pub r_minus: Reconstruction,
}

/// Essay-level capitalization evidence for the lowercasing guard: a token
/// keeps its capital if it was seen capitalized mid-sentence anywhere in the
/// same essay. The pronoun `I` and its contractions are always guarded.
#[derive(Debug, Clone, Default)]
pub struct ProperNounGuard {
    capitalized_mid_sentence: BTreeSet<String>,
}

impl ProperNounGuard {
    /// Guard with no essay evidence; only the built-in `I` forms fire.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_document(doc: &Document) -> Self {
        Self::from_text(&doc.text)
    }

    pub fn from_text(text: &str) -> Self {
        let mut set = BTreeSet::new();
        for sentence in text.split(['.', '!', '?', '\n']) {
            for (i, word) in sentence.split_whitespace().enumerate() {
                if i == 0 {
                    continue;
                }
                let token = word.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'');
                if token.chars().next().is_some_and(|c| c.is_uppercase()) {
                    set.insert(token.to_string());
                }
            }
        }
        ProperNounGuard {
            capitalized_mid_sentence: set,
        }
    }

    fn keeps_capital(&self, token: &str) -> bool {
        const ALWAYS: [&str; 5] = ["I", "I'm", "I've", "I'd", "I'll"];
        ALWAYS.contains(&token) || self.capitalized_mid_sentence.contains(token)
    }
}

/// Where a unit sits in the reconstruction, which decides its casing and
/// terminal punctuation treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitPosition {
    LeadingTarget,
    TrailingSource,
}

/// Normalize a unit text for its slot: the leading target is capitalized and
/// stripped of terminal punctuation (the builder adds its own period); the
/// trailing source is lowercased unless the guard fires, and gets a single
/// terminal period. Empty input stays empty; the pair builder rejects it.
pub fn normalize_unit(text: &str, position: UnitPosition, guard: &ProperNounGuard) -> String {
    let trimmed = text.trim();
    let stripped: &str = trimmed.trim_end_matches(['.', '!', '?']).trim_end();
    if stripped.is_empty() {
        return String::new();
    }
    match position {
        UnitPosition::LeadingTarget => {
            let mut chars = stripped.chars();
            let first = chars.next().expect("non-empty");
            let mut out: String = first.to_uppercase().collect();
            out.push_str(chars.as_str());
            out
        }
        UnitPosition::TrailingSource => {
            let first_word = stripped.split_whitespace().next().unwrap_or("");
            let mut out = if guard.keeps_capital(first_word) {
                stripped.to_string()
            } else {
                let mut chars = stripped.chars();
                let first = chars.next().expect("non-empty");
                let mut s: String = first.to_lowercase().collect();
                s.push_str(chars.as_str());
                s
            };
            out.push('.');
            out
        }
    }
}

/// Whitespace-plus-punctuation tokenizer. Punctuation characters become
/// their own tokens; offsets are code points into `text`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut current_start = 0usize;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(Token {
                    text: std::mem::take(&mut current),
                    start: current_start,
                    end: i,
                });
            }
        } else if c.is_alphanumeric() || c == '\'' || c == '-' || c == '+' {
            if current.is_empty() {
                current_start = i;
            }
            current.push(c);
        } else {
            if !current.is_empty() {
                tokens.push(Token {
                    text: std::mem::take(&mut current),
                    start: current_start,
                    end: i,
                });
            }
            tokens.push(Token {
                text: c.to_string(),
                start: i,
                end: i + 1,
            });
        }
    }
    if !current.is_empty() {
        let end = text.chars().count();
        tokens.push(Token {
            text: current,
            start: current_start,
            end,
        });
    }
    tokens
}

fn build_reading(
    target_norm: &str,
    source_norm: &str,
    marker: &str,
    polarity: Polarity,
) -> Reconstruction {
    let target_part = format!("{target_norm}.");
    let text = format!("{target_part} {marker} {source_norm}");
    let target_len = target_part.chars().count();
    let marker_end = target_len + 1 + marker.chars().count();
    let tokens = tokenize(&text);
    let span_tags = tokens
        .iter()
        .map(|t| {
            if t.start < target_len {
                SpanTag::Target
            } else if t.start < marker_end {
                SpanTag::Connector
            } else {
                SpanTag::Source
            }
        })
        .collect();
    Reconstruction {
        text,
        tokens,
        span_tags,
        polarity,
    }
}

/// Build the minimal pair for one instance under one connector pair.
pub fn build_minimal_pair(
    instance: &ViewInstance,
    pair: &ConnectorPair,
    guard: &ProperNounGuard,
) -> Result<MinimalPair, ReconstructError> {
    let target = normalize_unit(&instance.target_text, UnitPosition::LeadingTarget, guard);
    if target.is_empty() {
        return Err(ReconstructError::EmptyUnit {
            rel_id: instance.rel_id.clone(),
            which: "target",
        });
    }
    let source = normalize_unit(&instance.source_text, UnitPosition::TrailingSource, guard);
    if source.is_empty() {
        return Err(ReconstructError::EmptyUnit {
            rel_id: instance.rel_id.clone(),
            which: "source",
        });
    }

    let plus_label = instance.label;
    let minus_label = plus_label.other();
    let polarity = |label: RelationLabel| match label {
        RelationLabel::Support => Polarity::SupportMarked,
        RelationLabel::Attack => Polarity::AttackMarked,
    };
    let r_plus = build_reading(
        &target,
        &source,
        pair.marker_for(plus_label),
        polarity(plus_label),
    );
    let r_minus = build_reading(
        &target,
        &source,
        pair.marker_for(minus_label),
        polarity(minus_label),
    );
    Ok(MinimalPair {
        rel_id: instance.rel_id.clone(),
        gold: instance.label,
        connector_abbrev: pair.abbreviation.clone(),
        r_plus,
        r_minus,
    })
}

/// Build both readings regardless of gold: `(support_marked, attack_marked)`.
/// This is the prediction-time form; `build_minimal_pair` is the training
/// form.
pub fn build_both_readings(
    instance: &ViewInstance,
    pair: &ConnectorPair,
    guard: &ProperNounGuard,
) -> Result<(Reconstruction, Reconstruction), ReconstructError> {
    let mp = build_minimal_pair(instance, pair, guard)?;
    Ok(match instance.label {
        RelationLabel::Support => (mp.r_plus, mp.r_minus),
        RelationLabel::Attack => (mp.r_minus, mp.r_plus),
    })
}

/// JSON Lines serialization: `{rel_id, gold, connector_abbrev, r_plus: {text,
/// tags}, r_minus: {text, tags}}`.
pub fn pair_to_jsonl(pair: &MinimalPair) -> String {
    let tags = |r: &Reconstruction| -> Vec<&'static str> {
        r.span_tags
            .iter()
            .map(|t| match t {
                SpanTag::Target => "target",
                SpanTag::Connector => "connector",
                SpanTag::Source => "source",
            })
            .collect()
    };
    serde_json::json!({
        "rel_id": pair.rel_id,
        "gold": pair.gold,
        "connector_abbrev": pair.connector_abbrev,
        "r_plus": {"text": pair.r_plus.text, "tags": tags(&pair.r_plus)},
        "r_minus": {"text": pair.r_minus.text, "tags": tags(&pair.r_minus)},
    })
    .to_string()
}
