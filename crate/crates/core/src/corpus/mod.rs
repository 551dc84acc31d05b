//! Corpus ingestion: standoff-annotated essays, task views and data splits.
//!
//! The corpus arrives as paired `<id>.txt` / `<id>.ann` files. The `.ann`
//! side uses the brat standoff convention: `T` lines mark argumentative unit
//! spans, `R` lines relate two units (`supports` / `attacks`), `A` lines
//! attach stance attributes. All character offsets in this crate are Unicode
//! code-point offsets into the essay text, matching the corpus convention.
//!
//! Two task views are materialized from the same documents:
//!
//! - `Essay`: each unit is extended to its minimal covering sentence(s), so
//!   surrounding discourse tokens are visible.
//! - `EssayContent`: each unit is exactly its annotated span, nothing more.

mod sentence;
mod split;
mod standoff;

pub use sentence::{sentence_spans, SentencePolicy};
pub use split::{make_split, read_split_table, DataSplit};
pub use standoff::{parse_standoff, serialize_standoff};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use crate::pipeline::write_string_atomic;

/// Errors raised while parsing or assembling the corpus.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{doc_id}:{line_no}: malformed line: {reason}")]
    MalformedLine {
        doc_id: String,
        line_no: usize,
        reason: String,
    },
    #[error("{doc_id}: {unit_id}: annotated surface {expected:?} disagrees with text slice {found:?} at [{start}, {end})")]
    OffsetMismatch {
        doc_id: String,
        unit_id: String,
        start: usize,
        end: usize,
        expected: String,
        found: String,
    },
    #[error("{doc_id}: {referer} references unknown unit {missing}")]
    DanglingReference {
        doc_id: String,
        referer: String,
        missing: String,
    },
    #[error("{doc_id}: duplicate annotation id {id}")]
    DuplicateId { doc_id: String, id: String },
    #[error("{doc_id}: relation {rel_id} relates unit {unit_id} to itself")]
    SelfRelation {
        doc_id: String,
        rel_id: String,
        unit_id: String,
    },
    #[error("dev split of {requested} relations infeasible: only {available} training relations")]
    SplitInfeasible { requested: usize, available: usize },
    #[error("missing {0} file for document {1}")]
    MissingFile(&'static str, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Kind of an annotated argumentative unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitKind {
    MajorClaim,
    Claim,
    Premise,
}

impl UnitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            UnitKind::MajorClaim => "MajorClaim",
            UnitKind::Claim => "Claim",
            UnitKind::Premise => "Premise",
        }
    }

    pub fn parse(s: &str) -> Option<UnitKind> {
        match s {
            "MajorClaim" => Some(UnitKind::MajorClaim),
            "Claim" => Some(UnitKind::Claim),
            "Premise" => Some(UnitKind::Premise),
            _ => None,
        }
    }
}

/// An annotated unit span. `surface` always equals the code-point slice
/// `text[start..end)` of the owning document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EauSpan {
    pub unit_id: String,
    pub kind: UnitKind,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

/// The two relation classes. `Attack` subsumes undercut and rebuttal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationLabel {
    Support,
    Attack,
}

impl RelationLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RelationLabel::Support => "support",
            RelationLabel::Attack => "attack",
        }
    }

    pub fn other(&self) -> RelationLabel {
        match self {
            RelationLabel::Support => RelationLabel::Attack,
            RelationLabel::Attack => RelationLabel::Support,
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A directed relation between two units of one document: the source unit
/// supports or attacks the target unit. `rel_id` is the per-file id (`R1`);
/// use [`RelationInstance::qualified_id`] wherever corpus-wide uniqueness is
/// needed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInstance {
    pub rel_id: String,
    pub source: String,
    pub target: String,
    pub label: RelationLabel,
    pub doc_id: String,
}

impl RelationInstance {
    /// Corpus-wide unique id, `<doc_id>/<rel_id>`.
    pub fn qualified_id(&self) -> String {
        format!("{}/{}", self.doc_id, self.rel_id)
    }
}

/// Stance attribute (`A` line). Retained as metadata only; stance plays no
/// role in relation classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceAttribute {
    pub attr_id: String,
    pub name: String,
    pub unit_id: String,
    pub value: String,
}

/// One parsed essay: raw text plus its unit spans and relations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub units: Vec<EauSpan>,
    pub relations: Vec<RelationInstance>,
    pub stances: Vec<StanceAttribute>,
}

impl Document {
    pub fn unit(&self, unit_id: &str) -> Option<&EauSpan> {
        self.units.iter().find(|u| u.unit_id == unit_id)
    }
}

/// Slice a string by code-point offsets. Panics if the range is out of
/// bounds; callers validate ranges at parse time.
pub(crate) fn slice_chars(text: &str, start: usize, end: usize) -> String {
    text.chars()
        .skip(start)
        .take(end.saturating_sub(start))
        .collect()
}

/// Which portion of the essay an instance text may expose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewMode {
    /// Unit spans extended to their covering sentence(s).
    Essay,
    /// Exactly the annotated unit spans.
    EssayContent,
}

impl ViewMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViewMode::Essay => "ESSAY",
            ViewMode::EssayContent => "ESSAY_CONTENT",
        }
    }

    pub fn parse(s: &str) -> Option<ViewMode> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "ESSAY" => Some(ViewMode::Essay),
            "ESSAY_CONTENT" | "ESSAYCONTENT" => Some(ViewMode::EssayContent),
            _ => None,
        }
    }
}

/// One classification instance: the texts the system is allowed to see for a
/// single relation. `rel_id` is the qualified `<doc_id>/<rel_id>` form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewInstance {
    pub rel_id: String,
    pub doc_id: String,
    pub source_text: String,
    pub target_text: String,
    pub label: RelationLabel,
}

/// All instances of one task view, in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusView {
    pub mode: ViewMode,
    pub instances: Vec<ViewInstance>,
}

/// Materialize a task view over parsed documents: one instance per relation.
///
/// `policy` is consulted only in `Essay` mode, where each unit span is
/// extended to the minimal covering sentence(s) chosen by the sentence
/// splitter.
pub fn build_view(docs: &[Document], mode: ViewMode, policy: &SentencePolicy) -> CorpusView {
    let mut instances = Vec::new();
    for doc in docs {
        let sentences = match mode {
            ViewMode::Essay => sentence_spans(&doc.text, policy),
            ViewMode::EssayContent => Vec::new(),
        };
        for rel in &doc.relations {
            // Parsing guarantees both endpoints exist.
            let source = doc.unit(&rel.source).expect("validated unit id");
            let target = doc.unit(&rel.target).expect("validated unit id");
            let (source_text, target_text) = match mode {
                ViewMode::EssayContent => (source.surface.clone(), target.surface.clone()),
                ViewMode::Essay => (
                    covering_text(&doc.text, &sentences, source.start, source.end),
                    covering_text(&doc.text, &sentences, target.start, target.end),
                ),
            };
            instances.push(ViewInstance {
                rel_id: rel.qualified_id(),
                doc_id: doc.doc_id.clone(),
                source_text,
                target_text,
                label: rel.label,
            });
        }
    }
    CorpusView { mode, instances }
}

/// Extend `[start, end)` to the span of its covering sentence(s) and return
/// that text. Falls back to the raw span when no sentence covers it.
fn covering_text(text: &str, sentences: &[(usize, usize)], start: usize, end: usize) -> String {
    let first = sentences.iter().find(|&&(_, e)| e > start);
    let last = sentences.iter().rev().find(|&&(s, _)| s < end);
    match (first, last) {
        (Some(&(fs, _)), Some(&(_, le))) => slice_chars(text, fs.min(start), le.max(end)),
        _ => slice_chars(text, start, end),
    }
}

/// Corpus-level summary counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub essay_count: usize,
    pub relation_count: usize,
    pub support_count: usize,
    pub attack_count: usize,
    pub support_fraction: f64,
}

pub fn corpus_stats(docs: &[Document]) -> CorpusStats {
    let essay_count = docs.len();
    let mut support_count = 0usize;
    let mut attack_count = 0usize;
    for doc in docs {
        for rel in &doc.relations {
            match rel.label {
                RelationLabel::Support => support_count += 1,
                RelationLabel::Attack => attack_count += 1,
            }
        }
    }
    let relation_count = support_count + attack_count;
    let support_fraction = if relation_count == 0 {
        0.0
    } else {
        support_count as f64 / relation_count as f64
    };
    CorpusStats {
        essay_count,
        relation_count,
        support_count,
        attack_count,
        support_fraction,
    }
}

/// Load every `<id>.txt` / `<id>.ann` pair found in `dir`, sorted by id.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<Document>, CorpusError> {
    let mut ids = BTreeSet::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("ann") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.insert(stem.to_string());
            }
        }
    }
    let mut docs = Vec::with_capacity(ids.len());
    for id in ids {
        let ann_path = dir.join(format!("{id}.ann"));
        let txt_path = dir.join(format!("{id}.txt"));
        if !txt_path.exists() {
            return Err(CorpusError::MissingFile("txt", id));
        }
        let ann = std::fs::read_to_string(&ann_path)?;
        let txt = std::fs::read_to_string(&txt_path)?;
        docs.push(parse_standoff(&ann, &txt, &id)?);
    }
    Ok(docs)
}

/// Serialize a view as JSON Lines, one instance per line.
pub fn write_view_jsonl(view: &CorpusView, path: &Path) -> std::io::Result<()> {
    let mut out = String::new();
    for inst in &view.instances {
        let line = serde_json::json!({
            "rel_id": inst.rel_id,
            "doc_id": inst.doc_id,
            "source_text": inst.source_text,
            "target_text": inst.target_text,
            "label": inst.label,
            "mode": view.mode.as_str(),
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    write_string_atomic(path, &out)
}

/// Read a view back from the JSON Lines produced by [`write_view_jsonl`].
pub fn read_view_jsonl(path: &Path) -> Result<CorpusView, std::io::Error> {
    let content = std::fs::read_to_string(path)?;
    let mut mode = ViewMode::EssayContent;
    let mut instances = Vec::new();
    for line in content.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let get = |k: &str| -> Result<String, std::io::Error> {
            v.get(k)
                .and_then(|x| x.as_str())
                .map(|s| s.to_string())
                .ok_or_else(|| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("missing field {k}"),
                    )
                })
        };
        mode = ViewMode::parse(&get("mode")?)
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "bad mode"))?;
        let label = match get("label")?.as_str() {
            "support" => RelationLabel::Support,
            "attack" => RelationLabel::Attack,
            other => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("bad label {other}"),
                ))
            }
        };
        instances.push(ViewInstance {
            rel_id: get("rel_id")?,
            doc_id: get("doc_id")?,
            source_text: get("source_text")?,
            target_text: get("target_text")?,
            label,
        });
    }
    Ok(CorpusView { mode, instances })
}

#[cfg(test)]
mod tests;
