//! Standoff annotation parsing and serialization.
//!
//! Line grammar, tab-separated:
//!
//! ```text
//! T<id> \t <Kind> <start> <end> \t <surface>
//! R<id> \t <supports|attacks> Arg1:T<id> Arg2:T<id>
//! A<id> \t <Name> T<id> <Value>
//! ```
//!
//! `Arg1` is the source unit (the one doing the supporting or attacking),
//! `Arg2` the target. Offsets are code points into the essay text; the quoted
//! surface must equal the slice. Blank lines and `#` comment lines are
//! skipped. Every other shape is a `MalformedLine`.

use super::{
    slice_chars, CorpusError, Document, EauSpan, RelationInstance, RelationLabel, StanceAttribute,
    UnitKind,
};
use std::collections::BTreeSet;

pub fn parse_standoff(
    ann_content: &str,
    txt_content: &str,
    doc_id: &str,
) -> Result<Document, CorpusError> {
    let text_len = txt_content.chars().count();
    let mut units: Vec<EauSpan> = Vec::new();
    let mut relations: Vec<RelationInstance> = Vec::new();
    let mut stances: Vec<StanceAttribute> = Vec::new();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();

    let malformed = |line_no: usize, reason: &str| CorpusError::MalformedLine {
        doc_id: doc_id.to_string(),
        line_no,
        reason: reason.to_string(),
    };

    for (idx, line) in ann_content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or("");
        if id.is_empty() {
            return Err(malformed(line_no, "empty annotation id"));
        }
        if !seen_ids.insert(id.to_string()) {
            return Err(CorpusError::DuplicateId {
                doc_id: doc_id.to_string(),
                id: id.to_string(),
            });
        }
        match id.as_bytes()[0] {
            b'T' => {
                let header = fields
                    .next()
                    .ok_or_else(|| malformed(line_no, "T line missing span header"))?;
                let surface = fields
                    .next()
                    .ok_or_else(|| malformed(line_no, "T line missing surface text"))?;
                if fields.next().is_some() {
                    return Err(malformed(line_no, "T line has trailing fields"));
                }
                let mut parts = header.split(' ');
                let kind = parts
                    .next()
                    .and_then(UnitKind::parse)
                    .ok_or_else(|| malformed(line_no, "unknown unit kind"))?;
                let start: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| malformed(line_no, "bad start offset"))?;
                let end: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| malformed(line_no, "bad end offset"))?;
                if parts.next().is_some() {
                    return Err(malformed(line_no, "extra tokens in span header"));
                }
                if start >= end || end > text_len {
                    return Err(CorpusError::OffsetMismatch {
                        doc_id: doc_id.to_string(),
                        unit_id: id.to_string(),
                        start,
                        end,
                        expected: surface.to_string(),
                        found: String::new(),
                    });
                }
                let slice = slice_chars(txt_content, start, end);
                if slice != surface {
                    return Err(CorpusError::OffsetMismatch {
                        doc_id: doc_id.to_string(),
                        unit_id: id.to_string(),
                        start,
                        end,
                        expected: surface.to_string(),
                        found: slice,
                    });
                }
                units.push(EauSpan {
                    unit_id: id.to_string(),
                    kind,
                    start,
                    end,
                    surface: surface.to_string(),
                });
            }
            b'R' => {
                let body = fields
                    .next()
                    .ok_or_else(|| malformed(line_no, "R line missing body"))?;
                if fields.next().is_some() {
                    return Err(malformed(line_no, "R line has trailing fields"));
                }
                let mut parts = body.split(' ');
                let label = match parts.next() {
                    Some("supports") => RelationLabel::Support,
                    Some("attacks") => RelationLabel::Attack,
                    _ => return Err(malformed(line_no, "unknown relation type")),
                };
                let source = parts
                    .next()
                    .and_then(|s| s.strip_prefix("Arg1:"))
                    .ok_or_else(|| malformed(line_no, "missing Arg1"))?;
                let target = parts
                    .next()
                    .and_then(|s| s.strip_prefix("Arg2:"))
                    .ok_or_else(|| malformed(line_no, "missing Arg2"))?;
                if parts.next().is_some() {
                    return Err(malformed(line_no, "extra tokens in relation body"));
                }
                relations.push(RelationInstance {
                    rel_id: id.to_string(),
                    source: source.to_string(),
                    target: target.to_string(),
                    label,
                    doc_id: doc_id.to_string(),
                });
            }
            b'A' => {
                let body = fields
                    .next()
                    .ok_or_else(|| malformed(line_no, "A line missing body"))?;
                if fields.next().is_some() {
                    return Err(malformed(line_no, "A line has trailing fields"));
                }
                let mut parts = body.split(' ');
                let name = parts
                    .next()
                    .ok_or_else(|| malformed(line_no, "A line missing attribute name"))?;
                let unit_id = parts
                    .next()
                    .ok_or_else(|| malformed(line_no, "A line missing unit id"))?;
                let value = parts
                    .next()
                    .ok_or_else(|| malformed(line_no, "A line missing value"))?;
                if parts.next().is_some() {
                    return Err(malformed(line_no, "extra tokens in attribute body"));
                }
                stances.push(StanceAttribute {
                    attr_id: id.to_string(),
                    name: name.to_string(),
                    unit_id: unit_id.to_string(),
                    value: value.to_string(),
                });
            }
            _ => return Err(malformed(line_no, "unknown annotation line type")),
        }
    }

    // Referential integrity after all T lines are known.
    for rel in &relations {
        for endpoint in [&rel.source, &rel.target] {
            if !units.iter().any(|u| &u.unit_id == endpoint) {
                return Err(CorpusError::DanglingReference {
                    doc_id: doc_id.to_string(),
                    referer: rel.rel_id.clone(),
                    missing: endpoint.clone(),
                });
            }
        }
        if rel.source == rel.target {
            return Err(CorpusError::SelfRelation {
                doc_id: doc_id.to_string(),
                rel_id: rel.rel_id.clone(),
                unit_id: rel.source.clone(),
            });
        }
    }
    for stance in &stances {
        if !units.iter().any(|u| u.unit_id == stance.unit_id) {
            return Err(CorpusError::DanglingReference {
                doc_id: doc_id.to_string(),
                referer: stance.attr_id.clone(),
                missing: stance.unit_id.clone(),
            });
        }
    }

    Ok(Document {
        doc_id: doc_id.to_string(),
        text: txt_content.to_string(),
        units,
        relations,
        stances,
    })
}

/// Render a document back into its standoff lines, in original order.
/// `parse_standoff(serialize_standoff(doc), doc.text, doc.doc_id)` is the
/// identity.
pub fn serialize_standoff(doc: &Document) -> String {
    let mut out = String::new();
    for u in &doc.units {
        out.push_str(&format!(
            "{}\t{} {} {}\t{}\n",
            u.unit_id,
            u.kind.as_str(),
            u.start,
            u.end,
            u.surface
        ));
    }
    for r in &doc.relations {
        let verb = match r.label {
            RelationLabel::Support => "supports",
            RelationLabel::Attack => "attacks",
        };
        out.push_str(&format!(
            "{}\t{} Arg1:{} Arg2:{}\n",
            r.rel_id, verb, r.source, r.target
        ));
    }
    for a in &doc.stances {
        out.push_str(&format!(
            "{}\t{} {} {}\n",
            a.attr_id, a.name, a.unit_id, a.value
        ));
    }
    out
}
