use super::*;
use proptest::prelude::*;

/// Code-point offset of `pat` within `text`; keeps fixtures free of
/// hand-counted offsets.
fn char_offset(text: &str, pat: &str) -> usize {
    let byte = text
        .find(pat)
        .unwrap_or_else(|| panic!("{pat:?} not in fixture"));
    text[..byte].chars().count()
}

fn t_line(id: &str, kind: &str, text: &str, surface: &str) -> String {
    let start = char_offset(text, surface);
    let end = start + surface.chars().count();
    format!("{id}\t{kind} {start} {end}\t{surface}")
}

const FIXTURE_TXT: &str = "Should students wear uniforms?\n\nSome people argue that \
uniforms build school spirit. However, uniforms limit the students' freedom of \
expression. Moreover, buying uniforms costs families extra money each year. \
I believe schools should not force uniforms on students.\n";

fn fixture_ann() -> String {
    let t1 = t_line(
        "T1",
        "Claim",
        FIXTURE_TXT,
        "uniforms limit the students' freedom of expression",
    );
    let t2 = t_line(
        "T2",
        "Premise",
        FIXTURE_TXT,
        "buying uniforms costs families extra money each year",
    );
    let t3 = t_line(
        "T3",
        "MajorClaim",
        FIXTURE_TXT,
        "schools should not force uniforms on students",
    );
    let t4 = t_line("T4", "Claim", FIXTURE_TXT, "uniforms build school spirit");
    format!(
        "{t1}\n{t2}\n{t3}\n{t4}\n\
         R1\tsupports Arg1:T2 Arg2:T1\n\
         R2\tattacks Arg1:T4 Arg2:T3\n\
         A1\tStance T3 For\n"
    )
}

fn fixture_doc() -> Document {
    parse_standoff(&fixture_ann(), FIXTURE_TXT, "essay001").unwrap()
}

#[test]
fn fixture_parses_units_relations_stances() {
    let doc = fixture_doc();
    assert_eq!(doc.units.len(), 4);
    assert_eq!(doc.relations.len(), 2);
    assert_eq!(doc.stances.len(), 1);

    let t1 = doc.unit("T1").unwrap();
    assert_eq!(t1.kind, UnitKind::Claim);
    assert_eq!(t1.surface, slice_chars(&doc.text, t1.start, t1.end));

    // Arg1 is the source, Arg2 the target.
    let r1 = &doc.relations[0];
    assert_eq!(r1.source, "T2");
    assert_eq!(r1.target, "T1");
    assert_eq!(r1.label, RelationLabel::Support);
    assert_eq!(r1.qualified_id(), "essay001/R1");
    let r2 = &doc.relations[1];
    assert_eq!(r2.label, RelationLabel::Attack);

    let a1 = &doc.stances[0];
    assert_eq!(
        (a1.name.as_str(), a1.unit_id.as_str(), a1.value.as_str()),
        ("Stance", "T3", "For")
    );
}

#[test]
fn empty_annotation_is_an_empty_document() {
    let doc = parse_standoff("", "anything at all", "d").unwrap();
    assert!(doc.units.is_empty());
    assert!(doc.relations.is_empty());
    assert!(doc.stances.is_empty());
}

#[test]
fn blank_and_comment_lines_are_skipped() {
    let ann = "# a comment line\n\n   \nT1\tClaim 0 2\tab\n";
    let doc = parse_standoff(ann, "ab cd", "d").unwrap();
    assert_eq!(doc.units.len(), 1);
}

#[test]
fn dangling_relation_reference_is_rejected() {
    let ann = "T1\tClaim 0 2\tab\nR1\tsupports Arg1:T9 Arg2:T1\n";
    let err = parse_standoff(ann, "ab cd", "d").unwrap_err();
    assert!(matches!(err, CorpusError::DanglingReference { missing, .. } if missing == "T9"));
}

#[test]
fn dangling_stance_reference_is_rejected() {
    let ann = "T1\tClaim 0 2\tab\nA1\tStance T7 For\n";
    let err = parse_standoff(ann, "ab cd", "d").unwrap_err();
    assert!(matches!(err, CorpusError::DanglingReference { missing, .. } if missing == "T7"));
}

#[test]
fn surface_disagreement_is_rejected() {
    let ann = "T1\tClaim 0 2\txy\n";
    let err = parse_standoff(ann, "ab cd", "d").unwrap_err();
    match err {
        CorpusError::OffsetMismatch {
            expected, found, ..
        } => {
            assert_eq!(expected, "xy");
            assert_eq!(found, "ab");
        }
        other => panic!("expected OffsetMismatch, got {other:?}"),
    }
}

#[test]
fn out_of_range_and_inverted_spans_are_rejected() {
    assert!(matches!(
        parse_standoff("T1\tClaim 0 99\tab\n", "ab", "d").unwrap_err(),
        CorpusError::OffsetMismatch { .. }
    ));
    assert!(matches!(
        parse_standoff("T1\tClaim 2 2\t\n", "ab cd", "d").unwrap_err(),
        CorpusError::OffsetMismatch { .. }
    ));
}

#[test]
fn malformed_lines_are_rejected() {
    let cases = [
        "garbage\n",                     // unknown id prefix
        "T1\tClaim 0\tab\n",             // missing end offset
        "T1\tClaim zero two\tab\n",      // non-numeric offsets
        "T1\tVerdict 0 2\tab\n",         // unknown unit kind
        "T1\tClaim 0 2\tab\textra\n",    // trailing field
        "R1\tsupport Arg1:T1 Arg2:T2\n", // bad label spelling
        "R1\tsupports Arg1:T1\n",        // missing Arg2
        "A1\tStance T1\n",               // missing value
    ];
    for ann in cases {
        let err = parse_standoff(ann, "ab cd", "d").unwrap_err();
        assert!(
            matches!(err, CorpusError::MalformedLine { .. }),
            "{ann:?} -> {err:?}"
        );
    }
}

#[test]
fn duplicate_ids_are_rejected() {
    let ann = "T1\tClaim 0 2\tab\nT1\tClaim 3 5\tcd\n";
    let err = parse_standoff(ann, "ab cd", "d").unwrap_err();
    assert!(matches!(err, CorpusError::DuplicateId { id, .. } if id == "T1"));
}

#[test]
fn self_relation_is_rejected() {
    let ann = "T1\tClaim 0 2\tab\nR1\tsupports Arg1:T1 Arg2:T1\n";
    let err = parse_standoff(ann, "ab cd", "d").unwrap_err();
    assert!(matches!(err, CorpusError::SelfRelation { .. }));
}

#[test]
fn offsets_are_code_points_not_bytes() {
    // Multi-byte characters before the unit shift byte offsets but not
    // code-point offsets.
    let txt = "Müller müsste zügig prüfen, ob Schüler Uniformen brauchen.";
    let surface = "Schüler Uniformen brauchen";
    let start = char_offset(txt, surface);
    let end = start + surface.chars().count();
    let ann = format!("T1\tClaim {start} {end}\t{surface}\n");
    let doc = parse_standoff(&ann, txt, "d").unwrap();
    assert_eq!(doc.units[0].surface, surface);
    assert_ne!(
        txt.find(surface).unwrap(),
        start,
        "byte and char offsets must differ here"
    );
}

#[test]
fn fixture_round_trips_through_serialization() {
    let doc = fixture_doc();
    let ann = serialize_standoff(&doc);
    let reparsed = parse_standoff(&ann, &doc.text, &doc.doc_id).unwrap();
    assert_eq!(doc, reparsed);
}

/// A consistent random document: units laid out left to right over generated
/// text, relations among distinct units, stances over a subset.
fn arb_document() -> impl Strategy<Value = Document> {
    let word = "[a-zéü]{1,10}";
    let unit_text =
        proptest::collection::vec(word.prop_map(String::from), 1..4).prop_map(|ws| ws.join(" "));
    proptest::collection::vec((unit_text, 0..3usize), 1..6).prop_flat_map(|units_kinds| {
        let n = units_kinds.len();
        let rel_pairs = proptest::collection::vec(
            ((0..n, 0..n), proptest::bool::ANY),
            0..if n > 1 { 5 } else { 1 },
        );
        let stance_picks = proptest::collection::vec(0..n, 0..3);
        (Just(units_kinds), rel_pairs, stance_picks).prop_map(|(uk, rels, stances)| {
            let mut text = String::new();
            let mut units = Vec::new();
            for (i, (surface, kind_idx)) in uk.iter().enumerate() {
                if i > 0 {
                    text.push_str(". ");
                }
                let start = text.chars().count();
                text.push_str(surface);
                let kind = match kind_idx {
                    0 => UnitKind::MajorClaim,
                    1 => UnitKind::Claim,
                    _ => UnitKind::Premise,
                };
                units.push(EauSpan {
                    unit_id: format!("T{}", i + 1),
                    kind,
                    start,
                    end: start + surface.chars().count(),
                    surface: surface.clone(),
                });
            }
            text.push('.');
            let mut relations = Vec::new();
            for (k, ((a, b), support)) in rels.into_iter().enumerate() {
                if a == b {
                    continue;
                }
                relations.push(RelationInstance {
                    rel_id: format!("R{}", k + 1),
                    source: format!("T{}", a + 1),
                    target: format!("T{}", b + 1),
                    label: if support {
                        RelationLabel::Support
                    } else {
                        RelationLabel::Attack
                    },
                    doc_id: "doc".to_string(),
                });
            }
            let stances = stances
                .into_iter()
                .enumerate()
                .map(|(k, u)| StanceAttribute {
                    attr_id: format!("A{}", k + 1),
                    name: "Stance".to_string(),
                    unit_id: format!("T{}", u + 1),
                    value: "For".to_string(),
                })
                .collect();
            Document {
                doc_id: "doc".to_string(),
                text,
                units,
                relations,
                stances,
            }
        })
    })
}

proptest! {
    #[test]
    fn serialization_round_trip_is_lossless(doc in arb_document()) {
        let ann = serialize_standoff(&doc);
        let reparsed = parse_standoff(&ann, &doc.text, &doc.doc_id).unwrap();
        prop_assert_eq!(doc, reparsed);
    }

    #[test]
    fn view_totality_holds_for_both_modes(doc in arb_document()) {
        let docs = vec![doc];
        let policy = SentencePolicy::default();
        for mode in [ViewMode::Essay, ViewMode::EssayContent] {
            let view = build_view(&docs, mode, &policy);
            prop_assert_eq!(view.instances.len(), docs[0].relations.len());
        }
    }
}

#[test]
fn essay_view_extends_to_covering_sentences() {
    let docs = vec![fixture_doc()];
    let policy = SentencePolicy::default();

    let essay = build_view(&docs, ViewMode::Essay, &policy);
    let content = build_view(&docs, ViewMode::EssayContent, &policy);
    assert_eq!(essay.instances.len(), 2);

    // R1: source T2 sits inside a sentence opened by "Moreover,"; target T1
    // inside one opened by "However,". The essay view exposes those tokens.
    let e = &essay.instances[0];
    assert_eq!(
        e.source_text,
        "Moreover, buying uniforms costs families extra money each year."
    );
    assert_eq!(
        e.target_text,
        "However, uniforms limit the students' freedom of expression."
    );

    // The content view is exactly the annotated spans.
    let c = &content.instances[0];
    assert_eq!(
        c.source_text,
        "buying uniforms costs families extra money each year"
    );
    assert_eq!(
        c.target_text,
        "uniforms limit the students' freedom of expression"
    );
    assert!(!c.source_text.contains("Moreover"));
    assert_eq!(c.rel_id, e.rel_id);
}

#[test]
fn content_view_texts_are_exact_span_slices() {
    let doc = fixture_doc();
    let view = build_view(
        std::slice::from_ref(&doc),
        ViewMode::EssayContent,
        &SentencePolicy::default(),
    );
    for inst in &view.instances {
        let rel = doc
            .relations
            .iter()
            .find(|r| r.qualified_id() == inst.rel_id)
            .unwrap();
        let source = doc.unit(&rel.source).unwrap();
        assert_eq!(
            inst.source_text,
            slice_chars(&doc.text, source.start, source.end)
        );
    }
}

#[test]
fn view_jsonl_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("view.jsonl");
    let view = build_view(
        &[fixture_doc()],
        ViewMode::Essay,
        &SentencePolicy::default(),
    );
    write_view_jsonl(&view, &path).unwrap();
    let back = read_view_jsonl(&path).unwrap();
    assert_eq!(view.mode, back.mode);
    assert_eq!(view.instances, back.instances);
}

#[test]
fn corpus_stats_count_labels() {
    let stats = corpus_stats(&[fixture_doc()]);
    assert_eq!(stats.essay_count, 1);
    assert_eq!(stats.relation_count, 2);
    assert_eq!(stats.support_count, 1);
    assert_eq!(stats.attack_count, 1);
    assert!((stats.support_fraction - 0.5).abs() < 1e-12);
}

#[test]
fn majority_macro_f1_follows_from_support_fraction() {
    // An all-support predictor has support F1 = 2p/(1+p) and attack F1 = 0,
    // so macro F1 = p/(1+p). At the documented test-split fraction this
    // lands on the published 47.8.
    let p: f64 = 0.9157;
    let macro_f1 = 100.0 * p / (1.0 + p);
    assert!((macro_f1 - 47.8).abs() < 0.05, "macro_f1 = {macro_f1}");
}

// Split behaviour -----------------------------------------------------------

/// `n_docs` synthetic documents; doc i carries `(i % 5) + 1` relations.
fn synthetic_docs(n_docs: usize) -> Vec<Document> {
    (0..n_docs)
        .map(|i| {
            let n_rel = (i % 5) + 1;
            let text = "ab cd".to_string();
            let units = vec![
                EauSpan {
                    unit_id: "T1".into(),
                    kind: UnitKind::Claim,
                    start: 0,
                    end: 2,
                    surface: "ab".into(),
                },
                EauSpan {
                    unit_id: "T2".into(),
                    kind: UnitKind::Premise,
                    start: 3,
                    end: 5,
                    surface: "cd".into(),
                },
            ];
            let relations = (0..n_rel)
                .map(|k| RelationInstance {
                    rel_id: format!("R{}", k + 1),
                    source: "T2".into(),
                    target: "T1".into(),
                    label: RelationLabel::Support,
                    doc_id: format!("essay{i:03}"),
                })
                .collect();
            Document {
                doc_id: format!("essay{i:03}"),
                text,
                units,
                relations,
                stances: Vec::new(),
            }
        })
        .collect()
}

#[test]
fn split_is_deterministic_and_seed_sensitive() {
    let docs = synthetic_docs(40);
    let test_docs: BTreeSet<String> = (0..8).map(|i| format!("essay{i:03}")).collect();
    let a = make_split(&docs, &test_docs, 30, 13).unwrap();
    let b = make_split(&docs, &test_docs, 30, 13).unwrap();
    assert_eq!(a, b);
    let c = make_split(&docs, &test_docs, 30, 14).unwrap();
    assert_ne!(
        a.dev, c.dev,
        "different seeds should draw different dev docs"
    );
}

#[test]
fn split_partitions_are_disjoint_and_document_atomic() {
    let docs = synthetic_docs(40);
    let test_docs: BTreeSet<String> = (0..8).map(|i| format!("essay{i:03}")).collect();
    let split = make_split(&docs, &test_docs, 30, 7).unwrap();

    let all: Vec<&String> = split
        .train
        .iter()
        .chain(&split.dev)
        .chain(&split.test)
        .collect();
    let unique: BTreeSet<&String> = all.iter().copied().collect();
    assert_eq!(all.len(), unique.len(), "partitions overlap");
    let total: usize = docs.iter().map(|d| d.relations.len()).sum();
    assert_eq!(all.len(), total);

    // All relations of one document land in the same partition.
    let doc_of = |qid: &String| qid.split('/').next().unwrap().to_string();
    let mut partition_of_doc: std::collections::BTreeMap<String, &str> = Default::default();
    for (name, ids) in [
        ("train", &split.train),
        ("dev", &split.dev),
        ("test", &split.test),
    ] {
        for qid in ids {
            let d = doc_of(qid);
            if let Some(prev) = partition_of_doc.insert(d.clone(), name) {
                assert_eq!(prev, name, "document {d} split across partitions");
            }
        }
    }
    // Official test docs end up in test.
    for qid in &split.test {
        assert!(test_docs.contains(&doc_of(qid)));
    }
}

#[test]
fn dev_size_approximates_target_within_one_document() {
    let docs = synthetic_docs(60);
    let test_docs = BTreeSet::new();
    let max_doc = docs.iter().map(|d| d.relations.len()).max().unwrap();
    for seed in 0..10u64 {
        let split = make_split(&docs, &test_docs, 50, seed).unwrap();
        let dev = split.dev.len() as i64;
        assert!(
            (dev - 50).abs() <= max_doc as i64,
            "seed {seed}: |dev| = {dev}, max doc = {max_doc}"
        );
    }
}

#[test]
fn zero_dev_count_gives_empty_dev() {
    let docs = synthetic_docs(10);
    let split = make_split(&docs, &BTreeSet::new(), 0, 1).unwrap();
    assert!(split.dev.is_empty());
    let total: usize = docs.iter().map(|d| d.relations.len()).sum();
    assert_eq!(split.train.len(), total);
}

#[test]
fn infeasible_dev_count_is_rejected() {
    let docs = synthetic_docs(4);
    let err = make_split(&docs, &BTreeSet::new(), 10_000, 1).unwrap_err();
    assert!(matches!(
        err,
        CorpusError::SplitInfeasible {
            requested: 10_000,
            ..
        }
    ));
}

#[test]
fn partition_of_reports_membership() {
    let docs = synthetic_docs(10);
    let split = make_split(&docs, &BTreeSet::new(), 5, 3).unwrap();
    let qid = &split.dev[0];
    assert_eq!(split.partition_of(qid), Some("dev"));
    assert_eq!(split.partition_of("essay999/R1"), None);
}

// Split table parsing --------------------------------------------------------

#[test]
fn split_table_accepts_both_delimiters_and_quotes() {
    let semicolon = "\"ID\";\"SET\"\n\"essay001\";\"TEST\"\n\"essay002\";\"TRAIN\"\n";
    let ids = split::parse_split_table(semicolon).unwrap();
    assert_eq!(ids.iter().collect::<Vec<_>>(), vec!["essay001"]);

    let comma = "ID,SET\nessay001,TRAIN\nessay002,TEST\nessay003,TEST\n";
    let ids = split::parse_split_table(comma).unwrap();
    assert_eq!(ids.len(), 2);
    assert!(ids.contains("essay002") && ids.contains("essay003"));
}

#[test]
fn split_table_rejects_unknown_partition() {
    let err = split::parse_split_table("ID;SET\nessay001;VALIDATE\n").unwrap_err();
    assert!(matches!(err, CorpusError::MalformedLine { .. }));
}

// Sentence splitting ---------------------------------------------------------

#[test]
fn sentences_split_on_terminal_punctuation() {
    let text = "First sentence. Second one! A question? Last";
    let policy = SentencePolicy::default();
    let spans = sentence_spans(text, &policy);
    let render: Vec<String> = spans
        .iter()
        .map(|&(s, e)| slice_chars(text, s, e))
        .collect();
    assert_eq!(
        render,
        vec!["First sentence.", "Second one!", "A question?", "Last"]
    );
}

#[test]
fn abbreviations_and_decimals_do_not_split() {
    let policy = SentencePolicy::default();
    let text = "Costs rose e.g. in cities by 3.5 percent. Everyone noticed.";
    let spans = sentence_spans(text, &policy);
    assert_eq!(spans.len(), 2);
    let first = slice_chars(text, spans[0].0, spans[0].1);
    assert_eq!(first, "Costs rose e.g. in cities by 3.5 percent.");
}

#[test]
fn newlines_end_sentences_without_punctuation() {
    let text = "An Essay Title\n\nBody starts here. And continues.";
    let spans = sentence_spans(text, &SentencePolicy::default());
    let render: Vec<String> = spans
        .iter()
        .map(|&(s, e)| slice_chars(text, s, e))
        .collect();
    assert_eq!(
        render,
        vec!["An Essay Title", "Body starts here.", "And continues."]
    );
}

#[test]
fn closing_quotes_attach_to_their_sentence() {
    let text = "He said \"stop.\" Then he left.";
    let spans = sentence_spans(text, &SentencePolicy::default());
    let render: Vec<String> = spans
        .iter()
        .map(|&(s, e)| slice_chars(text, s, e))
        .collect();
    assert_eq!(render, vec!["He said \"stop.\"", "Then he left."]);
}

// Directory loading -----------------------------------------------------------

#[test]
fn corpus_dir_loads_paired_files_sorted() {
    let dir = tempfile::tempdir().unwrap();
    for id in ["essay002", "essay001"] {
        std::fs::write(dir.path().join(format!("{id}.txt")), "ab cd").unwrap();
        std::fs::write(dir.path().join(format!("{id}.ann")), "T1\tClaim 0 2\tab\n").unwrap();
    }
    std::fs::write(dir.path().join("README.md"), "ignored").unwrap();
    let docs = load_corpus_dir(dir.path()).unwrap();
    assert_eq!(docs.len(), 2);
    assert_eq!(docs[0].doc_id, "essay001");
    assert_eq!(docs[1].doc_id, "essay002");
}

#[test]
fn missing_text_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("essay001.ann"), "").unwrap();
    let err = load_corpus_dir(dir.path()).unwrap_err();
    assert!(matches!(err, CorpusError::MissingFile("txt", id) if id == "essay001"));
}
