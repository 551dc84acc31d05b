//! Train/dev/test splitting at document granularity.
//!
//! The corpus ships a train/test partition table; the dev set is carved out
//! of the training documents by a seeded shuffle, whole documents at a time,
//! stopping as close to the requested relation count as possible. Keeping
//! documents atomic prevents essay-internal leakage between partitions.

use super::{CorpusError, Document};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

/// Disjoint relation-id partitions (qualified ids), document-atomic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl DataSplit {
    pub fn partition_of(&self, rel_id: &str) -> Option<&'static str> {
        if self.train.iter().any(|r| r == rel_id) {
            Some("train")
        } else if self.dev.iter().any(|r| r == rel_id) {
            Some("dev")
        } else if self.test.iter().any(|r| r == rel_id) {
            Some("test")
        } else {
            None
        }
    }
}

/// Read the corpus-distributed split table: a CSV with a document-id column
/// and a partition column (`TRAIN` / `TEST`), `;` or `,` separated, with or
/// without quoting. Returns the set of test document ids.
pub fn read_split_table(path: &Path) -> Result<BTreeSet<String>, CorpusError> {
    let content = std::fs::read_to_string(path)?;
    parse_split_table(&content)
}

pub fn parse_split_table(content: &str) -> Result<BTreeSet<String>, CorpusError> {
    let delim = if content.lines().next().is_some_and(|l| l.contains(';')) {
        b';'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(true)
        .flexible(true)
        .from_reader(content.as_bytes());
    let mut test_docs = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| CorpusError::MalformedLine {
            doc_id: "split-table".to_string(),
            line_no: 0,
            reason: e.to_string(),
        })?;
        if record.len() < 2 {
            continue;
        }
        let doc_id = record[0].trim_matches('"').trim().to_string();
        let partition = record[1].trim_matches('"').trim().to_ascii_uppercase();
        match partition.as_str() {
            "TEST" => {
                test_docs.insert(doc_id);
            }
            "TRAIN" | "DEV" => {}
            other => {
                return Err(CorpusError::MalformedLine {
                    doc_id: "split-table".to_string(),
                    line_no: 0,
                    reason: format!("unknown partition {other:?} for {doc_id}"),
                })
            }
        }
    }
    Ok(test_docs)
}

/// Build the three partitions.
///
/// Test relations come from `official_test_docs`. Dev documents are drawn by
/// a seeded shuffle of the remaining documents until their relation count
/// best approximates `dev_count` without splitting any document; everything
/// else is train. Deterministic for a fixed seed.
pub fn make_split(
    docs: &[Document],
    official_test_docs: &BTreeSet<String>,
    dev_count: usize,
    seed: u64,
) -> Result<DataSplit, CorpusError> {
    let mut test = Vec::new();
    let mut train_docs: Vec<&Document> = Vec::new();
    for doc in docs {
        if official_test_docs.contains(&doc.doc_id) {
            test.extend(doc.relations.iter().map(|r| r.qualified_id()));
        } else {
            train_docs.push(doc);
        }
    }
    let available: usize = train_docs.iter().map(|d| d.relations.len()).sum();
    if dev_count > available {
        return Err(CorpusError::SplitInfeasible {
            requested: dev_count,
            available,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    order.shuffle(&mut rng);

    let mut dev_doc_idx: Vec<usize> = Vec::new();
    let mut count = 0usize;
    for &idx in &order {
        if count >= dev_count {
            break;
        }
        dev_doc_idx.push(idx);
        count += train_docs[idx].relations.len();
    }
    // The last document may overshoot; keep whichever side of the target is
    // closer, preferring the larger set on a tie.
    if let Some(&last) = dev_doc_idx.last() {
        let last_rels = train_docs[last].relations.len();
        let over = count.saturating_sub(dev_count);
        let under = dev_count.saturating_sub(count - last_rels);
        if over > under {
            dev_doc_idx.pop();
        }
    }

    let dev_set: BTreeSet<usize> = dev_doc_idx.into_iter().collect();
    let mut train = Vec::new();
    let mut dev = Vec::new();
    for (idx, doc) in train_docs.iter().enumerate() {
        let bucket = if dev_set.contains(&idx) {
            &mut dev
        } else {
            &mut train
        };
        bucket.extend(doc.relations.iter().map(|r| r.qualified_id()));
    }

    Ok(DataSplit {
        train,
        dev,
        test,
        seed,
    })
}
