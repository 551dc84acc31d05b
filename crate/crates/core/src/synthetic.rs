//! Deterministic synthetic data for self-contained experiments.
//!
//! Two generators live here. The pair task plants the plausibility signal in
//! the connector slot: the gold-consistent reading always carries a marker
//! from a "plausible" vocabulary and the other reading one from an
//! "implausible" vocabulary, so a linear scorer over token embeddings can
//! already rank the readings. The standoff fixture writes a corpus-shaped
//! directory of annotated essays with a train/test table, sized so the
//! full plan matches the real corpus statistics. Everything is seeded or
//! purely positional, so both generators are reproducible everywhere.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use crate::corpus::{
    serialize_standoff, Document, EauSpan, RelationInstance, RelationLabel, StanceAttribute,
    UnitKind, ViewInstance,
};
use crate::embed::HashEmbedder;
use crate::pipeline::write_string_atomic;
use crate::reconstruct::{build_minimal_pair, ConnectorPair, ProperNounGuard};
use crate::train::EmbeddedPair;

const FILLERS: [&str; 12] = [
    "the", "a", "point", "claim", "essay", "school", "city", "idea", "plan", "value", "note",
    "case",
];
const PLAUSIBLE_MARKERS: [&str; 4] = ["clearly", "indeed", "naturally", "plainly"];
const IMPLAUSIBLE_MARKERS: [&str; 4] = ["purple", "seven", "quietly", "upside"];

/// Seed of the shared embedding space; fixed so every pair of one task (and
/// of repeated generator calls) lives in the same space.
const EMBED_SEED: u64 = 1311;

/// Generate `n` embedded minimal pairs of a linearly separable ranking task
/// over `d`-dimensional hash embeddings. `support_fraction` sets the expected
/// share of support-labeled pairs.
pub fn separable_pairs(n: usize, d: usize, support_fraction: f64, seed: u64) -> Vec<EmbeddedPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let provider = HashEmbedder::new(EMBED_SEED, d);
    let guard = ProperNounGuard::empty();
    (0..n)
        .map(|i| {
            let gold = if rng.random_range(0.0..1.0) < support_fraction {
                RelationLabel::Support
            } else {
                RelationLabel::Attack
            };
            let phrase = |rng: &mut ChaCha8Rng| -> String {
                let count = rng.random_range(2..=3usize);
                (0..count)
                    .map(|_| FILLERS[rng.random_range(0..FILLERS.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let target_text = phrase(&mut rng);
            let source_text = phrase(&mut rng);
            let plausible = PLAUSIBLE_MARKERS[rng.random_range(0..PLAUSIBLE_MARKERS.len())];
            let implausible = IMPLAUSIBLE_MARKERS[rng.random_range(0..IMPLAUSIBLE_MARKERS.len())];
            // The gold-consistent reading gets the plausible marker.
            let (support_marker, attack_marker) = match gold {
                RelationLabel::Support => (plausible, implausible),
                RelationLabel::Attack => (implausible, plausible),
            };
            let connector = ConnectorPair {
                abbreviation: "SYN".to_string(),
                support_marker: support_marker.to_string(),
                attack_marker: attack_marker.to_string(),
                linguistic: true,
            };
            let instance = ViewInstance {
                rel_id: format!("syn/R{i}"),
                doc_id: "syn".to_string(),
                source_text,
                target_text,
                label: gold,
            };
            let pair = build_minimal_pair(&instance, &connector, &guard)
                .expect("generated units are never empty");
            EmbeddedPair::from_minimal_pair(&pair, &provider)
                .expect("the hashing embedder is total on non-empty text")
        })
        .collect()
}

/// File name of the partition table written next to the fixture essays.
pub const FIXTURE_SPLIT_FILE: &str = "train-test-split.csv";

/// Shape of a generated standoff corpus fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixturePlan {
    pub essays: usize,
    pub test_essays: usize,
    pub test_support: usize,
    pub test_attack: usize,
    pub train_support: usize,
    pub train_attack: usize,
}

impl FixturePlan {
    /// Corpus-scale plan: 402 essays and 3,832 relations, with a test
    /// partition whose class balance puts the all-support baseline at macro
    /// F1 47.8.
    pub fn full() -> Self {
        FixturePlan {
            essays: 402,
            test_essays: 80,
            test_support: 694,
            test_attack: 64,
            train_support: 2919,
            train_attack: 155,
        }
    }

    /// Three essays and a dozen relations, for fast end-to-end plumbing
    /// tests.
    pub fn tiny() -> Self {
        FixturePlan {
            essays: 3,
            test_essays: 1,
            test_support: 3,
            test_attack: 1,
            train_support: 6,
            train_attack: 2,
        }
    }

    pub fn relation_total(&self) -> usize {
        self.test_support + self.test_attack + self.train_support + self.train_attack
    }
}

const TOPICS: [&str; 12] = [
    "public transport",
    "school uniforms",
    "online learning",
    "urban gardens",
    "recycling programs",
    "community libraries",
    "bicycle lanes",
    "local museums",
    "music education",
    "school sports",
    "city parks",
    "café culture",
];
const BENEFITS: [&str; 8] = [
    "daily life",
    "the local economy",
    "student focus",
    "public health",
    "community spirit",
    "air quality",
    "civic engagement",
    "family budgets",
];
const DRAWBACKS: [&str; 6] = [
    "municipal budgets",
    "nearby residents",
    "small businesses",
    "daily schedules",
    "maintenance costs",
    "parking capacity",
];
const SUPPORT_LEADS: [&str; 5] = [
    "Research shows that ",
    "Many studies indicate that ",
    "Experience suggests that ",
    "Most residents agree that ",
    "Recent surveys found that ",
];
const ATTACK_LEADS: [&str; 3] = [
    "Critics point out that ",
    "Some residents argue that ",
    "It has been objected that ",
];
const SUPPORT_VERBS: [&str; 4] = [
    "can strengthen",
    "tends to improve",
    "often supports",
    "steadily lifts",
];

/// Distribute `total` items over `bins` as evenly as possible, earlier bins
/// first.
fn spread(total: usize, bins: usize) -> Vec<usize> {
    if bins == 0 {
        return Vec::new();
    }
    let base = total / bins;
    let rem = total % bins;
    (0..bins).map(|i| base + usize::from(i < rem)).collect()
}

/// Incremental essay assembly tracking code-point offsets for unit spans.
struct DocBuilder {
    text: String,
    chars: usize,
    units: Vec<EauSpan>,
    next_t: usize,
}

impl DocBuilder {
    fn new() -> Self {
        DocBuilder {
            text: String::new(),
            chars: 0,
            units: Vec::new(),
            next_t: 1,
        }
    }

    fn push(&mut self, s: &str) {
        self.text.push_str(s);
        self.chars += s.chars().count();
    }

    fn push_unit(&mut self, kind: UnitKind, surface: &str) -> String {
        let id = format!("T{}", self.next_t);
        self.next_t += 1;
        let start = self.chars;
        self.push(surface);
        self.units.push(EauSpan {
            unit_id: id.clone(),
            kind,
            start,
            end: self.chars,
            surface: surface.to_string(),
        });
        id
    }
}

/// Build one synthetic essay with `n_support` supporting and `n_attack`
/// attacking premises. Content is a pure function of `(doc_id, k, counts)`.
fn fixture_document(doc_id: &str, k: usize, n_support: usize, n_attack: usize) -> Document {
    let topic = TOPICS[k % TOPICS.len()];
    let benefit_a = BENEFITS[k % BENEFITS.len()];
    let benefit_b = BENEFITS[(k + 3) % BENEFITS.len()];
    let mut b = DocBuilder::new();

    b.push(&format!("Should cities invest in {topic}?\n\n"));

    b.push("In my view, ");
    let _mc = b.push_unit(
        UnitKind::MajorClaim,
        &format!("{topic} deserves strong public support"),
    );
    b.push(".\n");

    b.push("First of all, I believe that ");
    let claim_a = b.push_unit(
        UnitKind::Claim,
        &format!("investment in {topic} strengthens {benefit_a}"),
    );
    b.push(". ");

    // Premises alternate between the two claims; those of claim A come
    // before claim B is introduced, matching reading order.
    let mut relations = Vec::new();
    let mut rel_no = 1usize;
    let mut premises_a = Vec::new();
    let mut premises_b = Vec::new();
    for i in 0..n_support {
        let lead = SUPPORT_LEADS[(k + i) % SUPPORT_LEADS.len()];
        let verb = SUPPORT_VERBS[(k + 2 * i) % SUPPORT_VERBS.len()];
        let benefit = BENEFITS[(k + i) % BENEFITS.len()];
        let unit_text = format!("{topic} {verb} {benefit} in lasting ways");
        if i % 2 == 0 {
            premises_a.push((lead, unit_text));
        } else {
            premises_b.push((lead, unit_text));
        }
    }
    for (lead, unit_text) in premises_a {
        b.push(lead);
        let tid = b.push_unit(UnitKind::Premise, &unit_text);
        b.push(". ");
        relations.push((
            format!("R{rel_no}"),
            tid,
            claim_a.clone(),
            RelationLabel::Support,
        ));
        rel_no += 1;
    }
    b.push("\n");

    b.push("Beyond that, it seems clear that ");
    let claim_b = b.push_unit(
        UnitKind::Claim,
        &format!("wider access to {topic} improves {benefit_b}"),
    );
    b.push(". ");
    for (lead, unit_text) in premises_b {
        b.push(lead);
        let tid = b.push_unit(UnitKind::Premise, &unit_text);
        b.push(". ");
        relations.push((
            format!("R{rel_no}"),
            tid,
            claim_b.clone(),
            RelationLabel::Support,
        ));
        rel_no += 1;
    }
    for i in 0..n_attack {
        let lead = ATTACK_LEADS[(k + i) % ATTACK_LEADS.len()];
        let drawback = DRAWBACKS[(k + i) % DRAWBACKS.len()];
        let unit_text = format!("{topic} may strain {drawback} without careful planning");
        b.push(lead);
        let tid = b.push_unit(UnitKind::Premise, &unit_text);
        b.push(". ");
        relations.push((
            format!("R{rel_no}"),
            tid,
            claim_b.clone(),
            RelationLabel::Attack,
        ));
        rel_no += 1;
    }
    b.push("\n");

    let relations = relations
        .into_iter()
        .map(|(rel_id, source, target, label)| RelationInstance {
            rel_id,
            source,
            target,
            label,
            doc_id: doc_id.to_string(),
        })
        .collect();
    let stances = vec![
        StanceAttribute {
            attr_id: "A1".to_string(),
            name: "Stance".to_string(),
            unit_id: claim_a,
            value: "For".to_string(),
        },
        StanceAttribute {
            attr_id: "A2".to_string(),
            name: "Stance".to_string(),
            unit_id: claim_b,
            value: "For".to_string(),
        },
    ];
    Document {
        doc_id: doc_id.to_string(),
        text: b.text,
        units: b.units,
        relations,
        stances,
    }
}

/// Materialize the fixture corpus in memory: documents plus the test-doc
/// flag, in id order.
pub fn essay_fixture_documents(plan: &FixturePlan) -> Vec<(Document, bool)> {
    assert!(
        plan.test_essays <= plan.essays,
        "more test essays than essays"
    );
    let mut is_test = vec![false; plan.essays];
    let stride = if plan.test_essays == 0 {
        0
    } else {
        plan.essays / plan.test_essays
    };
    let mut count = 0usize;
    if stride > 0 {
        for (k, flag) in is_test.iter_mut().enumerate() {
            if count < plan.test_essays && k % stride == stride / 2 {
                *flag = true;
                count += 1;
            }
        }
    }
    let mut k = plan.essays;
    while count < plan.test_essays && k > 0 {
        k -= 1;
        if !is_test[k] {
            is_test[k] = true;
            count += 1;
        }
    }

    let test_support = spread(plan.test_support, plan.test_essays);
    let test_attack = spread(plan.test_attack, plan.test_essays);
    let train_support = spread(plan.train_support, plan.essays - plan.test_essays);
    let train_attack = spread(plan.train_attack, plan.essays - plan.test_essays);

    let mut docs = Vec::with_capacity(plan.essays);
    let (mut ti, mut ri) = (0usize, 0usize);
    for (idx, &test) in is_test.iter().enumerate() {
        let doc_id = format!("essay{:03}", idx + 1);
        let (n_support, n_attack) = if test {
            let v = (test_support[ti], test_attack[ti]);
            ti += 1;
            v
        } else {
            let v = (train_support[ri], train_attack[ri]);
            ri += 1;
            v
        };
        docs.push((fixture_document(&doc_id, idx, n_support, n_attack), test));
    }
    docs
}

/// Write the fixture corpus under `dir`: one `.txt`/`.ann` pair per essay
/// plus the `;`-separated partition table. Returns the documents in id
/// order. Output bytes are a pure function of the plan.
pub fn write_essay_fixture(dir: &Path, plan: &FixturePlan) -> std::io::Result<Vec<Document>> {
    std::fs::create_dir_all(dir)?;
    let docs = essay_fixture_documents(plan);
    let mut table = String::from("\"ID\";\"SET\"\n");
    for (doc, is_test) in &docs {
        write_string_atomic(&dir.join(format!("{}.txt", doc.doc_id)), &doc.text)?;
        write_string_atomic(
            &dir.join(format!("{}.ann", doc.doc_id)),
            &serialize_standoff(doc),
        )?;
        let set = if *is_test { "TEST" } else { "TRAIN" };
        table.push_str(&format!("\"{}\";\"{}\"\n", doc.doc_id, set));
    }
    write_string_atomic(&dir.join(FIXTURE_SPLIT_FILE), &table)?;
    Ok(docs.into_iter().map(|(d, _)| d).collect())
}
