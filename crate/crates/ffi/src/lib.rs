//! C ABI over the plausrank core, for binding from other languages.
//!
//! Conventions:
//! - Every fallible function returns a [`PrStatus`] and writes results
//!   through out-pointers; `PR_STATUS_OK` means the out-values are valid.
//! - Handles (`PrCorpus`, `PrScorer`) are opaque; release them with the
//!   matching `*_free` function exactly once.
//! - On any non-OK status, [`pr_last_error_message`] returns a description
//!   that stays valid until the next call on the same thread.
//! - No call unwinds across the boundary; panics surface as `PR_STATUS_PANIC`.
//!
//! The C header is generated into `include/plausrank.h` by the build script.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use plausrank::corpus::{load_corpus_dir, Document, RelationLabel, ViewInstance};
use plausrank::embed::HashEmbedder;
use plausrank::eval::classify;
use plausrank::model::{EncoderConfig, ModelParams};
use plausrank::reconstruct::{build_minimal_pair, connector_by_abbrev, ProperNounGuard};
use plausrank::train::{load_checkpoint, EmbeddedPair};

/// Result of every fallible call in this interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrStatus {
    /// Success; out-parameters hold valid values.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// Arguments were well-formed but unusable (unknown connector, empty text).
    InvalidArgument = 3,
    /// The corpus directory could not be read or parsed.
    CorpusError = 4,
    /// The checkpoint could not be loaded, or scoring failed.
    ModelError = 5,
    /// An internal panic was caught at the boundary.
    Panic = 6,
}

/// Relation label produced by the scorer.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrLabel {
    Support = 0,
    Attack = 1,
}

/// One classification outcome: the label and both reading scores.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PrClassification {
    pub label: PrLabel,
    pub score_support: f64,
    pub score_attack: f64,
}

/// A loaded corpus directory. Opaque; create with `pr_corpus_load`, release
/// with `pr_corpus_free`.
pub struct PrCorpus {
    docs: Vec<Document>,
}

/// A loaded checkpoint plus its deterministic embedder. Opaque; create with
/// `pr_scorer_open`, release with `pr_scorer_free`.
pub struct PrScorer {
    params: ModelParams,
    encoder: EncoderConfig,
    provider: HashEmbedder,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let clean = message.replace('\0', " ");
    let c = CString::new(clean).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn fail(status: PrStatus, message: &str) -> PrStatus {
    set_error(message);
    status
}

/// Run a body with panic containment so nothing unwinds into C.
fn contained(body: impl FnOnce() -> PrStatus) -> PrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(PrStatus::Panic, "internal panic caught at the C boundary"),
    }
}

/// Borrow a C string argument, reporting null and encoding problems.
unsafe fn text_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, PrStatus> {
    if ptr.is_null() {
        return Err(fail(PrStatus::NullArgument, &format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(PrStatus::Utf8, &format!("{name} is not valid UTF-8")))
}

/// Message for the most recent non-OK status on this thread. Never null;
/// empty before any failure. The pointer is invalidated by the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn pr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn pr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load every document of a brat-style corpus directory.
///
/// On success writes a handle to `out_corpus`; the caller owns it and must
/// release it with `pr_corpus_free`.
#[no_mangle]
pub unsafe extern "C" fn pr_corpus_load(
    dir: *const c_char,
    out_corpus: *mut *mut PrCorpus,
) -> PrStatus {
    contained(|| {
        if out_corpus.is_null() {
            return fail(PrStatus::NullArgument, "out_corpus is null");
        }
        let dir = match text_arg(dir, "dir") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match load_corpus_dir(Path::new(dir)) {
            Ok(docs) => {
                *out_corpus = Box::into_raw(Box::new(PrCorpus { docs }));
                PrStatus::Ok
            }
            Err(e) => fail(PrStatus::CorpusError, &e.to_string()),
        }
    })
}

/// Number of documents in the corpus.
#[no_mangle]
pub unsafe extern "C" fn pr_corpus_document_count(
    corpus: *const PrCorpus,
    out_count: *mut u64,
) -> PrStatus {
    contained(|| {
        if corpus.is_null() || out_count.is_null() {
            return fail(PrStatus::NullArgument, "corpus or out_count is null");
        }
        *out_count = (*corpus).docs.len() as u64;
        PrStatus::Ok
    })
}

/// Total number of argumentative relations across all documents.
#[no_mangle]
pub unsafe extern "C" fn pr_corpus_relation_count(
    corpus: *const PrCorpus,
    out_count: *mut u64,
) -> PrStatus {
    contained(|| {
        if corpus.is_null() || out_count.is_null() {
            return fail(PrStatus::NullArgument, "corpus or out_count is null");
        }
        *out_count = (*corpus)
            .docs
            .iter()
            .map(|d| d.relations.len() as u64)
            .sum();
        PrStatus::Ok
    })
}

/// Release a corpus handle. Passing null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pr_corpus_free(corpus: *mut PrCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Open a scorer from a checkpoint directory (`manifest.json` + `params.bin`,
/// as written by the pipeline's train step).
///
/// Texts are embedded with the built-in deterministic hash embedder at
/// `embedder_seed`, sized to the checkpoint's input width; use the same seed
/// the checkpoint was trained with. On success writes a handle to
/// `out_scorer`; release it with `pr_scorer_free`.
#[no_mangle]
pub unsafe extern "C" fn pr_scorer_open(
    checkpoint_dir: *const c_char,
    embedder_seed: u64,
    out_scorer: *mut *mut PrScorer,
) -> PrStatus {
    contained(|| {
        if out_scorer.is_null() {
            return fail(PrStatus::NullArgument, "out_scorer is null");
        }
        let dir = match text_arg(checkpoint_dir, "checkpoint_dir") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match load_checkpoint(Path::new(dir)) {
            Ok(checkpoint) => {
                let provider = HashEmbedder::new(embedder_seed, checkpoint.encoder.d_input);
                *out_scorer = Box::into_raw(Box::new(PrScorer {
                    params: checkpoint.params,
                    encoder: checkpoint.encoder,
                    provider,
                }));
                PrStatus::Ok
            }
            Err(e) => fail(PrStatus::ModelError, &e.to_string()),
        }
    })
}

/// Classify the relation from `source` to `target` using one connector pair
/// (by abbreviation, e.g. "M/H"): reconstruct both readings, score each, and
/// pick the better-scoring label.
#[no_mangle]
pub unsafe extern "C" fn pr_scorer_classify(
    scorer: *const PrScorer,
    connector_abbrev: *const c_char,
    target: *const c_char,
    source: *const c_char,
    out: *mut PrClassification,
) -> PrStatus {
    contained(|| {
        if scorer.is_null() || out.is_null() {
            return fail(PrStatus::NullArgument, "scorer or out is null");
        }
        let connector_abbrev = match text_arg(connector_abbrev, "connector_abbrev") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let target = match text_arg(target, "target") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let source = match text_arg(source, "source") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let scorer = &*scorer;

        let connector = match connector_by_abbrev(connector_abbrev) {
            Ok(c) => c,
            Err(e) => return fail(PrStatus::InvalidArgument, &e.to_string()),
        };
        // The reconstruction needs an instance; the gold label slot is not
        // consulted when scoring both readings.
        let instance = ViewInstance {
            rel_id: "ffi/R1".to_string(),
            doc_id: "ffi".to_string(),
            source_text: source.to_string(),
            target_text: target.to_string(),
            label: RelationLabel::Support,
        };
        let guard = ProperNounGuard::from_text(&format!("{target}\n{source}"));
        let pair = match build_minimal_pair(&instance, &connector, &guard) {
            Ok(p) => p,
            Err(e) => return fail(PrStatus::InvalidArgument, &e.to_string()),
        };
        let embedded = match EmbeddedPair::from_minimal_pair(&pair, &scorer.provider) {
            Ok(p) => p,
            Err(e) => return fail(PrStatus::ModelError, &e.to_string()),
        };
        match classify(&embedded, &scorer.params, &scorer.encoder) {
            Ok(prediction) => {
                let label = match prediction.predicted {
                    RelationLabel::Support => PrLabel::Support,
                    RelationLabel::Attack => PrLabel::Attack,
                };
                *out = PrClassification {
                    label,
                    score_support: prediction.score_support,
                    score_attack: prediction.score_attack,
                };
                PrStatus::Ok
            }
            Err(e) => fail(PrStatus::ModelError, &e.to_string()),
        }
    })
}

/// Release a scorer handle. Passing null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pr_scorer_free(scorer: *mut PrScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}
