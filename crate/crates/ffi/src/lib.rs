//! C ABI over the slorag core.
//!
//! Conventions:
//! - Every fallible function returns a [`SloragStatus`]; results go through
//!   out-pointers. On failure a message is available from
//!   [`slorag_last_error_message`] on the same thread.
//! - Objects are opaque handles created by `*_from_json`/`*_load`/`*_build`
//!   functions and released with the matching `*_free`.
//! - Strings returned to the caller must be released with [`slorag_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use slorag::control::{OutcomeFlags, NUM_ACTIONS};
use slorag::corpus::{self, Corpus, CorpusError};
use slorag::features::{extract_features, FeatureSpec, NUM_META};
use slorag::generation::detect_refusal;
use slorag::policy::{PolicyError, PolicyModel};
use slorag::retriever::{InvertedIndex, RetrieverError};
use slorag::slo::{compute_reward, SloProfile};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SloragStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Schema = 4,
    Range = 5,
    Dimension = 6,
    Io = 7,
    BufferTooSmall = 8,
    EmptyCorpus = 9,
    InvalidArgument = 10,
    Internal = 99,
}

/// Parsed SQuAD corpus.
pub struct SloragCorpus {
    inner: Corpus,
}

/// Retriever index.
pub struct SloragIndex {
    inner: InvertedIndex,
}

/// Trained routing policy.
pub struct SloragPolicy {
    inner: PolicyModel,
}

/// Outcome flags of one (question, action) execution.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SloragFlags {
    pub acc: bool,
    pub cost_tokens: u64,
    pub hall: bool,
    pub refusal: bool,
    /// +1 correct refusal, -1 incorrect refusal, 0 otherwise.
    pub refusal_correct: i8,
}

/// Reward weights. Refusal sub-weights are symmetric (1.0) across the ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SloragProfile {
    pub w_acc: f64,
    pub w_cost: f64,
    pub w_hall: f64,
    pub w_ref: f64,
    pub cost_scale: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: SloragStatus, msg: impl Into<String>) -> SloragStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting panics into `Internal` and clearing the last error on success.
fn guard(f: impl FnOnce() -> SloragStatus) -> SloragStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(SloragStatus::Ok) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SloragStatus::Ok
        }
        Ok(s) => s,
        Err(_) => fail(SloragStatus::Internal, "internal panic"),
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(SloragStatus::NullArgument, concat!("argument `", stringify!($p), "` is null"));
        })+
    };
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, SloragStatus> {
    if p.is_null() {
        return Err(fail(SloragStatus::NullArgument, format!("argument `{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SloragStatus::InvalidUtf8, format!("argument `{name}` is not valid UTF-8")))
}

fn corpus_status(e: &CorpusError) -> SloragStatus {
    match e {
        CorpusError::Json { .. } => SloragStatus::Parse,
        CorpusError::Schema { .. } => SloragStatus::Schema,
    }
}

fn policy_status(e: &PolicyError) -> SloragStatus {
    match e {
        PolicyError::Dimension { .. } => SloragStatus::Dimension,
        _ => SloragStatus::InvalidArgument,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slorag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next slorag call on the same thread.
#[no_mangle]
pub extern "C" fn slorag_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slorag_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Normalizes an answer string (lowercase, no punctuation, no articles,
/// collapsed whitespace).
///
/// # Safety
/// `text` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slorag_normalize_text(text: *const c_char, out: *mut *mut c_char) -> SloragStatus {
    guard(|| {
        non_null!(out);
        let text = match str_arg(text, "text") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let norm = corpus::normalize_text(text);
        *out = CString::new(norm).expect("normalized text has no NUL").into_raw();
        SloragStatus::Ok
    })
}

/// # Safety
/// `prediction` must be a valid string; `golds` an array of `num_golds` valid
/// strings (may be NULL when `num_golds` is 0); `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slorag_em_match(
    prediction: *const c_char,
    golds: *const *const c_char,
    num_golds: usize,
    out: *mut bool,
) -> SloragStatus {
    guard(|| {
        non_null!(out);
        let pred = match str_arg(prediction, "prediction") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let mut gold = Vec::with_capacity(num_golds);
        if num_golds > 0 {
            non_null!(golds);
            for i in 0..num_golds {
                match str_arg(*golds.add(i), "golds[i]") {
                    Ok(s) => gold.push(s),
                    Err(s) => return s,
                }
            }
        }
        *out = corpus::em_match(pred, &gold);
        SloragStatus::Ok
    })
}

/// # Safety
/// `answer` must be a valid string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slorag_detect_refusal(answer: *const c_char, out: *mut bool) -> SloragStatus {
    guard(|| {
        non_null!(out);
        match str_arg(answer, "answer") {
            Ok(s) => {
                *out = detect_refusal(s);
                SloragStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Parses SQuAD 2.0 JSON from memory.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slorag_corpus_from_json(data: *const u8, len: usize, out: *mut *mut SloragCorpus) -> SloragStatus {
    guard(|| {
        non_null!(data, out);
        let bytes = std::slice::from_raw_parts(data, len);
        match corpus::parse_squad(bytes) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SloragCorpus { inner }));
                SloragStatus::Ok
            }
            Err(e) => fail(corpus_status(&e), e.to_string()),
        }
    })
}

/// Reads and parses a SQuAD 2.0 JSON file.
///
/// # Safety
/// `path` must be a valid string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slorag_corpus_load(path: *const c_char, out: *mut *mut SloragCorpus) -> SloragStatus {
    guard(|| {
        non_null!(out);
        let path = match str_arg(path, "path") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) => return fail(SloragStatus::Io, format!("{path}: {e}")),
        };
        slorag_corpus_from_json(bytes.as_ptr(), bytes.len(), out)
    })
}

/// # Safety
/// `corpus` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn slorag_corpus_num_paragraphs(corpus: *const SloragCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.paragraphs.len())
}

/// # Safety
/// `corpus` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn slorag_corpus_num_questions(corpus: *const SloragCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.questions.len())
}

/// # Safety
/// `corpus` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slorag_corpus_free(corpus: *mut SloragCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Builds a BM25 index over the corpus paragraphs.
///
/// # Safety
/// `corpus` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slorag_index_build(corpus: *const SloragCorpus, out: *mut *mut SloragIndex) -> SloragStatus {
    guard(|| {
        non_null!(corpus, out);
        match InvertedIndex::build(&(*corpus).inner.paragraphs) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SloragIndex { inner }));
                SloragStatus::Ok
            }
            Err(e @ RetrieverError::EmptyCorpus) => fail(SloragStatus::EmptyCorpus, e.to_string()),
            Err(e) => fail(SloragStatus::Range, e.to_string()),
        }
    })
}

/// Top-`k` retrieval. Writes up to `capacity` ids and scores (best first) and
/// the number written to `written`. Returns `BufferTooSmall` (with `written`
/// set to the required size) when `capacity` is insufficient.
///
/// # Safety
/// `ids` and `scores` must have room for `capacity` elements (may be NULL when
/// `capacity` is 0); other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn slorag_index_retrieve(
    index: *const SloragIndex,
    query: *const c_char,
    k: usize,
    ids: *mut u32,
    scores: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> SloragStatus {
    guard(|| {
        non_null!(index, written);
        let query = match str_arg(query, "query") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let r = (*index).inner.retrieve(query, k);
        *written = r.len();
        if r.len() > capacity {
            return fail(SloragStatus::BufferTooSmall, format!("need room for {} results", r.len()));
        }
        if !r.is_empty() {
            non_null!(ids, scores);
            ptr::copy_nonoverlapping(r.doc_ids.as_ptr(), ids, r.len());
            ptr::copy_nonoverlapping(r.scores.as_ptr(), scores, r.len());
        }
        SloragStatus::Ok
    })
}

/// # Safety
/// `index` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn slorag_index_num_docs(index: *const SloragIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.num_docs())
}

/// # Safety
/// `index` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slorag_index_free(index: *mut SloragIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// State features of a question: `embed_dim` hashed-embedding entries followed
/// by five retrieval/length entries. `capacity` must be at least `embed_dim + 5`.
///
/// # Safety
/// `out` must have room for `capacity` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn slorag_extract_features(
    index: *const SloragIndex,
    question: *const c_char,
    embed_dim: usize,
    out: *mut f64,
    capacity: usize,
) -> SloragStatus {
    guard(|| {
        non_null!(index, out);
        let question = match str_arg(question, "question") {
            Ok(s) => s,
            Err(s) => return s,
        };
        if embed_dim == 0 {
            return fail(SloragStatus::InvalidArgument, "embed_dim must be > 0");
        }
        if capacity < embed_dim + NUM_META {
            return fail(SloragStatus::BufferTooSmall, format!("need room for {} features", embed_dim + NUM_META));
        }
        let f = extract_features(question, &(*index).inner, &FeatureSpec::new(embed_dim));
        ptr::copy_nonoverlapping(f.as_ptr(), out, f.len());
        SloragStatus::Ok
    })
}

/// Fills `out` with a built-in profile ("quality_first" or "cheap").
///
/// # Safety
/// `name` must be a valid string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slorag_profile_builtin(name: *const c_char, out: *mut SloragProfile) -> SloragStatus {
    guard(|| {
        non_null!(out);
        let name = match str_arg(name, "name") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let p = match name {
            "quality_first" => SloProfile::quality_first(),
            "cheap" => SloProfile::cheap(),
            other => return fail(SloragStatus::InvalidArgument, format!("unknown profile {other:?}")),
        };
        *out = SloragProfile { w_acc: p.w_acc, w_cost: p.w_cost, w_hall: p.w_hall, w_ref: p.w_ref, cost_scale: p.cost_scale };
        SloragStatus::Ok
    })
}

/// Reward of one outcome under a profile.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn slorag_compute_reward(
    flags: *const SloragFlags,
    profile: *const SloragProfile,
    out: *mut f64,
) -> SloragStatus {
    guard(|| {
        non_null!(flags, profile, out);
        let f = *flags;
        let p = *profile;
        if !matches!(f.refusal_correct, -1..=1) {
            return fail(SloragStatus::InvalidArgument, "refusal_correct must be -1, 0 or 1");
        }
        let mut prof = SloProfile::new("ffi", p.w_acc, p.w_cost, p.w_hall, p.w_ref);
        prof.cost_scale = p.cost_scale;
        if let Err(e) = prof.validate() {
            return fail(SloragStatus::InvalidArgument, e.to_string());
        }
        let flags = OutcomeFlags {
            acc: f.acc,
            cost_tokens: f.cost_tokens,
            hall: f.hall,
            refusal: f.refusal,
            refusal_correct: f.refusal_correct,
            hit: None,
        };
        *out = compute_reward(&flags, &prof);
        SloragStatus::Ok
    })
}

/// Parses a model from its JSON text.
///
/// # Safety
/// `json` must be a valid string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slorag_policy_from_json(json: *const c_char, out: *mut *mut SloragPolicy) -> SloragStatus {
    guard(|| {
        non_null!(out);
        let json = match str_arg(json, "json") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match PolicyModel::from_json(json) {
            Ok(inner) if inner.weights.len() == NUM_ACTIONS * inner.feature_dim => {
                *out = Box::into_raw(Box::new(SloragPolicy { inner }));
                SloragStatus::Ok
            }
            Ok(_) => fail(SloragStatus::Dimension, "weight matrix does not match feature_dim"),
            Err(e) => fail(SloragStatus::Parse, e.to_string()),
        }
    })
}

/// Loads a model file written by `slorag train`.
///
/// # Safety
/// `path` must be a valid string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slorag_policy_load(path: *const c_char, out: *mut *mut SloragPolicy) -> SloragStatus {
    guard(|| {
        non_null!(out);
        let path = match str_arg(path, "path") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(SloragStatus::Io, format!("{path}: {e}")),
        };
        let c = match CString::new(text) {
            Ok(c) => c,
            Err(_) => return fail(SloragStatus::Parse, "model file contains NUL"),
        };
        slorag_policy_from_json(c.as_ptr(), out)
    })
}

/// # Safety
/// `policy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn slorag_policy_feature_dim(policy: *const SloragPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.inner.feature_dim)
}

/// Action probabilities; `probs` receives 5 doubles.
///
/// # Safety
/// `features` must hold `len` doubles; `probs` room for 5.
#[no_mangle]
pub unsafe extern "C" fn slorag_policy_probabilities(
    policy: *const SloragPolicy,
    features: *const f64,
    len: usize,
    probs: *mut f64,
) -> SloragStatus {
    guard(|| {
        non_null!(policy, features, probs);
        let x = std::slice::from_raw_parts(features, len);
        match (*policy).inner.forward_softmax(x) {
            Ok(p) => {
                ptr::copy_nonoverlapping(p.as_ptr(), probs, NUM_ACTIONS);
                SloragStatus::Ok
            }
            Err(e) => fail(policy_status(&e), e.to_string()),
        }
    })
}

/// Greedy action id (0..=4).
///
/// # Safety
/// `features` must hold `len` doubles; `action` must be valid.
#[no_mangle]
pub unsafe extern "C" fn slorag_policy_predict(
    policy: *const SloragPolicy,
    features: *const f64,
    len: usize,
    action: *mut u8,
) -> SloragStatus {
    guard(|| {
        non_null!(policy, features, action);
        let x = std::slice::from_raw_parts(features, len);
        match (*policy).inner.predict_action(x) {
            Ok(a) => {
                *action = a.id();
                SloragStatus::Ok
            }
            Err(e) => fail(policy_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `policy` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slorag_policy_free(policy: *mut SloragPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}
