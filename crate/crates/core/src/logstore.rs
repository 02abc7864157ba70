//! Offline replay logs: full-sweep execution, JSON-lines persistence,
//! integrity validation and qid-level train/eval splitting.
//!
//! File layout (schema version 1): one header object on the first line, then
//! one record object per (qid, action). Records of one qid are contiguous and
//! in action order; the state features are stored on the action-0 record only.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{sweep_question, Action, ExecutionError, OutcomeFlags, QuestionSweep, NUM_ACTIONS};
use crate::corpus::{Corpus, ParagraphId, QuestionExample};
use crate::features::{features_from_probe, FeatureSpec};
use crate::generation::GeneratorBackend;
use crate::retriever::InvertedIndex;
use crate::slo::{compute_reward, SloProfile};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("log schema version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("incomplete or inconsistent sweep for qid {qid}: {message}")]
    Integrity { qid: String, message: String },
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("sample size {requested} exceeds the {available} available questions")]
    SampleSize { requested: usize, available: usize },
    #[error("sweep aborted: {failed} of {total} questions failed (limit {limit:.0}%)")]
    TooManyFailures { failed: usize, total: usize, limit: f64 },
    #[error("cannot split: {0}")]
    Split(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LogError + '_ {
    move |source| LogError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub schema_version: u32,
    pub features: FeatureSpec,
    pub backend: String,
    pub seed: u64,
    pub sample_size: usize,
    pub corpus_hash: String,
    pub config_hash: String,
    /// Wall-clock creation time (unix seconds); excluded from determinism checks.
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggedRecord {
    pub qid: String,
    pub action: Action,
    pub answerable: bool,
    pub flags: OutcomeFlags,
    pub answer_text: String,
    pub retrieved: Vec<ParagraphId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    pub backend: String,
    /// Unix seconds; excluded from determinism checks.
    pub timestamp: u64,
}

/// All five logged outcomes of one question.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionLog {
    pub qid: String,
    pub answerable: bool,
    pub features: Vec<f64>,
    /// Indexed by action id.
    pub records: Vec<LoggedRecord>,
}

impl QuestionLog {
    pub fn flags(&self, action: Action) -> &OutcomeFlags {
        &self.records[action.id() as usize].flags
    }

    pub fn rewards(&self, profile: &SloProfile) -> [f64; NUM_ACTIONS] {
        let mut r = [0.0; NUM_ACTIONS];
        for (slot, rec) in r.iter_mut().zip(&self.records) {
            *slot = compute_reward(&rec.flags, profile);
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogDataset {
    pub header: LogHeader,
    pub questions: Vec<QuestionLog>,
}

impl LogDataset {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.header.features.total_dim()
    }

    fn subset(&self, keep: &HashSet<&str>) -> LogDataset {
        LogDataset {
            header: self.header.clone(),
            questions: self.questions.iter().filter(|q| keep.contains(q.qid.as_str())).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub sample_size: usize,
    pub seed: u64,
    pub features: FeatureSpec,
    /// Abort when more than this fraction of questions fail.
    pub max_fail_fraction: f64,
    pub max_in_flight: usize,
    pub corpus_hash: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub requested: usize,
    pub logged: usize,
    pub failed: usize,
    pub failed_qids: Vec<String>,
    pub records: usize,
    pub total_cost_tokens: u64,
    pub backend: String,
    pub seed: u64,
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Samples `sample_size` questions without replacement (seeded), in sample order.
pub fn sample_questions(
    examples: &[QuestionExample],
    sample_size: usize,
    seed: u64,
) -> Result<Vec<&QuestionExample>, LogError> {
    if sample_size > examples.len() {
        return Err(LogError::SampleSize { requested: sample_size, available: examples.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, examples.len(), sample_size)
        .into_iter()
        .map(|i| &examples[i])
        .collect())
}

fn records_for(example: &QuestionExample, sweep: QuestionSweep, spec: &FeatureSpec, backend: &str, ts: u64) -> Vec<LoggedRecord> {
    let features = features_from_probe(&example.question, &sweep.probe, spec);
    sweep
        .outcomes
        .into_iter()
        .map(|o| LoggedRecord {
            qid: example.qid.clone(),
            action: o.action,
            answerable: example.answerable,
            flags: o.flags,
            answer_text: o.answer_text,
            retrieved: o.retrieval.doc_ids,
            features: (o.action == Action::Guarded2).then(|| features.clone()),
            backend: backend.to_string(),
            timestamp: ts,
        })
        .collect()
}

/// Runs the full action sweep over a seeded sample and writes the log
/// atomically to `path`.
pub fn run_sweep(
    examples: &[QuestionExample],
    corpus: &Corpus,
    index: &InvertedIndex,
    backend: &dyn GeneratorBackend,
    opts: &SweepOptions,
    path: &Path,
) -> Result<SweepSummary, LogError> {
    let sample = sample_questions(examples, opts.sample_size, opts.seed)?;
    if sample.is_empty() {
        log::warn!("sweep sample is empty; writing header only");
    }

    let results: Mutex<Vec<Option<Result<QuestionSweep, ExecutionError>>>> =
        Mutex::new((0..sample.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = opts.max_in_flight.max(1).min(sample.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= sample.len() {
                    break;
                }
                let r = sweep_question(sample[i], corpus, index, backend);
                results.lock().expect("sweep results poisoned")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("sweep results poisoned");

    let mut summary = SweepSummary {
        requested: sample.len(),
        logged: 0,
        failed: 0,
        failed_qids: Vec::new(),
        records: 0,
        total_cost_tokens: 0,
        backend: backend.name().to_string(),
        seed: opts.seed,
    };
    let ts = now_secs();
    let mut lines = Vec::new();
    for (example, result) in sample.iter().zip(results) {
        match result.expect("every sampled question is processed") {
            Ok(sweep) => {
                summary.logged += 1;
                for rec in records_for(example, sweep, &opts.features, backend.name(), ts) {
                    summary.records += 1;
                    summary.total_cost_tokens += rec.flags.cost_tokens;
                    lines.push(serde_json::to_string(&rec).expect("record serializes"));
                }
            }
            Err(e) => {
                log::error!("{e}");
                summary.failed += 1;
                summary.failed_qids.push(example.qid.clone());
            }
        }
    }
    if !sample.is_empty() && summary.failed as f64 / sample.len() as f64 > opts.max_fail_fraction {
        return Err(LogError::TooManyFailures {
            failed: summary.failed,
            total: sample.len(),
            limit: opts.max_fail_fraction * 100.0,
        });
    }

    let header = LogHeader {
        schema_version: SCHEMA_VERSION,
        features: opts.features,
        backend: backend.name().to_string(),
        seed: opts.seed,
        sample_size: opts.sample_size,
        corpus_hash: opts.corpus_hash.clone(),
        config_hash: opts.config_hash.clone(),
        created_at: ts,
    };
    let mut body = serde_json::to_string(&header).expect("header serializes");
    body.push('\n');
    for l in lines {
        body.push_str(&l);
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())?;
    Ok(summary)
}

/// Writes via a temporary sibling file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), LogError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| LogError::Io { path: path.display().to_string(), source: e.error })?;
    Ok(())
}

/// Reads and validates a log: header version, then full-sweep completeness
/// and feature consistency for every qid.
pub fn read_log(path: &Path) -> Result<LogDataset, LogError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, first) = lines.next().ok_or(LogError::Format { line: 1, message: "empty log file".into() })?;
    let first = first.map_err(io_err(path))?;
    let raw: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| LogError::Format { line: 1, message: e.to_string() })?;
    let version = raw.get("schema_version").and_then(|v| v.as_u64()).ok_or(LogError::Format {
        line: 1,
        message: "first line is not a log header".into(),
    })?;
    if version != SCHEMA_VERSION as u64 {
        return Err(LogError::Version { found: version as u32, expected: SCHEMA_VERSION });
    }
    let header: LogHeader =
        serde_json::from_value(raw).map_err(|e| LogError::Format { line: 1, message: e.to_string() })?;

    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<LoggedRecord>> = HashMap::new();
    for (i, line) in lines {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LoggedRecord =
            serde_json::from_str(&line).map_err(|e| LogError::Format { line: i + 1, message: e.to_string() })?;
        if !grouped.contains_key(&rec.qid) {
            order.push(rec.qid.clone());
        }
        grouped.entry(rec.qid.clone()).or_default().push(rec);
    }

    let dim = header.features.total_dim();
    let mut questions = Vec::with_capacity(order.len());
    for qid in order {
        let mut recs = grouped.remove(&qid).expect("qid recorded");
        questions.push(assemble_question(qid, &mut recs, dim)?);
    }
    Ok(LogDataset { header, questions })
}

fn assemble_question(qid: String, recs: &mut Vec<LoggedRecord>, dim: usize) -> Result<QuestionLog, LogError> {
    let integrity = |message: String| LogError::Integrity { qid: qid.clone(), message };
    recs.sort_by_key(|r| r.action);
    let ids: Vec<u8> = recs.iter().map(|r| r.action.id()).collect();
    if ids != [0, 1, 2, 3, 4] {
        return Err(integrity(format!("expected actions [0, 1, 2, 3, 4], found {ids:?}")));
    }
    let answerable = recs[0].answerable;
    if recs.iter().any(|r| r.answerable != answerable) {
        return Err(integrity("answerability differs across records".into()));
    }
    for r in recs.iter() {
        if !r.flags.is_consistent(answerable, r.action.retrieval_k() > 0) {
            return Err(integrity(format!("inconsistent outcome flags for action {}", r.action.id())));
        }
    }
    let features = recs[0]
        .features
        .clone()
        .ok_or_else(|| integrity("action-0 record carries no features".into()))?;
    if recs[1..].iter().any(|r| r.features.as_ref().is_some_and(|f| *f != features)) {
        return Err(integrity("features differ across records".into()));
    }
    if features.len() != dim {
        return Err(LogError::Dimension { expected: dim, found: features.len() });
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(integrity("non-finite feature value".into()));
    }
    Ok(QuestionLog { qid, answerable, features, records: std::mem::take(recs) })
}

/// Eval fraction that yields 200 eval questions when at least 400 are logged,
/// otherwise an even split.
pub fn default_eval_fraction(num_questions: usize) -> f64 {
    if num_questions >= 400 {
        200.0 / num_questions as f64
    } else {
        0.5
    }
}

/// Seeded qid-level split into (train, eval). Both keep file order.
pub fn split_log(dataset: &LogDataset, eval_fraction: f64, seed: u64) -> Result<(LogDataset, LogDataset), LogError> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(LogError::Split(format!("eval_fraction {eval_fraction} must lie in (0, 1)")));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(LogError::Split(format!("need at least 2 questions, have {n}")));
    }
    let mut qids: Vec<&str> = dataset.questions.iter().map(|q| q.qid.as_str()).collect();
    qids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_eval = ((n as f64 * eval_fraction).round() as usize).clamp(1, n - 1);
    let eval: HashSet<&str> = qids[..n_eval].iter().copied().collect();
    let train: HashSet<&str> = qids[n_eval..].iter().copied().collect();
    Ok((dataset.subset(&train), dataset.subset(&eval)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fraction_targets_two_hundred() {
        assert!((default_eval_fraction(1000) * 1000.0 - 200.0).abs() < 1e-9);
        assert_eq!(default_eval_fraction(200), 0.5);
    }

    #[test]
    fn sample_rejects_oversize() {
        assert!(matches!(sample_questions(&[], 1, 0), Err(LogError::SampleSize { .. })));
    }
}
