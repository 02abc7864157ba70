//! Stage functions behind the CLI: index, sweep, train, eval, report.
//!
//! Output directory layout:
//!
//! ```text
//! <out>/index.json              cached retriever index, keyed by corpus hash
//! <out>/sweep.jsonl             replay log
//! <out>/sweep_summary.json
//! <out>/models/<slo>_<objective>.json
//! <out>/evals/<slo>__<method>.json
//! <out>/report/...
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{hash_bytes, BackendKind, ConfigError, RunConfig};
use crate::control::Action;
use crate::corpus::{parse_squad, Corpus, CorpusError};
use crate::evalreport::{
    best_fixed_action, emit_report, evaluate_fixed, evaluate_policy_replay, EvalError, MetricsReport, ReportRow,
};
use crate::generation::{BackendError, GeneratorBackend, HttpBackend, SimulatedBackend};
use crate::logstore::{default_eval_fraction, read_log, run_sweep, split_log, write_atomic, LogDataset, LogError, SweepOptions, SweepSummary};
use crate::policy::{train_policy, LabeledSet, Objective, PolicyError, PolicyModel};
use crate::retriever::{InvertedIndex, RetrieverError};
use crate::slo::{find_profile, SloError};

pub const INDEX_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing {what} {path}; run `{hint}` first")]
    MissingArtifact { what: &'static str, path: String, hint: String },
    #[error("no corpus configured; pass --corpus or set `corpus` in the config")]
    NoCorpus,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed artifact {path}: {message}")]
    Artifact { path: String, message: String },
    #[error("artifacts disagree on corpus hash: {first} vs {second} ({path})")]
    CorpusMismatch { first: String, second: String, path: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Slo(#[from] SloError),
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

fn read_artifact(path: &Path, what: &'static str, hint: &str) -> Result<String> {
    if !path.exists() {
        return Err(PipelineError::MissingArtifact { what, path: path.display().to_string(), hint: hint.to_string() });
    }
    std::fs::read_to_string(path).map_err(io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    write_atomic(path, s.as_bytes())?;
    Ok(())
}

pub struct Paths {
    root: PathBuf,
}

impl Paths {
    pub fn new(cfg: &RunConfig) -> Self {
        Self { root: cfg.output_dir.clone() }
    }
    pub fn index(&self) -> PathBuf {
        self.root.join("index.json")
    }
    pub fn log(&self) -> PathBuf {
        self.root.join("sweep.jsonl")
    }
    pub fn sweep_summary(&self) -> PathBuf {
        self.root.join("sweep_summary.json")
    }
    pub fn model(&self, slo: &str, objective: Objective) -> PathBuf {
        self.root.join("models").join(format!("{slo}_{}.json", objective.tag()))
    }
    pub fn evals(&self) -> PathBuf {
        self.root.join("evals")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// Corpus bytes, parsed corpus and content hash.
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub hash: String,
}

pub fn load_corpus(cfg: &RunConfig) -> Result<LoadedCorpus> {
    let path = cfg.corpus.as_ref().ok_or(PipelineError::NoCorpus)?;
    let bytes = std::fs::read(path).map_err(io(path))?;
    let hash = hash_bytes(&bytes);
    Ok(LoadedCorpus { corpus: parse_squad(&bytes)?, hash })
}

#[derive(Serialize, Deserialize)]
struct IndexArtifact {
    schema_version: u32,
    corpus_hash: String,
    index: InvertedIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexStatus {
    Built,
    Skipped,
}

fn cached_index(path: &Path, corpus_hash: &str) -> Option<InvertedIndex> {
    let s = std::fs::read_to_string(path).ok()?;
    let art: IndexArtifact = serde_json::from_str(&s).ok()?;
    (art.schema_version == INDEX_SCHEMA_VERSION && art.corpus_hash == corpus_hash).then_some(art.index)
}

/// Builds and persists the index unless a cached one matches the corpus hash.
pub fn command_index(cfg: &RunConfig) -> Result<IndexStatus> {
    let loaded = load_corpus(cfg)?;
    let (_, status) = index_for(cfg, &loaded)?;
    Ok(status)
}

fn index_for(cfg: &RunConfig, loaded: &LoadedCorpus) -> Result<(InvertedIndex, IndexStatus)> {
    let path = Paths::new(cfg).index();
    if let Some(index) = cached_index(&path, &loaded.hash) {
        log::info!("index skipped (hash match): {}", path.display());
        return Ok((index, IndexStatus::Skipped));
    }
    let index = InvertedIndex::build(&loaded.corpus.paragraphs)?;
    let art = IndexArtifact { schema_version: INDEX_SCHEMA_VERSION, corpus_hash: loaded.hash.clone(), index };
    let s = serde_json::to_vec(&art).expect("index serializes");
    write_atomic(&path, &s)?;
    log::info!("index built: {} documents, {} terms", art.index.num_docs(), art.index.vocabulary_size());
    Ok((art.index, IndexStatus::Built))
}

fn make_backend(cfg: &RunConfig) -> Result<Box<dyn GeneratorBackend>> {
    Ok(match cfg.backend.kind {
        BackendKind::Sim => Box::new(SimulatedBackend),
        BackendKind::Http => Box::new(HttpBackend::from_env(cfg.backend.http.clone())?),
    })
}

/// Runs the full action sweep and writes the log plus its summary.
pub fn command_sweep(cfg: &RunConfig) -> Result<SweepSummary> {
    let loaded = load_corpus(cfg)?;
    let (index, _) = index_for(cfg, &loaded)?;
    let backend = make_backend(cfg)?;
    let max_in_flight = match cfg.backend.kind {
        BackendKind::Sim => std::thread::available_parallelism().map_or(1, |n| n.get()),
        BackendKind::Http => cfg.backend.http.max_in_flight,
    };
    let opts = SweepOptions {
        sample_size: cfg.sweep.sample_size,
        seed: cfg.sweep.seed,
        features: cfg.feature_spec(),
        max_fail_fraction: cfg.sweep.max_fail_fraction,
        max_in_flight,
        corpus_hash: loaded.hash.clone(),
        config_hash: cfg.hash(),
    };
    let paths = Paths::new(cfg);
    let summary = run_sweep(&loaded.corpus.questions, &loaded.corpus, &index, backend.as_ref(), &opts, &paths.log())?;
    write_json(&paths.sweep_summary(), &summary)?;
    Ok(summary)
}

fn load_log(cfg: &RunConfig) -> Result<LogDataset> {
    let path = Paths::new(cfg).log();
    if !path.exists() {
        return Err(PipelineError::MissingArtifact {
            what: "sweep log",
            path: path.display().to_string(),
            hint: "slorag sweep".into(),
        });
    }
    let log = read_log(&path)?;
    let expected = cfg.feature_spec().total_dim();
    if log.feature_dim() != expected {
        return Err(LogError::Dimension { expected, found: log.feature_dim() }.into());
    }
    Ok(log)
}

/// Train/eval split of the logged sweep as configured.
pub fn split(cfg: &RunConfig, log: &LogDataset) -> Result<(LogDataset, LogDataset)> {
    let fraction = cfg.split.eval_fraction.unwrap_or_else(|| default_eval_fraction(log.len()));
    Ok(split_log(log, fraction, cfg.split.seed)?)
}

/// Trains a router on the train split and writes the model file.
pub fn command_train(cfg: &RunConfig, slo: &str, objective: Objective) -> Result<PathBuf> {
    let profiles = cfg.profiles()?;
    let profile = find_profile(&profiles, slo)?;
    let log = load_log(cfg)?;
    let (train, _) = split(cfg, &log)?;
    let data = LabeledSet::from_log(&train, profile);
    let mut model = train_policy(&data, log.feature_dim(), objective, &profile.name, &cfg.train)?;
    model.corpus_hash = log.header.corpus_hash.clone();
    model.config_hash = cfg.hash();
    if let (Some(first), Some(last)) = (model.loss_trace.first(), model.loss_trace.last()) {
        log::info!("trained {} under {}: loss {first:.4} -> {last:.4} over {} epochs", objective.label(), slo, model.loss_trace.len());
    }
    let path = Paths::new(cfg).model(slo, objective);
    let mut s = model.to_json();
    s.push('\n');
    write_atomic(&path, s.as_bytes())?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalTarget {
    Model(PathBuf),
    Fixed(Action),
    BestFixed,
}

/// Stored output of one `eval` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalArtifact {
    pub row: ReportRow,
    pub corpus_hash: String,
    pub config_hash: String,
    pub sweep_seed: u64,
    pub split_seed: u64,
    pub train_seed: Option<u64>,
}

pub fn method_name(target: &EvalTarget, model: Option<&PolicyModel>, best: Action) -> String {
    match target {
        EvalTarget::Model(_) => model.map_or("model", |m| m.objective.label()).to_string(),
        EvalTarget::Fixed(Action::Guarded5) => "Baseline (a1)".into(),
        EvalTarget::Fixed(a) => format!("Fixed (a{})", a.id()),
        EvalTarget::BestFixed => format!("Best fixed (a{})", best.id()),
    }
}

fn slug(method: &str) -> String {
    let mut s: String = method.to_lowercase().chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '-' }).collect();
    while s.contains("--") {
        s = s.replace("--", "-");
    }
    s.trim_matches('-').to_string()
}

/// Replay-evaluates a model or a fixed policy on the eval split.
pub fn command_eval(cfg: &RunConfig, slo: &str, target: &EvalTarget) -> Result<(PathBuf, EvalArtifact)> {
    let profiles = cfg.profiles()?;
    let profile = find_profile(&profiles, slo)?;
    let log = load_log(cfg)?;
    let (_, eval) = split(cfg, &log)?;
    let (best_action, best_report) = best_fixed_action(&eval, profile)?;

    let mut model = None;
    let metrics: MetricsReport = match target {
        EvalTarget::Model(path) => {
            let text = read_artifact(path, "model", &format!("slorag train --slo {slo}"))?;
            let m = PolicyModel::from_json(&text)
                .map_err(|e| PipelineError::Artifact { path: path.display().to_string(), message: e.to_string() })?;
            if m.feature_dim != log.feature_dim() {
                return Err(PolicyError::Dimension { expected: m.feature_dim, found: log.feature_dim() }.into());
            }
            if !m.corpus_hash.is_empty() && m.corpus_hash != log.header.corpus_hash {
                return Err(PipelineError::CorpusMismatch {
                    first: log.header.corpus_hash.clone(),
                    second: m.corpus_hash.clone(),
                    path: path.display().to_string(),
                });
            }
            let r = evaluate_policy_replay(&m, &eval, profile)?;
            model = Some(m);
            r
        }
        EvalTarget::Fixed(a) => evaluate_fixed(*a, &eval, profile)?,
        EvalTarget::BestFixed => best_report.clone(),
    };
    let method = method_name(target, model.as_ref(), best_action);
    let artifact = EvalArtifact {
        row: ReportRow {
            slo: profile.name.clone(),
            method: method.clone(),
            metrics,
            best_fixed_action: best_action,
            best_fixed: best_report,
        },
        corpus_hash: log.header.corpus_hash.clone(),
        config_hash: cfg.hash(),
        sweep_seed: log.header.seed,
        split_seed: cfg.split.seed,
        train_seed: model.as_ref().map(|m| m.seed),
    };
    let path = Paths::new(cfg).evals().join(format!("{}__{}.json", profile.name, slug(&method)));
    write_json(&path, &artifact)?;
    Ok((path, artifact))
}

fn method_rank(method: &str) -> usize {
    if method.starts_with("Baseline") {
        0
    } else if method == "Argmax-CE" {
        1
    } else if method == "Argmax-CE-WT" {
        2
    } else if method.starts_with("Best fixed") {
        3
    } else {
        4
    }
}

/// Collates every eval artifact into the report directory.
pub fn command_report(cfg: &RunConfig) -> Result<(PathBuf, Vec<ReportRow>)> {
    let paths = Paths::new(cfg);
    let dir = paths.evals();
    let entries = match std::fs::read_dir(&dir) {
        Ok(e) => e,
        Err(_) => {
            return Err(PipelineError::MissingArtifact {
                what: "eval directory",
                path: dir.display().to_string(),
                hint: "slorag eval".into(),
            })
        }
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(PipelineError::MissingArtifact {
            what: "eval outputs in",
            path: dir.display().to_string(),
            hint: "slorag eval".into(),
        });
    }

    let profile_order: Vec<String> = cfg.profiles()?.into_iter().map(|p| p.name).collect();
    let mut corpus_hash: Option<String> = None;
    let mut rows = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(io(&f))?;
        let art: EvalArtifact = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Artifact { path: f.display().to_string(), message: e.to_string() })?;
        match &corpus_hash {
            None => corpus_hash = Some(art.corpus_hash.clone()),
            Some(h) if *h != art.corpus_hash => {
                return Err(PipelineError::CorpusMismatch {
                    first: h.clone(),
                    second: art.corpus_hash,
                    path: f.display().to_string(),
                })
            }
            Some(_) => {}
        }
        rows.push(art.row);
    }
    rows.sort_by_key(|r| {
        let slo_rank = profile_order.iter().position(|p| *p == r.slo).unwrap_or(usize::MAX);
        (slo_rank, r.slo.clone(), method_rank(&r.method), r.method.clone())
    });
    let out = paths.report();
    emit_report(&rows, &out)?;
    Ok((out, rows))
}
