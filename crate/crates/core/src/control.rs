//! The five-action control space and single-question execution.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{contains_answer, em_match, Corpus, Paragraph, QuestionExample};
use crate::generation::{
    assemble_prompt, count_tokens, detect_refusal, BackendError, GenerationRequest, GeneratorBackend, PromptMode,
    REFUSAL_MESSAGE,
};
use crate::retriever::{InvertedIndex, RetrievalResult, RetrieverError};

pub const NUM_ACTIONS: usize = 5;

/// Retrieval depth used for the shared probe; the deepest action depth.
pub const PROBE_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Action {
    /// k=2, guarded
    Guarded2,
    /// k=5, guarded
    Guarded5,
    /// k=10, guarded
    Guarded10,
    /// k=5, auto
    Auto5,
    /// Pre-retrieval refusal.
    Refuse,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] =
        [Action::Guarded2, Action::Guarded5, Action::Guarded10, Action::Auto5, Action::Refuse];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Action> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn retrieval_k(self) -> usize {
        match self {
            Action::Guarded2 => 2,
            Action::Guarded5 | Action::Auto5 => 5,
            Action::Guarded10 => 10,
            Action::Refuse => 0,
        }
    }

    /// Prompt mode, or `None` for the refusal action.
    pub fn mode(self) -> Option<PromptMode> {
        match self {
            Action::Guarded2 | Action::Guarded5 | Action::Guarded10 => Some(PromptMode::Guarded),
            Action::Auto5 => Some(PromptMode::Auto),
            Action::Refuse => None,
        }
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a.id()
    }
}

impl TryFrom<u8> for Action {
    type Error = String;
    fn try_from(id: u8) -> Result<Self, String> {
        Action::from_id(id).ok_or_else(|| format!("action id {id} out of range 0..=4"))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode() {
            Some(m) => write!(f, "a{} (k={}, {:?})", self.id(), self.retrieval_k(), m),
            None => write!(f, "a{} (refuse)", self.id()),
        }
    }
}

/// Raw per-(question, action) outcome. Rewards are derived from these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeFlags {
    pub acc: bool,
    pub cost_tokens: u64,
    pub hall: bool,
    pub refusal: bool,
    /// +1 correct refusal, -1 refusal of an answerable question, 0 otherwise.
    pub refusal_correct: i8,
    /// Only for answerable questions under an action that retrieved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit: Option<bool>,
}

impl OutcomeFlags {
    pub fn from_answer(example: &QuestionExample, answer: &str, cost_tokens: u64, hit: Option<bool>) -> Self {
        let refusal = detect_refusal(answer);
        let refusal_correct = match (refusal, example.answerable) {
            (true, false) => 1,
            (true, true) => -1,
            (false, _) => 0,
        };
        OutcomeFlags {
            acc: !refusal && example.answerable && em_match(answer, &example.gold_answers),
            cost_tokens,
            hall: !refusal && !example.answerable,
            refusal,
            refusal_correct,
            hit,
        }
    }

    /// Checks the structural invariants tying the flags together.
    pub fn is_consistent(&self, answerable: bool, retrieved: bool) -> bool {
        let refusal_rule = self.refusal_correct
            == match (self.refusal, answerable) {
                (true, false) => 1,
                (true, true) => -1,
                _ => 0,
            };
        (!self.refusal || (!self.acc && !self.hall))
            && (!self.hall || (!answerable && !self.refusal))
            && (!self.acc || answerable)
            && refusal_rule
            && self.hit.is_some() == (answerable && retrieved)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub action: Action,
    pub flags: OutcomeFlags,
    pub retrieval: RetrievalResult,
    pub answer_text: String,
}

#[derive(Debug, Error)]
pub enum ExecutionError {
    #[error("question {qid}, action {action}: {source}")]
    Backend {
        qid: String,
        action: u8,
        #[source]
        source: BackendError,
    },
    #[error("question {qid}: {source}")]
    Retrieval {
        qid: String,
        #[source]
        source: RetrieverError,
    },
}

/// Executes one action, retrieving from the index.
pub fn execute_action(
    example: &QuestionExample,
    action: Action,
    corpus: &Corpus,
    index: &InvertedIndex,
    backend: &dyn GeneratorBackend,
) -> Result<ActionOutcome, ExecutionError> {
    let retrieval = index.retrieve(&example.question, action.retrieval_k());
    execute_with_retrieval(example, action, corpus, retrieval, backend)
}

/// Executes one action given its already-computed retrieval result.
pub fn execute_with_retrieval(
    example: &QuestionExample,
    action: Action,
    corpus: &Corpus,
    retrieval: RetrievalResult,
    backend: &dyn GeneratorBackend,
) -> Result<ActionOutcome, ExecutionError> {
    let Some(mode) = action.mode() else {
        let answer_text = REFUSAL_MESSAGE.to_string();
        let flags = OutcomeFlags::from_answer(example, &answer_text, count_tokens(&answer_text), None);
        return Ok(ActionOutcome {
            action,
            flags,
            retrieval: RetrievalResult::default(),
            answer_text,
        });
    };

    let passages: Vec<&Paragraph> = retrieval
        .doc_ids
        .iter()
        .map(|&id| {
            corpus.paragraph(id).ok_or(ExecutionError::Retrieval {
                qid: example.qid.clone(),
                source: RetrieverError::UnknownDoc {
                    id,
                    num_docs: corpus.paragraphs.len(),
                },
            })
        })
        .collect::<Result<_, _>>()?;
    let prompt = assemble_prompt(mode, &passages, &example.question);
    let output = backend
        .generate(&GenerationRequest {
            mode,
            passages: &passages,
            example,
            prompt: &prompt,
        })
        .map_err(|source| ExecutionError::Backend {
            qid: example.qid.clone(),
            action: action.id(),
            source,
        })?;

    let hit = example
        .answerable
        .then(|| passages.iter().any(|p| contains_answer(&p.text, &example.gold_answers)));
    let flags = OutcomeFlags::from_answer(example, &output.answer_text, output.total_tokens(), hit);
    Ok(ActionOutcome {
        action,
        flags,
        retrieval,
        answer_text: output.answer_text,
    })
}

/// Full sweep of one question: one probe retrieval at depth [`PROBE_K`], whose
/// prefixes serve every action, then all five actions in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionSweep {
    pub probe: RetrievalResult,
    pub outcomes: Vec<ActionOutcome>,
}

pub fn sweep_question(
    example: &QuestionExample,
    corpus: &Corpus,
    index: &InvertedIndex,
    backend: &dyn GeneratorBackend,
) -> Result<QuestionSweep, ExecutionError> {
    let probe = index.retrieve(&example.question, PROBE_K);
    let outcomes = Action::ALL
        .iter()
        .map(|&a| execute_with_retrieval(example, a, corpus, probe.truncated(a.retrieval_k()), backend))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QuestionSweep { probe, outcomes })
}
