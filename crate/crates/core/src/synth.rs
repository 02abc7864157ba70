//! Seeded generator of small SQuAD 2.0-format corpora for offline runs.
//!
//! Articles own a private topic vocabulary shared by all their paragraphs, so a
//! question built from topic words lands on the right article but ranks the
//! gold paragraph among its siblings largely by chance: retrieval often misses
//! at small depth. Each answer is a two-word entity that occurs only in its own
//! paragraph. Unanswerable questions usually (not always) carry a cue word that
//! never occurs in any paragraph, so answerability is partly visible to a
//! bag-of-words embedding while retrieval success is not.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

const FILLER: &[&str] = &[
    "the", "of", "and", "was", "in", "to", "is", "for", "on", "by", "with", "as", "from", "at", "which", "were",
    "its", "also", "after", "first", "during", "between", "later", "many", "some", "most", "other", "into",
    "where", "when",
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ru", "te", "vo", "sa", "ne", "di", "po", "gu", "fe", "ha", "zi", "bo", "ya", "ce", "wu",
    "xa", "qe", "lin", "dor", "vas", "tem", "kil", "nor", "sar", "bel",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub articles: usize,
    pub paragraphs_per_article: usize,
    pub questions_per_paragraph: usize,
    pub unanswerable_fraction: f64,
    pub topic_words_per_article: usize,
    pub paragraph_words: usize,
    /// Probability that an unanswerable / answerable question carries the cue word.
    pub cue_rate_unanswerable: f64,
    pub cue_rate_answerable: f64,
    /// Probability that an answerable question names a word unique to its
    /// gold paragraph (which makes retrieval succeed).
    pub specific_word_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            articles: 48,
            paragraphs_per_article: 40,
            questions_per_paragraph: 1,
            unanswerable_fraction: 0.5,
            topic_words_per_article: 30,
            paragraph_words: 90,
            cue_rate_unanswerable: 0.8,
            cue_rate_answerable: 0.02,
            specific_word_rate: 0.0,
        }
    }
}

pub const CUE_WORD: &str = "never";

struct WordSource {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl WordSource {
    fn fresh(&mut self, min_syl: usize, max_syl: usize) -> String {
        loop {
            let n = self.rng.random_range(min_syl..=max_syl);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(&mut self.rng).expect("non-empty")).collect();
            if !FILLER.contains(&w.as_str()) && w != CUE_WORD && self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Generates a corpus as a SQuAD 2.0 JSON document.
pub fn generate(cfg: &SynthConfig) -> Value {
    let mut words = WordSource { rng: ChaCha8Rng::seed_from_u64(cfg.seed), used: HashSet::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));
    let mut data = Vec::with_capacity(cfg.articles);
    let mut qn = 0usize;

    for a in 0..cfg.articles {
        let topics: Vec<String> = (0..cfg.topic_words_per_article).map(|_| words.fresh(2, 3)).collect();
        let title = capitalize(&words.fresh(2, 3));
        let mut paragraphs = Vec::with_capacity(cfg.paragraphs_per_article);
        for _ in 0..cfg.paragraphs_per_article {
            let specific: Vec<String> = (0..4).map(|_| words.fresh(3, 4)).collect();
            let entities: Vec<String> = (0..3)
                .map(|_| format!("{} {}", capitalize(&words.fresh(3, 3)), capitalize(&words.fresh(2, 3))))
                .collect();

            let mut tokens: Vec<String> = Vec::with_capacity(cfg.paragraph_words + 8);
            for _ in 0..cfg.paragraph_words {
                let roll: f64 = rng.random();
                let w = if roll < 0.45 {
                    (*FILLER.choose(&mut rng).expect("non-empty")).to_string()
                } else if roll < 0.92 {
                    topics.choose(&mut rng).expect("non-empty").clone()
                } else {
                    specific.choose(&mut rng).expect("non-empty").clone()
                };
                tokens.push(w);
            }
            for e in &entities {
                let pos = rng.random_range(0..=tokens.len());
                tokens.insert(pos, e.clone());
            }
            let mut text = String::new();
            for (i, t) in tokens.iter().enumerate() {
                if i > 0 {
                    text.push_str(if i % 15 == 0 { ". " } else { " " });
                }
                text.push_str(t);
            }
            text.push('.');
            let text = capitalize(&text);

            let mut qas = Vec::with_capacity(cfg.questions_per_paragraph);
            for _ in 0..cfg.questions_per_paragraph {
                let unanswerable = rng.random_bool(cfg.unanswerable_fraction.clamp(0.0, 1.0));
                let mut q: Vec<String> = topics.choose_multiple(&mut rng, 3).cloned().collect();
                if !unanswerable && rng.random_bool(cfg.specific_word_rate.clamp(0.0, 1.0)) {
                    q.push(specific.choose(&mut rng).expect("non-empty").clone());
                }
                let cue_rate = if unanswerable { cfg.cue_rate_unanswerable } else { cfg.cue_rate_answerable };
                if rng.random_bool(cue_rate.clamp(0.0, 1.0)) {
                    q.push(CUE_WORD.to_string());
                }
                q.shuffle(&mut rng);
                let question = format!("What {} {}?", FILLER.choose(&mut rng).expect("non-empty"), q.join(" "));
                let qid = format!("syn{qn:06}");
                qn += 1;
                let qa = if unanswerable {
                    json!({"id": qid, "question": question, "is_impossible": true, "answers": []})
                } else {
                    let ans = entities.choose(&mut rng).expect("non-empty");
                    let start = text.find(ans.as_str()).unwrap_or(0);
                    json!({"id": qid, "question": question, "is_impossible": false,
                           "answers": [{"text": ans, "answer_start": start}]})
                };
                qas.push(qa);
            }
            paragraphs.push(json!({"context": text, "qas": qas}));
        }
        data.push(json!({"title": format!("{title} {a}"), "paragraphs": paragraphs}));
    }
    json!({"version": "v2.0", "data": data})
}

/// Generated corpus serialized as JSON bytes.
pub fn generate_bytes(cfg: &SynthConfig) -> Vec<u8> {
    serde_json::to_vec(&generate(cfg)).expect("generated corpus serializes")
}
