//! State vector: hashed bag-of-words question embedding plus retrieval
//! diagnostics from a fixed-depth probe.

use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::control::PROBE_K;
use crate::retriever::{tokenize, InvertedIndex, RetrievalResult};

pub const DEFAULT_EMBED_DIM: usize = 256;
pub const NUM_META: usize = 5;
pub const CHAR_LEN_SCALE: f64 = 100.0;
pub const TOKEN_COUNT_SCALE: f64 = 20.0;

/// Feature layout parameters recorded alongside logs and models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub embed_dim: usize,
    pub char_len_scale: f64,
    pub token_count_scale: f64,
    pub probe_k: usize,
}

impl FeatureSpec {
    pub fn new(embed_dim: usize) -> Self {
        Self {
            embed_dim,
            char_len_scale: CHAR_LEN_SCALE,
            token_count_scale: TOKEN_COUNT_SCALE,
            probe_k: PROBE_K,
        }
    }

    pub fn total_dim(&self) -> usize {
        self.embed_dim + NUM_META
    }
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self::new(DEFAULT_EMBED_DIM)
    }
}

fn fnv(tag: u8, term: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u8(tag);
    h.write(term.as_bytes());
    h.finish()
}

/// Signed feature hashing of unigrams into `dim` buckets, L2-normalized.
pub fn embed_question(question: &str, dim: usize) -> Vec<f64> {
    assert!(dim > 0, "embedding dimension must be positive");
    let mut v = vec![0.0; dim];
    for term in tokenize(question) {
        let bucket = (fnv(b'b', &term) % dim as u64) as usize;
        let sign = if fnv(b's', &term) & 1 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// `[char_len/100, token_count/20, top1, top1-top2, mean(top5)]`; missing
/// scores count as 0 and the mean runs over the scores actually retrieved.
pub fn meta_features(question: &str, probe: &RetrievalResult, spec: &FeatureSpec) -> [f64; NUM_META] {
    let scores = &probe.scores;
    let top1 = scores.first().copied().unwrap_or(0.0);
    let top2 = scores.get(1).copied().unwrap_or(0.0);
    let head = &scores[..scores.len().min(5)];
    let mean = if head.is_empty() { 0.0 } else { head.iter().sum::<f64>() / head.len() as f64 };
    [
        question.chars().count() as f64 / spec.char_len_scale,
        tokenize(question).len() as f64 / spec.token_count_scale,
        top1,
        top1 - top2,
        mean,
    ]
}

/// Builds the state vector from an already-computed probe retrieval.
pub fn features_from_probe(question: &str, probe: &RetrievalResult, spec: &FeatureSpec) -> Vec<f64> {
    let mut v = embed_question(question, spec.embed_dim);
    v.extend_from_slice(&meta_features(question, probe, spec));
    v
}

/// Runs the probe retrieval and builds the state vector. Reads only the
/// question text.
pub fn extract_features(question: &str, index: &InvertedIndex, spec: &FeatureSpec) -> Vec<f64> {
    let probe = index.retrieve(question, spec.probe_k);
    features_from_probe(question, &probe, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Paragraph;

    fn index(texts: &[&str]) -> InvertedIndex {
        let ps: Vec<_> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Paragraph { id: i as u32, text: t.to_string(), title: String::new() })
            .collect();
        InvertedIndex::build(&ps).unwrap()
    }

    #[test]
    fn empty_question_embeds_to_zero() {
        assert!(embed_question("", 16).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unit_norm_and_order_invariance() {
        let a = embed_question("who built the tower in paris", 64);
        let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
        assert_eq!(a, embed_question("paris in tower the built who", 64));
    }

    #[test]
    fn no_overlap_zero_meta() {
        let idx = index(&["alpha beta", "gamma delta"]);
        let f = extract_features("zeta eta", &idx, &FeatureSpec::new(8));
        assert_eq!(f.len(), 13);
        assert_eq!(&f[10..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_hit_gap_and_mean() {
        let idx = index(&["alpha beta", "gamma delta"]);
        let spec = FeatureSpec::new(8);
        let f = extract_features("alpha", &idx, &spec);
        let top1 = f[10];
        assert!(top1 > 0.0);
        assert_eq!(f[11], top1);
        assert_eq!(f[12], top1);
        assert_eq!(f, extract_features("alpha", &idx, &spec));
    }
}
