//! Okapi BM25 over corpus paragraphs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Paragraph, ParagraphId};

pub const K1: f64 = 1.5;
pub const B: f64 = 0.75;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RetrieverError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("paragraph id {id} out of range (index holds {num_docs} documents)")]
    UnknownDoc { id: ParagraphId, num_docs: usize },
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// One posting: a document and the term's frequency in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: ParagraphId,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    /// Postings per term, sorted by ascending document id. A term's document
    /// frequency is the length of its postings list.
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub doc_ids: Vec<ParagraphId>,
    pub scores: Vec<f64>,
}

impl RetrievalResult {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// The first `k` entries (or all of them, when fewer).
    pub fn truncated(&self, k: usize) -> RetrievalResult {
        let n = k.min(self.doc_ids.len());
        RetrievalResult {
            doc_ids: self.doc_ids[..n].to_vec(),
            scores: self.scores[..n].to_vec(),
        }
    }
}

/// Robertson–Spärck Jones idf with +1 smoothing; always positive.
pub fn idf(doc_freq: usize, num_docs: usize) -> f64 {
    let n = num_docs as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

fn term_weight(idf: f64, tf: u32, doc_len: u32, avgdl: f64) -> f64 {
    let tf = tf as f64;
    let norm = K1 * (1.0 - B + B * doc_len as f64 / avgdl);
    idf * tf * (K1 + 1.0) / (tf + norm)
}

impl InvertedIndex {
    pub fn build(paragraphs: &[Paragraph]) -> Result<Self, RetrieverError> {
        if paragraphs.is_empty() {
            return Err(RetrieverError::EmptyCorpus);
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(paragraphs.len());
        for (pos, p) in paragraphs.iter().enumerate() {
            let doc = pos as ParagraphId;
            let tokens = tokenize(&p.text);
            doc_lengths.push(tokens.len() as u32);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *counts.entry(t).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting { doc, tf });
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        Ok(Self {
            postings,
            doc_lengths,
            avg_doc_length,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    /// Iterates (term, document frequency) in term order.
    pub fn vocabulary(&self) -> impl Iterator<Item = (&str, usize)> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.len()))
    }

    pub fn term_freq(&self, term: &str, doc: ParagraphId) -> u32 {
        let list = self.postings(term);
        list.binary_search_by_key(&doc, |p| p.doc)
            .map_or(0, |i| list[i].tf)
    }

    fn idf_of(&self, term: &str) -> f64 {
        idf(self.doc_freq(term), self.num_docs())
    }

    /// BM25 score of one document. Repeated query terms contribute once per
    /// occurrence.
    pub fn score<S: AsRef<str>>(&self, query_terms: &[S], doc: ParagraphId) -> Result<f64, RetrieverError> {
        let len = *self
            .doc_lengths
            .get(doc as usize)
            .ok_or(RetrieverError::UnknownDoc {
                id: doc,
                num_docs: self.num_docs(),
            })?;
        let mut score = 0.0;
        for term in query_terms {
            let term = term.as_ref();
            let tf = self.term_freq(term, doc);
            if tf > 0 {
                score += term_weight(self.idf_of(term), tf, len, self.avg_doc_length);
            }
        }
        Ok(score)
    }

    /// Top-`k` documents with positive score, best first, ties by ascending id.
    /// Returns fewer than `k` entries rather than padding with zero scorers.
    pub fn retrieve(&self, query: &str, k: usize) -> RetrievalResult {
        if k == 0 {
            return RetrievalResult::default();
        }
        let terms = tokenize(query);
        // Accumulation follows query-term order, the same order `score` sums in,
        // so both paths produce bit-identical values.
        let mut acc: HashMap<ParagraphId, f64> = HashMap::new();
        for term in &terms {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf_of(term);
            for p in list {
                let len = self.doc_lengths[p.doc as usize];
                *acc.entry(p.doc).or_insert(0.0) += term_weight(idf, p.tf, len, self.avg_doc_length);
            }
        }
        let mut ranked: Vec<(ParagraphId, f64)> = acc.into_iter().filter(|&(_, s)| s > 0.0).collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        RetrievalResult {
            doc_ids: ranked.iter().map(|r| r.0).collect(),
            scores: ranked.iter().map(|r| r.1).collect(),
        }
    }
}
