//! Okapi BM25 over per-modality inverted indexes.
//!
//! Text and table documents are scored against separate statistics (document
//! count, document frequency, average length): the two pools are searched by
//! different actions and mixing their length profiles would bias scores.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus, Modality};

use super::{rank_top_k, RankedList, RetrievalError, Retriever};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: DEFAULT_K1, b: DEFAULT_B }
    }
}

/// Inverted index and length statistics for one modality.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub(crate) struct Partition {
    /// token -> (doc id, term frequency), postings sorted by doc id.
    pub postings: BTreeMap<String, Vec<(String, u32)>>,
    /// doc id -> token count, sorted by id.
    pub doc_len: BTreeMap<String, u32>,
    pub avg_len: f64,
}

impl Partition {
    fn doc_count(&self) -> usize {
        self.doc_len.len()
    }

    fn df(&self, token: &str) -> usize {
        self.postings.get(token).map_or(0, |p| p.len())
    }

    fn tf(&self, token: &str, doc_id: &str) -> u32 {
        self.postings
            .get(token)
            .and_then(|p| p.iter().find(|(id, _)| id == doc_id))
            .map_or(0, |(_, tf)| *tf)
    }
}

/// BM25 index over both modality partitions of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub params: Bm25Params,
    pub(crate) text: Partition,
    pub(crate) table: Partition,
}

impl Bm25Index {
    /// Build both partitions. Fails on an empty corpus or out-of-range
    /// parameters (`k1 > 0`, `0 <= b <= 1`).
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Result<Self, RetrievalError> {
        if corpus.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        if !(params.k1 > 0.0) || !(0.0..=1.0).contains(&params.b) {
            return Err(RetrievalError::InvalidParams { k1: params.k1, b: params.b });
        }
        let mut index = Bm25Index {
            params,
            text: Partition::default(),
            table: Partition::default(),
        };
        for doc in corpus.iter() {
            let part = index.partition_mut(doc.modality);
            let tokens = doc.tokens();
            part.doc_len.insert(doc.id.clone(), tokens.len() as u32);
            let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
            for t in &tokens {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
            for (token, tf) in counts {
                part.postings
                    .entry(token.to_string())
                    .or_default()
                    .push((doc.id.clone(), tf));
            }
        }
        for modality in Modality::ALL {
            let part = index.partition_mut(modality);
            let total: u64 = part.doc_len.values().map(|&l| l as u64).sum();
            part.avg_len = if part.doc_len.is_empty() {
                0.0
            } else {
                total as f64 / part.doc_len.len() as f64
            };
        }
        Ok(index)
    }

    pub(crate) fn partition(&self, modality: Modality) -> &Partition {
        match modality {
            Modality::Text => &self.text,
            Modality::Table => &self.table,
        }
    }

    fn partition_mut(&mut self, modality: Modality) -> &mut Partition {
        match modality {
            Modality::Text => &mut self.text,
            Modality::Table => &mut self.table,
        }
    }

    pub fn doc_count(&self, modality: Modality) -> usize {
        self.partition(modality).doc_count()
    }

    pub fn avg_len(&self, modality: Modality) -> f64 {
        self.partition(modality).avg_len
    }

    pub fn vocab_size(&self, modality: Modality) -> usize {
        self.partition(modality).postings.len()
    }

    pub fn df(&self, token: &str, modality: Modality) -> usize {
        self.partition(modality).df(token)
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.text.doc_len.contains_key(doc_id) || self.table.doc_len.contains_key(doc_id)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))` — strictly positive for df >= 1.
    pub fn idf(&self, token: &str, modality: Modality) -> f64 {
        let part = self.partition(modality);
        let n = part.doc_count() as f64;
        let df = part.df(token) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score one document against a query. Additive over query token
    /// occurrences; tokens absent from the document contribute zero.
    pub fn score(&self, query: &str, doc_id: &str) -> Result<f64, RetrievalError> {
        let modality = if self.text.doc_len.contains_key(doc_id) {
            Modality::Text
        } else if self.table.doc_len.contains_key(doc_id) {
            Modality::Table
        } else {
            return Err(RetrievalError::UnknownDoc { id: doc_id.to_string() });
        };
        let part = self.partition(modality);
        let len = part.doc_len[doc_id] as f64;
        let mut score = 0.0;
        for token in tokenize(query) {
            let tf = part.tf(&token, doc_id) as f64;
            if tf == 0.0 {
                continue;
            }
            score += self.term_contribution(&token, tf, len, modality);
        }
        Ok(score)
    }

    fn term_contribution(&self, token: &str, tf: f64, doc_len: f64, modality: Modality) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let avg = self.partition(modality).avg_len;
        let norm = 1.0 - b + b * doc_len / avg;
        self.idf(token, modality) * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// Top-k of one modality partition, exclusions removed. When fewer than
    /// `k` documents match any query token, the remainder is filled with
    /// zero-score documents in ascending id order.
    pub fn retrieve(
        &self,
        query: &str,
        k: usize,
        modality: Modality,
        exclude: &BTreeSet<String>,
    ) -> RankedList {
        let part = self.partition(modality);
        let mut acc: HashMap<&str, f64> = HashMap::new();
        for token in tokenize(query) {
            if let Some(postings) = part.postings.get(&token) {
                for (doc_id, tf) in postings {
                    if exclude.contains(doc_id) {
                        continue;
                    }
                    let len = part.doc_len[doc_id] as f64;
                    *acc.entry(doc_id.as_str()).or_insert(0.0) +=
                        self.term_contribution(&token, *tf as f64, len, modality);
                }
            }
        }
        let scored: Vec<(String, f64)> =
            acc.into_iter().map(|(id, s)| (id.to_string(), s)).collect();
        let partition_ids: Vec<String> = part.doc_len.keys().cloned().collect();
        let entries = rank_top_k(scored, &partition_ids, exclude, k);
        RankedList { entries, query: query.to_string(), modality }
    }
}

impl Retriever for Bm25Index {
    fn retrieve(
        &self,
        query: &str,
        k: usize,
        modality: Modality,
        exclude: &BTreeSet<String>,
    ) -> RankedList {
        Bm25Index::retrieve(self, query, k, modality, exclude)
    }

    fn label(&self) -> &'static str {
        "bm25"
    }
}
