//! Dense retrieval by dot product over precomputed document embeddings.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::corpus::{Corpus, Modality};

use super::embed::{dot, Embedder};
use super::{rank_top_k, RankedList, RetrievalError, Retriever};

/// Per-modality document embeddings, built once over an immutable corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    embedder: Arc<Embedder>,
    /// (doc id, modality, embedding), ascending id order.
    docs: Vec<(String, Modality, Vec<f64>)>,
}

impl DenseIndex {
    pub fn build(embedder: Arc<Embedder>, corpus: &Corpus) -> Result<Self, RetrievalError> {
        if corpus.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let docs = corpus
            .iter()
            .map(|d| (d.id.clone(), d.modality, embedder.embed(&d.body)))
            .collect();
        Ok(DenseIndex { embedder, docs })
    }

    pub(crate) fn from_parts(
        embedder: Arc<Embedder>,
        docs: Vec<(String, Modality, Vec<f64>)>,
    ) -> Self {
        DenseIndex { embedder, docs }
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn dim(&self) -> usize {
        self.embedder.dim()
    }

    pub fn doc_count(&self, modality: Modality) -> usize {
        self.docs.iter().filter(|(_, m, _)| *m == modality).count()
    }

    pub(crate) fn docs(&self) -> &[(String, Modality, Vec<f64>)] {
        &self.docs
    }

    pub fn doc_embedding(&self, doc_id: &str) -> Option<&[f64]> {
        self.docs
            .binary_search_by(|(id, _, _)| id.as_str().cmp(doc_id))
            .ok()
            .map(|i| self.docs[i].2.as_slice())
    }

    /// Top-k by `embed(query) . embed(doc)` within one modality. Every
    /// partition document is scored, so zero and negative similarities rank
    /// deterministically (descending score, ascending id).
    pub fn retrieve(
        &self,
        query: &str,
        k: usize,
        modality: Modality,
        exclude: &BTreeSet<String>,
    ) -> RankedList {
        let q = self.embedder.embed(query);
        let scored: Vec<(String, f64)> = self
            .docs
            .iter()
            .filter(|(id, m, _)| *m == modality && !exclude.contains(id))
            .map(|(id, _, emb)| (id.clone(), dot(&q, emb)))
            .collect();
        let entries = rank_top_k(scored, &[], exclude, k);
        RankedList { entries, query: query.to_string(), modality }
    }
}

impl Retriever for DenseIndex {
    fn retrieve(
        &self,
        query: &str,
        k: usize,
        modality: Modality,
        exclude: &BTreeSet<String>,
    ) -> RankedList {
        DenseIndex::retrieve(self, query, k, modality, exclude)
    }

    fn label(&self) -> &'static str {
        "dense"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus() -> Corpus {
        Corpus::from_documents([
            Document::text("d1", "t", "red panda climbs trees"),
            Document::text("d2", "t", "blue whale swims deep"),
            Document::text("d3", "t", "red panda eats bamboo"),
        ])
        .unwrap()
    }

    #[test]
    fn exact_body_query_ranks_first() {
        let index = DenseIndex::build(Arc::new(Embedder::hashed(64)), &corpus()).unwrap();
        let out = index.retrieve("blue whale swims deep", 3, Modality::Text, &BTreeSet::new());
        assert_eq!(out.entries[0].0, "d2");
        assert!((out.entries[0].1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn k_larger_than_partition() {
        let index = DenseIndex::build(Arc::new(Embedder::hashed(64)), &corpus()).unwrap();
        let out = index.retrieve("red", 10, Modality::Text, &BTreeSet::new());
        assert_eq!(out.len(), 3);
        assert!(index.retrieve("red", 10, Modality::Table, &BTreeSet::new()).is_empty());
    }

    #[test]
    fn empty_query_scores_zero_ordered_by_id() {
        let index = DenseIndex::build(Arc::new(Embedder::hashed(64)), &corpus()).unwrap();
        let out = index.retrieve("", 3, Modality::Text, &BTreeSet::new());
        let ids: Vec<&str> = out.ids().collect();
        assert_eq!(ids, vec!["d1", "d2", "d3"]);
        assert!(out.entries.iter().all(|(_, s)| *s == 0.0));
    }

    #[test]
    fn matches_brute_force_oracle() {
        let embedder = Arc::new(Embedder::hashed(32));
        let corpus = corpus();
        let index = DenseIndex::build(embedder.clone(), &corpus).unwrap();
        let query = "panda bamboo";
        let q = embedder.embed(query);
        let mut oracle: Vec<(String, f64)> = corpus
            .iter()
            .map(|d| (d.id.clone(), super::dot(&q, &embedder.embed(&d.body))))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        let got = index.retrieve(query, 3, Modality::Text, &BTreeSet::new());
        assert_eq!(got.entries, oracle);
    }
}
