//! Sparse (BM25) and dense (hashed embedding dot-product) retrieval with
//! per-modality partitions.
//!
//! Both retrievers answer the same query shape — top-k documents of one
//! modality, minus an exclusion set, ties broken by ascending document id —
//! so the episode loop can treat them interchangeably through [`Retriever`].

mod bm25;
mod dense;
mod embed;
mod persist;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::corpus::Modality;

pub use bm25::{Bm25Index, Bm25Params};
pub use dense::DenseIndex;
pub use embed::Embedder;
pub use persist::{describe, load_index, save_index, IndexBundle};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("invalid BM25 parameters: k1={k1}, b={b}")]
    InvalidParams { k1: f64, b: f64 },
    #[error("unknown document id {id:?}")]
    UnknownDoc { id: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("index file {path} is corrupt: {message}")]
    CorruptIndex { path: String, message: String },
}

/// A ranked retrieval result: `(doc id, score)` pairs with non-increasing
/// scores and no duplicate ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub entries: Vec<(String, f64)>,
    pub query: String,
    pub modality: Modality,
}

impl RankedList {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Common query surface over the sparse and dense indexes.
pub trait Retriever: Send + Sync {
    fn retrieve(
        &self,
        query: &str,
        k: usize,
        modality: Modality,
        exclude: &BTreeSet<String>,
    ) -> RankedList;

    /// Short label for reports ("bm25" or "dense").
    fn label(&self) -> &'static str;
}

/// Sort scored candidates by descending score, ascending id, and keep `k`.
/// When fewer than `k` candidates carry a score, pad with the remaining
/// partition documents at score zero, in ascending id order.
pub(crate) fn rank_top_k(
    mut scored: Vec<(String, f64)>,
    partition_ids: &[String],
    exclude: &BTreeSet<String>,
    k: usize,
) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("retrieval scores are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    if scored.len() < k {
        let seen: BTreeSet<String> = scored.iter().map(|(id, _)| id.clone()).collect();
        let mut padding = Vec::new();
        for id in partition_ids {
            if scored.len() + padding.len() >= k {
                break;
            }
            if exclude.contains(id) || seen.contains(id) {
                continue;
            }
            padding.push((id.clone(), 0.0));
        }
        scored.extend(padding);
    }
    scored.truncate(k);
    scored
}
