//! Sequential multi-hop question answering over texts and tables.
//!
//! The crate is organized around one loop: a controller repeatedly chooses
//! between retrieving text passages, retrieving table segments, and handing
//! everything gathered so far to a reader that produces an answer. The pieces:
//!
//! - [`corpus`] — documents (texts and linearized table rows), QA pairs,
//!   line-delimited file formats.
//! - [`metrics`] — answer normalization, exact match, token F1.
//! - [`retrieval`] — BM25 inverted index and a hashed bag-of-tokens dense
//!   retriever, both with per-modality partitions.
//! - [`reader`] — pluggable answer generators; ships an oracle extractor.
//! - [`env`] — the block-based retrieval episode: actions, reward, observations.
//! - [`nncore`] — a small reverse-mode autodiff substrate (dense, LSTM, GRU,
//!   transformer encoder) with Adam and checkpointing.
//! - [`agents`] — DQN and PPO action selectors over block observations.
//! - [`baselines`] — exhaustive fixed-action-sequence sweeps.
//! - [`synthgen`] — synthetic corpora with planted multi-hop chains and known
//!   optimal action sequences.
//! - [`report`] — plain-text and line-delimited result tables.

pub mod agents;
pub mod baselines;
pub mod corpus;
pub mod env;
pub mod metrics;
pub mod nncore;
pub mod reader;
pub mod report;
pub mod retrieval;
pub mod synthgen;

pub use corpus::{Corpus, Document, Modality, QAPair, TableSegment};
pub use env::{Action, EnvConfig, Environment, EpisodeOutcome, Observation};
pub use metrics::ScorePair;
pub use reader::{OracleReader, Reader, ReaderInput};
pub use retrieval::{Bm25Index, DenseIndex, Embedder, RankedList, Retriever};
