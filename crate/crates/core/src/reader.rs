//! Answer generation behind a pluggable interface.
//!
//! The shipped readers are evidence oracles: they answer correctly exactly
//! when the gold answer is present in the retrieved passages. That makes
//! "was the right evidence retrieved?" the signal the episode reward carries,
//! which is the part the action selector actually controls. The gold answer
//! flows only reader -> reward; it is never part of the observation.

use thiserror::Error;

use crate::corpus::Document;
use crate::metrics::normalize_answer;

#[derive(Debug, Error)]
pub enum ReaderError {
    #[error("reader input holds duplicate document id {id:?}")]
    DuplicatePassage { id: String },
    #[error("reader input holds {got} passages, cap is {cap}")]
    TooManyPassages { got: usize, cap: usize },
    #[error("unknown reader kind {0:?} (expected oracle, noisy-oracle, or null)")]
    UnknownKind(String),
}

/// Question plus deduplicated passages, capped in length.
#[derive(Debug, Clone)]
pub struct ReaderInput {
    pub question: String,
    pub passages: Vec<Document>,
}

impl ReaderInput {
    pub fn new(
        question: impl Into<String>,
        passages: Vec<Document>,
        cap: usize,
    ) -> Result<Self, ReaderError> {
        if passages.len() > cap {
            return Err(ReaderError::TooManyPassages { got: passages.len(), cap });
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &passages {
            if !seen.insert(p.id.as_str()) {
                return Err(ReaderError::DuplicatePassage { id: p.id.clone() });
            }
        }
        Ok(ReaderInput { question: question.into(), passages })
    }
}

/// The reader's output. When `source_doc_id` is set, the normalized answer
/// text occurs in that document's normalized body.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PredictedAnswer {
    pub text: String,
    pub source_doc_id: Option<String>,
}

impl PredictedAnswer {
    pub fn miss() -> Self {
        PredictedAnswer { text: String::new(), source_doc_id: None }
    }
}

/// A deterministic answer generator. The environment passes the gold answer
/// through under a capability the observation never sees; non-oracle
/// implementations ignore it.
pub trait Reader: Send + Sync {
    fn read(&self, input: &ReaderInput, gold: &str) -> PredictedAnswer;

    fn label(&self) -> &'static str;
}

fn normalized_token_subsequence(needle: &str, haystack: &str) -> bool {
    let needle: Vec<&str> = needle.split_whitespace().collect();
    let haystack: Vec<&str> = haystack.split_whitespace().collect();
    if needle.is_empty() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Returns the first passage (in input order) whose normalized body contains
/// the normalized gold answer as a contiguous token run.
fn find_evidence<'a>(input: &'a ReaderInput, gold: &str) -> Option<&'a Document> {
    let target = normalize_answer(gold);
    if target.is_empty() {
        return None;
    }
    input
        .passages
        .iter()
        .find(|p| normalized_token_subsequence(&target, &normalize_answer(&p.body)))
}

/// Answers with the gold string iff the evidence is present in the passages.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleReader;

impl Reader for OracleReader {
    fn read(&self, input: &ReaderInput, gold: &str) -> PredictedAnswer {
        match find_evidence(input, gold) {
            Some(doc) => PredictedAnswer {
                text: gold.to_string(),
                source_doc_id: Some(doc.id.clone()),
            },
            None => PredictedAnswer::miss(),
        }
    }

    fn label(&self) -> &'static str {
        "oracle"
    }
}

/// Oracle that hits with probability `hit_prob` when the evidence is present.
///
/// Stateless and deterministic: the coin is a hash of (question, gold, seed),
/// so the same episode always resolves the same way and concurrent calls need
/// no shared RNG.
#[derive(Debug, Clone, Copy)]
pub struct NoisyOracleReader {
    pub hit_prob: f64,
    pub seed: u64,
}

impl NoisyOracleReader {
    pub fn new(hit_prob: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&hit_prob), "hit_prob must be in [0,1]");
        NoisyOracleReader { hit_prob, seed }
    }

    fn coin(&self, question: &str, gold: &str) -> f64 {
        // splitmix-style scramble of an FNV-combined key.
        let mut h = 0xcbf29ce484222325u64 ^ self.seed;
        for b in question.bytes().chain([0u8]).chain(gold.bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= h >> 30;
        h = h.wrapping_mul(0xbf58476d1ce4e5b9);
        h ^= h >> 27;
        h = h.wrapping_mul(0x94d049bb133111eb);
        h ^= h >> 31;
        (h >> 11) as f64 / (1u64 << 53) as f64
    }
}

impl Reader for NoisyOracleReader {
    fn read(&self, input: &ReaderInput, gold: &str) -> PredictedAnswer {
        match find_evidence(input, gold) {
            Some(doc) if self.coin(&input.question, gold) < self.hit_prob => PredictedAnswer {
                text: gold.to_string(),
                source_doc_id: Some(doc.id.clone()),
            },
            _ => PredictedAnswer::miss(),
        }
    }

    fn label(&self) -> &'static str {
        "noisy-oracle"
    }
}

/// Always misses; the lower-bound fixture for reward plumbing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullReader;

impl Reader for NullReader {
    fn read(&self, _input: &ReaderInput, _gold: &str) -> PredictedAnswer {
        PredictedAnswer::miss()
    }

    fn label(&self) -> &'static str {
        "null"
    }
}

/// Echoes the first passage title; only used in plumbing tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoReader;

impl Reader for EchoReader {
    fn read(&self, input: &ReaderInput, _gold: &str) -> PredictedAnswer {
        match input.passages.first() {
            Some(doc) => PredictedAnswer { text: doc.title.clone(), source_doc_id: None },
            None => PredictedAnswer::miss(),
        }
    }

    fn label(&self) -> &'static str {
        "echo"
    }
}

/// Build a reader from its config key.
pub fn reader_from_key(
    key: &str,
    hit_prob: f64,
    seed: u64,
) -> Result<std::sync::Arc<dyn Reader>, ReaderError> {
    match key {
        "oracle" => Ok(std::sync::Arc::new(OracleReader)),
        "noisy-oracle" => Ok(std::sync::Arc::new(NoisyOracleReader::new(hit_prob, seed))),
        "null" => Ok(std::sync::Arc::new(NullReader)),
        other => Err(ReaderError::UnknownKind(other.to_string())),
    }
}
