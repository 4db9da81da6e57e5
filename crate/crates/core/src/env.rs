//! The block-based retrieval episode.
//!
//! One episode serves one question. The controller repeatedly picks among
//! three actions: retrieve texts, retrieve tables, or generate the answer.
//! The first retrieval seeds `num_blocks` single-passage blocks from the
//! question; every later retrieval expands each non-empty block with
//! `expansion_k` new passages found by querying with the question plus the
//! block's accumulated content. Generating the answer hands all distinct
//! passages (block order, capped) to the reader and scores the prediction:
//! `reward_exact` on exact match, token F1 on partial overlap, `reward_miss`
//! otherwise, with `step_penalty` charged per chosen retrieval.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Corpus, Modality, QAPair};
use crate::metrics::{score_pair, shared_token_count};
use crate::reader::{PredictedAnswer, Reader, ReaderInput};
use crate::retrieval::{Embedder, Retriever};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("step() called on a finished episode")]
    EpisodeDone,
    #[error("step() called before reset()")]
    NotReset,
    #[error("reader input requested while every block is empty")]
    AllBlocksEmpty,
    #[error(transparent)]
    Reader(#[from] crate::reader::ReaderError),
}

/// The action alphabet. Serialized as "A1"/"A2"/"A3" everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "A1")]
    RetrieveTexts,
    #[serde(rename = "A2")]
    RetrieveTables,
    #[serde(rename = "A3")]
    GenerateAnswer,
}

impl Action {
    pub const ALL: [Action; 3] = [
        Action::RetrieveTexts,
        Action::RetrieveTables,
        Action::GenerateAnswer,
    ];

    pub fn index(self) -> usize {
        match self {
            Action::RetrieveTexts => 0,
            Action::RetrieveTables => 1,
            Action::GenerateAnswer => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn modality(self) -> Option<Modality> {
        match self {
            Action::RetrieveTexts => Some(Modality::Text),
            Action::RetrieveTables => Some(Modality::Table),
            Action::GenerateAnswer => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::RetrieveTexts => write!(f, "A1"),
            Action::RetrieveTables => write!(f, "A2"),
            Action::GenerateAnswer => write!(f, "A3"),
        }
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A1" => Ok(Action::RetrieveTexts),
            "A2" => Ok(Action::RetrieveTables),
            "A3" => Ok(Action::GenerateAnswer),
            other => Err(format!("unknown action {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub num_blocks: usize,
    pub expansion_k: usize,
    pub max_retrieval_steps: usize,
    pub reader_cap: usize,
    pub step_penalty: f64,
    pub reward_exact: f64,
    pub reward_miss: f64,
    pub query_truncation_tokens: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            num_blocks: 10,
            expansion_k: 4,
            max_retrieval_steps: 3,
            reader_cap: 50,
            step_penalty: -0.02,
            reward_exact: 2.0,
            reward_miss: -0.5,
            query_truncation_tokens: 256,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.num_blocks < 1 {
            return Err(EnvError::InvalidConfig("num_blocks must be >= 1".into()));
        }
        if self.expansion_k < 1 {
            return Err(EnvError::InvalidConfig("expansion_k must be >= 1".into()));
        }
        if self.max_retrieval_steps < 1 {
            return Err(EnvError::InvalidConfig("max_retrieval_steps must be >= 1".into()));
        }
        if self.reader_cap < self.num_blocks {
            return Err(EnvError::InvalidConfig(format!(
                "reader_cap ({}) must be >= num_blocks ({})",
                self.reader_cap, self.num_blocks
            )));
        }
        Ok(())
    }
}

/// `num_blocks + 1` vectors of embedder dimension: the question at position
/// 0, then the mean embedding of each block (zero for empty blocks).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub vectors: Vec<Vec<f64>>,
}

impl Observation {
    pub fn rows(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.vectors.iter().flatten().copied().collect()
    }
}

/// One agent decision as executed by the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub chosen: Action,
    pub executed: Action,
    /// True when the retrieval cap overrode the chosen action to A3.
    pub forced: bool,
    pub reward: f64,
}

/// Everything known once the reader has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub gold: String,
    pub predicted: PredictedAnswer,
    pub terminal_reward: f64,
    pub total_reward: f64,
    pub em: f64,
    pub f1: f64,
    pub steps: Vec<StepRecord>,
    /// True when a bare A3 triggered the environment-initiated table fetch.
    pub preliminary_table_retrieval: bool,
}

/// Result of one `step` call.
#[derive(Debug, Clone)]
pub struct Step {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub outcome: Option<EpisodeOutcome>,
}

/// Line-delimited episode trace record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub question_id: String,
    pub actions: Vec<StepRecord>,
    pub predicted: String,
    pub em: f64,
    pub f1: f64,
    pub total_reward: f64,
}

impl TraceRecord {
    pub fn from_outcome(question_id: impl Into<String>, outcome: &EpisodeOutcome) -> Self {
        TraceRecord {
            question_id: question_id.into(),
            actions: outcome.steps.clone(),
            predicted: outcome.predicted.text.clone(),
            em: outcome.em,
            f1: outcome.f1,
            total_reward: outcome.total_reward,
        }
    }
}

struct EpisodeState {
    qa: QAPair,
    /// Document ids per block, insertion order = retrieval rank order.
    blocks: Vec<Vec<String>>,
    retrieval_steps: usize,
    agent_retrievals: usize,
    done: bool,
    records: Vec<StepRecord>,
    preliminary: bool,
}

/// The episode engine. One instance runs one episode at a time; independent
/// instances may share the same immutable corpus, retriever, and embedder.
pub struct Environment {
    corpus: Arc<Corpus>,
    retriever: Arc<dyn Retriever>,
    reader: Arc<dyn Reader>,
    embedder: Arc<Embedder>,
    doc_embeddings: Arc<BTreeMap<String, Vec<f64>>>,
    config: EnvConfig,
    state: Option<EpisodeState>,
}

impl Environment {
    pub fn new(
        corpus: Arc<Corpus>,
        retriever: Arc<dyn Retriever>,
        reader: Arc<dyn Reader>,
        embedder: Arc<Embedder>,
        config: EnvConfig,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        let doc_embeddings = Arc::new(
            corpus
                .iter()
                .map(|d| (d.id.clone(), embedder.embed(&d.body)))
                .collect::<BTreeMap<_, _>>(),
        );
        Ok(Environment {
            corpus,
            retriever,
            reader,
            embedder,
            doc_embeddings,
            config,
            state: None,
        })
    }

    /// Cheap clone sharing all immutable pieces, for parallel rollouts.
    pub fn fork(&self) -> Environment {
        Environment {
            corpus: Arc::clone(&self.corpus),
            retriever: Arc::clone(&self.retriever),
            reader: Arc::clone(&self.reader),
            embedder: Arc::clone(&self.embedder),
            doc_embeddings: Arc::clone(&self.doc_embeddings),
            config: self.config,
            state: None,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn retriever_label(&self) -> &'static str {
        self.retriever.label()
    }

    pub fn reader_label(&self) -> &'static str {
        self.reader.label()
    }

    pub fn observation_rows(&self) -> usize {
        self.config.num_blocks + 1
    }

    pub fn observation_dim(&self) -> usize {
        self.embedder.dim()
    }

    /// Block contents (doc ids) of the running episode; for inspection.
    pub fn blocks(&self) -> Option<&[Vec<String>]> {
        self.state.as_ref().map(|s| s.blocks.as_slice())
    }

    pub fn retrieval_steps_taken(&self) -> usize {
        self.state.as_ref().map_or(0, |s| s.retrieval_steps)
    }

    pub fn is_done(&self) -> bool {
        self.state.as_ref().is_none_or(|s| s.done)
    }

    /// Begin an episode: empty blocks, no steps taken.
    pub fn reset(&mut self, qa: QAPair) -> Observation {
        let blocks = vec![Vec::new(); self.config.num_blocks];
        self.state = Some(EpisodeState {
            qa,
            blocks,
            retrieval_steps: 0,
            agent_retrievals: 0,
            done: false,
            records: Vec::new(),
            preliminary: false,
        });
        self.observation()
    }

    /// Execute one action. See the module docs for the exact semantics of
    /// the retrieval cap and the bare-A3 preliminary table fetch.
    pub fn step(&mut self, action: Action) -> Result<Step, EnvError> {
        {
            let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
            if state.done {
                return Err(EnvError::EpisodeDone);
            }
        }
        let max_steps = self.config.max_retrieval_steps;
        let at_cap = self.retrieval_steps_taken() >= max_steps;

        match action.modality() {
            Some(modality) if !at_cap => {
                if self.retrieval_steps_taken() == 0 {
                    self.initial_retrieval(modality);
                } else {
                    self.expand_blocks(modality);
                }
                let reward = self.config.step_penalty;
                let state = self.state.as_mut().expect("checked above");
                state.retrieval_steps += 1;
                state.agent_retrievals += 1;
                state.records.push(StepRecord {
                    chosen: action,
                    executed: action,
                    forced: false,
                    reward,
                });
                Ok(Step {
                    observation: self.observation(),
                    reward,
                    done: false,
                    outcome: None,
                })
            }
            // A3, or a retrieval request at the cap which is overridden to A3.
            _ => {
                let forced = action != Action::GenerateAnswer;
                self.finish(action, forced)
            }
        }
    }

    fn finish(&mut self, chosen: Action, forced: bool) -> Result<Step, EnvError> {
        if self.retrieval_steps_taken() == 0 {
            // Environment-initiated, so no step penalty and not counted as an
            // agent retrieval.
            self.initial_retrieval(Modality::Table);
            let state = self.state.as_mut().expect("episode running");
            state.retrieval_steps += 1;
            state.preliminary = true;
        }
        let input = self.build_reader_input();
        let state = self.state.as_ref().expect("episode running");
        let gold = state.qa.gold_answer.clone();
        let predicted = match input {
            Ok(input) => self.reader.read(&input, &gold),
            // Degenerate corpora can leave every block empty; score the
            // empty prediction instead of failing the episode.
            Err(EnvError::AllBlocksEmpty) => PredictedAnswer::miss(),
            Err(e) => return Err(e),
        };
        let terminal_reward = compute_reward(&self.config, &gold, &predicted.text);
        let scores = score_pair(&gold, &predicted.text);

        let state = self.state.as_mut().expect("episode running");
        state.done = true;
        state.records.push(StepRecord {
            chosen,
            executed: Action::GenerateAnswer,
            forced,
            reward: terminal_reward,
        });
        let total_reward =
            terminal_reward + self.config.step_penalty * state.agent_retrievals as f64;
        let outcome = EpisodeOutcome {
            gold,
            predicted,
            terminal_reward,
            total_reward,
            em: scores.exact_match,
            f1: scores.f1,
            steps: state.records.clone(),
            preliminary_table_retrieval: state.preliminary,
        };
        Ok(Step {
            observation: self.observation(),
            reward: terminal_reward,
            done: true,
            outcome: Some(outcome),
        })
    }

    /// Seed each block with one of the top `num_blocks` documents for the
    /// bare question. Fewer hits than blocks leaves trailing blocks empty.
    fn initial_retrieval(&mut self, modality: Modality) {
        let question = self.state.as_ref().expect("episode running").qa.question.clone();
        let ranked = self.retriever.retrieve(
            &question,
            self.config.num_blocks,
            modality,
            &BTreeSet::new(),
        );
        let state = self.state.as_mut().expect("episode running");
        for (i, (doc_id, _)) in ranked.entries.iter().enumerate() {
            state.blocks[i].push(doc_id.clone());
        }
    }

    /// Expand every non-empty block independently: query with the question
    /// plus the block's titles and bodies (token-truncated), excluding only
    /// documents already in that block.
    fn expand_blocks(&mut self, modality: Modality) {
        let state = self.state.as_ref().expect("episode running");
        let queries: Vec<Option<(usize, String, BTreeSet<String>)>> = state
            .blocks
            .iter()
            .enumerate()
            .map(|(i, block)| {
                if block.is_empty() {
                    return None;
                }
                let query = self.expansion_query(&state.qa.question, block);
                let exclude: BTreeSet<String> = block.iter().cloned().collect();
                Some((i, query, exclude))
            })
            .collect();
        let mut additions: Vec<(usize, Vec<String>)> = Vec::new();
        for entry in queries.into_iter().flatten() {
            let (i, query, exclude) = entry;
            let ranked = self
                .retriever
                .retrieve(&query, self.config.expansion_k, modality, &exclude);
            additions.push((i, ranked.entries.into_iter().map(|(id, _)| id).collect()));
        }
        let state = self.state.as_mut().expect("episode running");
        for (i, ids) in additions {
            state.blocks[i].extend(ids);
        }
    }

    /// Question first, then member titles and bodies in insertion order,
    /// truncated to `query_truncation_tokens` tokens.
    fn expansion_query(&self, question: &str, block: &[String]) -> String {
        let mut tokens = tokenize(question);
        for doc_id in block {
            if let Some(doc) = self.corpus.get(doc_id) {
                tokens.extend(tokenize(&doc.title));
                tokens.extend(tokenize(&doc.body));
            }
            if tokens.len() >= self.config.query_truncation_tokens {
                break;
            }
        }
        tokens.truncate(self.config.query_truncation_tokens);
        tokens.join(" ")
    }

    /// All distinct passages in block order (first occurrence wins), capped
    /// at `reader_cap`.
    pub fn build_reader_input(&self) -> Result<ReaderInput, EnvError> {
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        if state.blocks.iter().all(|b| b.is_empty()) {
            return Err(EnvError::AllBlocksEmpty);
        }
        let mut seen = BTreeSet::new();
        let mut passages = Vec::new();
        'outer: for block in &state.blocks {
            for doc_id in block {
                if !seen.insert(doc_id.clone()) {
                    continue;
                }
                if let Some(doc) = self.corpus.get(doc_id) {
                    passages.push(doc.clone());
                }
                if passages.len() >= self.config.reader_cap {
                    break 'outer;
                }
            }
        }
        Ok(ReaderInput::new(
            state.qa.question.clone(),
            passages,
            self.config.reader_cap,
        )?)
    }

    /// Current observation: question embedding then per-block means.
    pub fn observation(&self) -> Observation {
        let dim = self.embedder.dim();
        let state = self.state.as_ref();
        let mut vectors = Vec::with_capacity(self.config.num_blocks + 1);
        match state {
            Some(state) => {
                vectors.push(self.embedder.embed(&state.qa.question));
                for block in &state.blocks {
                    vectors.push(self.block_mean(block, dim));
                }
            }
            None => {
                vectors.push(vec![0.0; dim]);
                for _ in 0..self.config.num_blocks {
                    vectors.push(vec![0.0; dim]);
                }
            }
        }
        Observation { vectors }
    }

    fn block_mean(&self, block: &[String], dim: usize) -> Vec<f64> {
        if block.is_empty() {
            return vec![0.0; dim];
        }
        let mut mean = vec![0.0; dim];
        for doc_id in block {
            if let Some(emb) = self.doc_embeddings.get(doc_id) {
                for (m, v) in mean.iter_mut().zip(emb) {
                    *m += v;
                }
            }
        }
        let n = block.len() as f64;
        for m in &mut mean {
            *m /= n;
        }
        mean
    }

    /// Run a full episode with a fixed action script, starting with a reset.
    pub fn run_sequence(
        &mut self,
        qa: QAPair,
        actions: &[Action],
    ) -> Result<EpisodeOutcome, EnvError> {
        self.reset(qa);
        for &action in actions {
            let step = self.step(action)?;
            if step.done {
                return Ok(step.outcome.expect("terminal step carries the outcome"));
            }
        }
        // Script exhausted without A3: force the answer.
        let step = self.step(Action::GenerateAnswer)?;
        Ok(step.outcome.expect("terminal step carries the outcome"))
    }
}

/// Terminal reward: `reward_exact` on exact match, token F1 when the
/// normalized token multisets intersect, `reward_miss` otherwise.
pub fn compute_reward(config: &EnvConfig, gold: &str, pred: &str) -> f64 {
    let scores = score_pair(gold, pred);
    if scores.exact_match == 1.0 {
        config.reward_exact
    } else if shared_token_count(gold, pred) > 0 {
        scores.f1
    } else {
        config.reward_miss
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::reader::{NullReader, OracleReader};
    use crate::retrieval::{Bm25Index, Bm25Params};

    /// 12 text docs (t00..t11) and 6 table docs; "needle" lives in t03.
    fn fixture() -> (Arc<Corpus>, Arc<dyn Retriever>, Arc<Embedder>) {
        let mut docs = Vec::new();
        for i in 0..12 {
            let extra = if i == 3 { "needle gold answer here" } else { "plain filler line" };
            docs.push(Document::text(
                format!("t{i:02}"),
                format!("text {i}"),
                format!("common passage number {i} {extra}"),
            ));
        }
        for i in 0..6 {
            docs.push(
                Document::from_segment(
                    format!("s{i:02}"),
                    crate::corpus::TableSegment {
                        table_title: format!("table {i}"),
                        headers: vec!["col".into()],
                        row: vec![format!("common cell number {i}")],
                        source_table_id: format!("tab{i}"),
                    },
                )
                .unwrap(),
            );
        }
        let corpus = Arc::new(Corpus::from_documents(docs).unwrap());
        let retriever: Arc<dyn Retriever> =
            Arc::new(Bm25Index::build(&corpus, Bm25Params::default()).unwrap());
        (corpus, retriever, Arc::new(Embedder::hashed(16)))
    }

    fn env_with(reader: Arc<dyn Reader>) -> Environment {
        let (corpus, retriever, embedder) = fixture();
        Environment::new(corpus, retriever, reader, embedder, EnvConfig::default()).unwrap()
    }

    fn qa(question: &str, gold: &str) -> QAPair {
        QAPair::new(question, gold)
    }

    #[test]
    fn reset_observation_shape() {
        let mut env = env_with(Arc::new(OracleReader));
        let obs = env.reset(qa("common needle", "gold answer"));
        assert_eq!(obs.rows(), 11);
        assert_eq!(obs.dim(), 16);
        let norm: f64 = obs.vectors[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        for block_vec in &obs.vectors[1..] {
            assert!(block_vec.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn first_retrieval_seeds_singleton_blocks() {
        let mut env = env_with(Arc::new(OracleReader));
        env.reset(qa("common needle", "gold answer"));
        let step = env.step(Action::RetrieveTexts).unwrap();
        assert_eq!(step.reward, -0.02);
        assert!(!step.done);
        let blocks = env.blocks().unwrap();
        assert!(blocks.iter().all(|b| b.len() == 1));
    }

    #[test]
    fn expansion_grows_blocks_by_k() {
        let mut env = env_with(Arc::new(OracleReader));
        env.reset(qa("common needle", "gold answer"));
        env.step(Action::RetrieveTexts).unwrap();
        env.step(Action::RetrieveTexts).unwrap();
        // 12 text docs: 1 seed + up to 4 new, but exclusion is per block so
        // every block can reach 5.
        let blocks = env.blocks().unwrap();
        assert!(blocks.iter().all(|b| b.len() == 5), "sizes: {:?}",
            blocks.iter().map(|b| b.len()).collect::<Vec<_>>());
        env.step(Action::RetrieveTexts).unwrap();
        let blocks = env.blocks().unwrap();
        // Only 12 text docs exist, so the third step can exhaust the pool
        // (block already holds 5, at most 7 remain).
        assert!(blocks.iter().all(|b| b.len() <= 9 && b.len() >= 5));
    }

    #[test]
    fn table_partition_exhaustion_leaves_trailing_blocks_empty() {
        let mut env = env_with(Arc::new(OracleReader));
        env.reset(qa("common cell", "gold answer"));
        env.step(Action::RetrieveTables).unwrap();
        let blocks = env.blocks().unwrap();
        let filled = blocks.iter().filter(|b| b.len() == 1).count();
        let empty = blocks.iter().filter(|b| b.is_empty()).count();
        assert_eq!(filled, 6);
        assert_eq!(empty, 4);
    }

    #[test]
    fn fourth_retrieval_is_forced_to_answer() {
        let mut env = env_with(Arc::new(OracleReader));
        env.reset(qa("common needle", "needle gold"));
        env.step(Action::RetrieveTexts).unwrap();
        env.step(Action::RetrieveTexts).unwrap();
        env.step(Action::RetrieveTexts).unwrap();
        let step = env.step(Action::RetrieveTexts).unwrap();
        assert!(step.done);
        let outcome = step.outcome.unwrap();
        let last = outcome.steps.last().unwrap();
        assert_eq!(last.chosen, Action::RetrieveTexts);
        assert_eq!(last.executed, Action::GenerateAnswer);
        assert!(last.forced);
    }

    #[test]
    fn bare_answer_triggers_preliminary_table_fetch() {
        let mut env = env_with(Arc::new(OracleReader));
        env.reset(qa("common cell", "cell number 2"));
        let step = env.step(Action::GenerateAnswer).unwrap();
        assert!(step.done);
        let outcome = step.outcome.unwrap();
        assert!(outcome.preliminary_table_retrieval);
        // Table bodies contain "cell number i"; the oracle must hit and no
        // step penalty is charged.
        assert_eq!(outcome.total_reward, 2.0);
        assert_eq!(outcome.terminal_reward, 2.0);
        assert_eq!(outcome.em, 1.0);
    }

    #[test]
    fn step_after_done_is_an_error() {
        let mut env = env_with(Arc::new(OracleReader));
        env.reset(qa("common", "gold"));
        env.step(Action::GenerateAnswer).unwrap();
        assert!(matches!(env.step(Action::RetrieveTexts), Err(EnvError::EpisodeDone)));
    }

    #[test]
    fn reader_input_dedups_and_respects_block_order() {
        let mut env = env_with(Arc::new(OracleReader));
        env.reset(qa("common needle", "gold answer"));
        env.step(Action::RetrieveTexts).unwrap();
        let input = env.build_reader_input().unwrap();
        assert_eq!(input.passages.len(), 10);
        let blocks = env.blocks().unwrap();
        let expected_first = blocks[0][0].clone();
        assert_eq!(input.passages[0].id, expected_first);
        let mut ids: Vec<&str> = input.passages.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn null_reader_reward_is_miss_plus_penalties() {
        let mut env = env_with(Arc::new(NullReader));
        let outcome = env
            .run_sequence(
                qa("common needle", "gold answer"),
                &[Action::RetrieveTexts, Action::RetrieveTexts, Action::GenerateAnswer],
            )
            .unwrap();
        assert_eq!(outcome.terminal_reward, -0.5);
        assert!((outcome.total_reward - (-0.5 - 0.04)).abs() < 1e-12);
    }

    #[test]
    fn oracle_hit_after_text_retrieval() {
        let mut env = env_with(Arc::new(OracleReader));
        let outcome = env
            .run_sequence(
                qa("common needle", "needle gold answer"),
                &[Action::RetrieveTexts, Action::GenerateAnswer],
            )
            .unwrap();
        assert_eq!(outcome.em, 1.0);
        assert!((outcome.total_reward - (2.0 - 0.02)).abs() < 1e-12);
    }

    #[test]
    fn reward_function_branches() {
        let cfg = EnvConfig::default();
        assert_eq!(compute_reward(&cfg, "prime suspect", "Prime Suspect."), 2.0);
        assert!((compute_reward(&cfg, "prime suspect", "suspect series") - 0.5).abs() < 1e-12);
        assert_eq!(compute_reward(&cfg, "1987", ""), -0.5);
    }

    #[test]
    fn observation_blocks_are_mean_embeddings() {
        let mut env = env_with(Arc::new(OracleReader));
        env.reset(qa("common needle", "gold"));
        env.step(Action::RetrieveTexts).unwrap();
        env.step(Action::RetrieveTexts).unwrap();
        let obs = env.observation();
        let blocks = env.blocks().unwrap();
        let embedder = Embedder::hashed(16);
        let corpus = env.corpus();
        for (bi, block) in blocks.iter().enumerate() {
            let mut expected = vec![0.0; 16];
            for id in block {
                let v = embedder.embed(&corpus.get(id).unwrap().body);
                for (e, x) in expected.iter_mut().zip(&v) {
                    *e += x;
                }
            }
            for e in &mut expected {
                *e /= block.len() as f64;
            }
            for (got, want) in obs.vectors[bi + 1].iter().zip(&expected) {
                assert!((got - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn observation_never_depends_on_gold() {
        let (corpus, retriever, embedder) = fixture();
        let mut env_a = Environment::new(
            corpus.clone(),
            retriever.clone(),
            Arc::new(OracleReader),
            embedder.clone(),
            EnvConfig::default(),
        )
        .unwrap();
        let mut env_b = env_a.fork();
        let obs_a = env_a.reset(qa("common needle", "gold one"));
        let obs_b = env_b.reset(qa("common needle", "completely different"));
        assert_eq!(obs_a, obs_b);
        let step_a = env_a.step(Action::RetrieveTexts).unwrap();
        let step_b = env_b.step(Action::RetrieveTexts).unwrap();
        assert_eq!(step_a.observation, step_b.observation);
    }

    #[test]
    fn fixed_inputs_give_bit_identical_outcomes() {
        let run = || {
            let mut env = env_with(Arc::new(OracleReader));
            env.run_sequence(
                qa("common needle", "needle gold answer"),
                &[Action::RetrieveTexts, Action::RetrieveTables, Action::GenerateAnswer],
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn config_validation() {
        let mut cfg = EnvConfig::default();
        cfg.reader_cap = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.num_blocks = 0;
        assert!(cfg.validate().is_err());
    }
}
