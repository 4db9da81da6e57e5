//! Training loops, checkpoint metadata, and greedy evaluation.

use std::path::PathBuf;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::QAPair;
use crate::env::{Action, Environment, Observation};
use crate::metrics::macro_scores;
use crate::nncore::ParamStore;

use super::buffers::{ReplayBuffer, RolloutBuffer, Transition};
use super::dqn::{DqnAgent, DqnConfig};
use super::extractor::{flatten_to_f32, matrix_from_flat, obs_matrix, FeatureExtractorSpec};
use super::ppo::{PpoAgent, PpoConfig};
use super::AgentError;

/// The training-facing environment surface. The question-answering task and
/// the diagnostic single-step environments implement the same contract.
pub trait RlEnv {
    fn obs_rows(&self) -> usize;
    fn obs_dim(&self) -> usize;
    /// Start a new episode; the rng covers any episode sampling the
    /// environment does (e.g. drawing the next question).
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Observation;
    fn step(&mut self, action: Action) -> RlStep;
}

pub struct RlStep {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub em: Option<f64>,
    pub f1: Option<f64>,
}

/// QA episodes over a dataset: reset draws a uniformly random question.
pub struct QaTaskEnv {
    env: Environment,
    dataset: Arc<Vec<QAPair>>,
}

impl QaTaskEnv {
    pub fn new(env: Environment, dataset: Arc<Vec<QAPair>>) -> Result<Self, AgentError> {
        if dataset.is_empty() {
            return Err(AgentError::InvalidConfig("training dataset is empty".to_string()));
        }
        Ok(QaTaskEnv { env, dataset })
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }
}

impl RlEnv for QaTaskEnv {
    fn obs_rows(&self) -> usize {
        self.env.observation_rows()
    }

    fn obs_dim(&self) -> usize {
        self.env.observation_dim()
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Observation {
        let idx = rng.gen_range(0..self.dataset.len());
        self.env.reset(self.dataset[idx].clone())
    }

    fn step(&mut self, action: Action) -> RlStep {
        let step = self
            .env
            .step(action)
            .expect("trainer only steps live episodes");
        let (em, f1) = match &step.outcome {
            Some(outcome) => (Some(outcome.em), Some(outcome.f1)),
            None => (None, None),
        };
        RlStep { observation: step.observation, reward: step.reward, done: step.done, em, f1 }
    }
}

/// One line of the training log, written per finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub timestep: usize,
    pub episode: usize,
    pub reward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    /// Epsilon (DQN) or the last update's clip fraction (PPO).
    pub exploration: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub total_timesteps: usize,
    pub seed: u64,
    /// Write interim checkpoints here every `checkpoint_interval` steps.
    pub checkpoint_dir: Option<PathBuf>,
    pub checkpoint_interval: Option<usize>,
    /// Metadata string embedded in every checkpoint written during training.
    pub metadata: String,
}

impl TrainOptions {
    pub fn new(total_timesteps: usize, seed: u64) -> Self {
        TrainOptions {
            total_timesteps,
            seed,
            checkpoint_dir: None,
            checkpoint_interval: None,
            metadata: String::new(),
        }
    }
}

fn maybe_checkpoint(
    store: &ParamStore,
    opts: &TrainOptions,
    step: usize,
) -> Result<(), AgentError> {
    let (Some(dir), Some(every)) = (&opts.checkpoint_dir, opts.checkpoint_interval) else {
        return Ok(());
    };
    if (step + 1) % every != 0 {
        return Ok(());
    }
    std::fs::create_dir_all(dir).map_err(|e| AgentError::Io(e.to_string()))?;
    let path = dir.join(format!("checkpoint_{:08}.ckpt", step + 1));
    store.save(path, &opts.metadata)?;
    Ok(())
}

/// Deterministic DQN training: seeded question sampling, exploration,
/// replay sampling, and dropout. Returns per-episode records.
pub fn train_dqn(
    agent: &mut DqnAgent,
    env: &mut dyn RlEnv,
    opts: &TrainOptions,
) -> Result<Vec<EpisodeRecord>, AgentError> {
    agent.cfg.validate(opts.total_timesteps)?;
    check_dims(agent.spec, env)?;
    let cfg = agent.cfg;
    let mut env_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e3779b97f4a7c15);
    let mut action_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x517cc1b727220a95);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x2545f4914f6cdd1d);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x14057b7ef767814f);

    let mut buffer = ReplayBuffer::new(cfg.buffer_size);
    let mut records = Vec::new();
    let mut obs = env.reset(&mut env_rng);
    let mut episode_reward = 0.0;
    let mut episode = 0usize;
    let mut last_loss = None;

    for step in 0..opts.total_timesteps {
        let epsilon = cfg.epsilon(step, opts.total_timesteps);
        let action = if step < cfg.learning_starts {
            Action::from_index(action_rng.gen_range(0..Action::ALL.len())).expect("in range")
        } else {
            agent.act(&obs_matrix(&obs), epsilon, &mut action_rng)?
        };
        let rl = env.step(action);
        episode_reward += rl.reward;
        buffer.push(Transition {
            obs: flatten_to_f32(&obs),
            action: action.index(),
            reward: rl.reward,
            next_obs: flatten_to_f32(&rl.observation),
            done: rl.done,
        });

        if rl.done {
            records.push(EpisodeRecord {
                timestep: step + 1,
                episode,
                reward: episode_reward,
                em: rl.em,
                f1: rl.f1,
                exploration: epsilon,
                loss: last_loss,
                value_loss: None,
            });
            episode += 1;
            episode_reward = 0.0;
            obs = env.reset(&mut env_rng);
        } else {
            obs = rl.observation;
        }

        if step >= cfg.learning_starts
            && (step + 1) % cfg.train_freq == 0
            && buffer.len() >= cfg.batch_size
        {
            let batch = buffer.sample(&mut sample_rng, cfg.batch_size);
            last_loss = Some(agent.train_step(&batch, &mut dropout_rng)?);
        }
        if (step + 1) % cfg.target_update_interval == 0 {
            agent.sync_target();
        }
        maybe_checkpoint(agent.store(), opts, step)?;
    }
    Ok(records)
}

/// Deterministic PPO training. Rollouts cross episode boundaries; truncated
/// episodes bootstrap from the critic.
pub fn train_ppo(
    agent: &mut PpoAgent,
    env: &mut dyn RlEnv,
    opts: &TrainOptions,
) -> Result<Vec<EpisodeRecord>, AgentError> {
    check_dims(agent.spec, env)?;
    let cfg = agent.cfg;
    cfg.validate()?;
    let mut env_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e3779b97f4a7c15);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x517cc1b727220a95);
    let mut update_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x2545f4914f6cdd1d);

    let mut records = Vec::new();
    let mut rollout = RolloutBuffer::default();
    let mut obs = env.reset(&mut env_rng);
    let mut episode_reward = 0.0;
    let mut episode = 0usize;
    let mut last_stats: Option<super::ppo::PpoUpdateStats> = None;
    let mut step = 0usize;

    while step < opts.total_timesteps {
        let obs_m = obs_matrix(&obs);
        let (action, logp, value) = agent.act(&obs_m, &mut policy_rng)?;
        let rl = env.step(action);
        episode_reward += rl.reward;
        rollout.push(obs_m, action.index(), logp, value, rl.reward, rl.done);

        if rl.done {
            records.push(EpisodeRecord {
                timestep: step + 1,
                episode,
                reward: episode_reward,
                em: rl.em,
                f1: rl.f1,
                exploration: last_stats.map_or(0.0, |s| s.clip_fraction),
                loss: last_stats.map(|s| s.policy_loss),
                value_loss: last_stats.map(|s| s.value_loss),
            });
            episode += 1;
            episode_reward = 0.0;
            obs = env.reset(&mut env_rng);
        } else {
            obs = rl.observation;
        }

        if rollout.len() == cfg.n_steps {
            let last_value = if rollout.dones[rollout.len() - 1] {
                0.0
            } else {
                agent.value(&obs_matrix(&obs))?
            };
            rollout.finalize(last_value, cfg.gamma, cfg.gae_lambda);
            last_stats = Some(agent.update(&rollout, &mut update_rng)?);
            rollout.clear();
        }
        maybe_checkpoint(agent.store(), opts, step)?;
        step += 1;
    }
    Ok(records)
}

fn check_dims(spec: FeatureExtractorSpec, env: &dyn RlEnv) -> Result<(), AgentError> {
    if spec.seq_len != env.obs_rows() || spec.embed_dim != env.obs_dim() {
        return Err(AgentError::InvalidConfig(format!(
            "agent expects observations of {}x{}, environment provides {}x{}",
            spec.seq_len,
            spec.embed_dim,
            env.obs_rows(),
            env.obs_dim()
        )));
    }
    Ok(())
}

/// A trained policy of either algorithm.
pub enum Agent {
    Dqn(DqnAgent),
    Ppo(PpoAgent),
}

impl Agent {
    pub fn algorithm(&self) -> &'static str {
        match self {
            Agent::Dqn(_) => "dqn",
            Agent::Ppo(_) => "ppo",
        }
    }

    pub fn spec(&self) -> FeatureExtractorSpec {
        match self {
            Agent::Dqn(a) => a.spec,
            Agent::Ppo(a) => a.spec,
        }
    }

    pub fn store(&self) -> &ParamStore {
        match self {
            Agent::Dqn(a) => a.store(),
            Agent::Ppo(a) => a.store(),
        }
    }

    pub fn greedy_action(&self, obs: &Observation) -> Result<Action, AgentError> {
        match self {
            Agent::Dqn(a) => a.greedy_from_observation(obs),
            Agent::Ppo(a) => a.greedy_from_observation(obs),
        }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>, meta: &AgentMetadata) -> Result<(), AgentError> {
        let metadata = serde_json::to_string(meta)
            .map_err(|e| AgentError::CheckpointMetadata(e.to_string()))?;
        self.store().save(path, &metadata)?;
        Ok(())
    }

    /// Rebuild an agent from a checkpoint: the metadata names the algorithm
    /// and network shape; the stored parameters replace the fresh ones.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<(Agent, AgentMetadata), AgentError> {
        let (store, metadata) = ParamStore::load(path)?;
        let meta: AgentMetadata = serde_json::from_str(&metadata)
            .map_err(|e| AgentError::CheckpointMetadata(e.to_string()))?;
        let agent = match meta.algorithm.as_str() {
            "dqn" => {
                let mut agent =
                    DqnAgent::new(meta.spec, meta.dqn.unwrap_or_default(), meta.seed)?;
                agent.replace_store(store);
                Agent::Dqn(agent)
            }
            "ppo" => {
                let mut agent =
                    PpoAgent::new(meta.spec, meta.ppo.unwrap_or_default(), meta.seed)?;
                agent.replace_store(store);
                Agent::Ppo(agent)
            }
            other => {
                return Err(AgentError::CheckpointMetadata(format!(
                    "unknown algorithm {other:?}"
                )))
            }
        };
        Ok((agent, meta))
    }
}

/// Checkpoint header: everything needed to rebuild and to verify
/// compatibility at eval time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetadata {
    pub algorithm: String,
    pub spec: FeatureExtractorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dqn: Option<DqnConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppo: Option<PpoConfig>,
    pub seed: u64,
    pub config_hash: String,
    pub corpus_hash: String,
    pub code_version: String,
}

/// Greedy-policy evaluation over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub em_pct: f64,
    pub f1_pct: f64,
    pub mean_reward: f64,
    /// Counts of the agent's chosen actions (A1, A2, A3), forced overrides
    /// included under the chosen action.
    pub chosen_counts: [u64; 3],
    /// How many of those choices the environment overrode to A3.
    pub forced_a3: u64,
    pub episodes: usize,
}

pub fn evaluate_greedy(
    agent: &Agent,
    env: &mut Environment,
    dataset: &[QAPair],
) -> Result<EvalReport, AgentError> {
    if dataset.is_empty() {
        return Err(AgentError::InvalidConfig("evaluation dataset is empty".to_string()));
    }
    let mut pairs = Vec::with_capacity(dataset.len());
    let mut reward_sum = 0.0;
    let mut chosen_counts = [0u64; 3];
    let mut forced_a3 = 0u64;
    for qa in dataset {
        let mut obs = env.reset(qa.clone());
        loop {
            let action = agent.greedy_action(&obs)?;
            let step = env.step(action)?;
            if step.done {
                let outcome = step.outcome.expect("terminal step carries the outcome");
                for record in &outcome.steps {
                    chosen_counts[record.chosen.index()] += 1;
                    if record.forced {
                        forced_a3 += 1;
                    }
                }
                reward_sum += outcome.total_reward;
                pairs.push((outcome.gold, outcome.predicted.text));
                break;
            }
            obs = step.observation;
        }
    }
    let (em_pct, f1_pct) = macro_scores(pairs.iter().map(|(g, p)| (g.as_str(), p.as_str())))
        .map_err(|e| AgentError::InvalidConfig(e.to_string()))?;
    Ok(EvalReport {
        em_pct,
        f1_pct,
        mean_reward: reward_sum / dataset.len() as f64,
        chosen_counts,
        forced_a3,
        episodes: dataset.len(),
    })
}

/// Mean greedy episode reward on an arbitrary training environment; used by
/// the learning acceptance checks.
pub fn greedy_mean_reward(
    agent: &Agent,
    env: &mut dyn RlEnv,
    episodes: usize,
    seed: u64,
) -> Result<f64, AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut obs = env.reset(&mut rng);
        loop {
            let action = agent.greedy_action(&obs)?;
            let rl = env.step(action);
            total += rl.reward;
            if rl.done {
                break;
            }
            obs = rl.observation;
        }
    }
    Ok(total / episodes as f64)
}

/// Expose matrix conversion for integration tests that drive agents by hand.
pub fn observation_matrix(obs: &Observation) -> Array2<f64> {
    obs_matrix(obs)
}

pub fn observation_from_flat(flat: &[f32], rows: usize, dim: usize) -> Array2<f64> {
    matrix_from_flat(flat, rows, dim)
}
