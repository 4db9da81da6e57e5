//! Deep Q-network action selection and the one-batch training step.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::nncore::{Activation, AdamConfig, LayerSpec, Network, ParamStore, Tape};

use super::buffers::Transition;
use super::extractor::{
    inert_rng, matrix_from_flat, obs_matrix, FeatureExtractor, FeatureExtractorSpec,
};
use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    /// Replay capacity. Reference setup: 500_000.
    pub buffer_size: usize,
    /// Steps of uniform-random warmup before training. Reference setup:
    /// 50_000 (dense retriever) or 10_000 (sparse).
    pub learning_starts: usize,
    pub batch_size: usize,
    pub gamma: f64,
    /// Env steps between target-network copies.
    pub target_update_interval: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of total timesteps over which epsilon anneals linearly.
    pub exploration_fraction: f64,
    pub learning_rate: f64,
    /// Train every this many env steps.
    pub train_freq: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            buffer_size: 50_000,
            learning_starts: 2_000,
            batch_size: 32,
            gamma: 0.99,
            target_update_interval: 1_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            exploration_fraction: 0.1,
            learning_rate: 1e-4,
            train_freq: 4,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self, total_timesteps: usize) -> Result<(), AgentError> {
        if self.buffer_size < self.batch_size {
            return Err(AgentError::InvalidConfig(format!(
                "buffer_size ({}) must be >= batch_size ({})",
                self.buffer_size, self.batch_size
            )));
        }
        if self.learning_starts >= total_timesteps {
            return Err(AgentError::InvalidConfig(format!(
                "learning_starts ({}) must be < total timesteps ({total_timesteps})",
                self.learning_starts
            )));
        }
        Ok(())
    }

    /// Linear 1.0 -> 0.05 over the first `exploration_fraction` of training.
    pub fn epsilon(&self, step: usize, total_timesteps: usize) -> f64 {
        let horizon = (total_timesteps as f64 * self.exploration_fraction).max(1.0);
        let progress = (step as f64 / horizon).min(1.0);
        self.epsilon_start + progress * (self.epsilon_end - self.epsilon_start)
    }
}

pub struct DqnAgent {
    pub spec: FeatureExtractorSpec,
    pub cfg: DqnConfig,
    extractor: FeatureExtractor,
    qhead: Network,
    store: ParamStore,
    target: ParamStore,
}

impl DqnAgent {
    pub fn new(
        mut spec: FeatureExtractorSpec,
        cfg: DqnConfig,
        seed: u64,
    ) -> Result<Self, AgentError> {
        spec.for_dqn = true;
        let extractor = FeatureExtractor::build(spec)?;
        let qhead = Network::new(
            "qhead",
            vec![LayerSpec::Dense {
                inputs: spec.feature_dim(),
                outputs: Action::ALL.len(),
                activation: Activation::Identity,
            }],
        )?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        extractor.init_params(&mut store, &mut rng)?;
        qhead.init_params(&mut store, &mut rng)?;
        let target = store.clone();
        Ok(DqnAgent { spec, cfg, extractor, qhead, store, target })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn replace_store(&mut self, store: ParamStore) {
        self.target = store.clone();
        self.store = store;
    }

    /// Q-values over the three actions, eval mode.
    pub fn q_values(&self, obs: &Array2<f64>) -> Result<Vec<f64>, AgentError> {
        self.q_values_with(&self.store, obs)
    }

    fn q_values_with(
        &self,
        store: &ParamStore,
        obs: &Array2<f64>,
    ) -> Result<Vec<f64>, AgentError> {
        let mut tape = Tape::new();
        let ex_bound = self.extractor.bind(&mut tape, store)?;
        let q_bound = self.qhead.bind(&mut tape, store)?;
        let mut rng = inert_rng();
        let feats = self
            .extractor
            .forward_batch(&mut tape, &ex_bound, std::slice::from_ref(obs), false, &mut rng)?;
        let q = self.qhead.forward(&mut tape, &q_bound, feats, false, &mut rng)?;
        Ok(tape.value(q).row(0).to_vec())
    }

    /// Epsilon-greedy action; argmax ties break toward the lower index.
    pub fn act(
        &self,
        obs: &Array2<f64>,
        epsilon: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Action, AgentError> {
        if rng_chance(rng, epsilon) {
            let i = rng.gen_range(0..Action::ALL.len());
            return Ok(Action::from_index(i).expect("index in range"));
        }
        let q = self.q_values(obs)?;
        Ok(argmax_action(&q))
    }

    pub fn greedy_action(&self, obs: &Array2<f64>) -> Result<Action, AgentError> {
        Ok(argmax_action(&self.q_values(obs)?))
    }

    pub fn greedy_from_observation(
        &self,
        obs: &crate::env::Observation,
    ) -> Result<Action, AgentError> {
        self.greedy_action(&obs_matrix(obs))
    }

    pub fn sync_target(&mut self) {
        self.target
            .copy_values_from(&self.store)
            .expect("target mirrors the online parameter names");
    }

    /// One gradient step on a sampled batch: Huber TD loss against the
    /// frozen target network, then Adam. Returns the scalar loss.
    pub fn train_step(
        &mut self,
        batch: &[&Transition],
        dropout_rng: &mut ChaCha8Rng,
    ) -> Result<f64, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::InvalidConfig("empty training batch".to_string()));
        }
        let rows = self.spec.seq_len;
        let dim = self.spec.embed_dim;

        // Bootstrap targets from the frozen network; no gradients flow here.
        let next_obs: Vec<Array2<f64>> =
            batch.iter().map(|t| matrix_from_flat(&t.next_obs, rows, dim)).collect();
        let next_q = {
            let mut tape = Tape::new();
            let ex_bound = self.extractor.bind(&mut tape, &self.target)?;
            let q_bound = self.qhead.bind(&mut tape, &self.target)?;
            let mut rng = inert_rng();
            let feats =
                self.extractor.forward_batch(&mut tape, &ex_bound, &next_obs, false, &mut rng)?;
            let q = self.qhead.forward(&mut tape, &q_bound, feats, false, &mut rng)?;
            tape.value(q).clone()
        };
        let targets = Array2::from_shape_fn((batch.len(), 1), |(i, _)| {
            let max_next = next_q.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let not_done = if batch[i].done { 0.0 } else { 1.0 };
            batch[i].reward + self.cfg.gamma * not_done * max_next
        });

        let obs: Vec<Array2<f64>> =
            batch.iter().map(|t| matrix_from_flat(&t.obs, rows, dim)).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();

        let mut tape = Tape::new();
        let ex_bound = self.extractor.bind(&mut tape, &self.store)?;
        let q_bound = self.qhead.bind(&mut tape, &self.store)?;
        let feats = self.extractor.forward_batch(&mut tape, &ex_bound, &obs, true, dropout_rng)?;
        let q_all = self.qhead.forward(&mut tape, &q_bound, feats, true, dropout_rng)?;
        let q_chosen = tape.gather_cols(q_all, actions);
        let target_var = tape.constant(targets);
        let diff = tape.sub(q_chosen, target_var);
        let huber = tape.huber(diff, 1.0);
        let loss = tape.mean_all(huber);
        let loss_value = tape.value(loss)[(0, 0)];
        if !loss_value.is_finite() {
            return Err(AgentError::NonFiniteLoss { what: "dqn huber loss".to_string() });
        }

        let gradients = tape.backward(loss);
        let mut grads = ex_bound.grads(&tape, &gradients);
        grads.extend(q_bound.grads(&tape, &gradients));
        self.store.adam_step(&grads, AdamConfig::with_lr(self.cfg.learning_rate))?;
        Ok(loss_value)
    }
}

fn rng_chance(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.gen::<f64>() < p
}

pub(crate) fn argmax_action(values: &[f64]) -> Action {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    Action::from_index(best).expect("three q-values")
}
