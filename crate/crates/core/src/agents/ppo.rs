//! Proximal policy optimization with a clipped surrogate objective and an
//! actor-critic sharing one feature extractor.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::nncore::{Activation, AdamConfig, LayerSpec, Network, ParamStore, Tape};

use super::buffers::RolloutBuffer;
use super::dqn::argmax_action;
use super::extractor::{inert_rng, obs_matrix, FeatureExtractor, FeatureExtractorSpec};
use super::AgentError;

/// Reference head sizes (scaled like the extractor's hidden sizes).
const HEAD_HIDDEN: [usize; 2] = [64, 32];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    /// Env steps collected per update.
    pub n_steps: usize,
    pub batch_size: usize,
    /// Optimization epochs over each rollout.
    pub epochs: usize,
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            n_steps: 128,
            batch_size: 32,
            epochs: 60,
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.n_steps == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(AgentError::InvalidConfig(
                "n_steps, batch_size, and epochs must be positive".to_string(),
            ));
        }
        if self.n_steps % self.batch_size != 0 {
            return Err(AgentError::InvalidConfig(format!(
                "n_steps ({}) must be divisible by batch_size ({})",
                self.n_steps, self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoUpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

pub struct PpoAgent {
    pub spec: FeatureExtractorSpec,
    pub cfg: PpoConfig,
    extractor: FeatureExtractor,
    actor: Network,
    critic: Network,
    store: ParamStore,
}

impl PpoAgent {
    pub fn new(
        mut spec: FeatureExtractorSpec,
        cfg: PpoConfig,
        seed: u64,
    ) -> Result<Self, AgentError> {
        cfg.validate()?;
        spec.for_dqn = false;
        let extractor = FeatureExtractor::build(spec)?;
        let head = |name: &str, outputs: usize| -> Result<Network, AgentError> {
            let h1 = spec.scaled(HEAD_HIDDEN[0]);
            let h2 = spec.scaled(HEAD_HIDDEN[1]);
            Ok(Network::new(
                name,
                vec![
                    LayerSpec::Dense {
                        inputs: spec.feature_dim(),
                        outputs: h1,
                        activation: Activation::Relu,
                    },
                    LayerSpec::Dense { inputs: h1, outputs: h2, activation: Activation::Relu },
                    LayerSpec::Dense { inputs: h2, outputs, activation: Activation::Identity },
                ],
            )?)
        };
        let actor = head("actor", Action::ALL.len())?;
        let critic = head("critic", 1)?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        extractor.init_params(&mut store, &mut rng)?;
        actor.init_params(&mut store, &mut rng)?;
        critic.init_params(&mut store, &mut rng)?;
        Ok(PpoAgent { spec, cfg, extractor, actor, critic, store })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn replace_store(&mut self, store: ParamStore) {
        self.store = store;
    }

    /// Action probabilities and value estimate for one observation (eval mode).
    pub fn policy_value(&self, obs: &Array2<f64>) -> Result<(Vec<f64>, f64), AgentError> {
        let mut tape = Tape::new();
        let ex_bound = self.extractor.bind(&mut tape, &self.store)?;
        let actor_bound = self.actor.bind(&mut tape, &self.store)?;
        let critic_bound = self.critic.bind(&mut tape, &self.store)?;
        let mut rng = inert_rng();
        let feats = self
            .extractor
            .forward_batch(&mut tape, &ex_bound, std::slice::from_ref(obs), false, &mut rng)?;
        let logits = self.actor.forward(&mut tape, &actor_bound, feats, false, &mut rng)?;
        let probs = tape.softmax_rows(logits);
        let value = self.critic.forward(&mut tape, &critic_bound, feats, false, &mut rng)?;
        Ok((tape.value(probs).row(0).to_vec(), tape.value(value)[(0, 0)]))
    }

    /// Sample from the categorical policy: (action, log-prob, value).
    pub fn act(
        &self,
        obs: &Array2<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Action, f64, f64), AgentError> {
        let (probs, value) = self.policy_value(obs)?;
        let draw: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut chosen = probs.len() - 1;
        for (i, &p) in probs.iter().enumerate() {
            cumulative += p;
            if draw < cumulative {
                chosen = i;
                break;
            }
        }
        let action = Action::from_index(chosen).expect("three probabilities");
        Ok((action, probs[chosen].max(f64::MIN_POSITIVE).ln(), value))
    }

    pub fn greedy_action(&self, obs: &Array2<f64>) -> Result<Action, AgentError> {
        let (probs, _) = self.policy_value(obs)?;
        Ok(argmax_action(&probs))
    }

    pub fn greedy_from_observation(
        &self,
        obs: &crate::env::Observation,
    ) -> Result<Action, AgentError> {
        self.greedy_action(&obs_matrix(obs))
    }

    /// Value estimate only (bootstrap for rollout truncation).
    pub fn value(&self, obs: &Array2<f64>) -> Result<f64, AgentError> {
        Ok(self.policy_value(obs)?.1)
    }

    /// Optimize the clipped surrogate over a finalized rollout for
    /// `epochs` passes of shuffled minibatches. Statistics are averaged over
    /// all minibatches.
    pub fn update(
        &mut self,
        rollout: &RolloutBuffer,
        rng: &mut ChaCha8Rng,
    ) -> Result<PpoUpdateStats, AgentError> {
        assert_eq!(
            rollout.advantages.len(),
            rollout.len(),
            "rollout must be finalized before update"
        );
        let n = rollout.len();
        let mut indices: Vec<usize> = (0..n).collect();
        let mut totals = PpoUpdateStats {
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            clip_fraction: 0.0,
        };
        let mut minibatches = 0usize;
        for _epoch in 0..self.cfg.epochs {
            use rand::seq::SliceRandom;
            indices.shuffle(rng);
            for chunk in indices.chunks(self.cfg.batch_size) {
                let stats = self.minibatch_step(rollout, chunk, rng)?;
                totals.policy_loss += stats.policy_loss;
                totals.value_loss += stats.value_loss;
                totals.entropy += stats.entropy;
                totals.clip_fraction += stats.clip_fraction;
                minibatches += 1;
            }
        }
        let k = minibatches as f64;
        Ok(PpoUpdateStats {
            policy_loss: totals.policy_loss / k,
            value_loss: totals.value_loss / k,
            entropy: totals.entropy / k,
            clip_fraction: totals.clip_fraction / k,
        })
    }

    fn minibatch_step(
        &mut self,
        rollout: &RolloutBuffer,
        chunk: &[usize],
        dropout_rng: &mut ChaCha8Rng,
    ) -> Result<PpoUpdateStats, AgentError> {
        let m = chunk.len();
        let obs: Vec<Array2<f64>> = chunk.iter().map(|&i| rollout.obs[i].clone()).collect();
        let actions: Vec<usize> = chunk.iter().map(|&i| rollout.actions[i]).collect();
        let old_logp =
            Array2::from_shape_fn((m, 1), |(row, _)| rollout.log_probs[chunk[row]]);
        let advantages =
            Array2::from_shape_fn((m, 1), |(row, _)| rollout.advantages[chunk[row]]);
        let returns = Array2::from_shape_fn((m, 1), |(row, _)| rollout.returns[chunk[row]]);

        let mut tape = Tape::new();
        let ex_bound = self.extractor.bind(&mut tape, &self.store)?;
        let actor_bound = self.actor.bind(&mut tape, &self.store)?;
        let critic_bound = self.critic.bind(&mut tape, &self.store)?;
        let feats = self.extractor.forward_batch(&mut tape, &ex_bound, &obs, true, dropout_rng)?;
        let logits = self.actor.forward(&mut tape, &actor_bound, feats, true, dropout_rng)?;
        let log_probs = tape.log_softmax_rows(logits);
        let new_logp = tape.gather_cols(log_probs, actions);

        let old_logp_var = tape.constant(old_logp);
        let adv_var = tape.constant(advantages);
        let logp_diff = tape.sub(new_logp, old_logp_var);
        let ratio = tape.exp(logp_diff);
        let clipped = tape.clamp(ratio, 1.0 - self.cfg.clip, 1.0 + self.cfg.clip);
        let surr1 = tape.mul(ratio, adv_var);
        let surr2 = tape.mul(clipped, adv_var);
        let surrogate = tape.min(surr1, surr2);
        let mean_surrogate = tape.mean_all(surrogate);
        let policy_loss = tape.scale(mean_surrogate, -1.0);

        let values = self.critic.forward(&mut tape, &critic_bound, feats, true, dropout_rng)?;
        let returns_var = tape.constant(returns);
        let value_diff = tape.sub(values, returns_var);
        let value_sq = tape.square(value_diff);
        let value_loss = tape.mean_all(value_sq);

        let probs = tape.softmax_rows(logits);
        let plogp = tape.mul(probs, log_probs);
        let neg_entropy_rows = tape.sum_rows(plogp);
        let neg_entropy = tape.mean_all(neg_entropy_rows);

        let scaled_value = tape.scale(value_loss, self.cfg.value_coef);
        let mut total = tape.add(policy_loss, scaled_value);
        if self.cfg.entropy_coef != 0.0 {
            // Entropy bonus: subtracting -entropy_coef * H adds +coef * (-H).
            let bonus = tape.scale(neg_entropy, self.cfg.entropy_coef);
            total = tape.add(total, bonus);
        }

        let total_value = tape.value(total)[(0, 0)];
        if !total_value.is_finite() {
            return Err(AgentError::NonFiniteLoss { what: "ppo total loss".to_string() });
        }

        let clip_fraction = {
            let r = tape.value(ratio);
            r.iter().filter(|&&x| (x - 1.0).abs() > self.cfg.clip).count() as f64 / m as f64
        };
        let stats = PpoUpdateStats {
            policy_loss: tape.value(policy_loss)[(0, 0)],
            value_loss: tape.value(value_loss)[(0, 0)],
            entropy: -tape.value(neg_entropy)[(0, 0)],
            clip_fraction,
        };

        let gradients = tape.backward(total);
        let mut grads = ex_bound.grads(&tape, &gradients);
        grads.extend(actor_bound.grads(&tape, &gradients));
        grads.extend(critic_bound.grads(&tape, &gradients));
        self.store.adam_step(&grads, AdamConfig::with_lr(self.cfg.learning_rate))?;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::extractor::NetKind;
    use ndarray::Array2;

    fn agent(lr: f64, epochs: usize) -> PpoAgent {
        let spec = FeatureExtractorSpec::new(NetKind::Mlp, 4, 2);
        let mut cfg = PpoConfig::default();
        cfg.learning_rate = lr;
        cfg.epochs = epochs;
        cfg.n_steps = 8;
        cfg.batch_size = 8;
        PpoAgent::new(spec, cfg, 5).unwrap()
    }

    fn rollout_for(agent: &PpoAgent, n: usize) -> RolloutBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut buf = RolloutBuffer::default();
        for i in 0..n {
            let obs = Array2::from_shape_fn((2, 4), |(r, c)| ((i + r + c) % 3) as f64 * 0.2);
            let (action, logp, value) = agent.act(&obs, &mut rng).unwrap();
            let reward = if action == Action::RetrieveTexts { 1.0 } else { -0.2 };
            buf.push(obs, action.index(), logp, value, reward, i % 4 == 3);
        }
        buf.finalize(0.0, 0.99, 0.95);
        buf
    }

    #[test]
    fn probabilities_are_normalized_and_logp_nonpositive() {
        let a = agent(3e-4, 1);
        let obs = Array2::from_shape_fn((2, 4), |(i, j)| (i as f64) * 0.3 + (j as f64) * 0.1);
        let (probs, _v) = a.policy_value(&obs).unwrap();
        assert_eq!(probs.len(), 3);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (_, logp, _) = a.act(&obs, &mut rng).unwrap();
            assert!(logp <= 0.0);
        }
    }

    #[test]
    fn saturated_logits_pick_one_action() {
        // Softmax saturation: logits [10, -10, -10] put ~all mass on A1.
        let mut tape = Tape::new();
        let v = tape.constant(ndarray::array![[10.0, -10.0, -10.0]]);
        let s = tape.softmax_rows(v);
        assert!(tape.value(s)[(0, 0)] > 0.9999);
    }

    #[test]
    fn unchanged_policy_has_zero_policy_loss_and_clip_fraction() {
        // lr = 0 freezes the policy, so every ratio stays exactly 1; the
        // surrogate reduces to -mean(normalized advantages) = 0.
        let mut a = agent(0.0, 1);
        let rollout = rollout_for(&a, 8);
        let stats = a.update(&rollout, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(stats.policy_loss.abs() < 1e-9, "policy loss {}", stats.policy_loss);
        assert_eq!(stats.clip_fraction, 0.0);
    }

    #[test]
    fn clipped_region_passes_no_gradient_through_the_ratio() {
        // Single sample with A > 0 and ratio far above 1 + clip: the min
        // picks the clipped branch, whose gradient w.r.t. the policy is zero.
        let a = agent(0.0, 1);
        let obs = Array2::from_shape_fn((2, 4), |(i, j)| 0.1 * (i + j) as f64);
        let (probs, _) = a.policy_value(&obs).unwrap();
        // Fake an old log-prob much lower than the current one -> ratio >> 1.
        let mut rollout = RolloutBuffer::default();
        rollout.push(obs, 0, probs[0].ln() - 2.0, 0.0, 1.0, true);
        rollout.advantages = vec![1.0];
        rollout.returns = vec![0.0];

        // Build the minibatch loss by hand to inspect actor gradients.
        let mut tape = Tape::new();
        let ex_bound = a.extractor.bind(&mut tape, &a.store).unwrap();
        let actor_bound = a.actor.bind(&mut tape, &a.store).unwrap();
        let mut rng = inert_rng();
        let feats = a
            .extractor
            .forward_batch(&mut tape, &ex_bound, &[rollout.obs[0].clone()], false, &mut rng)
            .unwrap();
        let logits = a.actor.forward(&mut tape, &actor_bound, feats, false, &mut rng).unwrap();
        let log_probs = tape.log_softmax_rows(logits);
        let new_logp = tape.gather_cols(log_probs, vec![0]);
        let old = tape.constant(ndarray::array![[rollout.log_probs[0]]]);
        let adv = tape.constant(ndarray::array![[1.0]]);
        let diff = tape.sub(new_logp, old);
        let ratio = tape.exp(diff);
        assert!(tape.value(ratio)[(0, 0)] > 1.2);
        let clipped = tape.clamp(ratio, 0.8, 1.2);
        let surr1 = tape.mul(ratio, adv);
        let surr2 = tape.mul(clipped, adv);
        let surrogate = tape.min(surr1, surr2);
        let mean = tape.mean_all(surrogate);
        let loss = tape.scale(mean, -1.0);
        let grads = tape.backward(loss);
        for (name, g) in actor_bound.grads(&tape, &grads) {
            assert!(g.iter().all(|&x| x == 0.0), "{name} leaked gradient");
        }
    }

    #[test]
    fn update_improves_probability_of_rewarded_action() {
        let mut a = agent(3e-3, 10);
        let obs = Array2::from_shape_fn((2, 4), |(i, j)| ((i + j) % 3) as f64 * 0.2);
        let before = a.policy_value(&obs).unwrap().0[0];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let mut buf = RolloutBuffer::default();
            for i in 0..8 {
                let o = obs.clone();
                let (action, logp, value) = a.act(&o, &mut rng).unwrap();
                let reward = if action == Action::RetrieveTexts { 1.0 } else { -1.0 };
                buf.push(o, action.index(), logp, value, reward, i % 2 == 1);
            }
            buf.finalize(0.0, 0.99, 0.95);
            a.update(&buf, &mut rng).unwrap();
        }
        let after = a.policy_value(&obs).unwrap().0[0];
        assert!(after > before, "P(A1) {before} -> {after}");
    }
}
