//! Degenerate single-step environment for training sanity checks.

use rand_chacha::ChaCha8Rng;

use crate::env::{Action, Observation};

use super::train::{RlEnv, RlStep};

/// Three-armed bandit with fixed per-action rewards and a constant
/// observation. One step ends the episode, so an agent that learns anything
/// must learn it from the action-reward mapping alone.
pub struct BanditEnv {
    pub rewards: [f64; 3],
    rows: usize,
    dim: usize,
    obs: Observation,
}

impl BanditEnv {
    pub fn new(rewards: [f64; 3], rows: usize, dim: usize) -> Self {
        assert!(rows >= 1 && dim >= 1);
        let mut vectors = vec![vec![0.0; dim]; rows];
        vectors[0][0] = 1.0;
        BanditEnv { rewards, rows, dim, obs: Observation { vectors } }
    }

    pub fn best_arm(&self) -> Action {
        let mut best = 0;
        for (i, &r) in self.rewards.iter().enumerate() {
            if r > self.rewards[best] {
                best = i;
            }
        }
        Action::from_index(best).expect("three arms")
    }
}

impl RlEnv for BanditEnv {
    fn obs_rows(&self) -> usize {
        self.rows
    }

    fn obs_dim(&self) -> usize {
        self.dim
    }

    fn reset(&mut self, _rng: &mut ChaCha8Rng) -> Observation {
        self.obs.clone()
    }

    fn step(&mut self, action: Action) -> RlStep {
        RlStep {
            observation: self.obs.clone(),
            reward: self.rewards[action.index()],
            done: true,
            em: None,
            f1: None,
        }
    }
}
