//! Experience replay (DQN) and rollout storage with GAE (PPO).

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

/// One environment transition, observations stored flat as f32 to keep a
/// full replay buffer within desk memory.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Box<[f32]>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Box<[f32]>,
    pub done: bool,
}

/// Fixed-capacity ring buffer; the oldest transition is evicted first.
#[derive(Debug)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { data: Vec::with_capacity(capacity.min(1 << 20)), capacity, next: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniform sample of `n` distinct transitions.
    pub fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<&Transition> {
        assert!(n <= self.data.len(), "cannot sample {n} from {}", self.data.len());
        rand::seq::index::sample(rng, self.data.len(), n)
            .into_iter()
            .map(|i| &self.data[i])
            .collect()
    }
}

/// On-policy storage for one PPO update.
#[derive(Debug, Default)]
pub struct RolloutBuffer {
    pub obs: Vec<Array2<f64>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn push(
        &mut self,
        obs: Array2<f64>,
        action: usize,
        log_prob: f64,
        value: f64,
        reward: f64,
        done: bool,
    ) {
        self.obs.push(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.dones.push(done);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        *self = RolloutBuffer::default();
    }

    /// Compute GAE advantages and returns, then normalize the advantages to
    /// zero mean and unit variance over this update batch. Returns are
    /// `advantage + value` from the un-normalized advantages.
    pub fn finalize(&mut self, last_value: f64, gamma: f64, lambda: f64) {
        let (advantages, returns) =
            compute_gae(&self.rewards, &self.values, &self.dones, last_value, gamma, lambda);
        self.returns = returns;
        self.advantages = normalize(advantages);
    }
}

/// Generalized advantage estimation:
/// `delta_t = r_t + gamma (1 - done_t) V(s_{t+1}) - V(s_t)` and
/// `A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}`, with `last_value`
/// bootstrapping the state after the final stored step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * not_done * next_value - values[t];
        next_adv = delta + gamma * lambda * not_done * next_adv;
        advantages[t] = next_adv;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

fn normalize(mut xs: Vec<f64>) -> Vec<f64> {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return xs;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    for x in &mut xs {
        *x = (*x - mean) / std;
    }
    xs
}
