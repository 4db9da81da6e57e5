//! Feature extractors over the block observation sequence.
//!
//! Four families share one contract: consume `seq_len` vectors of dimension
//! `embed_dim`, produce one feature vector. The MLP flattens the sequence;
//! LSTM/GRU run two stacked recurrent layers and keep the final hidden
//! state; the transformer encodes the sequence with learned positional
//! embeddings and pools at the question slot (position 0). Hidden sizes are
//! the reference sizes (which assume 512/768-dim embeddings) scaled by
//! `hidden_scale`, 0.5 by default so the desk 64-dim setup uses a
//! 256/64/32 MLP stack.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::nncore::{
    Activation, BoundParams, Gradients, LayerSpec, Network, ParamStore, Tape, Var,
};

use super::AgentError;

/// Reference hidden sizes at embedding dimension 512/768.
const MLP_DQN_HIDDEN: [usize; 3] = [512, 128, 64];
const MLP_PPO_HIDDEN: [usize; 2] = [512, 128];
const RECURRENT_LAYERS: usize = 2;
const POST_DENSE: usize = 128;
const TRANSFORMER_LAYERS: usize = 2;
const TRANSFORMER_HEADS: usize = 2;
const TRANSFORMER_FF: usize = 128;
const DQN_EXTRA_DENSE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Mlp,
    Lstm,
    Gru,
    Transformer,
}

impl NetKind {
    pub const ALL: [NetKind; 4] = [NetKind::Mlp, NetKind::Lstm, NetKind::Gru, NetKind::Transformer];
}

impl std::str::FromStr for NetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(NetKind::Mlp),
            "lstm" => Ok(NetKind::Lstm),
            "gru" => Ok(NetKind::Gru),
            "transformer" => Ok(NetKind::Transformer),
            other => Err(format!(
                "unknown network {other:?} (expected one of: mlp, lstm, gru, transformer)"
            )),
        }
    }
}

impl std::fmt::Display for NetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NetKind::Mlp => write!(f, "mlp"),
            NetKind::Lstm => write!(f, "lstm"),
            NetKind::Gru => write!(f, "gru"),
            NetKind::Transformer => write!(f, "transformer"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractorSpec {
    pub kind: NetKind,
    pub embed_dim: usize,
    pub seq_len: usize,
    pub hidden_scale: f64,
    pub dropout: f64,
    /// DQN variants add the extra narrowing layers the reference setup uses.
    pub for_dqn: bool,
}

impl FeatureExtractorSpec {
    pub fn new(kind: NetKind, embed_dim: usize, seq_len: usize) -> Self {
        FeatureExtractorSpec {
            kind,
            embed_dim,
            seq_len,
            hidden_scale: 0.5,
            dropout: 0.1,
            for_dqn: false,
        }
    }

    pub fn scaled(&self, reference: usize) -> usize {
        ((reference as f64 * self.hidden_scale).round() as usize).max(1)
    }

    pub fn feature_dim(&self) -> usize {
        match (self.kind, self.for_dqn) {
            (NetKind::Mlp, true) => self.scaled(MLP_DQN_HIDDEN[2]),
            (NetKind::Mlp, false) => self.scaled(MLP_PPO_HIDDEN[1]),
            (NetKind::Lstm | NetKind::Gru, _) => self.scaled(POST_DENSE),
            (NetKind::Transformer, true) => self.scaled(DQN_EXTRA_DENSE),
            (NetKind::Transformer, false) => self.scaled(POST_DENSE),
        }
    }
}

/// Spec plus the networks it compiles to.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub spec: FeatureExtractorSpec,
    /// Sequence stage (LSTM/GRU/transformer); the MLP has none.
    seq_net: Option<Network>,
    /// Dense stage (the whole MLP, or the post-sequence head).
    dense_net: Network,
}

impl FeatureExtractor {
    pub fn build(spec: FeatureExtractorSpec) -> Result<Self, AgentError> {
        if spec.embed_dim == 0 || spec.seq_len == 0 {
            return Err(AgentError::InvalidConfig(
                "embed_dim and seq_len must be positive".to_string(),
            ));
        }
        let d = spec.embed_dim;
        let dense = |inputs: usize, outputs: usize| LayerSpec::Dense {
            inputs,
            outputs,
            activation: Activation::Relu,
        };
        let (seq_net, dense_net) = match spec.kind {
            NetKind::Mlp => {
                let mut layers = Vec::new();
                let mut width = spec.seq_len * d;
                let hidden: &[usize] =
                    if spec.for_dqn { &MLP_DQN_HIDDEN } else { &MLP_PPO_HIDDEN };
                for &h in hidden {
                    let out = spec.scaled(h);
                    layers.push(dense(width, out));
                    width = out;
                }
                (None, Network::new("extractor.mlp", layers)?)
            }
            NetKind::Lstm => {
                let seq = Network::new(
                    "extractor.lstm",
                    vec![LayerSpec::Lstm {
                        inputs: d,
                        hidden: d,
                        layers: RECURRENT_LAYERS,
                        dropout: spec.dropout,
                    }],
                )?;
                let head = Network::new(
                    "extractor.head",
                    vec![dense(d, spec.scaled(POST_DENSE))],
                )?;
                (Some(seq), head)
            }
            NetKind::Gru => {
                let seq = Network::new(
                    "extractor.gru",
                    vec![LayerSpec::Gru {
                        inputs: d,
                        hidden: d,
                        layers: RECURRENT_LAYERS,
                        dropout: spec.dropout,
                    }],
                )?;
                let head = Network::new(
                    "extractor.head",
                    vec![dense(d, spec.scaled(POST_DENSE))],
                )?;
                (Some(seq), head)
            }
            NetKind::Transformer => {
                let seq = Network::new(
                    "extractor.tf",
                    vec![LayerSpec::TransformerEncoder {
                        model_dim: d,
                        heads: TRANSFORMER_HEADS,
                        ff_hidden: spec.scaled(TRANSFORMER_FF),
                        layers: TRANSFORMER_LAYERS,
                        seq_len: spec.seq_len,
                        dropout: spec.dropout,
                    }],
                )?;
                let mut layers = vec![dense(d, spec.scaled(POST_DENSE))];
                if spec.for_dqn {
                    layers.push(dense(spec.scaled(POST_DENSE), spec.scaled(DQN_EXTRA_DENSE)));
                }
                (Some(seq), Network::new("extractor.head", layers)?)
            }
        };
        Ok(FeatureExtractor { spec, seq_net, dense_net })
    }

    pub fn init_params(
        &self,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), AgentError> {
        if let Some(seq) = &self.seq_net {
            seq.init_params(store, rng)?;
        }
        self.dense_net.init_params(store, rng)?;
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> Result<ExtractorBound, AgentError> {
        let seq = match &self.seq_net {
            Some(net) => Some(net.bind(tape, store)?),
            None => None,
        };
        let dense = self.dense_net.bind(tape, store)?;
        Ok(ExtractorBound { seq, dense })
    }

    /// Features for a batch of observations: `batch x feature_dim`.
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        bound: &ExtractorBound,
        batch: &[Array2<f64>],
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::InvalidConfig("empty forward batch".to_string()));
        }
        for obs in batch {
            if obs.shape() != [self.spec.seq_len, self.spec.embed_dim] {
                return Err(AgentError::InvalidConfig(format!(
                    "observation shape {:?} does not match extractor ({}, {})",
                    obs.shape(),
                    self.spec.seq_len,
                    self.spec.embed_dim
                )));
            }
        }
        let features = match &self.seq_net {
            None => {
                // Flatten every observation into one row.
                let cols = self.spec.seq_len * self.spec.embed_dim;
                let mut data = Vec::with_capacity(batch.len() * cols);
                for obs in batch {
                    data.extend(obs.iter().copied());
                }
                let flat = Array2::from_shape_vec((batch.len(), cols), data)
                    .expect("row-major observation layout");
                let input = tape.constant(flat);
                self.dense_net.forward(tape, &bound.dense, input, train, rng)?
            }
            Some(seq_net) => {
                let seq_bound = bound.seq.as_ref().expect("seq net is bound");
                let mut rows = Vec::with_capacity(batch.len());
                for obs in batch {
                    let input = tape.constant(obs.clone());
                    let out = seq_net.forward(tape, seq_bound, input, train, rng)?;
                    // Recurrent stacks already emit 1 x d; the transformer
                    // emits the full sequence and pools at the question slot.
                    let pooled = if tape.value(out).nrows() > 1 {
                        tape.select_row(out, 0)
                    } else {
                        out
                    };
                    rows.push(pooled);
                }
                let stacked = tape.vstack(&rows);
                self.dense_net.forward(tape, &bound.dense, stacked, train, rng)?
            }
        };
        Ok(features)
    }

    /// Eval-mode features for one observation.
    pub fn features(
        &self,
        store: &ParamStore,
        obs: &Observation,
    ) -> Result<Vec<f64>, AgentError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, store)?;
        let matrix = obs_matrix(obs);
        let mut rng = inert_rng();
        let out = self.forward_batch(&mut tape, &bound, &[matrix], false, &mut rng)?;
        Ok(tape.value(out).row(0).to_vec())
    }
}

/// Parameter bindings for the extractor's networks on one tape.
pub struct ExtractorBound {
    seq: Option<BoundParams>,
    dense: BoundParams,
}

impl ExtractorBound {
    pub fn grads(&self, tape: &Tape, gradients: &Gradients) -> Vec<(String, Array2<f64>)> {
        let mut out = Vec::new();
        if let Some(seq) = &self.seq {
            out.extend(seq.grads(tape, gradients));
        }
        out.extend(self.dense.grads(tape, gradients));
        out
    }
}

pub fn obs_matrix(obs: &Observation) -> Array2<f64> {
    let rows = obs.rows();
    let dim = obs.dim();
    let mut data = Vec::with_capacity(rows * dim);
    for v in &obs.vectors {
        data.extend_from_slice(v);
    }
    Array2::from_shape_vec((rows, dim), data).expect("observation vectors share one length")
}

pub fn matrix_from_flat(flat: &[f32], rows: usize, dim: usize) -> Array2<f64> {
    debug_assert_eq!(flat.len(), rows * dim);
    Array2::from_shape_vec((rows, dim), flat.iter().map(|&x| x as f64).collect())
        .expect("length checked")
}

pub fn flatten_to_f32(obs: &Observation) -> Box<[f32]> {
    obs.vectors
        .iter()
        .flatten()
        .map(|&x| x as f32)
        .collect::<Vec<f32>>()
        .into_boxed_slice()
}

/// Rng for eval-mode forwards, where dropout never fires.
pub(crate) fn inert_rng() -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(0)
}
