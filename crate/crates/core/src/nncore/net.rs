//! Layer specs and their forward passes over the tape.
//!
//! A [`Network`] is a named sequence of layers whose parameters live in a
//! shared [`ParamStore`] under `"{network}.{layer}.{role}"` keys. Recurrent
//! layers consume a `seq_len x dim` matrix and emit the final top-layer
//! hidden state; the transformer encoder maps a sequence to a sequence;
//! dense layers apply row-wise, so a batch is just a taller matrix.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::NncoreError;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Softmax,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    Lstm {
        inputs: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
    },
    Gru {
        inputs: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
    },
    TransformerEncoder {
        model_dim: usize,
        heads: usize,
        ff_hidden: usize,
        layers: usize,
        seq_len: usize,
        dropout: f64,
    },
    Dropout {
        rate: f64,
    },
    Activation {
        activation: Activation,
    },
}

impl LayerSpec {
    fn validate(&self) -> Result<(), NncoreError> {
        let err = |msg: String| Err(NncoreError::InvalidSpec { message: msg });
        match self {
            LayerSpec::Dense { inputs, outputs, .. } => {
                if *inputs == 0 || *outputs == 0 {
                    return err(format!("dense sizes must be positive ({inputs}->{outputs})"));
                }
            }
            LayerSpec::Lstm { inputs, hidden, layers, .. }
            | LayerSpec::Gru { inputs, hidden, layers, .. } => {
                if *inputs == 0 || *hidden == 0 || *layers == 0 {
                    return err("recurrent sizes must be positive".to_string());
                }
            }
            LayerSpec::TransformerEncoder { model_dim, heads, ff_hidden, layers, seq_len, .. } => {
                if *model_dim == 0 || *heads == 0 || *ff_hidden == 0 || *layers == 0 || *seq_len == 0
                {
                    return err("transformer sizes must be positive".to_string());
                }
                if model_dim % heads != 0 {
                    return err(format!(
                        "heads ({heads}) must divide model dimension ({model_dim})"
                    ));
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return err(format!("dropout rate {rate} out of [0, 1)"));
                }
            }
            LayerSpec::Activation { .. } => {}
        }
        Ok(())
    }
}

/// A named stack of layers bound to prefix-scoped parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl Network {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Result<Self, NncoreError> {
        for layer in &layers {
            layer.validate()?;
        }
        Ok(Network { name: name.into(), layers })
    }

    fn dense_params(&self, li: usize) -> (String, String) {
        (format!("{}.{li}.w", self.name), format!("{}.{li}.b", self.name))
    }

    /// Glorot-uniform weights, zero biases, unit layer-norm gains, small
    /// uniform positional embeddings.
    pub fn init_params(
        &self,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), NncoreError> {
        for (li, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense { inputs, outputs, .. } => {
                    let (w, b) = self.dense_params(li);
                    store.insert(&w, glorot(*inputs, *outputs, rng))?;
                    store.insert(&b, Array2::zeros((1, *outputs)))?;
                }
                LayerSpec::Lstm { inputs, hidden, layers, .. } => {
                    self.init_recurrent(store, rng, li, *inputs, *hidden, *layers, 4)?;
                }
                LayerSpec::Gru { inputs, hidden, layers, .. } => {
                    self.init_recurrent(store, rng, li, *inputs, *hidden, *layers, 3)?;
                }
                LayerSpec::TransformerEncoder {
                    model_dim, ff_hidden, layers, seq_len, ..
                } => {
                    let d = *model_dim;
                    let p = format!("{}.{li}", self.name);
                    let pos = Array2::from_shape_fn((*seq_len, d), |_| rng.gen_range(-0.1..0.1));
                    store.insert(&format!("{p}.posemb"), pos)?;
                    for l in 0..*layers {
                        for role in ["wq", "wk", "wv", "wo"] {
                            store.insert(&format!("{p}.l{l}.{role}"), glorot(d, d, rng))?;
                        }
                        for role in ["bq", "bk", "bv", "bo"] {
                            store.insert(&format!("{p}.l{l}.{role}"), Array2::zeros((1, d)))?;
                        }
                        store.insert(&format!("{p}.l{l}.ln1.g"), Array2::ones((1, d)))?;
                        store.insert(&format!("{p}.l{l}.ln1.b"), Array2::zeros((1, d)))?;
                        store.insert(&format!("{p}.l{l}.ln2.g"), Array2::ones((1, d)))?;
                        store.insert(&format!("{p}.l{l}.ln2.b"), Array2::zeros((1, d)))?;
                        store.insert(&format!("{p}.l{l}.ff1.w"), glorot(d, *ff_hidden, rng))?;
                        store.insert(&format!("{p}.l{l}.ff1.b"), Array2::zeros((1, *ff_hidden)))?;
                        store.insert(&format!("{p}.l{l}.ff2.w"), glorot(*ff_hidden, d, rng))?;
                        store.insert(&format!("{p}.l{l}.ff2.b"), Array2::zeros((1, d)))?;
                    }
                }
                LayerSpec::Dropout { .. } | LayerSpec::Activation { .. } => {}
            }
        }
        Ok(())
    }

    fn init_recurrent(
        &self,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        li: usize,
        inputs: usize,
        hidden: usize,
        layers: usize,
        gates: usize,
    ) -> Result<(), NncoreError> {
        for l in 0..layers {
            let input_dim = if l == 0 { inputs } else { hidden };
            let p = format!("{}.{li}.l{l}", self.name);
            store.insert(&format!("{p}.w_ih"), glorot(input_dim, gates * hidden, rng))?;
            store.insert(&format!("{p}.w_hh"), glorot(hidden, gates * hidden, rng))?;
            store.insert(&format!("{p}.b_ih"), Array2::zeros((1, gates * hidden)))?;
            store.insert(&format!("{p}.b_hh"), Array2::zeros((1, gates * hidden)))?;
        }
        Ok(())
    }

    /// All parameter names this network owns, in insertion order.
    pub fn param_names(&self, store: &ParamStore) -> Vec<String> {
        let prefix = format!("{}.", self.name);
        store
            .names()
            .filter(|n| n.starts_with(&prefix))
            .map(|n| n.to_string())
            .collect()
    }

    /// Bind this network's parameters as tape leaves.
    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> Result<BoundParams, NncoreError> {
        let mut vars = Vec::new();
        for name in self.param_names(store) {
            let value = store
                .get(&name)
                .ok_or_else(|| NncoreError::UnknownParam { name: name.clone() })?;
            let var = tape.param(value.clone());
            vars.push((name, var));
        }
        Ok(BoundParams { vars })
    }

    /// Run the stack. `rng` drives dropout masks and is only consulted in
    /// train mode.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        input: Var,
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var, NncoreError> {
        let mut x = input;
        for (li, layer) in self.layers.iter().enumerate() {
            x = match layer {
                LayerSpec::Dense { inputs, outputs: _, activation } => {
                    let cols = tape.value(x).ncols();
                    if cols != *inputs {
                        return Err(NncoreError::ShapeMismatch {
                            context: format!(
                                "{} layer {li}: dense expects {inputs} columns, got {cols}",
                                self.name
                            ),
                        });
                    }
                    let (wname, bname) = self.dense_params(li);
                    let w = bound.var(&wname)?;
                    let b = bound.var(&bname)?;
                    let h = tape.matmul(x, w);
                    let h = tape.add_row(h, b);
                    apply_activation(tape, h, *activation)
                }
                LayerSpec::Lstm { inputs, hidden, layers, dropout } => self.recurrent_forward(
                    tape, bound, x, li, *inputs, *hidden, *layers, *dropout, true, train, rng,
                )?,
                LayerSpec::Gru { inputs, hidden, layers, dropout } => self.recurrent_forward(
                    tape, bound, x, li, *inputs, *hidden, *layers, *dropout, false, train, rng,
                )?,
                LayerSpec::TransformerEncoder {
                    model_dim, heads, ff_hidden: _, layers, seq_len, dropout,
                } => self.transformer_forward(
                    tape, bound, x, li, *model_dim, *heads, *layers, *seq_len, *dropout, train,
                    rng,
                )?,
                LayerSpec::Dropout { rate } => {
                    if train {
                        dropout_var(tape, x, *rate, rng)
                    } else {
                        x
                    }
                }
                LayerSpec::Activation { activation } => apply_activation(tape, x, *activation),
            };
        }
        Ok(x)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurrent_forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        input: Var,
        li: usize,
        inputs: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
        is_lstm: bool,
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var, NncoreError> {
        let shape = (tape.value(input).nrows(), tape.value(input).ncols());
        if shape.1 != inputs {
            return Err(NncoreError::ShapeMismatch {
                context: format!(
                    "{} layer {li}: recurrent expects {inputs} columns, got {}",
                    self.name, shape.1
                ),
            });
        }
        let seq_len = shape.0;
        // Current layer's per-step inputs (1 x dim rows).
        let mut steps: Vec<Var> = (0..seq_len).map(|t| tape.select_row(input, t)).collect();
        let mut last_hidden = None;
        for l in 0..layers {
            let p = format!("{}.{li}.l{l}", self.name);
            let w_ih = bound.var(&format!("{p}.w_ih"))?;
            let w_hh = bound.var(&format!("{p}.w_hh"))?;
            let b_ih = bound.var(&format!("{p}.b_ih"))?;
            let b_hh = bound.var(&format!("{p}.b_hh"))?;
            let mut h = tape.constant(Array2::zeros((1, hidden)));
            let mut c = tape.constant(Array2::zeros((1, hidden)));
            let mut outputs = Vec::with_capacity(seq_len);
            for &x_t in &steps {
                let x_part = tape.matmul(x_t, w_ih);
                let x_part = tape.add_row(x_part, b_ih);
                let h_part = tape.matmul(h, w_hh);
                let h_part = tape.add_row(h_part, b_hh);
                if is_lstm {
                    let gates = tape.add(x_part, h_part);
                    let i_g = tape.slice_cols(gates, 0, hidden);
                    let f_g = tape.slice_cols(gates, hidden, 2 * hidden);
                    let g_g = tape.slice_cols(gates, 2 * hidden, 3 * hidden);
                    let o_g = tape.slice_cols(gates, 3 * hidden, 4 * hidden);
                    let i_g = tape.sigmoid(i_g);
                    let f_g = tape.sigmoid(f_g);
                    let g_g = tape.tanh(g_g);
                    let o_g = tape.sigmoid(o_g);
                    let fc = tape.mul(f_g, c);
                    let ig = tape.mul(i_g, g_g);
                    c = tape.add(fc, ig);
                    let c_act = tape.tanh(c);
                    h = tape.mul(o_g, c_act);
                } else {
                    // GRU: r and z see both affine parts; the candidate gates
                    // the hidden affine part through r.
                    let xr = tape.slice_cols(x_part, 0, hidden);
                    let xz = tape.slice_cols(x_part, hidden, 2 * hidden);
                    let xn = tape.slice_cols(x_part, 2 * hidden, 3 * hidden);
                    let hr = tape.slice_cols(h_part, 0, hidden);
                    let hz = tape.slice_cols(h_part, hidden, 2 * hidden);
                    let hn = tape.slice_cols(h_part, 2 * hidden, 3 * hidden);
                    let r_sum = tape.add(xr, hr);
                    let r = tape.sigmoid(r_sum);
                    let z_sum = tape.add(xz, hz);
                    let z = tape.sigmoid(z_sum);
                    let rhn = tape.mul(r, hn);
                    let n_sum = tape.add(xn, rhn);
                    let n = tape.tanh(n_sum);
                    // h' = (1 - z) . n + z . h = n - z . n + z . h
                    let zn = tape.mul(z, n);
                    let zh = tape.mul(z, h);
                    let n_minus = tape.sub(n, zn);
                    h = tape.add(n_minus, zh);
                }
                outputs.push(h);
            }
            last_hidden = Some(h);
            // Dropout between stacked layers (not after the last one).
            if l + 1 < layers && train && dropout > 0.0 {
                outputs = outputs
                    .into_iter()
                    .map(|o| dropout_var(tape, o, dropout, rng))
                    .collect();
            }
            steps = outputs;
        }
        Ok(last_hidden.expect("at least one layer and one timestep"))
    }

    #[allow(clippy::too_many_arguments)]
    fn transformer_forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        input: Var,
        li: usize,
        model_dim: usize,
        heads: usize,
        layers: usize,
        seq_len: usize,
        dropout: f64,
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var, NncoreError> {
        let shape = (tape.value(input).nrows(), tape.value(input).ncols());
        if shape != (seq_len, model_dim) {
            return Err(NncoreError::ShapeMismatch {
                context: format!(
                    "{} layer {li}: transformer expects {seq_len}x{model_dim}, got {}x{}",
                    self.name, shape.0, shape.1
                ),
            });
        }
        let p = format!("{}.{li}", self.name);
        let pos = bound.var(&format!("{p}.posemb"))?;
        let mut x = tape.add(input, pos);
        let head_dim = model_dim / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        for l in 0..layers {
            let lp = format!("{p}.l{l}");
            // Pre-norm attention sublayer.
            let normed = layer_norm_affine(tape, bound, x, &format!("{lp}.ln1"))?;
            let q_all = dense_affine(tape, bound, normed, &format!("{lp}.wq"), &format!("{lp}.bq"))?;
            let k_all = dense_affine(tape, bound, normed, &format!("{lp}.wk"), &format!("{lp}.bk"))?;
            let v_all = dense_affine(tape, bound, normed, &format!("{lp}.wv"), &format!("{lp}.bv"))?;
            let mut head_outputs = Vec::with_capacity(heads);
            for hd in 0..heads {
                let from = hd * head_dim;
                let to = from + head_dim;
                let q = tape.slice_cols(q_all, from, to);
                let k = tape.slice_cols(k_all, from, to);
                let v = tape.slice_cols(v_all, from, to);
                let kt = tape.transpose(k);
                let scores = tape.matmul(q, kt);
                let scores = tape.scale(scores, scale);
                let attn = tape.softmax_rows(scores);
                head_outputs.push(tape.matmul(attn, v));
            }
            let concat = tape.hstack(&head_outputs);
            let mut attn_out =
                dense_affine(tape, bound, concat, &format!("{lp}.wo"), &format!("{lp}.bo"))?;
            if train && dropout > 0.0 {
                attn_out = dropout_var(tape, attn_out, dropout, rng);
            }
            x = tape.add(x, attn_out);

            // Pre-norm feed-forward sublayer.
            let normed = layer_norm_affine(tape, bound, x, &format!("{lp}.ln2"))?;
            let ff = dense_affine(tape, bound, normed, &format!("{lp}.ff1.w"), &format!("{lp}.ff1.b"))?;
            let ff = tape.relu(ff);
            let mut ff =
                dense_affine(tape, bound, ff, &format!("{lp}.ff2.w"), &format!("{lp}.ff2.b"))?;
            if train && dropout > 0.0 {
                ff = dropout_var(tape, ff, dropout, rng);
            }
            x = tape.add(x, ff);
        }
        Ok(x)
    }
}

/// Parameter bindings for one tape.
pub struct BoundParams {
    vars: Vec<(String, Var)>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var, NncoreError> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| NncoreError::UnknownParam { name: name.to_string() })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v))
    }

    /// Collect this binding's gradients after a backward pass. Parameters the
    /// loss does not reach get zero gradients.
    pub fn grads(
        &self,
        tape: &Tape,
        gradients: &super::tape::Gradients,
    ) -> Vec<(String, Array2<f64>)> {
        self.vars
            .iter()
            .map(|(name, var)| {
                let g = gradients
                    .get(*var)
                    .cloned()
                    .unwrap_or_else(|| Array2::zeros(tape.value(*var).raw_dim()));
                (name.clone(), g)
            })
            .collect()
    }
}

fn apply_activation(tape: &mut Tape, x: Var, activation: Activation) -> Var {
    match activation {
        Activation::Relu => tape.relu(x),
        Activation::Tanh => tape.tanh(x),
        Activation::Softmax => tape.softmax_rows(x),
        Activation::Identity => x,
    }
}

fn dense_affine(
    tape: &mut Tape,
    bound: &BoundParams,
    x: Var,
    wname: &str,
    bname: &str,
) -> Result<Var, NncoreError> {
    let w = bound.var(wname)?;
    let b = bound.var(bname)?;
    let h = tape.matmul(x, w);
    Ok(tape.add_row(h, b))
}

fn layer_norm_affine(
    tape: &mut Tape,
    bound: &BoundParams,
    x: Var,
    prefix: &str,
) -> Result<Var, NncoreError> {
    let g = bound.var(&format!("{prefix}.g"))?;
    let b = bound.var(&format!("{prefix}.b"))?;
    let normed = tape.layer_norm_rows(x, LAYER_NORM_EPS);
    let scaled = tape.mul_row(normed, g);
    Ok(tape.add_row(scaled, b))
}

fn dropout_var(tape: &mut Tape, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Var {
    let keep = 1.0 - rate;
    let shape = tape.value(x).raw_dim();
    let mask = Array2::from_shape_fn(shape, |_| {
        if rng.gen::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    tape.dropout(x, mask)
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-limit..limit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn dense_identity_passthrough() {
        let net = Network::new(
            "t",
            vec![LayerSpec::Dense { inputs: 2, outputs: 2, activation: Activation::Identity }],
        )
        .unwrap();
        let mut store = ParamStore::new();
        net.init_params(&mut store, &mut rng()).unwrap();
        store.set("t.0.w", array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, &store).unwrap();
        let input = tape.constant(array![[3.0, 4.0]]);
        let out = net.forward(&mut tape, &bound, input, false, &mut rng()).unwrap();
        assert_eq!(tape.value(out), &array![[3.0, 4.0]]);
    }

    #[test]
    fn dense_shape_mismatch_is_reported() {
        let net = Network::new(
            "t",
            vec![LayerSpec::Dense { inputs: 3, outputs: 2, activation: Activation::Relu }],
        )
        .unwrap();
        let mut store = ParamStore::new();
        net.init_params(&mut store, &mut rng()).unwrap();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, &store).unwrap();
        let input = tape.constant(array![[1.0, 2.0]]);
        assert!(matches!(
            net.forward(&mut tape, &bound, input, false, &mut rng()),
            Err(NncoreError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn gru_zero_input_zero_bias_gives_zero_hidden() {
        // sigmoid(0)=0.5 gates and tanh(0)=0 candidate keep h at exactly zero.
        let net = Network::new(
            "t",
            vec![LayerSpec::Gru { inputs: 3, hidden: 4, layers: 1, dropout: 0.0 }],
        )
        .unwrap();
        let mut store = ParamStore::new();
        net.init_params(&mut store, &mut rng()).unwrap();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, &store).unwrap();
        let input = tape.constant(Array2::zeros((5, 3)));
        let out = net.forward(&mut tape, &bound, input, false, &mut rng()).unwrap();
        assert_eq!(tape.value(out), &Array2::<f64>::zeros((1, 4)));
    }

    #[test]
    fn lstm_output_shape_and_determinism() {
        let net = Network::new(
            "t",
            vec![LayerSpec::Lstm { inputs: 4, hidden: 6, layers: 2, dropout: 0.1 }],
        )
        .unwrap();
        let mut store = ParamStore::new();
        net.init_params(&mut store, &mut rng()).unwrap();
        let input_data = Array2::from_shape_fn((3, 4), |(i, j)| (i as f64 - j as f64) * 0.1);
        let run = || {
            let mut tape = Tape::new();
            let bound = net.bind(&mut tape, &store).unwrap();
            let input = tape.constant(input_data.clone());
            let out = net.forward(&mut tape, &bound, input, false, &mut rng()).unwrap();
            tape.value(out).clone()
        };
        let a = run();
        assert_eq!(a.shape(), [1, 6]);
        assert_eq!(a, run());
    }

    #[test]
    fn transformer_maps_sequence_to_sequence() {
        let net = Network::new(
            "t",
            vec![LayerSpec::TransformerEncoder {
                model_dim: 8,
                heads: 2,
                ff_hidden: 16,
                layers: 2,
                seq_len: 5,
                dropout: 0.1,
            }],
        )
        .unwrap();
        let mut store = ParamStore::new();
        net.init_params(&mut store, &mut rng()).unwrap();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, &store).unwrap();
        let input = tape.constant(Array2::from_shape_fn((5, 8), |(i, j)| (i + j) as f64 * 0.05));
        let out = net.forward(&mut tape, &bound, input, false, &mut rng()).unwrap();
        assert_eq!(tape.value(out).shape(), [5, 8]);
    }

    #[test]
    fn transformer_heads_must_divide_dim() {
        assert!(Network::new(
            "t",
            vec![LayerSpec::TransformerEncoder {
                model_dim: 9,
                heads: 2,
                ff_hidden: 4,
                layers: 1,
                seq_len: 3,
                dropout: 0.0,
            }],
        )
        .is_err());
    }

    #[test]
    fn dropout_only_fires_in_train_mode() {
        let net = Network::new("t", vec![LayerSpec::Dropout { rate: 0.5 }]).unwrap();
        let store = ParamStore::new();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, &store).unwrap();
        let input = tape.constant(Array2::ones((4, 4)));
        let eval_out = net.forward(&mut tape, &bound, input, false, &mut rng()).unwrap();
        assert_eq!(tape.value(eval_out), &Array2::<f64>::ones((4, 4)));
        let train_out = net.forward(&mut tape, &bound, input, true, &mut rng()).unwrap();
        let v = tape.value(train_out);
        assert!(v.iter().any(|&x| x == 0.0) || v.iter().any(|&x| x == 2.0));
    }

    #[test]
    fn checkpoint_reload_reproduces_forward_bit_exactly() {
        let net = Network::new(
            "t",
            vec![
                LayerSpec::Dense { inputs: 6, outputs: 5, activation: Activation::Tanh },
                LayerSpec::Dense { inputs: 5, outputs: 2, activation: Activation::Identity },
            ],
        )
        .unwrap();
        let mut store = ParamStore::new();
        net.init_params(&mut store, &mut rng()).unwrap();
        let input_data = Array2::from_shape_fn((2, 6), |(i, j)| (i * 7 + j) as f64 * 0.01);
        let forward = |store: &ParamStore| {
            let mut tape = Tape::new();
            let bound = net.bind(&mut tape, store).unwrap();
            let input = tape.constant(input_data.clone());
            let out = net.forward(&mut tape, &bound, input, false, &mut rng()).unwrap();
            tape.value(out).clone()
        };
        let before = forward(&store);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        store.save(&path, "{}").unwrap();
        let (loaded, _) = ParamStore::load(&path).unwrap();
        let after = forward(&loaded);
        assert_eq!(before, after);
    }
}
