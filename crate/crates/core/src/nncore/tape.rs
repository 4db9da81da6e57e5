//! Reverse-mode autodiff over 2-D arrays.
//!
//! Values are eagerly computed `Array2<f64>` matrices; every op records its
//! parents so `backward` can sweep the tape once in reverse. Gradients flow
//! only into nodes reachable from a parameter leaf. Tapes are throwaway: one
//! per forward/backward pass.

use ndarray::{s, Array2, Axis};

/// Handle to one tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// m x n plus a broadcast 1 x n row.
    AddRow(usize, usize),
    /// m x n times a broadcast 1 x n row.
    MulRow(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Relu(usize),
    Square(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    /// Row-wise (x - mean) / sqrt(var + eps); no affine part.
    LayerNormRows(usize, f64),
    SliceCols(usize, usize, usize),
    SelectRow(usize, usize),
    VStack(Vec<usize>),
    HStack(Vec<usize>),
    Transpose(usize),
    SumAll(usize),
    MeanAll(usize),
    SumRows(usize),
    /// out[i, 0] = in[i, idx[i]].
    GatherCols(usize, Vec<usize>),
    /// Elementwise minimum; ties route the gradient to the first parent.
    Min(usize, usize),
    /// Clamp into [lo, hi]; gradient passes only in the interior.
    ClampConst(usize, f64, f64),
    /// Elementwise Huber of the parent (treated as a residual), delta.
    Huber(usize, f64),
    /// Elementwise multiply by a fixed mask (inverted-dropout scaling baked in).
    DropoutMask(usize, Array2<f64>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf with no gradient (inputs, targets).
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that accumulates a gradient (parameters).
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a.0, b.0), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a.0, b.0), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a.0, b.0), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = &self.nodes[a.0].value * &self.nodes[b.0].value;
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a.0, b.0), rg)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        debug_assert_eq!(self.nodes[row.0].value.nrows(), 1);
        let value = &self.nodes[a.0].value + &self.nodes[row.0].value;
        let rg = self.rg(a) || self.rg(row);
        self.push(value, Op::AddRow(a.0, row.0), rg)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        debug_assert_eq!(self.nodes[row.0].value.nrows(), 1);
        let value = &self.nodes[a.0].value * &self.nodes[row.0].value;
        let rg = self.rg(a) || self.rg(row);
        self.push(value, Op::MulRow(a.0, row.0), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x * c);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a.0, c), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| 1.0 / (1.0 + (-x).exp()));
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a.0), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(f64::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a.0), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(f64::exp);
        let rg = self.rg(a);
        self.push(value, Op::Exp(a.0), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a.0), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x * x);
        let rg = self.rg(a);
        self.push(value, Op::Square(a.0), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(&self.nodes[a.0].value);
        let rg = self.rg(a);
        self.push(value, Op::SoftmaxRows(a.0), rg)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = &self.nodes[a.0].value;
        let mut value = x.clone();
        for mut row in value.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            row.mapv_inplace(|v| v - log_sum);
        }
        let rg = self.rg(a);
        self.push(value, Op::LogSoftmaxRows(a.0), rg)
    }

    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let x = &self.nodes[a.0].value;
        let mut value = x.clone();
        for mut row in value.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let denom = (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) / denom);
        }
        let rg = self.rg(a);
        self.push(value, Op::LayerNormRows(a.0, eps), rg)
    }

    pub fn slice_cols(&mut self, a: Var, from: usize, to: usize) -> Var {
        let value = self.nodes[a.0].value.slice(s![.., from..to]).to_owned();
        let rg = self.rg(a);
        self.push(value, Op::SliceCols(a.0, from, to), rg)
    }

    pub fn select_row(&mut self, a: Var, row: usize) -> Var {
        let value = self
            .nodes[a.0]
            .value
            .row(row)
            .to_owned()
            .insert_axis(Axis(0));
        let rg = self.rg(a);
        self.push(value, Op::SelectRow(a.0, row), rg)
    }

    pub fn vstack(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|v| self.nodes[v.0].value.view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("vstack shapes agree");
        let rg = parts.iter().any(|v| self.rg(*v));
        self.push(value, Op::VStack(parts.iter().map(|v| v.0).collect()), rg)
    }

    pub fn hstack(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|v| self.nodes[v.0].value.view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("hstack shapes agree");
        let rg = parts.iter().any(|v| self.rg(*v));
        self.push(value, Op::HStack(parts.iter().map(|v| v.0).collect()), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.t().to_owned();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a.0), rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.nodes[a.0].value.sum());
        let rg = self.rg(a);
        self.push(value, Op::SumAll(a.0), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let node = &self.nodes[a.0].value;
        let value = Array2::from_elem((1, 1), node.sum() / node.len() as f64);
        let rg = self.rg(a);
        self.push(value, Op::MeanAll(a.0), rg)
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(value, Op::SumRows(a.0), rg)
    }

    /// Pick one column per row: `out[i, 0] = in[i, idx[i]]`.
    pub fn gather_cols(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let x = &self.nodes[a.0].value;
        assert_eq!(idx.len(), x.nrows());
        let mut value = Array2::zeros((x.nrows(), 1));
        for (i, &j) in idx.iter().enumerate() {
            value[(i, 0)] = x[(i, j)];
        }
        let rg = self.rg(a);
        self.push(value, Op::GatherCols(a.0, idx), rg)
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let value = ndarray::Zip::from(&self.nodes[a.0].value)
            .and(&self.nodes[b.0].value)
            .map_collect(|&x, &y| x.min(y));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Min(a.0, b.0), rg)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.clamp(lo, hi));
        let rg = self.rg(a);
        self.push(value, Op::ClampConst(a.0, lo, hi), rg)
    }

    /// Elementwise Huber of a residual: `0.5 d^2` for `|d| <= delta`, else
    /// `delta (|d| - 0.5 delta)`.
    pub fn huber(&mut self, diff: Var, delta: f64) -> Var {
        let value = self.nodes[diff.0].value.mapv(|d| {
            if d.abs() <= delta {
                0.5 * d * d
            } else {
                delta * (d.abs() - 0.5 * delta)
            }
        });
        let rg = self.rg(diff);
        self.push(value, Op::Huber(diff.0, delta), rg)
    }

    /// Inverted dropout: the mask holds 0 or 1/(1-rate).
    pub fn dropout(&mut self, a: Var, mask: Array2<f64>) -> Var {
        let value = &self.nodes[a.0].value * &mask;
        let rg = self.rg(a);
        self.push(value, Op::DropoutMask(a.0, mask), rg)
    }

    /// Reverse sweep from a scalar (1x1) root. Returns per-node gradients;
    /// index with the `Var`s handed out during the forward pass.
    pub fn backward(&self, root: Var) -> Gradients {
        let value = &self.nodes[root.0].value;
        assert_eq!(value.shape(), [1, 1], "backward root must be a 1x1 scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::ones((1, 1)));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, i: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let acc = |grads: &mut [Option<Array2<f64>>], idx: usize, delta: Array2<f64>| {
            if !self.nodes[idx].requires_grad {
                return;
            }
            match &mut grads[idx] {
                Some(existing) => *existing += &delta,
                slot => *slot = Some(delta),
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = g.dot(&self.nodes[*b].value.t());
                let db = self.nodes[*a].value.t().dot(g);
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, -g.clone());
            }
            Op::Mul(a, b) => {
                acc(grads, *a, g * &self.nodes[*b].value);
                acc(grads, *b, g * &self.nodes[*a].value);
            }
            Op::AddRow(a, r) => {
                acc(grads, *a, g.clone());
                acc(grads, *r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::MulRow(a, r) => {
                acc(grads, *a, g * &self.nodes[*r].value);
                let dr = (g * &self.nodes[*a].value)
                    .sum_axis(Axis(0))
                    .insert_axis(Axis(0));
                acc(grads, *r, dr);
            }
            Op::Scale(a, c) => acc(grads, *a, g.mapv(|x| x * c)),
            Op::Sigmoid(a) => {
                let y = &self.nodes[i].value;
                acc(grads, *a, g * &y.mapv(|v| v * (1.0 - v)));
            }
            Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                acc(grads, *a, g * &y.mapv(|v| 1.0 - v * v));
            }
            Op::Exp(a) => {
                let y = &self.nodes[i].value;
                acc(grads, *a, g * y);
            }
            Op::Relu(a) => {
                let x = &self.nodes[*a].value;
                acc(grads, *a, g * &x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
            }
            Op::Square(a) => {
                let x = &self.nodes[*a].value;
                acc(grads, *a, g * &x.mapv(|v| 2.0 * v));
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let mut dx = g * y;
                for (mut drow, yrow) in dx.rows_mut().into_iter().zip(y.rows()) {
                    let dot = drow.sum();
                    for (d, yv) in drow.iter_mut().zip(yrow) {
                        *d -= dot * yv;
                    }
                }
                acc(grads, *a, dx);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let mut dx = g.clone();
                for (mut drow, yrow) in dx.rows_mut().into_iter().zip(y.rows()) {
                    let gsum: f64 = drow.sum();
                    for (d, yv) in drow.iter_mut().zip(yrow) {
                        *d -= gsum * yv.exp();
                    }
                }
                acc(grads, *a, dx);
            }
            Op::LayerNormRows(a, eps) => {
                let x = &self.nodes[*a].value;
                let y = &self.nodes[i].value;
                let mut dx = Array2::zeros(x.raw_dim());
                for ((xrow, yrow), (grow, mut drow)) in x
                    .rows()
                    .into_iter()
                    .zip(y.rows())
                    .zip(g.rows().into_iter().zip(dx.rows_mut()))
                {
                    let n = xrow.len() as f64;
                    let mean = xrow.sum() / n;
                    let var = xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let denom = (var + eps).sqrt();
                    let g_mean = grow.sum() / n;
                    let gy_mean = grow
                        .iter()
                        .zip(yrow.iter())
                        .map(|(gv, yv)| gv * yv)
                        .sum::<f64>()
                        / n;
                    for ((d, gv), yv) in drow.iter_mut().zip(grow.iter()).zip(yrow.iter()) {
                        *d = (gv - g_mean - yv * gy_mean) / denom;
                    }
                }
                acc(grads, *a, dx);
            }
            Op::SliceCols(a, from, _to) => {
                let x = &self.nodes[*a].value;
                let mut dx = Array2::zeros(x.raw_dim());
                dx.slice_mut(s![.., *from..*from + g.ncols()]).assign(g);
                acc(grads, *a, dx);
            }
            Op::SelectRow(a, row) => {
                let x = &self.nodes[*a].value;
                let mut dx = Array2::zeros(x.raw_dim());
                dx.row_mut(*row).assign(&g.row(0));
                acc(grads, *a, dx);
            }
            Op::VStack(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let rows = self.nodes[p].value.nrows();
                    let slice = g.slice(s![offset..offset + rows, ..]).to_owned();
                    acc(grads, p, slice);
                    offset += rows;
                }
            }
            Op::HStack(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let cols = self.nodes[p].value.ncols();
                    let slice = g.slice(s![.., offset..offset + cols]).to_owned();
                    acc(grads, p, slice);
                    offset += cols;
                }
            }
            Op::Transpose(a) => acc(grads, *a, g.t().to_owned()),
            Op::SumAll(a) => {
                let x = &self.nodes[*a].value;
                acc(grads, *a, Array2::from_elem(x.raw_dim(), g[(0, 0)]));
            }
            Op::MeanAll(a) => {
                let x = &self.nodes[*a].value;
                let scale = g[(0, 0)] / x.len() as f64;
                acc(grads, *a, Array2::from_elem(x.raw_dim(), scale));
            }
            Op::SumRows(a) => {
                let x = &self.nodes[*a].value;
                let mut dx = Array2::zeros(x.raw_dim());
                for (mut drow, grow) in dx.rows_mut().into_iter().zip(g.rows()) {
                    drow.fill(grow[0]);
                }
                acc(grads, *a, dx);
            }
            Op::GatherCols(a, idx) => {
                let x = &self.nodes[*a].value;
                let mut dx = Array2::zeros(x.raw_dim());
                for (i_row, &j) in idx.iter().enumerate() {
                    dx[(i_row, j)] += g[(i_row, 0)];
                }
                acc(grads, *a, dx);
            }
            Op::Min(a, b) => {
                let xa = &self.nodes[*a].value;
                let xb = &self.nodes[*b].value;
                let pick_a = ndarray::Zip::from(xa)
                    .and(xb)
                    .map_collect(|&x, &y| if x <= y { 1.0 } else { 0.0 });
                acc(grads, *a, g * &pick_a);
                acc(grads, *b, g * &pick_a.mapv(|p| 1.0 - p));
            }
            Op::ClampConst(a, lo, hi) => {
                let x = &self.nodes[*a].value;
                let pass = x.mapv(|v| if v > *lo && v < *hi { 1.0 } else { 0.0 });
                acc(grads, *a, g * &pass);
            }
            Op::Huber(a, delta) => {
                let d = &self.nodes[*a].value;
                acc(grads, *a, g * &d.mapv(|v| v.clamp(-delta, *delta)));
            }
            Op::DropoutMask(a, mask) => acc(grads, *a, g * mask),
        }
    }
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; zero-shaped `None` for
    /// nodes the root does not depend on (or that carry no gradient).
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

pub(crate) fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_gradient() {
        // L = w . x with x = 2 -> dL/dw = 2.
        let mut tape = Tape::new();
        let w = tape.param(array![[3.0]]);
        let x = tape.constant(array![[2.0]]);
        let l = tape.mul(w, x);
        let grads = tape.backward(l);
        assert_eq!(grads.get(w).unwrap()[(0, 0)], 2.0);
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn matmul_gradients() {
        let mut tape = Tape::new();
        let a = tape.param(array![[1.0, 2.0], [3.0, 4.0]]);
        let b = tape.param(array![[5.0], [6.0]]);
        let c = tape.matmul(a, b);
        let l = tape.sum_all(c);
        let grads = tape.backward(l);
        // dL/dA = 1 . B^T broadcast over rows.
        assert_eq!(grads.get(a).unwrap(), &array![[5.0, 6.0], [5.0, 6.0]]);
        assert_eq!(grads.get(b).unwrap(), &array![[4.0], [6.0]]);
    }

    #[test]
    fn softmax_uniform_on_zeros() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[0.0, 0.0, 0.0]]);
        let y = tape.softmax_rows(x);
        for v in tape.value(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[1.0, -2.0, 0.5], [100.0, 100.0, -100.0]]);
        let y = tape.softmax_rows(x);
        for row in tape.value(y).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn gather_and_huber_roundtrip() {
        let mut tape = Tape::new();
        let q = tape.param(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let picked = tape.gather_cols(q, vec![2, 0]);
        assert_eq!(tape.value(picked), &array![[3.0], [4.0]]);
        let target = tape.constant(array![[2.0], [8.0]]);
        let diff = tape.sub(picked, target);
        let h = tape.huber(diff, 1.0);
        // residuals: 1.0 -> 0.5; -4.0 -> 1*(4-0.5) = 3.5
        assert!((tape.value(h)[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((tape.value(h)[(1, 0)] - 3.5).abs() < 1e-12);
        let l = tape.sum_all(h);
        let grads = tape.backward(l);
        let gq = grads.get(q).unwrap();
        assert_eq!(gq[(0, 2)], 1.0); // in the quadratic zone: d itself
        assert_eq!(gq[(1, 0)], -1.0); // clipped to delta * sign
        assert_eq!(gq[(0, 0)], 0.0);
    }

    /// Central-difference check of a composite expression touching most ops.
    #[test]
    fn finite_difference_composite() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let w_data: Vec<f64> = (0..12).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let x_data: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.8..0.8)).collect();

        let eval = |w_data: &[f64]| -> f64 {
            let mut tape = Tape::new();
            let w = tape.param(Array2::from_shape_vec((4, 3), w_data.to_vec()).unwrap());
            let x = tape.constant(Array2::from_shape_vec((2, 4), x_data.clone()).unwrap());
            let h = tape.matmul(x, w);
            let t = tape.tanh(h);
            let ln = tape.layer_norm_rows(t, 1e-5);
            let sm = tape.log_softmax_rows(ln);
            let s = tape.sigmoid(sm);
            let m = tape.mean_all(s);
            tape.value(m)[(0, 0)]
        };

        // analytic
        let mut tape = Tape::new();
        let w = tape.param(Array2::from_shape_vec((4, 3), w_data.clone()).unwrap());
        let x = tape.constant(Array2::from_shape_vec((2, 4), x_data.clone()).unwrap());
        let h = tape.matmul(x, w);
        let t = tape.tanh(h);
        let ln = tape.layer_norm_rows(t, 1e-5);
        let sm = tape.log_softmax_rows(ln);
        let s = tape.sigmoid(sm);
        let m = tape.mean_all(s);
        let grads = tape.backward(m);
        let analytic = grads.get(w).unwrap();

        let h_step = 1e-5;
        for i in 0..w_data.len() {
            let mut plus = w_data.clone();
            plus[i] += h_step;
            let mut minus = w_data.clone();
            minus[i] -= h_step;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h_step);
            let a = analytic.as_slice().unwrap()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            assert!(
                ((a - numeric) / denom).abs() < 1e-4,
                "param {i}: analytic {a}, numeric {numeric}"
            );
        }
    }
}
