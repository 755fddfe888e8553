//! Quaternion and real LSTM cells, sequence unrolling and bidirectional runs.
//!
//! Gates are ordered forget, input, candidate, output throughout. Gating is a
//! component-wise product over all real components, so a quaternion gate acts
//! on each of r, x, y, z independently.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::layers::{absorb, split_activation, Activation, BoundLinear, BoundQLinear, QuaternionLinear, RealLinear};
use crate::quat::QuaternionVector;
use crate::tensor::{Parameter, Tensor};

pub const GATE_NAMES: [&str; 4] = ["f", "i", "c", "o"];

/// Hidden and cell state of a QLSTM, both split-layout vectors of `H` quaternions.
#[derive(Clone, Debug, PartialEq)]
pub struct QlstmState {
    pub h: QuaternionVector,
    pub c: QuaternionVector,
}

impl QlstmState {
    pub fn zeros(hidden_q: usize) -> Self {
        Self { h: QuaternionVector::zeros(hidden_q), c: QuaternionVector::zeros(hidden_q) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(width: usize) -> Self {
        Self { h: vec![0.0; width], c: vec![0.0; width] }
    }
}

/// Recurrent state as graph nodes, each `[B, hidden_width]`.
#[derive(Clone, Copy, Debug)]
pub struct GraphState {
    pub h: Var,
    pub c: Var,
}

/// A cell evaluated one example at a time, without gradient tracking.
pub trait Recurrence {
    type Input;
    type State: Clone;

    fn initial_state(&self) -> Self::State;
    fn step(&self, x: &Self::Input, prev: &Self::State) -> Result<Self::State>;
    fn hidden<'a>(&self, state: &'a Self::State) -> &'a [f64];
}

/// A cell that can be unrolled on a [`Graph`] over batches.
pub trait GraphCell {
    type Bound;

    /// Real input components per time step.
    fn input_width(&self) -> usize;
    /// Real hidden components.
    fn hidden_width(&self) -> usize;
    fn bind(&self, g: &mut Graph) -> Result<Self::Bound>;
    /// One step on `[B, input_width]` inputs.
    fn step_graph(&self, g: &mut Graph, bound: &Self::Bound, x: Var, prev: &GraphState) -> Result<GraphState>;
    fn absorb_grads(&mut self, g: &Graph, bound: &Self::Bound) -> Result<()>;
    fn named_params(&self) -> Vec<(String, &Parameter)>;
    fn params_mut(&mut self) -> Vec<&mut Parameter>;

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }
}

/// Quaternion LSTM cell.
#[derive(Clone, Debug, PartialEq)]
pub struct QlstmCell {
    input_q: usize,
    hidden_q: usize,
    /// Input maps `W_f, W_i, W_c, W_o`.
    pub w: [QuaternionLinear; 4],
    /// Recurrent maps `R_f, R_i, R_c, R_o`.
    pub r: [QuaternionLinear; 4],
    /// Biases, `4H` reals each in split layout.
    pub b: [Parameter; 4],
}

pub struct BoundQlstm {
    w: [BoundQLinear; 4],
    r: [BoundQLinear; 4],
    b: [Var; 4],
    w_cat: Var,
    r_cat: Var,
    b_cat: Var,
}

impl QlstmCell {
    /// Randomly initialized cell. Each weight matrix draws its own seed from `seed`.
    pub fn new(input_q: usize, hidden_q: usize, seed: u64) -> Self {
        let mut seeds = SeedStream::new(seed);
        let w = std::array::from_fn(|_| QuaternionLinear::new(hidden_q, input_q, false, seeds.next()));
        let r = std::array::from_fn(|_| QuaternionLinear::new(hidden_q, hidden_q, false, seeds.next()));
        Self { input_q, hidden_q, w, r, b: std::array::from_fn(|_| Parameter::zeros(&[4 * hidden_q])) }
    }

    pub fn zeros(input_q: usize, hidden_q: usize) -> Self {
        Self {
            input_q,
            hidden_q,
            w: std::array::from_fn(|_| QuaternionLinear::zeros(hidden_q, input_q, false)),
            r: std::array::from_fn(|_| QuaternionLinear::zeros(hidden_q, hidden_q, false)),
            b: std::array::from_fn(|_| Parameter::zeros(&[4 * hidden_q])),
        }
    }

    pub fn input_q(&self) -> usize {
        self.input_q
    }

    pub fn hidden_q(&self) -> usize {
        self.hidden_q
    }

    fn preactivation(&self, gate: usize, x: &QuaternionVector, h: &QuaternionVector) -> Result<QuaternionVector> {
        let a = self.w[gate].forward(x)?;
        let b = self.r[gate].forward(h)?;
        let bias = self.b[gate].value.data();
        let out = a.components().iter().zip(b.components()).zip(bias).map(|((p, q), s)| p + q + s).collect();
        QuaternionVector::from_components(out)
    }

    /// One QLSTM step evaluated with Hamilton products.
    pub fn step(&self, x: &QuaternionVector, prev: &QlstmState) -> Result<QlstmState> {
        if x.n_quats() != self.input_q {
            return Err(Error::shape(&[4 * self.input_q], &[x.len()]));
        }
        if prev.h.n_quats() != self.hidden_q || prev.c.n_quats() != self.hidden_q {
            return Err(Error::shape(&[4 * self.hidden_q], &[prev.h.len(), prev.c.len()]));
        }
        let f = split_activation(&self.preactivation(0, x, &prev.h)?, Activation::Sigmoid);
        let i = split_activation(&self.preactivation(1, x, &prev.h)?, Activation::Sigmoid);
        let cand = split_activation(&self.preactivation(2, x, &prev.h)?, Activation::Tanh);
        let o = split_activation(&self.preactivation(3, x, &prev.h)?, Activation::Sigmoid);
        let c: Vec<f64> = (0..4 * self.hidden_q)
            .map(|k| f.components()[k] * prev.c.components()[k] + i.components()[k] * cand.components()[k])
            .collect();
        let h: Vec<f64> = c.iter().zip(o.components()).map(|(cv, ov)| ov * cv.tanh()).collect();
        let state = QlstmState { h: QuaternionVector::from_components(h)?, c: QuaternionVector::from_components(c)? };
        if !state.h.is_finite() || !state.c.is_finite() {
            return Err(Error::Divergence("QLSTM state".into()));
        }
        Ok(state)
    }
}

impl Recurrence for QlstmCell {
    type Input = QuaternionVector;
    type State = QlstmState;

    fn initial_state(&self) -> QlstmState {
        QlstmState::zeros(self.hidden_q)
    }

    fn step(&self, x: &QuaternionVector, prev: &QlstmState) -> Result<QlstmState> {
        QlstmCell::step(self, x, prev)
    }

    fn hidden<'a>(&self, state: &'a QlstmState) -> &'a [f64] {
        state.h.components()
    }
}

impl GraphCell for QlstmCell {
    type Bound = BoundQlstm;

    fn input_width(&self) -> usize {
        4 * self.input_q
    }

    fn hidden_width(&self) -> usize {
        4 * self.hidden_q
    }

    fn bind(&self, g: &mut Graph) -> Result<BoundQlstm> {
        let w: [BoundQLinear; 4] = std::array::from_fn(|k| self.w[k].bind(g));
        let r: [BoundQLinear; 4] = std::array::from_fn(|k| self.r[k].bind(g));
        let b: [Var; 4] = std::array::from_fn(|k| g.leaf(self.b[k].value.clone()));
        let w_cat = g.concat(&w.map(|x| x.matrix))?;
        let r_cat = g.concat(&r.map(|x| x.matrix))?;
        let b_cat = g.concat(&b)?;
        Ok(BoundQlstm { w, r, b, w_cat, r_cat, b_cat })
    }

    fn step_graph(&self, g: &mut Graph, bound: &BoundQlstm, x: Var, prev: &GraphState) -> Result<GraphState> {
        gated_step(g, bound.w_cat, bound.r_cat, bound.b_cat, self.hidden_width(), x, prev)
    }

    fn absorb_grads(&mut self, g: &Graph, bound: &BoundQlstm) -> Result<()> {
        for k in 0..4 {
            self.w[k].absorb_grads(g, &bound.w[k])?;
            self.r[k].absorb_grads(g, &bound.r[k])?;
            absorb(&mut self.b[k], g, bound.b[k])?;
        }
        Ok(())
    }

    fn named_params(&self) -> Vec<(String, &Parameter)> {
        let mut out = Vec::with_capacity(12);
        for (k, name) in GATE_NAMES.iter().enumerate() {
            out.push((format!("w_{name}"), &self.w[k].weight));
        }
        for (k, name) in GATE_NAMES.iter().enumerate() {
            out.push((format!("r_{name}"), &self.r[k].weight));
        }
        for (k, name) in GATE_NAMES.iter().enumerate() {
            out.push((format!("b_{name}"), &self.b[k]));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = Vec::with_capacity(12);
        out.extend(self.w.iter_mut().map(|l| &mut l.weight));
        out.extend(self.r.iter_mut().map(|l| &mut l.weight));
        out.extend(self.b.iter_mut());
        out
    }
}

/// Real-valued LSTM baseline of width `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    input_dim: usize,
    width: usize,
    pub w: [RealLinear; 4],
    pub r: [RealLinear; 4],
    pub b: [Parameter; 4],
}

pub struct BoundLstm {
    w: [BoundLinear; 4],
    r: [BoundLinear; 4],
    b: [Var; 4],
    w_cat: Var,
    r_cat: Var,
    b_cat: Var,
}

impl LstmCell {
    pub fn new(input_dim: usize, width: usize, seed: u64) -> Self {
        let mut seeds = SeedStream::new(seed);
        Self {
            input_dim,
            width,
            w: std::array::from_fn(|_| RealLinear::new(width, input_dim, false, seeds.next())),
            r: std::array::from_fn(|_| RealLinear::new(width, width, false, seeds.next())),
            b: std::array::from_fn(|_| Parameter::zeros(&[width])),
        }
    }

    pub fn zeros(input_dim: usize, width: usize) -> Self {
        Self {
            input_dim,
            width,
            w: std::array::from_fn(|_| RealLinear::zeros(width, input_dim, false)),
            r: std::array::from_fn(|_| RealLinear::zeros(width, width, false)),
            b: std::array::from_fn(|_| Parameter::zeros(&[width])),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn step(&self, x: &[f64], prev: &LstmState) -> Result<LstmState> {
        if x.len() != self.input_dim {
            return Err(Error::shape(&[self.input_dim], &[x.len()]));
        }
        if prev.h.len() != self.width || prev.c.len() != self.width {
            return Err(Error::shape(&[self.width], &[prev.h.len(), prev.c.len()]));
        }
        let pre = |k: usize| -> Result<Vec<f64>> {
            let a = self.w[k].forward(x)?;
            let b = self.r[k].forward(&prev.h)?;
            Ok(a.iter().zip(&b).zip(self.b[k].value.data()).map(|((p, q), s)| p + q + s).collect())
        };
        let f: Vec<f64> = pre(0)?.into_iter().map(|v| Activation::Sigmoid.apply(v)).collect();
        let i: Vec<f64> = pre(1)?.into_iter().map(|v| Activation::Sigmoid.apply(v)).collect();
        let cand: Vec<f64> = pre(2)?.into_iter().map(f64::tanh).collect();
        let o: Vec<f64> = pre(3)?.into_iter().map(|v| Activation::Sigmoid.apply(v)).collect();
        let c: Vec<f64> = (0..self.width).map(|k| f[k] * prev.c[k] + i[k] * cand[k]).collect();
        let h: Vec<f64> = c.iter().zip(&o).map(|(cv, ov)| ov * cv.tanh()).collect();
        if h.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::Divergence("LSTM state".into()));
        }
        Ok(LstmState { h, c })
    }
}

impl Recurrence for LstmCell {
    type Input = Vec<f64>;
    type State = LstmState;

    fn initial_state(&self) -> LstmState {
        LstmState::zeros(self.width)
    }

    fn step(&self, x: &Vec<f64>, prev: &LstmState) -> Result<LstmState> {
        LstmCell::step(self, x, prev)
    }

    fn hidden<'a>(&self, state: &'a LstmState) -> &'a [f64] {
        &state.h
    }
}

impl GraphCell for LstmCell {
    type Bound = BoundLstm;

    fn input_width(&self) -> usize {
        self.input_dim
    }

    fn hidden_width(&self) -> usize {
        self.width
    }

    fn bind(&self, g: &mut Graph) -> Result<BoundLstm> {
        let w: [BoundLinear; 4] = std::array::from_fn(|k| self.w[k].bind(g));
        let r: [BoundLinear; 4] = std::array::from_fn(|k| self.r[k].bind(g));
        let b: [Var; 4] = std::array::from_fn(|k| g.leaf(self.b[k].value.clone()));
        let w_cat = g.concat(&w.map(|x| x.weight))?;
        let r_cat = g.concat(&r.map(|x| x.weight))?;
        let b_cat = g.concat(&b)?;
        Ok(BoundLstm { w, r, b, w_cat, r_cat, b_cat })
    }

    fn step_graph(&self, g: &mut Graph, bound: &BoundLstm, x: Var, prev: &GraphState) -> Result<GraphState> {
        gated_step(g, bound.w_cat, bound.r_cat, bound.b_cat, self.width, x, prev)
    }

    fn absorb_grads(&mut self, g: &Graph, bound: &BoundLstm) -> Result<()> {
        for k in 0..4 {
            self.w[k].absorb_grads(g, &bound.w[k])?;
            self.r[k].absorb_grads(g, &bound.r[k])?;
            absorb(&mut self.b[k], g, bound.b[k])?;
        }
        Ok(())
    }

    fn named_params(&self) -> Vec<(String, &Parameter)> {
        let mut out = Vec::with_capacity(12);
        for (k, name) in GATE_NAMES.iter().enumerate() {
            out.push((format!("w_{name}"), &self.w[k].weight));
        }
        for (k, name) in GATE_NAMES.iter().enumerate() {
            out.push((format!("r_{name}"), &self.r[k].weight));
        }
        for (k, name) in GATE_NAMES.iter().enumerate() {
            out.push((format!("b_{name}"), &self.b[k]));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = Vec::with_capacity(12);
        out.extend(self.w.iter_mut().map(|l| &mut l.weight));
        out.extend(self.r.iter_mut().map(|l| &mut l.weight));
        out.extend(self.b.iter_mut());
        out
    }
}

/// Shared gate arithmetic on fused `[4·width, ·]` matrices.
fn gated_step(
    g: &mut Graph,
    w_cat: Var,
    r_cat: Var,
    b_cat: Var,
    width: usize,
    x: Var,
    prev: &GraphState,
) -> Result<GraphState> {
    let xw = g.matmul_t(x, w_cat)?;
    let hr = g.matmul_t(prev.h, r_cat)?;
    let pre = g.add(xw, hr)?;
    let pre = g.add_row(pre, b_cat)?;
    let f = g.slice_cols(pre, 0, width)?;
    let f = g.sigmoid(f);
    let i = g.slice_cols(pre, width, width)?;
    let i = g.sigmoid(i);
    let cand = g.slice_cols(pre, 2 * width, width)?;
    let cand = g.tanh(cand);
    let o = g.slice_cols(pre, 3 * width, width)?;
    let o = g.sigmoid(o);
    let keep = g.mul(f, prev.c)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(GraphState { h, c })
}

/// Zero initial state for a batch of `batch` sequences.
pub fn zero_graph_state<C: GraphCell>(cell: &C, g: &mut Graph, batch: usize) -> GraphState {
    let h = g.leaf(Tensor::zeros(&[batch, cell.hidden_width()]));
    let c = g.leaf(Tensor::zeros(&[batch, cell.hidden_width()]));
    GraphState { h, c }
}

/// Folds the cell over `inputs` left to right and returns every state.
pub fn run_sequence<C: Recurrence>(cell: &C, inputs: &[C::Input], initial: &C::State) -> Result<Vec<C::State>> {
    let mut out: Vec<C::State> = Vec::with_capacity(inputs.len());
    let mut state = initial.clone();
    for x in inputs {
        state = cell.step(x, &state)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Forward pass over `inputs` plus a backward pass over the reversed inputs;
/// hidden states are summed component-wise per time step.
pub fn bidirectional_run<C: Recurrence>(fwd: &C, bwd: &C, inputs: &[C::Input]) -> Result<Vec<Vec<f64>>> {
    let width = fwd.hidden(&fwd.initial_state()).len();
    let bwd_width = bwd.hidden(&bwd.initial_state()).len();
    if width != bwd_width {
        return Err(Error::shape(&[width], &[bwd_width]));
    }
    let forward = run_sequence(fwd, inputs, &fwd.initial_state())?;
    let reversed: Vec<&C::Input> = inputs.iter().rev().collect();
    let mut backward = Vec::with_capacity(inputs.len());
    let mut state = bwd.initial_state();
    for x in reversed {
        state = bwd.step(x, &state)?;
        backward.push(bwd.hidden(&state).to_vec());
    }
    backward.reverse();
    Ok(forward.iter().zip(backward).map(|(f, b)| fwd.hidden(f).iter().zip(b).map(|(p, q)| p + q).collect()).collect())
}

/// Unrolls the cell on the graph. `inputs` are `[B, input_width]` nodes.
pub fn unroll<C: GraphCell>(
    cell: &C,
    g: &mut Graph,
    bound: &C::Bound,
    inputs: &[Var],
    initial: GraphState,
) -> Result<Vec<GraphState>> {
    let mut out = Vec::with_capacity(inputs.len());
    let mut state = initial;
    for &x in inputs {
        state = cell.step_graph(g, bound, x, &state)?;
        out.push(state);
    }
    Ok(out)
}

/// Graph version of [`bidirectional_run`]; returns the summed hidden nodes.
pub fn bidirectional_unroll<C: GraphCell>(
    fwd: (&C, &C::Bound),
    bwd: (&C, &C::Bound),
    g: &mut Graph,
    inputs: &[Var],
) -> Result<Vec<Var>> {
    if fwd.0.hidden_width() != bwd.0.hidden_width() {
        return Err(Error::shape(&[fwd.0.hidden_width()], &[bwd.0.hidden_width()]));
    }
    let Some(&first) = inputs.first() else { return Ok(Vec::new()) };
    let batch = g.value(first).shape()[0];
    let init = zero_graph_state(fwd.0, g, batch);
    let forward = unroll(fwd.0, g, fwd.1, inputs, init)?;
    let reversed: Vec<Var> = inputs.iter().rev().copied().collect();
    let init = zero_graph_state(bwd.0, g, batch);
    let mut backward = unroll(bwd.0, g, bwd.1, &reversed, init)?;
    backward.reverse();
    forward.iter().zip(&backward).map(|(f, b)| g.add(f.h, b.h)).collect()
}

/// Deterministic per-layer seeds derived from one model seed (SplitMix64).
#[derive(Clone, Debug)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Scalar parameters of a QLSTM cell: `4 · (4IH + 4H² + 4H)`.
pub fn qlstm_params(input_q: usize, hidden_q: usize) -> usize {
    4 * (4 * input_q * hidden_q + 4 * hidden_q * hidden_q + 4 * hidden_q)
}

/// Scalar parameters of an LSTM cell: `4 · (D·in + D² + D)`.
pub fn lstm_params(input_dim: usize, width: usize) -> usize {
    4 * (width * input_dim + width * width + width)
}
