//! Copy-task networks: a recurrent cell followed by a real-valued output head.
//!
//! The QLSTM variant zero-pads the 10 input channels to 3 quaternions and
//! feeds its `4H` real hidden components to the head; the LSTM baseline reads
//! the one-hot channels directly.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Graph, Var};
use crate::copy_task::{CopyBatch, SequenceClassifier, INPUT_CHANNELS, OUTPUT_CLASSES, PADDED_CHANNELS};
use crate::error::{Error, Result};
use crate::layers::RealLinear;
use crate::recurrent::{unroll, zero_graph_state, GraphCell, LstmCell, QlstmCell, SeedStream};
use crate::tensor::{Parameter, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Qlstm,
    Lstm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Qlstm => "qlstm",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn is_quaternion(self) -> bool {
        self == ModelKind::Qlstm
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qlstm" => Ok(ModelKind::Qlstm),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::Input(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Qlstm(QlstmCell),
    Lstm(LstmCell),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CopyModel {
    pub cell: Cell,
    pub head: RealLinear,
}

impl CopyModel {
    /// `hidden` counts quaternion units for a QLSTM and real units for an LSTM.
    pub fn new(kind: ModelKind, hidden: usize, seed: u64) -> Self {
        let mut seeds = SeedStream::new(seed);
        let cell = match kind {
            ModelKind::Qlstm => Cell::Qlstm(QlstmCell::new(PADDED_CHANNELS / 4, hidden, seeds.next())),
            ModelKind::Lstm => Cell::Lstm(LstmCell::new(INPUT_CHANNELS, hidden, seeds.next())),
        };
        let width = match &cell {
            Cell::Qlstm(c) => c.hidden_width(),
            Cell::Lstm(c) => c.hidden_width(),
        };
        let head = RealLinear::new(OUTPUT_CLASSES, width, true, seeds.next());
        Self { cell, head }
    }

    pub fn kind(&self) -> ModelKind {
        match self.cell {
            Cell::Qlstm(_) => ModelKind::Qlstm,
            Cell::Lstm(_) => ModelKind::Lstm,
        }
    }

    /// Hidden units as given at construction.
    pub fn hidden_units(&self) -> usize {
        match &self.cell {
            Cell::Qlstm(c) => c.hidden_q(),
            Cell::Lstm(c) => c.width(),
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.head.in_dim()
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    /// Parameters in a fixed order: cell tensors, then `head.weight`, `head.bias`.
    pub fn named_params(&self) -> Vec<(String, &Parameter)> {
        let mut out: Vec<(String, &Parameter)> = match &self.cell {
            Cell::Qlstm(c) => c.named_params(),
            Cell::Lstm(c) => c.named_params(),
        }
        .into_iter()
        .map(|(n, p)| (format!("cell.{n}"), p))
        .collect();
        let head = self.head.params();
        out.push(("head.weight".into(), head[0]));
        out.push(("head.bias".into(), head[1]));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = match &mut self.cell {
            Cell::Qlstm(c) => c.params_mut(),
            Cell::Lstm(c) => c.params_mut(),
        };
        out.extend(self.head.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Parameter::zero_grad);
    }

    /// Logits `[batch, steps, 9]` for one-hot inputs `[batch, steps, 10]`.
    pub fn forward(&self, inputs: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let (logits, batch, steps) = match &self.cell {
            Cell::Qlstm(c) => build(c, &self.head, &mut g, inputs)?.logits_info(),
            Cell::Lstm(c) => build(c, &self.head, &mut g, inputs)?.logits_info(),
        };
        Ok(to_batch_major(g.value(logits), batch, steps))
    }

    /// Mean cross-entropy against row-major `batch × steps` targets.
    pub fn loss(&self, inputs: &Tensor, targets: &[usize]) -> Result<f64> {
        let mut g = Graph::new();
        let loss = match &self.cell {
            Cell::Qlstm(c) => build(c, &self.head, &mut g, inputs)?.loss(&mut g, targets)?,
            Cell::Lstm(c) => build(c, &self.head, &mut g, inputs)?.loss(&mut g, targets)?,
        };
        Ok(g.value(loss).data()[0])
    }

    /// Computes the loss, accumulates every parameter gradient and returns the
    /// loss with the `[batch, steps, 9]` logits.
    pub fn loss_and_grads(&mut self, inputs: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
        let mut g = Graph::new();
        let head = &mut self.head;
        match &mut self.cell {
            Cell::Qlstm(c) => backprop(c, head, &mut g, inputs, targets),
            Cell::Lstm(c) => backprop(c, head, &mut g, inputs, targets),
        }
    }
}

impl SequenceClassifier for CopyModel {
    fn logits(&self, batch: &CopyBatch) -> Result<Tensor> {
        self.forward(&batch.inputs)
    }
}

struct Built<B> {
    cell: B,
    head: crate::layers::BoundLinear,
    logits: Var,
    batch: usize,
    steps: usize,
}

impl<B> Built<B> {
    fn logits_info(self) -> (Var, usize, usize) {
        (self.logits, self.batch, self.steps)
    }

    fn loss(&self, g: &mut Graph, targets: &[usize]) -> Result<Var> {
        if targets.len() != self.batch * self.steps {
            return Err(Error::shape(&[self.batch * self.steps], &[targets.len()]));
        }
        let time_major: Vec<usize> =
            (0..self.steps * self.batch).map(|i| targets[(i % self.batch) * self.steps + i / self.batch]).collect();
        g.softmax_cross_entropy(self.logits, &time_major)
    }
}

fn build<C: GraphCell>(cell: &C, head: &RealLinear, g: &mut Graph, inputs: &Tensor) -> Result<Built<C::Bound>> {
    let (batch, steps) = match inputs.shape() {
        [b, s, INPUT_CHANNELS] => (*b, *s),
        other => return Err(Error::shape(&[0, 0, INPUT_CHANNELS], other)),
    };
    if steps == 0 || batch == 0 {
        return Err(Error::Input("empty input batch".into()));
    }
    let width = cell.input_width();
    let bound = cell.bind(g)?;
    let head_bound = head.bind(g);
    let data = inputs.data();
    let xs: Vec<Var> = (0..steps)
        .map(|t| {
            let mut x = Tensor::zeros(&[batch, width]);
            for b in 0..batch {
                let src = &data[(b * steps + t) * INPUT_CHANNELS..(b * steps + t + 1) * INPUT_CHANNELS];
                x.data_mut()[b * width..b * width + INPUT_CHANNELS].copy_from_slice(src);
            }
            g.leaf(x)
        })
        .collect();
    let init = zero_graph_state(cell, g, batch);
    let states = unroll(cell, g, &bound, &xs, init)?;
    let hs: Vec<Var> = states.iter().map(|s| s.h).collect();
    let stacked = g.concat(&hs)?;
    let logits = head.forward_graph(g, &head_bound, stacked)?;
    Ok(Built { cell: bound, head: head_bound, logits, batch, steps })
}

fn backprop<C: GraphCell>(
    cell: &mut C,
    head: &mut RealLinear,
    g: &mut Graph,
    inputs: &Tensor,
    targets: &[usize],
) -> Result<(f64, Tensor)> {
    let built = build(cell, head, g, inputs)?;
    let loss = built.loss(g, targets)?;
    let value = g.value(loss).data()[0];
    g.backward(loss)?;
    cell.absorb_grads(g, &built.cell)?;
    head.absorb_grads(g, &built.head)?;
    Ok((value, to_batch_major(g.value(built.logits), built.batch, built.steps)))
}

/// `[steps·batch, K]` time-major rows to `[batch, steps, K]`.
fn to_batch_major(logits: &Tensor, batch: usize, steps: usize) -> Tensor {
    let k = logits.shape()[1];
    let src = logits.data();
    let mut out = Tensor::zeros(&[batch, steps, k]);
    for t in 0..steps {
        for b in 0..batch {
            out.data_mut()[(b * steps + t) * k..(b * steps + t + 1) * k]
                .copy_from_slice(&src[(t * batch + b) * k..(t * batch + b + 1) * k]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_task_parameter_counts() {
        // 4 gates × (3·20·4 + 20·20·4 + 20·4) + (80·9 + 9)
        assert_eq!(CopyModel::new(ModelKind::Qlstm, 20, 0).param_count(), 8_409);
        // 4 gates × (40·10 + 40·40 + 40) + (40·9 + 9)
        assert_eq!(CopyModel::new(ModelKind::Lstm, 40, 0).param_count(), 8_529);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("qlstm".parse::<ModelKind>().unwrap(), ModelKind::Qlstm);
        assert_eq!(ModelKind::Lstm.to_string(), "lstm");
        assert!("gru".parse::<ModelKind>().is_err());
    }

    #[test]
    fn bad_input_shape() {
        let m = CopyModel::new(ModelKind::Lstm, 4, 0);
        assert!(m.forward(&Tensor::zeros(&[2, 3, 9])).is_err());
        assert!(m.loss(&Tensor::zeros(&[2, 3, 10]), &[0; 5]).is_err());
    }
}
