use std::cell::Cell;

use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

pub(crate) type NodeId = usize;

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Input,
    Param { layer: usize, slot: usize },
    MatMul(NodeId, NodeId),
    /// Adds a `(1, m)` row to every row.
    AddBias(NodeId, NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    /// `out[r] = sum_e gate[r, e] * experts[e][r]`
    Mix { gate: NodeId, experts: Vec<NodeId> },
}

/// Forward record of one network evaluation.
///
/// A tape supports exactly one backward pass.
#[derive(Debug)]
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<Tensor>,
    output: NodeId,
    track_input: bool,
    param_slots: Vec<usize>,
    consumed: Cell<bool>,
}

/// Parameter gradients laid out like `Network::params`, plus the input
/// gradient when it was requested at forward time.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<Tensor>>,
    pub input: Option<Tensor>,
}

impl Gradients {
    /// Largest absolute gradient entry.
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .flat_map(|t| t.values())
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Flat parameter gradient in layer, slot, element order.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flatten().flat_map(|t| t.values().iter().copied()).collect()
    }
}

pub(crate) fn eval(op: &Op, values: &[Tensor]) -> Tensor {
    match op {
        Op::Input | Op::Param { .. } => unreachable!("leaf values are recorded, not computed"),
        Op::MatMul(a, b) => matmul(&values[*a], &values[*b]),
        Op::AddBias(a, b) => {
            let mut out = values[*a].clone();
            let bias = values[*b].values();
            for r in 0..out.rows() {
                for (v, b) in out.row_mut(r).iter_mut().zip(bias) {
                    *v += b;
                }
            }
            out
        }
        Op::Relu(a) => {
            let mut out = values[*a].clone();
            for v in out.values_mut() {
                *v = v.max(0.0);
            }
            out
        }
        Op::SoftmaxRows(a) => {
            let mut out = values[*a].clone();
            for r in 0..out.rows() {
                softmax_in_place(out.row_mut(r));
            }
            out
        }
        Op::Mix { gate, experts } => {
            let g = &values[*gate];
            let first = &values[experts[0]];
            let mut out = Tensor::zeros(first.rows(), first.cols());
            for r in 0..out.rows() {
                let dst = out.row_mut(r);
                for (e, &id) in experts.iter().enumerate() {
                    let a = g.get(r, e);
                    for (d, y) in dst.iter_mut().zip(values[id].row(r)) {
                        *d += a * y;
                    }
                }
            }
            out
        }
    }
}

/// Numerically stable softmax with max subtraction.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

impl Tape {
    pub(crate) fn new(param_slots: Vec<usize>, track_input: bool) -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
            output: 0,
            track_input,
            param_slots,
            consumed: Cell::new(false),
        }
    }

    pub(crate) fn leaf(&mut self, op: Op, value: Tensor) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        self.values.len() - 1
    }

    pub(crate) fn push(&mut self, op: Op) -> NodeId {
        let value = eval(&op, &self.values);
        self.leaf(op, value)
    }

    pub(crate) fn finish(&mut self, output: NodeId) {
        self.output = output;
    }

    pub fn output(&self) -> &Tensor {
        &self.values[self.output]
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Recorded value of every node, in recording order.
    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed.get()
    }

    /// Recompute every non-leaf node from the recorded leaves.
    pub fn replay(&self) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = Vec::with_capacity(self.values.len());
        for (op, recorded) in self.ops.iter().zip(&self.values) {
            let v = match op {
                Op::Input | Op::Param { .. } => recorded.clone(),
                _ => eval(op, &out),
            };
            out.push(v);
        }
        out
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

/// Reverse pass from `loss_grad`, the gradient of a scalar loss with respect
/// to the tape output.
pub fn backward(tape: &Tape, loss_grad: &Tensor) -> Result<Gradients> {
    if tape.consumed.replace(true) {
        return Err(Error::Usage("tape already consumed by an earlier backward pass".into()));
    }
    if !loss_grad.same_shape(tape.output()) {
        return Err(Error::Shape(format!(
            "loss gradient shape {:?} does not match output shape {:?}",
            loss_grad.shape(),
            tape.output().shape()
        )));
    }
    let n = tape.ops.len();
    let mut needs = vec![false; n];
    for (i, op) in tape.ops.iter().enumerate() {
        needs[i] = match op {
            Op::Input => tape.track_input,
            Op::Param { .. } => true,
            Op::MatMul(a, b) | Op::AddBias(a, b) => needs[*a] || needs[*b],
            Op::Relu(a) | Op::SoftmaxRows(a) => needs[*a],
            Op::Mix { gate, experts } => needs[*gate] || experts.iter().any(|&e| needs[e]),
        };
    }

    let mut grads: Vec<Option<Tensor>> = vec![None; n];
    grads[tape.output] = Some(loss_grad.clone());
    let mut layers: Vec<Vec<Tensor>> = tape.param_slots.iter().map(|&k| Vec::with_capacity(k)).collect();
    let mut param_grads: Vec<(usize, usize, Tensor)> = Vec::new();
    let mut input_grad = None;
    let v = &tape.values;

    for id in (0..n).rev() {
        let Some(g) = grads[id].take() else { continue };
        match &tape.ops[id] {
            Op::Input => input_grad = Some(g),
            Op::Param { layer, slot } => param_grads.push((*layer, *slot, g)),
            Op::MatMul(a, b) => {
                if needs[*a] {
                    accumulate(&mut grads, *a, matmul_nt(&g, &v[*b]));
                }
                if needs[*b] {
                    accumulate(&mut grads, *b, matmul_tn(&v[*a], &g));
                }
            }
            Op::AddBias(a, b) => {
                if needs[*b] {
                    let mut sums = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (s, x) in sums.iter_mut().zip(g.row(r)) {
                            *s += x;
                        }
                    }
                    accumulate(&mut grads, *b, Tensor::from_parts(1, g.cols(), sums));
                }
                if needs[*a] {
                    accumulate(&mut grads, *a, g);
                }
            }
            Op::Relu(a) => {
                if needs[*a] {
                    let mut g = g;
                    for (d, y) in g.values_mut().iter_mut().zip(v[id].values()) {
                        if *y <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, g);
                }
            }
            Op::SoftmaxRows(a) => {
                if needs[*a] {
                    let p = &v[id];
                    let mut out = g;
                    for r in 0..p.rows() {
                        let pr = p.row(r);
                        let dot: f64 = pr.iter().zip(out.row(r)).map(|(p, d)| p * d).sum();
                        for (d, p) in out.row_mut(r).iter_mut().zip(pr) {
                            *d = p * (*d - dot);
                        }
                    }
                    accumulate(&mut grads, *a, out);
                }
            }
            Op::Mix { gate, experts } => {
                let gv = &v[*gate];
                if needs[*gate] {
                    let mut dg = Tensor::zeros(gv.rows(), gv.cols());
                    for r in 0..gv.rows() {
                        for (e, &eid) in experts.iter().enumerate() {
                            let s: f64 = g.row(r).iter().zip(v[eid].row(r)).map(|(a, b)| a * b).sum();
                            dg.row_mut(r)[e] = s;
                        }
                    }
                    accumulate(&mut grads, *gate, dg);
                }
                for (e, &eid) in experts.iter().enumerate() {
                    if !needs[eid] {
                        continue;
                    }
                    let mut de = g.clone();
                    for r in 0..de.rows() {
                        let a = gv.get(r, e);
                        for d in de.row_mut(r) {
                            *d *= a;
                        }
                    }
                    accumulate(&mut grads, eid, de);
                }
            }
        }
    }

    param_grads.sort_by_key(|(l, s, _)| (*l, *s));
    for (layer, slot, g) in param_grads {
        debug_assert_eq!(layers[layer].len(), slot);
        layers[layer].push(g);
    }
    Ok(Gradients {
        layers,
        input: input_grad,
    })
}
