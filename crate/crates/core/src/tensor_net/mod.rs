//! Small reverse-mode autodiff engine for dense networks.
//!
//! A [`Network`] is an immutable value: [`forward`] records a [`Tape`],
//! [`backward`] turns a loss gradient into [`Gradients`], and [`sgd_step`]
//! returns an updated copy. The only layer kinds are dense, relu and a
//! softmax-gated mixture of dense-relu experts.

mod checkpoint;
mod loss;
mod tape;
mod tensor;

pub use checkpoint::{load_network, network_from_bytes, network_to_bytes, save_network};
pub use loss::{
    alignment_grad, classification_grad, contrastive_grad, loss_alignment, loss_classification, loss_contrastive,
    loss_reconstruction, reconstruction_grad, LossKind, DEFAULT_TEMPERATURE,
};
pub use tape::{backward, Gradients, Tape};
pub(crate) use tape::softmax_in_place;
pub use tensor::Tensor;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, SplitMix64};
use tape::Op;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
    },
    Relu {
        width: usize,
    },
    /// `sum_e softmax(x Wg + bg)_e * expert_e(x)` where each expert is a
    /// stack of dense-relu layers with widths `input -> hidden.. -> output`.
    SoftmaxGateMixture {
        input: usize,
        output: usize,
        experts: usize,
        hidden: Vec<usize>,
    },
}

impl LayerSpec {
    pub fn input_width(&self) -> usize {
        match self {
            LayerSpec::Dense { input, .. } | LayerSpec::SoftmaxGateMixture { input, .. } => *input,
            LayerSpec::Relu { width } => *width,
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            LayerSpec::Dense { output, .. } | LayerSpec::SoftmaxGateMixture { output, .. } => *output,
            LayerSpec::Relu { width } => *width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths_ok = match self {
            LayerSpec::Dense { input, output } => *input > 0 && *output > 0,
            LayerSpec::Relu { width } => *width > 0,
            LayerSpec::SoftmaxGateMixture {
                input,
                output,
                experts,
                hidden,
            } => {
                if *experts < 2 {
                    return Err(Error::Domain(format!("gate mixture needs at least 2 experts, got {experts}")));
                }
                *input > 0 && *output > 0 && hidden.iter().all(|&h| h > 0)
            }
        };
        if !widths_ok {
            return Err(Error::Domain(format!("layer widths must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Shapes of the parameter tensors, in slot order.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        match self {
            LayerSpec::Dense { input, output } => vec![(*input, *output), (1, *output)],
            LayerSpec::Relu { .. } => vec![],
            LayerSpec::SoftmaxGateMixture {
                input,
                output,
                experts,
                hidden,
            } => {
                let mut shapes = vec![(*input, *experts), (1, *experts)];
                let widths = expert_widths(*input, *output, hidden);
                for _ in 0..*experts {
                    for w in widths.windows(2) {
                        shapes.push((w[0], w[1]));
                        shapes.push((1, w[1]));
                    }
                }
                shapes
            }
        }
    }
}

fn expert_widths(input: usize, output: usize, hidden: &[usize]) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    params: Vec<Vec<Tensor>>,
    seed: u64,
}

impl Network {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        check_layers(&layers)?;
        let params = layers
            .iter()
            .enumerate()
            .map(|(l, spec)| {
                let mut rng = SplitMix64::for_item(seed, stream::NETWORK_INIT, l as u64);
                spec.param_shapes()
                    .into_iter()
                    .map(|(r, c)| {
                        if r == 1 {
                            return Tensor::zeros(r, c);
                        }
                        let limit = (6.0 / (r + c) as f64).sqrt();
                        let values = (0..r * c).map(|_| rng.random_range(-limit..=limit)).collect();
                        Tensor::from_parts(r, c, values)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { layers, params, seed })
    }

    /// Network with explicit parameters, laid out as `params()` would be.
    pub fn from_params(layers: Vec<LayerSpec>, params: Vec<Vec<Tensor>>, seed: u64) -> Result<Self> {
        check_layers(&layers)?;
        if params.len() != layers.len() {
            return Err(Error::Shape(format!("{} parameter groups for {} layers", params.len(), layers.len())));
        }
        for (l, (spec, group)) in layers.iter().zip(&params).enumerate() {
            let shapes = spec.param_shapes();
            let ok = shapes.len() == group.len()
                && shapes.iter().zip(group).all(|(&(r, c), t)| t.shape() == [r, c]);
            if !ok {
                return Err(Error::Shape(format!("layer {l}: parameters do not match {spec:?}")));
            }
            if let Some(s) = group.iter().position(|t| !t.all_finite()) {
                return Err(Error::Numeric(format!("layer {l} parameter {s} is not finite")));
            }
        }
        Ok(Self { layers, params, seed })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Vec<Tensor>] {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, LayerSpec::input_width)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, LayerSpec::output_width)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    /// Output without keeping a usable tape around.
    pub fn infer(&self, batch: &Tensor) -> Result<Tensor> {
        let (out, _) = forward(self, batch)?;
        Ok(out)
    }

    fn record(&self, batch: &Tensor, track_input: bool) -> Result<Tape> {
        if batch.shape().len() != 2 || batch.cols() != self.input_width() {
            return Err(Error::Domain(format!(
                "batch shape {:?} does not fit input width {}",
                batch.shape(),
                self.input_width()
            )));
        }
        if !batch.all_finite() {
            return Err(Error::Domain("batch contains non-finite values".into()));
        }
        let slots = self.params.iter().map(Vec::len).collect();
        let mut tape = Tape::new(slots, track_input);
        let mut x = tape.leaf(Op::Input, batch.clone());
        for (l, spec) in self.layers.iter().enumerate() {
            let param = |tape: &mut Tape, slot: usize| tape.leaf(Op::Param { layer: l, slot }, self.params[l][slot].clone());
            x = match spec {
                LayerSpec::Dense { .. } => {
                    let w = param(&mut tape, 0);
                    let b = param(&mut tape, 1);
                    let z = tape.push(Op::MatMul(x, w));
                    tape.push(Op::AddBias(z, b))
                }
                LayerSpec::Relu { .. } => tape.push(Op::Relu(x)),
                LayerSpec::SoftmaxGateMixture { experts, hidden, .. } => {
                    let wg = param(&mut tape, 0);
                    let bg = param(&mut tape, 1);
                    let z = tape.push(Op::MatMul(x, wg));
                    let z = tape.push(Op::AddBias(z, bg));
                    let gate = tape.push(Op::SoftmaxRows(z));
                    let depth = hidden.len() + 1;
                    let mut outs = Vec::with_capacity(*experts);
                    for e in 0..*experts {
                        let mut h = x;
                        for k in 0..depth {
                            let slot = 2 + 2 * (e * depth + k);
                            let w = param(&mut tape, slot);
                            let b = param(&mut tape, slot + 1);
                            let z = tape.push(Op::MatMul(h, w));
                            let z = tape.push(Op::AddBias(z, b));
                            h = tape.push(Op::Relu(z));
                        }
                        outs.push(h);
                    }
                    tape.push(Op::Mix { gate, experts: outs })
                }
            };
        }
        tape.finish(x);
        Ok(tape)
    }
}

fn check_layers(layers: &[LayerSpec]) -> Result<()> {
    for (l, spec) in layers.iter().enumerate() {
        spec.validate()?;
        if l > 0 && layers[l - 1].output_width() != spec.input_width() {
            return Err(Error::Domain(format!(
                "layer {l} expects width {} but receives {}",
                spec.input_width(),
                layers[l - 1].output_width()
            )));
        }
    }
    Ok(())
}

pub fn forward(net: &Network, batch: &Tensor) -> Result<(Tensor, Tape)> {
    let tape = net.record(batch, false)?;
    Ok((tape.output().clone(), tape))
}

/// Like [`forward`], but the tape also yields the gradient with respect to
/// the batch, for chaining networks.
pub fn forward_tracking_input(net: &Network, batch: &Tensor) -> Result<(Tensor, Tape)> {
    let tape = net.record(batch, true)?;
    Ok((tape.output().clone(), tape))
}

/// `p <- p - lr * g` for every parameter.
pub fn sgd_step(net: &Network, grads: &Gradients, lr: f64) -> Result<Network> {
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::Domain(format!("learning rate must be non-negative, got {lr}")));
    }
    check_grad_shapes(net, grads)?;
    let mut next = net.clone();
    for (l, (group, gs)) in next.params.iter_mut().zip(&grads.layers).enumerate() {
        for (s, (p, g)) in group.iter_mut().zip(gs).enumerate() {
            if !g.all_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in layer {l} ({:?}) slot {s}", net.layers[l])));
            }
            for (v, d) in p.values_mut().iter_mut().zip(g.values()) {
                *v -= lr * d;
            }
        }
    }
    Ok(next)
}

/// Multiply every parameter of `net` by `factor`. With `1 - lr * decay` this
/// is decoupled weight decay.
pub(crate) fn scale_params(net: &mut Network, factor: f64) {
    for p in net.params.iter_mut().flatten() {
        p.values_mut().iter_mut().for_each(|v| *v *= factor);
    }
}

fn check_grad_shapes(net: &Network, grads: &Gradients) -> Result<()> {
    let ok = grads.layers.len() == net.params.len()
        && net
            .params
            .iter()
            .zip(&grads.layers)
            .all(|(p, g)| p.len() == g.len() && p.iter().zip(g).all(|(a, b)| a.shape() == b.shape()));
    if ok {
        Ok(())
    } else {
        Err(Error::Shape("gradients do not match network parameters".into()))
    }
}

/// Max over parameters of `|analytic - central difference| / max(1, |analytic|)`.
pub fn grad_check(net: &Network, batch: &Tensor, loss: &LossKind, epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon must lie in [1e-7, 1e-3], got {epsilon}")));
    }
    let (out, tape) = forward(net, batch)?;
    let (value, dout) = loss.evaluate(&out)?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    let analytic = backward(&tape, &dout)?;

    let eval = |probe: &Network| -> Result<f64> {
        let v = loss.value(&probe.infer(batch)?)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("perturbed loss is {v}")))
        }
    };
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for l in 0..net.params.len() {
        for s in 0..net.params[l].len() {
            for k in 0..net.params[l][s].len() {
                let orig = net.params[l][s].values()[k];
                probe.params[l][s].values_mut()[k] = orig + epsilon;
                let hi = eval(&probe)?;
                probe.params[l][s].values_mut()[k] = orig - epsilon;
                let lo = eval(&probe)?;
                probe.params[l][s].values_mut()[k] = orig;
                let fd = (hi - lo) / (2.0 * epsilon);
                let a = analytic.layers[l][s].values()[k];
                worst = worst.max((a - fd).abs() / a.abs().max(1.0));
            }
        }
    }
    Ok(worst)
}

/// Linear readout `logits = z W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutHead {
    weights: Tensor,
    bias: Vec<f64>,
}

impl ReadoutHead {
    pub fn new(weights: Tensor, bias: Vec<f64>) -> Result<Self> {
        if weights.shape().len() != 2 || weights.cols() != bias.len() {
            return Err(Error::Shape(format!(
                "weights {:?} with {} biases",
                weights.shape(),
                bias.len()
            )));
        }
        if !weights.all_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numeric("readout head has non-finite entries".into()));
        }
        Ok(Self { weights, bias })
    }

    /// The head of a network consisting of a single dense layer.
    pub fn from_dense(net: &Network) -> Result<Self> {
        match net.layers() {
            [LayerSpec::Dense { .. }] => Self::new(net.params[0][0].clone(), net.params[0][1].values().to_vec()),
            other => Err(Error::Domain(format!("readout needs exactly one dense layer, got {other:?}"))),
        }
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn latent_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (p, &x) in z.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.weights.row(p)) {
                *o += x * w;
            }
        }
        out
    }

    /// Argmax of the logits, ties going to the lowest class.
    pub fn predict(&self, z: &[f64]) -> usize {
        argmax(&self.logits(z))
    }

    /// Weights and bias multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let w = self.weights.values().iter().map(|v| v * c).collect();
        Self::new(
            Tensor::matrix(self.weights.rows(), self.weights.cols(), w)?,
            self.bias.iter().map(|b| b * c).collect(),
        )
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
