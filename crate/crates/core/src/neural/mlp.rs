//! Dense feed-forward networks with exact reverse-mode gradients.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative given the pre-activation `z` and the output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Affine layer; `weights` is row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Layer { inputs, outputs, activation, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn uniform(inputs: usize, outputs: usize, activation: Activation, bound: f64, rng: &mut Rng) -> Self {
        let mut layer = Self::zeros(inputs, outputs, activation);
        for p in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *p = rng.random_range(-bound..=bound);
        }
        layer
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Extra input appended to the input of one layer (the critic's action).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideInput {
    pub layer: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub side_input: Option<SideInput>,
}

/// Values kept from a forward pass for backpropagation.
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

const FINAL_LAYER_BOUND: f64 = 3e-3;

impl MlpParams {
    /// Builds a network with fan-in uniform initialization; the last layer is
    /// drawn from `[-3e-3, 3e-3]`.
    pub fn init(
        input: usize,
        hidden: &[usize],
        output: usize,
        output_activation: Activation,
        side_input: Option<SideInput>,
        rng: &mut Rng,
    ) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let fan_in = widths[i] + side_input.filter(|s| s.layer == i).map_or(0, |s| s.width);
                let last = i + 1 == n;
                let act = if last { output_activation } else { Activation::Relu };
                let bound = if last { FINAL_LAYER_BOUND } else { 1.0 / (fan_in as f64).sqrt() };
                Layer::uniform(fan_in, widths[i + 1], act, bound, rng)
            })
            .collect();
        MlpParams { layers, side_input }
    }

    /// Actor: `state -> hidden -> action` with a sigmoid output.
    pub fn actor(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        Self::init(state_dim, hidden, action_dim, Activation::Sigmoid, None, rng)
    }

    /// Critic: `state -> hidden[0]`, then the action joins the input of the
    /// second hidden layer, linear scalar output.
    pub fn critic(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        assert!(hidden.len() >= 2, "critic needs two hidden layers");
        let side = SideInput { layer: 1, width: action_dim };
        Self::init(state_dim, hidden, 1, Activation::Linear, Some(side), rng)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs - self.side_width_at(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn side_width(&self) -> usize {
        self.side_input.map_or(0, |s| s.width)
    }

    fn side_width_at(&self, layer: usize) -> usize {
        self.side_input.filter(|s| s.layer == layer).map_or(0, |s| s.width)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// Checks shapes chain and all parameters are finite.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Checkpoint("network has no layers".into()));
        }
        if let Some(s) = self.side_input {
            if s.layer >= self.layers.len() {
                return Err(Error::Checkpoint(format!("side input at missing layer {}", s.layer)));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Checkpoint(format!(
                    "layer {i}: expected {}x{} weights and {} biases, found {} and {}",
                    l.outputs,
                    l.inputs,
                    l.outputs,
                    l.weights.len(),
                    l.bias.len()
                )));
            }
            if i > 0 && self.layers[i - 1].outputs + self.side_width_at(i) != l.inputs {
                return Err(Error::Checkpoint(format!("layer {i} input width {} does not chain", l.inputs)));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// Same layer widths, activations and side input.
    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.side_input == other.side_input
            && self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs && a.activation == b.activation)
    }

    pub fn forward(&self, input: &[f64], side: &[f64]) -> Vec<f64> {
        self.forward_trace(input, side).output
    }

    pub fn forward_trace(&self, input: &[f64], side: &[f64]) -> Trace {
        debug_assert_eq!(input.len(), self.input_dim());
        debug_assert_eq!(side.len(), self.side_width());
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            if self.side_width_at(i) > 0 {
                x.extend_from_slice(side);
            }
            let mut z = layer.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                *zo += row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
            }
            let y = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(x);
            pre.push(z);
            x = y;
        }
        Trace { inputs, pre, output: x }
    }

    /// Backpropagates `upstream = dL/d(output)`. Parameter gradients are
    /// added into `grads` (flat, see [`MlpParams::flat`]) when given.
    /// Returns `dL/d(input)` and `dL/d(side)`.
    pub fn backward(&self, trace: &Trace, upstream: &[f64], mut grads: Option<&mut [f64]>) -> (Vec<f64>, Vec<f64>) {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for l in &self.layers {
            offsets.push(acc);
            acc += l.num_params();
        }
        let mut delta_out = upstream.to_vec();
        let mut d_side = vec![0.0; self.side_width()];
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let x = &trace.inputs[i];
            let y_next = if i + 1 == self.layers.len() { &trace.output } else { &trace.inputs[i + 1] };
            let dz: Vec<f64> = (0..layer.outputs)
                .map(|o| delta_out[o] * layer.activation.derivative(trace.pre[i][o], y_next[o]))
                .collect();
            if let Some(g) = grads.as_deref_mut() {
                let base = offsets[i];
                for o in 0..layer.outputs {
                    for (j, xj) in x.iter().enumerate() {
                        g[base + o * layer.inputs + j] += dz[o] * xj;
                    }
                    g[base + layer.weights.len() + o] += dz[o];
                }
            }
            let mut dx = vec![0.0; layer.inputs];
            for (o, dzo) in dz.iter().enumerate() {
                if *dzo == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (dxj, w) in dx.iter_mut().zip(row) {
                    *dxj += dzo * w;
                }
            }
            let side = self.side_width_at(i);
            if side > 0 {
                let split = layer.inputs - side;
                d_side.copy_from_slice(&dx[split..]);
                dx.truncate(split);
            }
            delta_out = dx;
        }
        (delta_out, d_side)
    }

    /// All parameters in layer order, weights before biases.
    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_params());
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
    }
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(online: &MlpParams, target: &mut MlpParams, tau: f64) {
    debug_assert!(online.same_shape(target));
    let src = online.flat();
    for (t, o) in target.params_mut().zip(src) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}
