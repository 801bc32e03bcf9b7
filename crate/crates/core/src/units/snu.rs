//! Spiking neural unit layer.
//!
//! One step computes
//!
//! ```text
//! s_t = g(W x_t + decay ⊙ s_{t-1} ⊙ (1 - y_{t-1}))
//! y_t = h(s_t + b)
//! ```
//!
//! With `h` the strict step this is a discrete-time LIF neuron whose reset
//! is the `(1 - y)` gate; with `h = sigmoid` (soft SNU) the reset becomes
//! proportional to the output.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Input activation `g` of the accumulation subunit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFn {
    #[default]
    Relu,
    Identity,
}

/// Output activation `h` of the emission subunit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFn {
    Step,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnuLayer {
    /// `[inputs × units]`
    pub weight: Tensor,
    /// `[1]` for a shared decay, `[units]` for per-unit decay.
    pub decay: Tensor,
    /// `[units]`; the threshold is `-bias`.
    pub bias: Tensor,
    pub input_fn: InputFn,
    pub output_fn: OutputFn,
    pub decay_trainable: bool,
}

/// Layer parameters inserted into a graph.
#[derive(Clone, Copy, Debug)]
pub struct BoundSnu {
    pub weight: Var,
    pub decay: Var,
    pub bias: Var,
}

/// Per-sequence state: membrane potentials and last outputs, `[batch × units]`.
#[derive(Clone, Copy, Debug)]
pub struct SnuState {
    pub s: Var,
    pub y: Var,
}

impl SnuLayer {
    pub fn new(weight: Tensor, decay: Tensor, bias: Tensor, input_fn: InputFn, output_fn: OutputFn) -> Result<Self> {
        let layer = SnuLayer {
            weight,
            decay,
            bias,
            input_fn,
            output_fn,
            decay_trainable: false,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight.rank() != 2 {
            return Err(Error::dim("snu weight", self.weight.shape(), &[0, 0]));
        }
        let n = self.units();
        if self.bias.shape() != [n] {
            return Err(Error::dim("snu bias", self.bias.shape(), &[n]));
        }
        if self.decay.shape() != [1] && self.decay.shape() != [n] {
            return Err(Error::dim("snu decay", self.decay.shape(), &[n]));
        }
        if let Some(d) = self.decay.data().iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(Error::Config(format!("decay {d} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn is_spiking(&self) -> bool {
        self.output_fn == OutputFn::Step
    }

    /// `true` when decay is 1 everywhere: integrate-and-fire without leak.
    pub fn is_integrate_and_fire(&self) -> bool {
        self.decay.data().iter().all(|&d| d == 1.0)
    }

    pub fn bind(&self, g: &mut Graph) -> BoundSnu {
        BoundSnu {
            weight: g.param(self.weight.clone()),
            decay: if self.decay_trainable {
                g.param(self.decay.clone())
            } else {
                g.constant(self.decay.clone())
            },
            bias: g.param(self.bias.clone()),
        }
    }

    /// Zero state (resting potential, no previous spike) for `batch` sequences.
    pub fn zero_state(&self, g: &mut Graph, batch: usize) -> SnuState {
        let shape = [batch, self.units()];
        SnuState {
            s: g.constant(Tensor::zeros(&shape)),
            y: g.constant(Tensor::zeros(&shape)),
        }
    }

    /// Advances the layer one step on `x[batch × inputs]`, returning `y_t`.
    pub fn step(&self, g: &mut Graph, p: &BoundSnu, state: &mut SnuState, x: Var) -> Result<Var> {
        let xs = g.value(x).shape();
        if xs.len() != 2 || xs[1] != self.inputs() {
            return Err(Error::dim("snu_step input", xs, &[xs.first().copied().unwrap_or(0), self.inputs()]));
        }
        let batch = xs[0];
        if g.value(state.s).shape() != [batch, self.units()] {
            return Err(Error::Contract(format!(
                "snu state has shape {:?}, expected [{batch}, {}]; reset the state for this batch",
                g.value(state.s).shape(),
                self.units()
            )));
        }
        let wx = g.matmul(x, p.weight)?;
        let s = recurrence(g, self.input_fn, wx, p.decay, state)?;
        let y = emit(g, self.output_fn, s, p.bias)?;
        *state = SnuState { s, y };
        Ok(y)
    }
}

/// `g(wx + decay ⊙ s_{t-1} ⊙ (1 - y_{t-1}))`.
pub(crate) fn recurrence(g: &mut Graph, input_fn: InputFn, wx: Var, decay: Var, state: &SnuState) -> Result<Var> {
    let gate = g.one_minus(state.y);
    let leaked = g.mul(state.s, decay)?;
    let carry = g.mul(leaked, gate)?;
    let pre = g.add(wx, carry)?;
    Ok(match input_fn {
        InputFn::Relu => g.relu(pre),
        InputFn::Identity => pre,
    })
}

/// `h(s + b)`.
pub(crate) fn emit(g: &mut Graph, output_fn: OutputFn, s: Var, bias: Var) -> Result<Var> {
    let a = g.add(s, bias)?;
    Ok(match output_fn {
        OutputFn::Step => g.step_surrogate(a),
        OutputFn::Sigmoid => g.activation(Activation::Sigmoid, a),
    })
}
