//! Discrete-time leaky integrate-and-fire reference simulator and its
//! parameter correspondence with [`SnuLayer`].
//!
//! The correspondence is `V_m = s`, `V_th = -b`, `ΔT/C · I = W x` and
//! `1 - ΔT/τ = decay`.

use serde::{Deserialize, Serialize};

use crate::encoding::SpikeStream;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::snu::{InputFn, OutputFn, SnuLayer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifNeuronConfig {
    /// Discretization step ΔT, seconds.
    pub delta_t: f64,
    /// Membrane capacitance C, farads.
    pub capacitance: f64,
    /// Membrane time constant τ = RC, seconds. `f64::INFINITY` is the
    /// non-leaky integrate-and-fire limit.
    pub tau: f64,
    /// Firing threshold, volts.
    pub v_th: f64,
    /// Synaptic weights `[inputs × neurons]`.
    pub w_lif: Tensor,
}

/// Output of [`lif_oracle_run`].
#[derive(Clone, Debug)]
pub struct LifTrace {
    pub spikes: SpikeStream,
    /// Membrane potential after each step, `[time × batch × neurons]`.
    pub v_m: Tensor,
}

impl LifNeuronConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t > 0.0 && self.delta_t < self.tau) {
            return Err(Error::Config(format!(
                "need 0 < delta_t < tau, got delta_t = {}, tau = {}",
                self.delta_t, self.tau
            )));
        }
        if !(self.capacitance > 0.0 && self.capacitance.is_finite()) {
            return Err(Error::Config(format!("capacitance must be positive, got {}", self.capacitance)));
        }
        if !(self.v_th > 0.0 && self.v_th.is_finite()) {
            return Err(Error::Config(format!("v_th must be positive, got {}", self.v_th)));
        }
        if self.w_lif.rank() != 2 {
            return Err(Error::dim("w_lif", self.w_lif.shape(), &[0, 0]));
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.w_lif.shape()[0]
    }

    pub fn neurons(&self) -> usize {
        self.w_lif.shape()[1]
    }

    /// Per-step retention factor `1 - ΔT/τ`.
    pub fn decay(&self) -> f64 {
        1.0 - self.delta_t / self.tau
    }

    /// `ΔT/C`, the factor turning a synaptic current into a voltage step.
    pub fn input_gain(&self) -> f64 {
        self.delta_t / self.capacitance
    }

    /// `ΔT/C · W_LIF`.
    pub fn scaled_weights(&self) -> Tensor {
        let gain = self.input_gain();
        self.w_lif.map(|w| w * gain)
    }
}

pub fn lif_to_snu(cfg: &LifNeuronConfig) -> Result<SnuLayer> {
    cfg.validate()?;
    SnuLayer::new(
        cfg.scaled_weights(),
        Tensor::scalar(cfg.decay()),
        Tensor::full(&[cfg.neurons()], -cfg.v_th),
        InputFn::Relu,
        OutputFn::Step,
    )
}

/// Inverse of [`lif_to_snu`]. A decay of exactly 1 maps to τ = ∞, which is
/// only accepted when `allow_integrate_and_fire` is set.
pub fn snu_to_lif(
    layer: &SnuLayer,
    delta_t: f64,
    capacitance: f64,
    allow_integrate_and_fire: bool,
) -> Result<LifNeuronConfig> {
    let decay = uniform_value(layer.decay.data(), "decay")?;
    let bias = uniform_value(layer.bias.data(), "bias")?;
    if layer.input_fn != InputFn::Relu || layer.output_fn != OutputFn::Step {
        return Err(Error::Config("only relu/step SNU layers have a LIF counterpart".into()));
    }
    let tau = if decay == 1.0 {
        if !allow_integrate_and_fire {
            return Err(Error::Config(
                "decay = 1 corresponds to tau = infinity; enable integrate-and-fire mode to accept it".into(),
            ));
        }
        f64::INFINITY
    } else {
        delta_t / (1.0 - decay)
    };
    let gain = delta_t / capacitance;
    let cfg = LifNeuronConfig {
        delta_t,
        capacitance,
        tau,
        v_th: -bias,
        w_lif: layer.weight.map(|w| w / gain),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn uniform_value(values: &[f64], what: &str) -> Result<f64> {
    let first = *values
        .first()
        .ok_or_else(|| Error::Config(format!("empty {what}")))?;
    if values.iter().any(|&v| v != first) {
        return Err(Error::Config(format!("{what} differs across units; a LIF config has one value")));
    }
    Ok(first)
}

/// Simulates `V_t = max(0, ΔT/C · I_t + V_{t-1}(1 - ΔT/τ)(1 - y_{t-1}))` with
/// `I_t = W_LIF x_t` and `y_t = [V_t > V_th]`, on a binary input stream.
///
/// The post-spike reset is applied as a gate on the next step's carry-over,
/// and the synaptic sum runs over active inputs in ascending order; this is
/// the same arithmetic the SNU step performs, so the two agree bit-for-bit.
pub fn lif_oracle_run(cfg: &LifNeuronConfig, input: &SpikeStream) -> Result<LifTrace> {
    cfg.validate()?;
    let [time, batch, m] = input.shape();
    if m != cfg.inputs() {
        return Err(Error::dim("lif_oracle_run", &[m], &[cfg.inputs()]));
    }
    let n = cfg.neurons();
    let weights = cfg.scaled_weights();
    let w = weights.data();
    let decay = cfg.decay();

    let mut v = vec![0.0; batch * n];
    let mut y = vec![0.0; batch * n];
    let mut spikes = SpikeStream::zeros(time, batch, n);
    let mut trace = Vec::with_capacity(time * batch * n);
    let mut drive = vec![0.0; n];

    for t in 0..time {
        for b in 0..batch {
            drive.iter_mut().for_each(|d| *d = 0.0);
            for i in 0..m {
                if input.get(t, b, i) {
                    for (d, &wij) in drive.iter_mut().zip(&w[i * n..(i + 1) * n]) {
                        *d += wij;
                    }
                }
            }
            for (j, &dj) in drive.iter().enumerate() {
                let k = b * n + j;
                let carry = v[k] * decay * (1.0 - y[k]);
                v[k] = (dj + carry).max(0.0);
                let fired = v[k] > cfg.v_th;
                y[k] = if fired { 1.0 } else { 0.0 };
                spikes.set(t, b, j, fired);
            }
        }
        trace.extend_from_slice(&v);
    }
    Ok(LifTrace {
        spikes,
        v_m: Tensor::new(vec![time, batch, n], trace)?,
    })
}
