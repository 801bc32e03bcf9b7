//! Spike-for-spike comparison of SNU layers against the LIF oracle on
//! random neurons and random binary input streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Graph;
use crate::encoding::SpikeStream;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::Tensor;

use super::lif::{lif_oracle_run, lif_to_snu, LifNeuronConfig};
use super::snu::{InputFn, OutputFn, SnuLayer};

/// A random single-neuron LIF configuration with `inputs` synapses.
pub fn random_lif_config(rng: &mut impl Rng, inputs: usize) -> LifNeuronConfig {
    let delta_t = rng.random_range(1e-4..1e-3);
    let tau = delta_t * rng.random_range(1.5..50.0);
    let capacitance = delta_t * rng.random_range(0.5..4.0);
    let v_th = rng.random_range(0.2..2.0);
    let w = (0..inputs).map(|_| rng.random_range(-0.5..1.5)).collect();
    LifNeuronConfig {
        delta_t,
        capacitance,
        tau,
        v_th,
        w_lif: Tensor::new(vec![inputs, 1], w).expect("column of weights"),
    }
}

/// Bernoulli(`p`) spikes, `[time × 1 × inputs]`.
pub fn random_stream(rng: &mut impl Rng, time: usize, inputs: usize, p: f64) -> SpikeStream {
    let mut s = SpikeStream::zeros(time, 1, inputs);
    for t in 0..time {
        for i in 0..inputs {
            s.set(t, 0, i, rng.random_bool(p));
        }
    }
    s
}

/// Runs an SNU layer forward on a single-lane stream and returns its spikes.
pub fn snu_forward_spikes(layer: &SnuLayer, input: &SpikeStream) -> Result<SpikeStream> {
    let [time, batch, m] = input.shape();
    if m != layer.inputs() {
        return Err(Error::dim("snu_forward_spikes", &[m], &[layer.inputs()]));
    }
    let n = layer.units();
    let mut g = Graph::with_exec(Exec::Sequential);
    let p = layer.bind(&mut g);
    let mut st = layer.zero_state(&mut g, batch);
    let keep = g.len();
    let mut out = SpikeStream::zeros(time, batch, n);
    let (mut s, mut y) = (g.value(st.s).clone(), g.value(st.y).clone());
    for t in 0..time {
        g.truncate(keep);
        st.s = g.constant(s);
        st.y = g.constant(y);
        let x = g.constant(input.frame(t));
        let spikes = layer.step(&mut g, &p, &mut st, x)?;
        for (k, &v) in g.value(spikes).data().iter().enumerate() {
            out.set(t, k / n, k % n, v > 0.0);
        }
        s = g.value(st.s).clone();
        y = g.value(st.y).clone();
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LifCheckReport {
    pub neurons: usize,
    pub steps: usize,
    pub spikes: usize,
    pub mismatches: usize,
    /// `(neuron, step)` of the earliest mismatch.
    pub first_divergence: Option<(usize, usize)>,
}

/// Draws `neurons` random LIF neurons with `inputs` synapses each and
/// random input streams of `steps` steps, runs every neuron through the
/// oracle and all of them together as one SNU population built with
/// [`lif_to_snu`], and compares the spike trains.
pub fn lif_equivalence_check(neurons: usize, inputs: usize, steps: usize, seed: u64, exec: Exec) -> Result<LifCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<(LifNeuronConfig, SpikeStream)> = (0..neurons)
        .map(|_| {
            let cfg = random_lif_config(&mut rng, inputs);
            let p = rng.random_range(0.05..0.6);
            let stream = random_stream(&mut rng, steps, inputs, p);
            (cfg, stream)
        })
        .collect();
    let oracle = exec.map(neurons, |j| lif_oracle_run(&cases[j].0, &cases[j].1));

    let m = neurons * inputs;
    let mut w = Tensor::zeros(&[m, neurons]);
    let mut decay = Vec::with_capacity(neurons);
    let mut bias = Vec::with_capacity(neurons);
    for (j, (cfg, _)) in cases.iter().enumerate() {
        let unit = lif_to_snu(cfg)?;
        for i in 0..inputs {
            w.data_mut()[(j * inputs + i) * neurons + j] = unit.weight.data()[i];
        }
        decay.push(unit.decay.data()[0]);
        bias.push(unit.bias.data()[0]);
    }
    let layer = SnuLayer::new(w, Tensor::vector(decay), Tensor::vector(bias), InputFn::Relu, OutputFn::Step)?;
    let mut packed = SpikeStream::zeros(steps, 1, m);
    for (j, (_, s)) in cases.iter().enumerate() {
        for t in 0..steps {
            for i in 0..inputs {
                if s.get(t, 0, i) {
                    packed.set(t, 0, j * inputs + i, true);
                }
            }
        }
    }
    let snu = snu_forward_spikes(&layer, &packed)?;

    let mut report = LifCheckReport {
        neurons,
        steps,
        spikes: 0,
        mismatches: 0,
        first_divergence: None,
    };
    for (j, trace) in oracle.into_iter().enumerate() {
        let trace = trace?;
        for t in 0..steps {
            let want = trace.spikes.get(t, 0, 0);
            report.spikes += want as usize;
            if snu.get(t, 0, j) != want {
                report.mismatches += 1;
                if report.first_divergence.is_none_or(|(_, s)| t < s) {
                    report.first_divergence = Some((j, t));
                }
            }
        }
    }
    Ok(report)
}
