//! Parameter counts: closed-form per layer kind, and reference formulas for
//! common recurrent cells.

use serde::Serialize;

use crate::error::Result;

use super::network::{DecayMode, LayerKind, Network, NetworkSpec};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerCount {
    pub layer: usize,
    pub kind: LayerKind,
    pub inputs: usize,
    pub units: usize,
    /// Trainable scalars.
    pub params: usize,
    /// Synaptic weights only (no bias or decay).
    pub synaptic: usize,
}

/// Closed-form trainable-parameter counts per layer.
pub fn param_count(spec: &NetworkSpec) -> Result<Vec<LayerCount>> {
    let shapes = spec.shapes()?;
    Ok(spec
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let n = l.units;
            let (inputs, synaptic) = match l.kind {
                LayerKind::ConvSnu => {
                    let c = shapes[i][0];
                    let k = l.kernel.unwrap_or(0);
                    (c * k * k, n * c * k * k)
                }
                _ => {
                    let m: usize = shapes[i].iter().product();
                    (m, m * n)
                }
            };
            let decay = if l.kind.is_stateful() && l.decay_mode == DecayMode::PerUnit { n } else { 0 };
            LayerCount {
                layer: i,
                kind: l.kind,
                inputs,
                units: n,
                params: synaptic + n + decay,
                synaptic,
            }
        })
        .collect())
}

/// Trainable scalars per layer, by walking the built network's tensors.
pub fn enumerate_params(net: &Network) -> Vec<usize> {
    let mut counts = vec![0; net.layers.len()];
    for (id, t) in net.params() {
        counts[id.layer] += t.numel();
    }
    counts
}

pub fn synaptic_weights(spec: &NetworkSpec) -> Result<usize> {
    Ok(param_count(spec)?.iter().map(|c| c.synaptic).sum())
}

/// Vanilla RNN layer: `n(m + n + 1)`.
pub fn rnn_params(m: usize, n: usize) -> usize {
    n * (m + n + 1)
}

pub fn gru_params(m: usize, n: usize) -> usize {
    3 * rnn_params(m, n)
}

pub fn lstm_params(m: usize, n: usize) -> usize {
    4 * rnn_params(m, n)
}

/// SNU layer with a fixed shared decay: `(m + 1) n`.
pub fn snu_params(m: usize, n: usize) -> usize {
    (m + 1) * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::network::LayerSpec;

    #[test]
    fn jsb_counts() {
        let spec = NetworkSpec {
            input: vec![88],
            layers: vec![LayerSpec::new(LayerKind::Snu, 150), LayerSpec::new(LayerKind::DenseSigmoid, 88)],
        };
        let counts = param_count(&spec).unwrap();
        assert_eq!(counts[0].params, 13350);
        assert_eq!(counts[0].params, snu_params(88, 150));
        assert_eq!(synaptic_weights(&spec).unwrap(), 26400);
        let net = Network::new(spec, 0).unwrap();
        assert_eq!(enumerate_params(&net), vec![13350, 150 * 88 + 88]);
    }

    #[test]
    fn reference_formulas() {
        assert_eq!(rnn_params(88, 150), 150 * 239);
        assert_eq!(gru_params(1, 1), 9);
        assert_eq!(lstm_params(1, 1), 12);
    }

    #[test]
    fn empty_spec() {
        let spec = NetworkSpec {
            input: vec![3],
            layers: vec![],
        };
        assert!(param_count(&spec).unwrap().is_empty());
    }
}
