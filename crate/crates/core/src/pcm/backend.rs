//! Hardware-in-the-loop adapter: synaptic weights live on crossbars, biases
//! and decays stay in software.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::training::backend::{add_delta, WeightBackend};
use crate::units::{Network, ParamId};

use super::crossbar::{CrossbarPair, RebalanceStats};
use super::device::PcmParams;
use super::dump::{crossbar_save, write_histogram};

pub struct PcmBackend {
    pub params: PcmParams,
    crossbars: Vec<(ParamId, CrossbarPair)>,
    now: f64,
    batches: usize,
    dump_dir: Option<PathBuf>,
    pub rebalances: Vec<RebalanceStats>,
}

impl PcmBackend {
    /// Maps every synaptic tensor of `net` onto a freshly programmed
    /// crossbar.
    pub fn new(net: &Network, params: PcmParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut crossbars = Vec::new();
        for (id, t) in net.tensors() {
            if id.is_synaptic() {
                crossbars.push((id, CrossbarPair::from_weights(t, params.clone(), seed, id.layer, 0.0)?));
            }
        }
        Ok(PcmBackend {
            params,
            crossbars,
            now: 0.0,
            batches: 0,
            dump_dir: None,
            rebalances: Vec::new(),
        })
    }

    /// Writes weight histograms after every epoch into `dir`.
    pub fn with_dump_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.dump_dir = Some(dir.into());
        self
    }

    pub fn crossbars(&self) -> impl Iterator<Item = &(ParamId, CrossbarPair)> {
        self.crossbars.iter()
    }

    pub fn weight_count(&self) -> usize {
        self.crossbars.iter().map(|(_, c)| c.weights()).sum()
    }

    pub fn device_count(&self) -> usize {
        self.crossbars.iter().map(|(_, c)| c.device_count()).sum()
    }

    /// Simulated time in seconds.
    pub fn now(&self) -> f64 {
        self.now
    }

    fn crossbar(&mut self, id: ParamId) -> Option<&mut CrossbarPair> {
        self.crossbars.iter_mut().find(|(i, _)| *i == id).map(|(_, c)| c)
    }

    pub fn rebalance(&mut self) -> RebalanceStats {
        let now = self.now;
        let mut total = RebalanceStats::default();
        for (_, cb) in &mut self.crossbars {
            let s = cb.rebalance(now);
            total.pairs += s.pairs;
            total.pulses += s.pulses;
        }
        self.rebalances.push(total);
        total
    }

    /// Writes `crossbar_{layer}.pcm` for every crossbar.
    pub fn save_crossbars(&self, dir: &Path) -> Result<()> {
        for (id, cb) in &self.crossbars {
            crossbar_save(cb, &dir.join(format!("crossbar_{}.pcm", id.layer)))?;
        }
        Ok(())
    }

    pub fn write_histograms(&self, dir: &Path, epoch: usize) -> Result<()> {
        for (id, cb) in &self.crossbars {
            write_histogram(cb, self.now, &dir.join(format!("hist_{}_{epoch}.csv", id.layer)))?;
        }
        Ok(())
    }
}

fn shape_error(id: ParamId, expected: &[usize], found: &[usize]) -> Error {
    Error::Config(format!(
        "crossbar for {id} has shape {expected:?}, the network tensor is {found:?}"
    ))
}

impl WeightBackend for PcmBackend {
    fn prepare(&mut self, net: &mut Network) -> Result<()> {
        let now = self.now;
        for (id, cb) in &mut self.crossbars {
            let w = net
                .param_mut(*id)
                .ok_or_else(|| Error::Config(format!("network has no tensor {id}")))?;
            if w.shape() != cb.shape.as_slice() {
                return Err(shape_error(*id, &cb.shape, w.shape()));
            }
            *w = cb.read(now);
        }
        Ok(())
    }

    fn apply(&mut self, net: &mut Network, id: ParamId, delta: &[f64]) -> Result<()> {
        let now = self.now;
        match self.crossbar(id) {
            Some(cb) => {
                if cb.weights() != delta.len() {
                    return Err(shape_error(id, &cb.shape, &[delta.len()]));
                }
                cb.program(delta, now).map(|_| ())
            }
            None => add_delta(net, id, delta),
        }
    }

    fn end_batch(&mut self, _net: &mut Network, _batch: usize) -> Result<()> {
        self.now += self.params.batch_seconds;
        self.batches += 1;
        if let Some(r) = self.params.rebalance_every {
            if self.batches.is_multiple_of(r) {
                self.rebalance();
            }
        }
        Ok(())
    }

    fn end_epoch(&mut self, _net: &mut Network, epoch: usize) -> Result<()> {
        if self.params.rebalance_every.is_none() {
            self.rebalance();
        }
        if let Some(dir) = &self.dump_dir {
            self.write_histograms(dir, epoch)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{LayerKind, LayerSpec, NetworkSpec};

    fn jsb_spec() -> NetworkSpec {
        NetworkSpec {
            input: vec![88],
            layers: vec![LayerSpec::new(LayerKind::Snu, 150), LayerSpec::new(LayerKind::DenseSigmoid, 88)],
        }
    }

    #[test]
    fn jsb_network_maps_to_52800_devices() {
        let net = Network::new(jsb_spec(), 0).unwrap();
        let b = PcmBackend::new(&net, PcmParams::default(), 0).unwrap();
        assert_eq!(b.weight_count(), 26400);
        assert_eq!(b.device_count(), 52800);
    }

    #[test]
    fn prepare_reads_only_synaptic_tensors() {
        let mut net = Network::new(jsb_spec(), 1).unwrap();
        let before = net.clone();
        let mut b = PcmBackend::new(&net, PcmParams::default(), 1).unwrap();
        b.prepare(&mut net).unwrap();
        for ((id, a), (_, c)) in net.tensors().into_iter().zip(before.tensors()) {
            if id.is_synaptic() {
                assert_ne!(a, c);
            } else {
                assert_eq!(a, c);
            }
        }
    }
}
