//! Differential 2-PCM crossbar: each weight is `β (G+ − G−)`.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::Tensor;

use super::device::{PcmDevice, PcmParams};

/// Polarity index used when deriving device keys.
pub const PLUS: u64 = 0;
pub const MINUS: u64 = 1;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the device at `(row, col, polarity)` of crossbar `layer`.
pub fn device_key(seed: u64, layer: usize, row: usize, col: usize, polarity: u64) -> u64 {
    let mut h = mix(seed ^ 0x9e37_79b9_7f4a_7c15);
    for v in [layer as u64, row as u64, col as u64, polarity] {
        h = mix(h ^ v.wrapping_add(0x9e37_79b9_7f4a_7c15));
    }
    h
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RebalanceStats {
    pub pairs: usize,
    pub pulses: u64,
}

#[derive(Clone, Debug)]
pub struct CrossbarPair {
    pub layer: usize,
    pub seed: u64,
    /// Shape of the weight tensor; rows are the first axis.
    pub shape: Vec<usize>,
    pub params: PcmParams,
    pub(crate) plus: Vec<PcmDevice>,
    pub(crate) minus: Vec<PcmDevice>,
    residual: Vec<f64>,
    pub(crate) exec: Exec,
}

impl PartialEq for CrossbarPair {
    fn eq(&self, other: &Self) -> bool {
        self.layer == other.layer
            && self.shape == other.shape
            && self.params == other.params
            && self.plus == other.plus
            && self.minus == other.minus
    }
}

impl CrossbarPair {
    /// Fresh devices, all at `g_min`.
    pub fn new(shape: &[usize], params: PcmParams, seed: u64, layer: usize) -> Result<Self> {
        params.validate()?;
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Config(format!("crossbar shape {shape:?} has no weights")));
        }
        let n: usize = shape.iter().product();
        let cols = n / shape[0];
        let dev = |i: usize, pol| PcmDevice::new(&params, device_key(seed, layer, i / cols, i % cols, pol));
        Ok(CrossbarPair {
            layer,
            seed,
            shape: shape.to_vec(),
            plus: (0..n).map(|i| dev(i, PLUS)).collect(),
            minus: (0..n).map(|i| dev(i, MINUS)).collect(),
            residual: vec![0.0; n],
            params,
            exec: Exec::default(),
        })
    }

    /// Resets every device and programs `weights` onto the array.
    pub fn from_weights(weights: &Tensor, params: PcmParams, seed: u64, layer: usize, now: f64) -> Result<Self> {
        let mut cb = CrossbarPair::new(weights.shape(), params, seed, layer)?;
        let p = cb.params.clone();
        cb.exec.for_each_mut(&mut cb.plus, |_, d| d.reset(&p, now));
        cb.exec.for_each_mut(&mut cb.minus, |_, d| d.reset(&p, now));
        cb.program_raw(weights.data(), now);
        cb.residual.iter_mut().for_each(|r| *r = 0.0);
        Ok(cb)
    }

    pub(crate) fn from_parts(
        shape: Vec<usize>,
        params: PcmParams,
        seed: u64,
        layer: usize,
        plus: Vec<PcmDevice>,
        minus: Vec<PcmDevice>,
    ) -> Self {
        let n = plus.len();
        CrossbarPair {
            layer,
            seed,
            shape,
            params,
            plus,
            minus,
            residual: vec![0.0; n],
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn weights(&self) -> usize {
        self.plus.len()
    }

    pub fn device_count(&self) -> usize {
        self.plus.len() + self.minus.len()
    }

    pub fn beta(&self) -> f64 {
        self.params.beta()
    }

    pub fn devices(&self) -> (&[PcmDevice], &[PcmDevice]) {
        (&self.plus, &self.minus)
    }

    pub fn devices_mut(&mut self) -> (&mut [PcmDevice], &mut [PcmDevice]) {
        (&mut self.plus, &mut self.minus)
    }

    /// Drifted conductances `(G+, G−)` at `now`.
    pub fn conductances(&self, now: f64) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        (
            self.plus.iter().map(|d| d.conductance(p, now)).collect(),
            self.minus.iter().map(|d| d.conductance(p, now)).collect(),
        )
    }

    /// Noise-free effective weights `β (G+ − G−)` at `now`.
    pub fn effective(&self, now: f64) -> Tensor {
        let (gp, gm) = self.conductances(now);
        let b = self.beta();
        let data = gp.iter().zip(&gm).map(|(a, c)| b * (a - c)).collect();
        Tensor::new(self.shape.clone(), data).expect("crossbar shape")
    }

    /// One noisy read of every weight.
    pub fn read(&mut self, now: f64) -> Tensor {
        let p = self.params.clone();
        let b = p.beta();
        let mut cells: Vec<(&mut PcmDevice, &mut PcmDevice, f64)> = self
            .plus
            .iter_mut()
            .zip(self.minus.iter_mut())
            .map(|(a, c)| (a, c, 0.0))
            .collect();
        let exec = self.exec.for_work(cells.len() * 64);
        exec.for_each_mut(&mut cells, |_, (a, c, o)| *o = b * (a.read(&p, now) - c.read(&p, now)));
        let out = cells.into_iter().map(|(_, _, o)| o).collect();
        Tensor::new(self.shape.clone(), out).expect("crossbar shape")
    }

    fn program_raw(&mut self, delta: &[f64], now: f64) -> u64 {
        let p = self.params.clone();
        let exec = self.exec.for_work(delta.len() * 16);
        let mut cells: Vec<(&mut PcmDevice, &mut PcmDevice, &mut f64, u64)> = self
            .plus
            .iter_mut()
            .zip(self.minus.iter_mut())
            .zip(self.residual.iter_mut())
            .map(|((a, c), r)| (a, c, r, 0))
            .collect();
        exec.for_each_mut(&mut cells, |i, (a, c, r, fired)| {
            *fired = program_pair(&p, a, c, r, delta[i], now);
        });
        cells.iter().map(|c| c.3).sum()
    }

    /// Applies `delta` as crystallizing pulses on `G+` (positive) or `G−`
    /// (negative). Returns the number of pulses fired.
    pub fn program(&mut self, delta: &[f64], now: f64) -> Result<u64> {
        if delta.len() != self.weights() {
            return Err(Error::dim("crossbar program", &self.shape, &[delta.len()]));
        }
        Ok(self.program_raw(delta, now))
    }

    /// Resets every pair with a device above the threshold and restores its
    /// effective weight by program-and-verify on the appropriate device.
    pub fn rebalance(&mut self, now: f64) -> RebalanceStats {
        let p = self.params.clone();
        let exec = self.exec.for_work(self.weights() * 16);
        let mut cells: Vec<(&mut PcmDevice, &mut PcmDevice, Option<u64>)> = self
            .plus
            .iter_mut()
            .zip(self.minus.iter_mut())
            .map(|(a, c)| (a, c, None))
            .collect();
        exec.for_each_mut(&mut cells, |_, (a, c, out)| *out = rebalance_pair(&p, a, c, now));
        let mut stats = RebalanceStats::default();
        for n in cells.into_iter().filter_map(|c| c.2) {
            stats.pairs += 1;
            stats.pulses += n;
        }
        stats
    }

    /// Histogram of effective weights over `bins` equal bins on `[lo, hi]`;
    /// values outside fall in the edge bins.
    pub fn histogram(&self, now: f64, bins: usize, lo: f64, hi: f64) -> Vec<(f64, f64, usize)> {
        let w = self.effective(now);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in w.data() {
            let k = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[k] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(k, c)| (lo + k as f64 * width, lo + (k + 1) as f64 * width, c))
            .collect()
    }
}

fn pulses_for(p: &PcmParams, dw: f64) -> u32 {
    ((dw.abs() / p.pulse_weight()).round() as u64).min(p.pulse_cap as u64) as u32
}

fn program_pair(p: &PcmParams, plus: &mut PcmDevice, minus: &mut PcmDevice, residual: &mut f64, dw: f64, now: f64) -> u64 {
    let want = if p.accumulate_residual { dw + *residual } else { dw };
    if want == 0.0 {
        return 0;
    }
    let dev = if want > 0.0 { plus } else { minus };
    if !p.quantize {
        dev.increase_exact(p, want.abs() / p.beta(), now);
        return 0;
    }
    let n = pulses_for(p, want);
    dev.set_pulses(p, n, now);
    if p.accumulate_residual {
        *residual = want - want.signum() * n as f64 * p.pulse_weight();
    }
    n as u64
}

/// Returns the pulses fired when the pair was over threshold.
fn rebalance_pair(p: &PcmParams, plus: &mut PcmDevice, minus: &mut PcmDevice, now: f64) -> Option<u64> {
    let limit = p.rebalance_threshold * p.g_max;
    let (gp, gm) = (plus.conductance(p, now), minus.conductance(p, now));
    if gp <= limit && gm <= limit {
        return None;
    }
    let b = p.beta();
    let target = b * (gp - gm);
    plus.reset(p, now);
    minus.reset(p, now);
    let mut fired = 0;
    for _ in 0..p.verify_iterations {
        let err = target - b * (plus.conductance(p, now) - minus.conductance(p, now));
        let n = pulses_for(p, err);
        if n == 0 {
            break;
        }
        let dev = if err > 0.0 { &mut *plus } else { &mut *minus };
        dev.set_pulses(p, n, now);
        fired += n as u64;
    }
    Some(fired)
}
