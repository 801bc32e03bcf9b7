//! Crossbar state dumps and weight-distribution snapshots.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{Container, ContainerWriter};
use crate::error::{Error, Result};

use super::crossbar::{device_key, CrossbarPair, MINUS, PLUS};
use super::device::{PcmDevice, PcmParams};

pub const CROSSBAR_KIND: &str = "crossbar";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossbarMeta {
    pub layer: usize,
    pub seed: u64,
    pub shape: Vec<usize>,
    pub beta: f64,
    pub params: PcmParams,
}

/// Blocks per polarity: programmed conductance, pulse count, programming time.
const FIELDS: [&str; 3] = ["g", "pulses", "programmed_at"];

fn writer(cb: &CrossbarPair) -> Result<ContainerWriter> {
    let meta = CrossbarMeta {
        layer: cb.layer,
        seed: cb.seed,
        shape: cb.shape.clone(),
        beta: cb.beta(),
        params: cb.params.clone(),
    };
    let mut w = ContainerWriter::new(CROSSBAR_KIND, serde_json::to_value(&meta)?);
    let (plus, minus) = cb.devices();
    for (pol, devs) in [("plus", plus), ("minus", minus)] {
        let g: Vec<f64> = devs.iter().map(|d| d.g_prog).collect();
        let n: Vec<f64> = devs.iter().map(|d| d.pulses as f64).collect();
        let t: Vec<f64> = devs.iter().map(|d| d.programmed_at).collect();
        for (field, data) in FIELDS.iter().zip([g, n, t]) {
            w.add_f64(Some(cb.layer), &format!("{field}_{pol}"), &cb.shape, &data);
        }
    }
    Ok(w)
}

pub fn crossbar_to_bytes(cb: &CrossbarPair) -> Result<Vec<u8>> {
    writer(cb)?.to_bytes()
}

pub fn crossbar_save(cb: &CrossbarPair, path: &Path) -> Result<()> {
    writer(cb)?.write(path)
}

/// Restores device state. Noise generators restart from their derived seeds.
pub fn crossbar_from_bytes(bytes: &[u8]) -> Result<CrossbarPair> {
    let c = Container::from_bytes(bytes, CROSSBAR_KIND)?;
    let meta: CrossbarMeta = serde_json::from_value(c.header.meta.clone())
        .map_err(|e| Error::Container(format!("bad crossbar metadata: {e}")))?;
    meta.params.validate()?;
    let n: usize = meta.shape.iter().product();
    if n == 0 {
        return Err(Error::Container("crossbar has no weights".into()));
    }
    let cols = n / meta.shape[0];
    let mut sides = Vec::with_capacity(2);
    for (pol, key) in [("plus", PLUS), ("minus", MINUS)] {
        let mut cols_data = Vec::with_capacity(3);
        for field in FIELDS {
            let b = c.block(Some(meta.layer), &format!("{field}_{pol}"))?;
            if b.shape != meta.shape {
                return Err(Error::LayerShape {
                    layer: meta.layer,
                    name: format!("{field}_{pol}"),
                    expected: meta.shape.clone(),
                    found: b.shape.clone(),
                });
            }
            cols_data.push(c.f64_data(b)?);
        }
        let p = &meta.params;
        let mut devs = Vec::with_capacity(n);
        for (i, ((&g, &pulses), &t)) in cols_data[0].iter().zip(&cols_data[1]).zip(&cols_data[2]).enumerate() {
            if !(p.g_min..=p.g_max).contains(&g) || pulses < 0.0 || pulses.fract() != 0.0 || !t.is_finite() {
                return Err(Error::Container(format!("device {i} ({pol}) has invalid state")));
            }
            let k = device_key(meta.seed, meta.layer, i / cols, i % cols, key);
            devs.push(PcmDevice::restore(g, pulses as u32, t, k));
        }
        sides.push(devs);
    }
    let minus = sides.pop().expect("two sides");
    let plus = sides.pop().expect("two sides");
    Ok(CrossbarPair::from_parts(meta.shape, meta.params, meta.seed, meta.layer, plus, minus))
}

pub fn crossbar_load(path: &Path) -> Result<CrossbarPair> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    crossbar_from_bytes(&bytes)
}

pub const HISTOGRAM_HEADER: &str = "bin_lo,bin_hi,count";
pub const HISTOGRAM_BINS: usize = 50;

pub fn histogram_csv(bins: &[(f64, f64, usize)]) -> String {
    let mut s = String::from(HISTOGRAM_HEADER);
    s.push('\n');
    for (lo, hi, c) in bins {
        let _ = writeln!(s, "{lo},{hi},{c}");
    }
    s
}

/// Writes the effective-weight histogram of `cb` at time `now`, spanning the
/// representable weight range.
pub fn write_histogram(cb: &CrossbarPair, now: f64, path: &Path) -> Result<()> {
    let r = cb.params.weight_range;
    let csv = histogram_csv(&cb.histogram(now, HISTOGRAM_BINS, -r, r));
    std::fs::write(path, csv).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn dump_round_trips_device_state() {
        let w = Tensor::new(vec![3, 5], (0..15).map(|i| (i as f64 - 7.0) * 0.05).collect()).unwrap();
        let mut cb = CrossbarPair::from_weights(&w, PcmParams::default(), 4, 1, 0.0).unwrap();
        cb.program(&[0.1; 15], 2.0).unwrap();
        let back = crossbar_from_bytes(&crossbar_to_bytes(&cb).unwrap()).unwrap();
        assert_eq!(back, cb);
        assert_eq!(back.effective(5.0), cb.effective(5.0));
    }

    #[test]
    fn histogram_counts_every_weight() {
        let w = Tensor::new(vec![2, 2], vec![-2.0, 0.0, 0.01, 0.99]).unwrap();
        let cb = CrossbarPair::from_weights(&w, PcmParams::noise_free(), 0, 0, 0.0).unwrap();
        let bins = cb.histogram(0.0, 4, -1.0, 1.0);
        assert_eq!(bins.iter().map(|b| b.2).collect::<Vec<_>>(), vec![1, 0, 2, 1]);
        let csv = histogram_csv(&bins);
        assert!(csv.starts_with("bin_lo,bin_hi,count\n-1,-0.5,1\n"));
    }
}
