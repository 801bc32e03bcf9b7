use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One presentation window `[start, end)`; `samples[lane]` is the dataset
/// index shown in that batch lane, `None` when the lane has run out.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub samples: Vec<Option<usize>>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Time-major binary tensor `[time × batch × features]`, bit-packed.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeStream {
    time: usize,
    batch: usize,
    features: usize,
    bits: Vec<u64>,
    pub segments: Vec<Segment>,
    pub n_s: usize,
    pub n_p: usize,
}

impl SpikeStream {
    pub fn zeros(time: usize, batch: usize, features: usize) -> Self {
        let n = time * batch * features;
        SpikeStream {
            time,
            batch,
            features,
            bits: vec![0; n.div_ceil(64)],
            segments: Vec::new(),
            n_s: time,
            n_p: 0,
        }
    }

    /// Builds a stream from a `[time × batch × features]` tensor; every
    /// value must be exactly 0 or 1.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let &[time, batch, features] = t.shape() else {
            return Err(Error::dim("spike stream", t.shape(), &[0, 0, 0]));
        };
        let mut s = SpikeStream::zeros(time, batch, features);
        for (i, &v) in t.data().iter().enumerate() {
            if v == 1.0 {
                s.bits[i / 64] |= 1 << (i % 64);
            } else if v != 0.0 {
                return Err(Error::Domain(format!("spike value {v} is not binary")));
            }
        }
        Ok(s)
    }

    /// Stacks `[batch × features]` frames along time.
    pub fn from_frames(frames: &[Tensor]) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Ok(SpikeStream::zeros(0, 0, 0));
        };
        let shape = first.shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::dim("spike stream frame", &shape, &[0, 0]));
        }
        let mut data = Vec::with_capacity(frames.len() * first.numel());
        for f in frames {
            if f.shape() != shape.as_slice() {
                return Err(Error::dim("spike stream frame", &shape, f.shape()));
            }
            data.extend_from_slice(f.data());
        }
        SpikeStream::from_tensor(&Tensor::new(vec![frames.len(), shape[0], shape[1]], data)?)
    }

    pub(crate) fn from_bits(time: usize, batch: usize, features: usize, bits: Vec<u64>) -> Result<Self> {
        if bits.len() != (time * batch * features).div_ceil(64) {
            return Err(Error::Container("packed spike payload has the wrong length".into()));
        }
        Ok(SpikeStream {
            time,
            batch,
            features,
            bits,
            segments: Vec::new(),
            n_s: time,
            n_p: 0,
        })
    }

    pub(crate) fn bits(&self) -> &[u64] {
        &self.bits
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.time, self.batch, self.features]
    }

    fn flat(&self, t: usize, b: usize, f: usize) -> usize {
        (t * self.batch + b) * self.features + f
    }

    pub fn get(&self, t: usize, b: usize, f: usize) -> bool {
        let i = self.flat(t, b, f);
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, t: usize, b: usize, f: usize, spike: bool) {
        let i = self.flat(t, b, f);
        if spike {
            self.bits[i / 64] |= 1 << (i % 64);
        } else {
            self.bits[i / 64] &= !(1 << (i % 64));
        }
    }

    /// The `[batch × features]` frame at step `t`.
    pub fn frame(&self, t: usize) -> Tensor {
        let mut data = vec![0.0; self.batch * self.features];
        let base = t * self.batch * self.features;
        for (j, v) in data.iter_mut().enumerate() {
            let i = base + j;
            if self.bits[i / 64] >> (i % 64) & 1 == 1 {
                *v = 1.0;
            }
        }
        Tensor::new(vec![self.batch, self.features], data).expect("frame shape")
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = (0..self.time * self.batch * self.features)
            .map(|i| (self.bits[i / 64] >> (i % 64) & 1) as f64)
            .collect();
        Tensor::new(vec![self.time, self.batch, self.features], data).expect("stream shape")
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Spike counts per `(lane, feature)` over steps `[start, end)`.
    pub fn counts(&self, start: usize, end: usize) -> Vec<Vec<u32>> {
        let mut out = vec![vec![0u32; self.features]; self.batch];
        for t in start..end.min(self.time) {
            for (b, row) in out.iter_mut().enumerate() {
                for (f, c) in row.iter_mut().enumerate() {
                    *c += self.get(t, b, f) as u32;
                }
            }
        }
        out
    }
}
