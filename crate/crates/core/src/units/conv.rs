//! Convolutional SNU: the weighted input is a cross-correlation, and decay
//! and bias are shared per feature map.

use crate::autodiff::{Graph, Padding, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::snu::{emit, recurrence, InputFn, OutputFn, SnuState};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvSnuLayer {
    /// `[filters × channels × kh × kw]`
    pub kernel: Tensor,
    /// `[1]` shared, or `[filters × 1 × 1]` per map.
    pub decay: Tensor,
    /// `[filters × 1 × 1]`
    pub bias: Tensor,
    pub stride: usize,
    pub padding: Padding,
    /// Optional max-pooling window applied to the emitted spikes.
    pub pool: Option<usize>,
    pub input_fn: InputFn,
    pub output_fn: OutputFn,
    pub decay_trainable: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundConvSnu {
    pub kernel: Var,
    pub decay: Var,
    pub bias: Var,
}

impl ConvSnuLayer {
    pub fn filters(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    /// `(filters, h, w)` of the membrane state for an input of `(h, w)`.
    pub fn state_extent(&self, height: usize, width: usize) -> Result<(usize, usize, usize)> {
        let k = self.kernel.shape();
        let geom = crate::autodiff::kernels::ConvGeometry::new(
            &[1, k[1], height, width],
            k,
            self.stride,
            self.padding,
        )
        .ok_or_else(|| Error::dim("conv_snu", &[k[1], height, width], k))?;
        Ok((k[0], geom.out_h, geom.out_w))
    }

    /// `(channels, h, w)` emitted for an input of `(h, w)`, after pooling.
    pub fn output_extent(&self, height: usize, width: usize) -> Result<(usize, usize, usize)> {
        let (f, h, w) = self.state_extent(height, width)?;
        match self.pool {
            Some(p) if p > h || p > w || p == 0 => Err(Error::dim("conv_snu pool", &[h, w], &[p, p])),
            Some(p) => Ok((f, h / p, w / p)),
            None => Ok((f, h, w)),
        }
    }

    pub fn bind(&self, g: &mut Graph) -> BoundConvSnu {
        BoundConvSnu {
            kernel: g.param(self.kernel.clone()),
            decay: if self.decay_trainable {
                g.param(self.decay.clone())
            } else {
                g.constant(self.decay.clone())
            },
            bias: g.param(self.bias.clone()),
        }
    }

    pub fn zero_state(&self, g: &mut Graph, batch: usize, height: usize, width: usize) -> Result<SnuState> {
        let (f, h, w) = self.state_extent(height, width)?;
        let shape = [batch, f, h, w];
        Ok(SnuState {
            s: g.constant(Tensor::zeros(&shape)),
            y: g.constant(Tensor::zeros(&shape)),
        })
    }

    /// Advances on `x[batch × channels × h × w]`; returns the (pooled) spikes.
    pub fn step(&self, g: &mut Graph, p: &BoundConvSnu, state: &mut SnuState, x: Var) -> Result<Var> {
        let wx = g.conv2d(x, p.kernel, self.stride, self.padding)?;
        if g.value(wx).shape() != g.value(state.s).shape() {
            return Err(Error::dim("conv_snu state", g.value(state.s).shape(), g.value(wx).shape()));
        }
        let s = recurrence(g, self.input_fn, wx, p.decay, state)?;
        let y = emit(g, self.output_fn, s, p.bias)?;
        *state = SnuState { s, y };
        match self.pool {
            Some(window) => g.maxpool2d(y, window),
            None => Ok(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(kernel: Tensor, decay: f64, bias: f64) -> ConvSnuLayer {
        let f = kernel.shape()[0];
        ConvSnuLayer {
            kernel,
            decay: Tensor::scalar(decay),
            bias: Tensor::full(&[f, 1, 1], bias),
            stride: 1,
            padding: Padding::Same,
            pool: None,
            input_fn: InputFn::Relu,
            output_fn: OutputFn::Step,
            decay_trainable: false,
        }
    }

    fn run(l: &ConvSnuLayer, frames: &[Tensor]) -> Vec<Tensor> {
        let s = frames[0].shape();
        let mut g = Graph::new();
        let p = l.bind(&mut g);
        let mut st = l.zero_state(&mut g, s[0], s[2], s[3]).unwrap();
        frames
            .iter()
            .map(|f| {
                let x = g.constant(f.clone());
                let y = l.step(&mut g, &p, &mut st, x).unwrap();
                g.value(y).clone()
            })
            .collect()
    }

    #[test]
    fn identity_kernel_thresholds_pointwise() {
        let l = layer(Tensor::full(&[1, 1, 1, 1], 1.0), 0.0, -0.5);
        let x = Tensor::new(vec![1, 1, 2, 2], vec![0.2, 0.7, 0.5, 1.0]).unwrap();
        let out = run(&l, &[x.clone(), x.clone()]);
        for y in out {
            assert_eq!(y.data(), &[0.0, 1.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn zero_kernel_never_spikes() {
        let l = layer(Tensor::zeros(&[2, 1, 3, 3]), 0.9, -0.1);
        let frames = vec![Tensor::full(&[1, 1, 5, 5], 1.0); 10];
        for y in run(&l, &frames) {
            assert!(y.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn bright_patch_spikes_only_at_centre() {
        // A 3x3 bright patch centred at (2, 2) of a 5x5 image: only the
        // centre sees all 9 taps lit (9 - 8.5 > 0); neighbours see at most 6.
        let l = layer(Tensor::full(&[1, 1, 3, 3], 1.0), 0.0, -8.5);
        let mut img = Tensor::zeros(&[1, 1, 5, 5]);
        for y in 1..4 {
            for x in 1..4 {
                img.data_mut()[y * 5 + x] = 1.0;
            }
        }
        let out = run(&l, &[img]);
        let spikes: Vec<usize> = out[0]
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(spikes, vec![12]);
    }

    #[test]
    fn channel_mismatch_is_a_dimension_error() {
        let l = layer(Tensor::full(&[1, 2, 1, 1], 1.0), 0.5, -0.5);
        let mut g = Graph::new();
        let p = l.bind(&mut g);
        let mut st = l.zero_state(&mut g, 1, 3, 3).unwrap();
        let x = g.constant(Tensor::zeros(&[1, 3, 3, 3]));
        assert!(matches!(l.step(&mut g, &p, &mut st, x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn pooling_shrinks_output() {
        let mut l = layer(Tensor::full(&[1, 1, 1, 1], 1.0), 0.0, -0.5);
        l.pool = Some(2);
        assert_eq!(l.output_extent(4, 6).unwrap(), (1, 2, 3));
        let x = Tensor::new(vec![1, 1, 2, 2], vec![0.0, 0.0, 0.0, 0.9]).unwrap();
        let out = run(&l, &[x]);
        assert_eq!(out[0].data(), &[1.0]);
    }
}
