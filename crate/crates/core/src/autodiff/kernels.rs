//! Numeric kernels behind the graph primitives.
//!
//! Each output element is accumulated by a single worker in a fixed order,
//! so results do not depend on the execution policy.

use serde::{Deserialize, Serialize};

use crate::exec::Exec;

/// `a[rows×inner] · w[inner×cols]`. Zero entries of `a` are skipped, which
/// makes binary spike inputs cheap.
pub fn matmul(exec: Exec, a: &[f64], w: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    exec.for_work(rows * inner * cols)
        .for_each_chunk(&mut out, cols, |i, row| {
            let a_row = &a[i * inner..(i + 1) * inner];
            for (k, &av) in a_row.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let w_row = &w[k * cols..(k + 1) * cols];
                for (o, &wv) in row.iter_mut().zip(w_row) {
                    *o += av * wv;
                }
            }
        });
    out
}

/// `aᵀ · up` for `a[rows×inner]`, `up[rows×cols]`; the weight gradient.
pub fn matmul_at_b(exec: Exec, a: &[f64], up: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; inner * cols];
    exec.for_work(rows * inner * cols)
        .for_each_chunk(&mut out, cols, |k, row| {
            for i in 0..rows {
                let av = a[i * inner + k];
                if av == 0.0 {
                    continue;
                }
                let up_row = &up[i * cols..(i + 1) * cols];
                for (o, &u) in row.iter_mut().zip(up_row) {
                    *o += av * u;
                }
            }
        });
    out
}

/// `up · wᵀ` for `up[rows×cols]`, `w[inner×cols]`; the input gradient.
pub fn matmul_a_bt(exec: Exec, up: &[f64], w: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * inner];
    exec.for_work(rows * inner * cols)
        .for_each_chunk(&mut out, inner, |i, row| {
            let up_row = &up[i * cols..(i + 1) * cols];
            for (k, o) in row.iter_mut().enumerate() {
                let w_row = &w[k * cols..(k + 1) * cols];
                *o = up_row.iter().zip(w_row).map(|(u, w)| u * w).sum();
            }
        });
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    #[default]
    Same,
}

/// Resolved geometry of a 2-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Returns `None` when the kernel does not fit the padded input.
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, padding: Padding) -> Option<Self> {
        let (&[batch, channels, height, width], &[filters, kc, kh, kw]) = (input, kernel) else {
            return None;
        };
        if kc != channels || stride == 0 || kh == 0 || kw == 0 {
            return None;
        }
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::Valid => {
                if kh > height || kw > width {
                    return None;
                }
                ((height - kh) / stride + 1, (width - kw) / stride + 1, 0, 0)
            }
            Padding::Same => {
                let out_h = height.div_ceil(stride);
                let out_w = width.div_ceil(stride);
                let pad_h = ((out_h - 1) * stride + kh).saturating_sub(height);
                let pad_w = ((out_w - 1) * stride + kw).saturating_sub(width);
                if kh > height + pad_h || kw > width + pad_w {
                    return None;
                }
                (out_h, out_w, pad_h / 2, pad_w / 2)
            }
        };
        Some(ConvGeometry {
            batch,
            channels,
            height,
            width,
            filters,
            kh,
            kw,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.filters, self.out_h, self.out_w]
    }

    /// Input coordinate read by output `(oy, ox)` at kernel tap `(ky, kx)`.
    #[inline]
    fn tap(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad_top)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad_left)?;
        (y < self.height && x < self.width).then_some((y, x))
    }
}

pub fn conv2d(exec: Exec, g: &ConvGeometry, input: &[f64], kernel: &[f64]) -> Vec<f64> {
    let plane = g.out_h * g.out_w;
    let mut out = vec![0.0; g.batch * g.filters * plane];
    let work = out.len() * g.channels * g.kh * g.kw;
    exec.for_work(work).for_each_chunk(&mut out, plane, |bf, dst| {
        let (b, f) = (bf / g.filters, bf % g.filters);
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut acc = 0.0;
                for c in 0..g.channels {
                    let in_base = (b * g.channels + c) * g.height * g.width;
                    let k_base = (f * g.channels + c) * g.kh * g.kw;
                    for ky in 0..g.kh {
                        for kx in 0..g.kw {
                            if let Some((y, x)) = g.tap(oy, ox, ky, kx) {
                                acc += input[in_base + y * g.width + x] * kernel[k_base + ky * g.kw + kx];
                            }
                        }
                    }
                }
                dst[oy * g.out_w + ox] = acc;
            }
        }
    });
    out
}

pub fn conv2d_grad_input(exec: Exec, g: &ConvGeometry, up: &[f64], kernel: &[f64]) -> Vec<f64> {
    let sample = g.channels * g.height * g.width;
    let mut out = vec![0.0; g.batch * sample];
    let work = up.len() * g.channels * g.kh * g.kw;
    exec.for_work(work).for_each_chunk(&mut out, sample, |b, dst| {
        for f in 0..g.filters {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let u = up[((b * g.filters + f) * g.out_h + oy) * g.out_w + ox];
                    if u == 0.0 {
                        continue;
                    }
                    for c in 0..g.channels {
                        let k_base = (f * g.channels + c) * g.kh * g.kw;
                        for ky in 0..g.kh {
                            for kx in 0..g.kw {
                                if let Some((y, x)) = g.tap(oy, ox, ky, kx) {
                                    dst[(c * g.height + y) * g.width + x] += u * kernel[k_base + ky * g.kw + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

pub fn conv2d_grad_kernel(exec: Exec, g: &ConvGeometry, up: &[f64], input: &[f64]) -> Vec<f64> {
    let per_filter = g.channels * g.kh * g.kw;
    let mut out = vec![0.0; g.filters * per_filter];
    let work = up.len() * per_filter;
    exec.for_work(work).for_each_chunk(&mut out, per_filter, |f, dst| {
        for b in 0..g.batch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let u = up[((b * g.filters + f) * g.out_h + oy) * g.out_w + ox];
                    if u == 0.0 {
                        continue;
                    }
                    for c in 0..g.channels {
                        let in_base = (b * g.channels + c) * g.height * g.width;
                        for ky in 0..g.kh {
                            for kx in 0..g.kw {
                                if let Some((y, x)) = g.tap(oy, ox, ky, kx) {
                                    dst[(c * g.kh + ky) * g.kw + kx] += u * input[in_base + y * g.width + x];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

/// Non-overlapping max pooling over `[batch×c×h×w]`. Returns the pooled
/// values and, per output, the flat input index of the winner (ties go to
/// the lowest flat index).
pub fn maxpool2d(input: &[f64], shape: &[usize], window: usize) -> (Vec<f64>, Vec<usize>) {
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (oh, ow) = (h / window, w / window);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(out.capacity());
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for dy in 0..window {
                    for dx in 0..window {
                        let idx = base + (oy * window + dy) * w + ox * window + dx;
                        let v = input[idx];
                        if best_idx == usize::MAX || v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    (out, arg)
}
