//! Bernoulli rate coding with presentation/pause structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::Tensor;

use super::stream::{Segment, SpikeStream};

fn check_pixels(images: &Tensor) -> Result<(usize, usize)> {
    if images.rank() != 2 {
        return Err(Error::dim("rate_encode", images.shape(), &[0, 0]));
    }
    if let Some(v) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("pixel value {v} outside [0, 1]")));
    }
    Ok((images.shape()[0], images.shape()[1]))
}

/// Spikes of one sample over `n_s` presentation steps, time-major.
///
/// Sample `index` draws from stream `index` of a ChaCha8 generator seeded
/// with `seed`, one uniform per pixel per step, so its spikes do not depend
/// on batching or on which other samples are encoded. Pixels at exactly 0
/// or 1 are deterministic and consume no draws.
pub fn encode_sample(pixels: &[f64], n_s: usize, seed: u64, index: usize) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut out = Vec::with_capacity(n_s * pixels.len());
    for _ in 0..n_s {
        for &p in pixels {
            out.push(if p <= 0.0 {
                false
            } else if p >= 1.0 {
                true
            } else {
                rng.random::<f64>() < p
            });
        }
    }
    out
}

/// Encodes `images[N × F]` into `lanes` parallel lanes: lane `b` shows
/// samples `b, b + lanes, ...` in turn, each for `n_s` steps followed by
/// `n_p` silent steps. `n_p = 0` gives a continuous stream.
pub fn rate_encode_lanes(
    exec: Exec,
    images: &Tensor,
    lanes: usize,
    n_s: usize,
    n_p: usize,
    seed: u64,
) -> Result<SpikeStream> {
    let (n, f) = check_pixels(images)?;
    if lanes == 0 {
        return Err(Error::Config("at least one lane is required".into()));
    }
    let rounds = n.div_ceil(lanes);
    let period = n_s + n_p;
    let data = images.data();
    let encoded = exec
        .for_work(n * n_s * f)
        .map(n, |i| encode_sample(&data[i * f..(i + 1) * f], n_s, seed, i));

    let mut stream = SpikeStream::zeros(rounds * period, lanes, f);
    for (i, bits) in encoded.iter().enumerate() {
        let (round, lane) = (i / lanes, i % lanes);
        for t in 0..n_s {
            for (j, &b) in bits[t * f..(t + 1) * f].iter().enumerate() {
                if b {
                    stream.set(round * period + t, lane, j, true);
                }
            }
        }
    }
    stream.segments = (0..rounds)
        .map(|r| Segment {
            start: r * period,
            end: r * period + n_s,
            samples: (0..lanes).map(|b| Some(r * lanes + b).filter(|&i| i < n)).collect(),
        })
        .collect();
    stream.n_s = n_s;
    stream.n_p = n_p;
    Ok(stream)
}

/// Single-lane stream of all samples in order.
pub fn rate_encode(images: &Tensor, n_s: usize, n_p: usize, seed: u64) -> Result<SpikeStream> {
    rate_encode_lanes(Exec::default(), images, 1, n_s, n_p, seed)
}

/// One training batch: samples `indices` side by side for `n_s` steps,
/// `[n_s × indices.len() × F]`.
pub fn encode_batch(exec: Exec, images: &Tensor, indices: &[usize], n_s: usize, seed: u64) -> Result<SpikeStream> {
    let (n, f) = check_pixels(images)?;
    if let Some(&i) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::Contract(format!("sample index {i} out of range for {n} images")));
    }
    let data = images.data();
    let encoded = exec
        .for_work(indices.len() * n_s * f)
        .map(indices.len(), |k| {
            let i = indices[k];
            encode_sample(&data[i * f..(i + 1) * f], n_s, seed, i)
        });
    let mut stream = SpikeStream::zeros(n_s, indices.len(), f);
    for (lane, bits) in encoded.iter().enumerate() {
        for t in 0..n_s {
            for (j, &b) in bits[t * f..(t + 1) * f].iter().enumerate() {
                if b {
                    stream.set(t, lane, j, true);
                }
            }
        }
    }
    stream.segments = vec![Segment {
        start: 0,
        end: n_s,
        samples: indices.iter().map(|&i| Some(i)).collect(),
    }];
    stream.n_s = n_s;
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes_are_deterministic() {
        let img = Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap();
        let s = rate_encode(&img, 20, 5, 1).unwrap();
        assert_eq!(s.shape(), [25, 1, 2]);
        for t in 0..20 {
            assert!(!s.get(t, 0, 0));
            assert!(s.get(t, 0, 1));
        }
        for t in 20..25 {
            assert!(!s.get(t, 0, 1));
        }
    }

    #[test]
    fn out_of_range_pixel_is_a_domain_error() {
        let img = Tensor::new(vec![1, 2], vec![0.5, 1.5]).unwrap();
        assert!(matches!(rate_encode(&img, 1, 0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn segments_and_lanes() {
        let img = Tensor::full(&[5, 3], 0.5);
        let s = rate_encode_lanes(Exec::Sequential, &img, 2, 4, 3, 9).unwrap();
        assert_eq!(s.shape(), [21, 2, 3]);
        assert_eq!(s.segments.len(), 3);
        assert_eq!((s.segments[1].start, s.segments[1].end), (7, 11));
        assert_eq!(s.segments[2].samples, vec![Some(4), None]);
    }

    #[test]
    fn sample_spikes_independent_of_batching() {
        let img = Tensor::new(vec![3, 4], (0..12).map(|i| i as f64 / 12.0).collect()).unwrap();
        let all = rate_encode_lanes(Exec::Sequential, &img, 3, 6, 0, 42).unwrap();
        let one = encode_batch(Exec::Sequential, &img, &[2], 6, 42).unwrap();
        for t in 0..6 {
            for j in 0..4 {
                assert_eq!(all.get(t, 2, j), one.get(t, 0, j));
            }
        }
    }
}
