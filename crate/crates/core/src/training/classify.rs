//! Rate-coded classification: the loss is softmax cross-entropy on output
//! spike counts summed over the presentation window.

use crate::autodiff::{Graph, Var};
use crate::encoding::{argmax_lowest, encode_batch, rate_encode_lanes, SpikeStream};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::Tensor;
use crate::units::{BoundNet, Network};

use super::trainer::{derive_seed, Evaluation, Task, Trainer, SEED_TAG_ENCODE, SEED_TAG_EVAL};

fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Data(format!("label {l} out of range for {classes} classes")));
        }
        t.data_mut()[i * classes + l] = 1.0;
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifyReport {
    pub accuracy: f64,
    /// Mean cross-entropy of the summed outputs.
    pub loss: f64,
    pub samples: usize,
}

/// Runs `net` over `stream` without resetting state and classifies every
/// segment by its summed output. Lanes are evaluated independently and in
/// parallel under `exec`.
pub fn evaluate_classification(
    net: &Network,
    stream: &SpikeStream,
    labels: &[usize],
    exec: Exec,
) -> Result<ClassifyReport> {
    let [time, lanes, f] = stream.shape();
    if f != net.input_features() {
        return Err(Error::dim("classification stream", &[f], &[net.input_features()]));
    }
    let k = net.output_features();
    let per_lane = exec.map(lanes, |lane| -> Result<(usize, f64, usize)> {
        let mut g = Graph::with_exec(Exec::Sequential);
        let bound = net.bind(&mut g);
        let keep = g.len();
        let mut state = net.init_state(&mut g, 1)?.values(&g);
        let mut sums = vec![0.0; k];
        let mut seg = 0;
        let (mut correct, mut loss, mut n) = (0, 0.0, 0);
        for t in 0..time {
            g.truncate(keep);
            let mut st = state.attach(&mut g);
            let row: Vec<f64> = (0..f).map(|j| stream.get(t, lane, j) as u8 as f64).collect();
            let x = g.constant(Tensor::new(vec![1, f], row)?);
            let y = net.step(&mut g, &bound, &mut st, x)?;
            state = st.values(&g);
            let Some(s) = stream.segments.get(seg) else { continue };
            if t >= s.start && t < s.end {
                for (a, v) in sums.iter_mut().zip(g.value(y).data()) {
                    *a += v;
                }
            }
            if t + 1 == s.end {
                if let Some(i) = s.samples[lane] {
                    let label = labels
                        .get(i)
                        .copied()
                        .ok_or_else(|| Error::Data(format!("no label for sample {i}")))?;
                    correct += (argmax_lowest(&sums) == label) as usize;
                    let max = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + sums.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    loss += lse - sums[label];
                    n += 1;
                }
                sums.iter_mut().for_each(|v| *v = 0.0);
                seg += 1;
            }
        }
        Ok((correct, loss, n))
    });
    let (mut correct, mut loss, mut n) = (0, 0.0, 0);
    for r in per_lane {
        let (c, l, m) = r?;
        correct += c;
        loss += l;
        n += m;
    }
    if n == 0 {
        return Err(Error::Data("stream has no labelled segments".into()));
    }
    Ok(ClassifyReport {
        accuracy: correct as f64 / n as f64,
        loss: loss / n as f64,
        samples: n,
    })
}

/// Unrolls `n_s` steps of a batch and returns the summed outputs.
pub fn count_outputs(g: &mut Graph, net: &Network, bound: &BoundNet, stream: &SpikeStream) -> Result<Var> {
    let mut st = net.init_state(g, stream.batch())?;
    let mut counts: Option<Var> = None;
    for t in 0..stream.time() {
        let x = g.constant(stream.frame(t));
        let y = net.step(g, bound, &mut st, x)?;
        counts = Some(match counts {
            Some(c) => g.add(c, y)?,
            None => y,
        });
    }
    counts.ok_or_else(|| Error::Config("presentation length n_s must be positive".into()))
}

pub struct ClassifyTask {
    /// `[N × features]` in `[0, 1]`.
    pub train_images: Tensor,
    pub train_labels: Vec<usize>,
    pub test_images: Tensor,
    pub test_labels: Vec<usize>,
    pub n_s: usize,
    pub n_p: usize,
    pub seed: u64,
    pub eval_lanes: usize,
}

impl ClassifyTask {
    /// Evaluation stream over the test set with pause `n_p`.
    pub fn test_stream(&self, n_p: usize, exec: Exec) -> Result<SpikeStream> {
        rate_encode_lanes(
            exec,
            &self.test_images,
            self.eval_lanes,
            self.n_s,
            n_p,
            derive_seed(self.seed, SEED_TAG_EVAL, 0),
        )
    }

    pub fn evaluate_with_pause(&self, net: &Network, n_p: usize, exec: Exec) -> Result<ClassifyReport> {
        evaluate_classification(net, &self.test_stream(n_p, exec)?, &self.test_labels, exec)
    }
}

impl Task for ClassifyTask {
    fn train_len(&self) -> usize {
        self.train_labels.len()
    }

    fn metric_name(&self) -> &'static str {
        "accuracy"
    }

    fn train_batch(&self, tr: &mut Trainer<'_>, batch: &[usize]) -> Result<f64> {
        let seed = derive_seed(self.seed, SEED_TAG_ENCODE, tr.epoch as u64);
        let stream = encode_batch(tr.exec(), &self.train_images, batch, self.n_s, seed)?;
        let labels: Vec<usize> = batch.iter().map(|&i| self.train_labels[i]).collect();
        tr.begin_forward()?;
        let mut g = tr.graph();
        let net = tr.net();
        let target = one_hot(&labels, net.output_features())?;
        let bound = net.bind(&mut g);
        let counts = count_outputs(&mut g, net, &bound, &stream)?;
        let loss = g.softmax_xent(counts, &target)?;
        tr.update(&mut g, &bound, loss)
    }

    fn evaluate(&self, net: &Network, exec: Exec) -> Result<Evaluation> {
        let r = self.evaluate_with_pause(net, self.n_p, exec)?;
        Ok(Evaluation {
            valid_loss: r.loss,
            metric: r.accuracy,
        })
    }
}
