//! Next-frame prediction on binary sequences (piano rolls).

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::Tensor;
use crate::units::{BoundNet, NetState, Network, StateValues};

use super::trainer::{Evaluation, Task, Trainer};

/// `exp(mean NLL)` in nats.
pub fn perplexity(nll_per_token: &[f64]) -> f64 {
    if nll_per_token.is_empty() {
        return f64::NAN;
    }
    (nll_per_token.iter().sum::<f64>() / nll_per_token.len() as f64).exp()
}

/// Number of prediction frames in a roll of `T` steps: `T - 1`.
fn frames(roll: &Tensor) -> usize {
    roll.rows().saturating_sub(1)
}

/// Unrolls steps `[t0, t1)` of the padded batch. Frame `t` feeds row `t` and
/// predicts row `t + 1`; padded frames get zero weight and the others
/// `scale`. Returns the weighted loss, or `None` when the window has no
/// valid frame.
#[allow(clippy::too_many_arguments)]
fn window_loss(
    g: &mut Graph,
    net: &Network,
    bound: &BoundNet,
    state: &mut NetState,
    rolls: &[&Tensor],
    t0: usize,
    t1: usize,
    scale: f64,
) -> Result<Option<Var>> {
    let f = net.input_features();
    let b = rolls.len();
    let mut total: Option<Var> = None;
    for t in t0..t1 {
        let mut x = vec![0.0; b * f];
        let mut y = vec![0.0; b * f];
        let mut w = vec![0.0; b];
        for (i, r) in rolls.iter().enumerate() {
            if t + 1 < r.rows() {
                x[i * f..(i + 1) * f].copy_from_slice(r.row(t));
                y[i * f..(i + 1) * f].copy_from_slice(r.row(t + 1));
                w[i] = scale;
            }
        }
        let xv = g.constant(Tensor::new(vec![b, f], x)?);
        let out = net.step(g, bound, state, xv)?;
        if w.iter().all(|&v| v == 0.0) {
            continue;
        }
        let target = Tensor::new(vec![b, f], y)?;
        let l = g.bernoulli_nll_weighted(out, &target, &w)?;
        total = Some(match total {
            Some(acc) => g.add(acc, l)?,
            None => l,
        });
    }
    Ok(total)
}

fn check_width(net: &Network, rolls: &[Tensor]) -> Result<()> {
    let f = net.input_features();
    if net.output_features() != f {
        return Err(Error::Config(format!(
            "next-frame prediction needs output width {} to equal input width {f}",
            net.output_features()
        )));
    }
    if let Some(r) = rolls.iter().find(|r| r.cols() != f) {
        return Err(Error::dim("sequence input", &[r.cols()], &[f]));
    }
    Ok(())
}

/// Mean frame NLL over every prediction frame of every sequence, and the
/// number of frames.
pub fn evaluate_sequence(net: &Network, rolls: &[Tensor], batch: usize, exec: Exec) -> Result<(f64, usize)> {
    check_width(net, rolls)?;
    let batch = batch.max(1);
    let groups: Vec<&[Tensor]> = rolls.chunks(batch).collect();
    let parts = exec.map(groups.len(), |i| -> Result<(f64, usize)> {
        let group: Vec<&Tensor> = groups[i].iter().collect();
        let n: usize = group.iter().map(|r| frames(r)).sum();
        let steps = group.iter().map(|r| frames(r)).max().unwrap_or(0);
        let mut g = Graph::with_exec(Exec::Sequential);
        let bound = net.bind(&mut g);
        let mut st = net.init_state(&mut g, group.len())?;
        let total = window_loss(&mut g, net, &bound, &mut st, &group, 0, steps, 1.0)?;
        Ok((total.map_or(0.0, |v| g.value(v).data()[0]), n))
    });
    let mut sum = 0.0;
    let mut count = 0;
    for p in parts {
        let (s, n) = p?;
        sum += s;
        count += n;
    }
    if count == 0 {
        return Err(Error::Data("no prediction frames to evaluate".into()));
    }
    Ok((sum / count as f64, count))
}

pub struct SequenceTask {
    pub train: Vec<Tensor>,
    pub valid: Vec<Tensor>,
    pub test: Vec<Tensor>,
    /// Truncation length; 0 unrolls the whole batch.
    pub window: usize,
    pub eval_batch: usize,
}

impl SequenceTask {
    pub fn new(train: Vec<Tensor>, valid: Vec<Tensor>, test: Vec<Tensor>, window: usize) -> Self {
        SequenceTask {
            train,
            valid,
            test,
            window,
            eval_batch: 32,
        }
    }
}

impl Task for SequenceTask {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn metric_name(&self) -> &'static str {
        "test_nll"
    }

    fn train_batch(&self, tr: &mut Trainer<'_>, batch: &[usize]) -> Result<f64> {
        let rolls: Vec<&Tensor> = batch.iter().map(|&i| &self.train[i]).collect();
        check_width(tr.net(), &self.train[..1])?;
        let steps = rolls.iter().map(|r| frames(r)).max().unwrap_or(0);
        let total: usize = rolls.iter().map(|r| frames(r)).sum();
        if total == 0 {
            return Ok(0.0);
        }
        let window = if self.window == 0 { steps } else { self.window };
        let mut carried: Option<StateValues> = None;
        let mut acc = 0.0;
        let mut t0 = 0;
        while t0 < steps {
            let t1 = (t0 + window).min(steps);
            let n: usize = rolls.iter().map(|r| frames(r).clamp(t0, t1) - t0).sum();
            tr.begin_forward()?;
            let mut g = tr.graph();
            let net = tr.net();
            let bound = net.bind(&mut g);
            let mut st = match &carried {
                Some(v) => v.attach(&mut g),
                None => net.init_state(&mut g, rolls.len())?,
            };
            let loss = window_loss(&mut g, net, &bound, &mut st, &rolls, t0, t1, 1.0 / n.max(1) as f64)?;
            carried = Some(st.values(&g));
            if let Some(loss) = loss {
                acc += tr.update(&mut g, &bound, loss)? * n as f64;
            }
            t0 = t1;
        }
        Ok(acc / total as f64)
    }

    fn evaluate(&self, net: &Network, exec: Exec) -> Result<Evaluation> {
        let (valid_loss, _) = evaluate_sequence(net, &self.valid, self.eval_batch, exec)?;
        let (metric, _) = evaluate_sequence(net, &self.test, self.eval_batch, exec)?;
        Ok(Evaluation { valid_loss, metric })
    }
}
