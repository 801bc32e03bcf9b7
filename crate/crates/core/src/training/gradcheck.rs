//! Central finite-difference check of BPTT gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::Tensor;
use crate::units::{BoundNet, Network, ParamId};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub worst: Option<(ParamId, usize)>,
    pub checked: usize,
}

/// Compares the analytic gradient of `loss` with central differences of
/// step `h` for every trainable scalar. Perturbed evaluations run in
/// parallel under `exec`.
pub fn gradcheck<F>(net: &Network, loss: F, h: f64, exec: Exec) -> Result<GradReport>
where
    F: Fn(&mut Graph, &Network, &BoundNet) -> Result<Var> + Sync,
{
    let mut g = Graph::with_exec(Exec::Sequential);
    let bound = net.bind(&mut g);
    let root = loss(&mut g, net, &bound)?;
    g.backward(root)?;
    let mut analytic = Vec::new();
    let mut coords = Vec::new();
    for &(id, v) in &bound.params {
        let grad = g.grad(v).ok_or_else(|| Error::Internal(format!("no gradient for {id}")))?;
        for (i, &a) in grad.iter().enumerate() {
            coords.push((id, i));
            analytic.push(a);
        }
    }
    let eval = |n: &Network| -> Result<f64> {
        let mut g = Graph::with_exec(Exec::Sequential);
        let b = n.bind(&mut g);
        let l = loss(&mut g, n, &b)?;
        Ok(g.value(l).data()[0])
    };
    let numeric = exec.map(coords.len(), |k| -> Result<f64> {
        let (id, i) = coords[k];
        let mut n = net.clone();
        let x = n.param(id).expect("bound param").data()[i];
        n.param_mut(id).expect("bound param").data_mut()[i] = x + h;
        let up = eval(&n)?;
        n.param_mut(id).expect("bound param").data_mut()[i] = x - h;
        let down = eval(&n)?;
        Ok((up - down) / (2.0 * h))
    });
    let mut report = GradReport {
        max_rel_error: 0.0,
        worst: None,
        checked: coords.len(),
    };
    for (k, num) in numeric.into_iter().enumerate() {
        let e = relative_error(analytic[k], num?);
        if e > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = e;
            report.worst = Some(coords[k]);
        }
    }
    Ok(report)
}

/// A random regression problem over `steps` time steps: inputs in `(-2, 2)`
/// and targets in `(0, 1)`.
#[derive(Clone, Debug)]
pub struct ToyProblem {
    pub inputs: Vec<Tensor>,
    pub targets: Vec<Tensor>,
}

impl ToyProblem {
    pub fn random(net: &Network, batch: usize, steps: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k) = (net.input_features(), net.output_features());
        let mut draw = |shape: [usize; 2], lo: f64, hi: f64| {
            let data = (0..shape[0] * shape[1]).map(|_| rng.random_range(lo..hi)).collect();
            Tensor::new(shape.to_vec(), data).expect("toy shape")
        };
        let inputs = (0..steps).map(|_| draw([batch, m], -2.0, 2.0)).collect();
        let targets = (0..steps).map(|_| draw([batch, k], 0.0, 1.0)).collect();
        ToyProblem { inputs, targets }
    }

    /// Sum over steps of the squared output error.
    pub fn loss(&self, g: &mut Graph, net: &Network, bound: &BoundNet) -> Result<Var> {
        let batch = self.inputs.first().map_or(0, |x| x.rows());
        let mut st = net.init_state(g, batch)?;
        let mut total: Option<Var> = None;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let xv = g.constant(x.clone());
            let out = net.step(g, bound, &mut st, xv)?;
            let yv = g.constant(y.clone());
            let d = g.sub(out, yv)?;
            let sq = g.mul(d, d)?;
            let s = g.sum(sq);
            total = Some(match total {
                Some(t) => g.add(t, s)?,
                None => s,
            });
        }
        total.ok_or_else(|| Error::Config("toy problem needs at least one step".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{DecayMode, LayerKind, LayerSpec, NetworkSpec};

    #[test]
    fn ssnu_two_step_unroll_matches_finite_differences() {
        let mut hidden = LayerSpec::new(LayerKind::Ssnu, 3);
        hidden.decay_mode = DecayMode::PerUnit;
        let spec = NetworkSpec {
            input: vec![2],
            layers: vec![hidden, LayerSpec::new(LayerKind::Ssnu, 2)],
        };
        let net = Network::new(spec, 4).unwrap();
        let toy = ToyProblem::random(&net, 2, 2, 9);
        let r = gradcheck(&net, |g, n, b| toy.loss(g, n, b), DEFAULT_STEP, Exec::Sequential).unwrap();
        assert_eq!(r.checked, 3 * 2 + 3 + 3 + 3 * 2 + 2);
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 1e-6).abs() < 1e-18);
    }
}
