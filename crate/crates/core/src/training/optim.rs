//! First-order optimizers. Each step yields a parameter delta; applying it
//! is the weight backend's job.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::ParamId;

fn default_rho() -> f64 {
    0.9
}

fn default_eps() -> f64 {
    1e-8
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
    },
    Rmsprop {
        lr: f64,
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

impl OptimizerConfig {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Rmsprop { lr, .. } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }

    /// Zero is accepted (the parameters then never move); negative or
    /// non-finite rates are not.
    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be nonnegative and finite, got {lr}")));
        }
        match *self {
            OptimizerConfig::Rmsprop { rho, eps, .. } if !((0.0..1.0).contains(&rho) && eps > 0.0) => {
                Err(Error::Config("rmsprop needs 0 <= rho < 1 and eps > 0".into()))
            }
            OptimizerConfig::Adam { beta1, beta2, eps, .. }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                Err(Error::Config("adam needs betas in [0, 1) and eps > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    slots: BTreeMap<ParamId, Slot>,
    t: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Optimizer {
            cfg,
            slots: BTreeMap::new(),
            t: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Starts a new update; call once per batch before the per-parameter
    /// [`Optimizer::delta`] calls.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Delta for one parameter given its gradient.
    pub fn delta(&mut self, id: ParamId, grad: &[f64]) -> Vec<f64> {
        let slot = self.slots.entry(id).or_insert_with(|| Slot {
            m: vec![0.0; grad.len()],
            v: vec![0.0; grad.len()],
        });
        match self.cfg {
            OptimizerConfig::Sgd { lr } => grad.iter().map(|g| -lr * g).collect(),
            OptimizerConfig::Rmsprop { lr, rho, eps } => grad
                .iter()
                .zip(slot.v.iter_mut())
                .map(|(&g, v)| {
                    *v = rho * *v + (1.0 - rho) * g * g;
                    -lr * g / (v.sqrt() + eps)
                })
                .collect(),
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                let t = self.t.max(1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                grad.iter()
                    .zip(slot.m.iter_mut().zip(slot.v.iter_mut()))
                    .map(|(&g, (m, v))| {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        -lr * (*m / c1) / ((*v / c2).sqrt() + eps)
                    })
                    .collect()
            }
        }
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [(ParamId, Vec<f64>)], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|(_, g)| g.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::ParamName;

    fn id() -> ParamId {
        ParamId::new(0, ParamName::Weight)
    }

    #[test]
    fn sgd_step() {
        let mut o = Optimizer::new(OptimizerConfig::Sgd { lr: 1.0 }).unwrap();
        o.begin_step();
        assert_eq!(o.delta(id(), &[0.5]), vec![-0.5]);
    }

    #[test]
    fn rmsprop_first_step_magnitude() {
        let lr = 0.01;
        let mut o = Optimizer::new(OptimizerConfig::Rmsprop { lr, rho: 0.9, eps: 1e-8 }).unwrap();
        o.begin_step();
        let d = o.delta(id(), &[0.3, -2.0]);
        let expected = lr / (1.0f64 - 0.9).sqrt();
        assert!((expected - 3.162 * lr).abs() < 1e-5);
        assert!((d[0] + expected).abs() < 1e-6 * lr);
        assert!((d[1] - expected).abs() < 1e-6 * lr);
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut o = Optimizer::new(OptimizerConfig::Adam {
            lr: 0.003,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        })
        .unwrap();
        o.begin_step();
        for d in o.delta(id(), &[1e-2, -5.0, 40.0]) {
            assert!((d.abs() - 0.003).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_negative_rate() {
        assert!(Optimizer::new(OptimizerConfig::Sgd { lr: -1.0 }).is_err());
        assert!(Optimizer::new(OptimizerConfig::Sgd { lr: 0.0 }).is_ok());
    }

    #[test]
    fn clipping() {
        let mut g = vec![(id(), vec![3.0, 4.0])];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0].1[0] - 0.6).abs() < 1e-15);
        let mut g = vec![(id(), vec![0.3])];
        clip_global_norm(&mut g, 1.0);
        assert_eq!(g[0].1, vec![0.3]);
    }
}
