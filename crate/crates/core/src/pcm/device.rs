//! Single phase-change-memory device: gradual crystallizing SET pulses,
//! abrupt RESET, additive read noise and power-law drift.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn d_g_min() -> f64 {
    0.1
}
fn d_g_max() -> f64 {
    10.0
}
fn d_mu_set() -> f64 {
    0.2
}
fn d_sigma_set() -> f64 {
    0.06
}
fn d_sigma_read() -> f64 {
    0.05
}
fn d_sigma_reset() -> f64 {
    0.02
}
fn d_nu() -> f64 {
    0.03
}
fn d_t0() -> f64 {
    1.0
}
fn d_pulse_cap() -> u32 {
    20
}
fn d_threshold() -> f64 {
    0.9
}
fn d_weight_range() -> f64 {
    1.0
}
fn d_batch_seconds() -> f64 {
    1.0
}
fn d_true() -> bool {
    true
}
fn d_verify() -> usize {
    50
}

/// Device and array parameters. Conductances are in microsiemens, times in
/// simulated seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcmParams {
    #[serde(default = "d_g_min")]
    pub g_min: f64,
    #[serde(default = "d_g_max")]
    pub g_max: f64,
    /// Mean conductance increment per SET pulse.
    #[serde(default = "d_mu_set")]
    pub mu_set: f64,
    #[serde(default = "d_sigma_set")]
    pub sigma_set: f64,
    #[serde(default = "d_sigma_read")]
    pub sigma_read: f64,
    /// Spread of the conductance reached by a RESET, above `g_min`.
    #[serde(default = "d_sigma_reset")]
    pub sigma_reset: f64,
    /// Drift exponent; 0 disables drift.
    #[serde(default = "d_nu")]
    pub nu: f64,
    /// Drift reference time.
    #[serde(default = "d_t0")]
    pub t0: f64,
    #[serde(default = "d_pulse_cap")]
    pub pulse_cap: u32,
    /// A pair is rebalanced when either device exceeds this fraction of
    /// `g_max`.
    #[serde(default = "d_threshold")]
    pub rebalance_threshold: f64,
    /// Rebalance every this many batches; `None` rebalances once per epoch.
    #[serde(default)]
    pub rebalance_every: Option<usize>,
    /// Weight magnitude represented by the full differential range,
    /// `β = weight_range / (g_max - g_min)`.
    #[serde(default = "d_weight_range")]
    pub weight_range: f64,
    /// Simulated time that passes per training batch.
    #[serde(default = "d_batch_seconds")]
    pub batch_seconds: f64,
    /// Round updates to whole pulses. When off, an update moves the target
    /// conductance by exactly `|Δw| / β` (noise-free reference mode).
    #[serde(default = "d_true")]
    pub quantize: bool,
    /// Carry the sub-pulse remainder of each update to the next batch.
    #[serde(default)]
    pub accumulate_residual: bool,
    /// Program-and-verify rounds during rebalancing.
    #[serde(default = "d_verify")]
    pub verify_iterations: usize,
}

impl Default for PcmParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl PcmParams {
    /// Every noise source and drift switched off, no quantization.
    pub fn noise_free() -> Self {
        PcmParams {
            sigma_set: 0.0,
            sigma_read: 0.0,
            sigma_reset: 0.0,
            nu: 0.0,
            quantize: false,
            ..PcmParams::default()
        }
    }

    pub fn beta(&self) -> f64 {
        self.weight_range / (self.g_max - self.g_min)
    }

    /// Weight change of one mean SET pulse, `β μ_set`.
    pub fn pulse_weight(&self) -> f64 {
        self.beta() * self.mu_set
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.g_min >= 0.0
            && self.g_max > self.g_min
            && self.mu_set > 0.0
            && self.sigma_set >= 0.0
            && self.sigma_read >= 0.0
            && self.sigma_reset >= 0.0
            && self.nu >= 0.0
            && self.t0 > 0.0
            && self.weight_range > 0.0
            && self.batch_seconds >= 0.0
            && (0.0..=1.0).contains(&self.rebalance_threshold)
            && self.rebalance_every != Some(0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid PCM parameters: {self:?}")))
        }
    }
}

#[derive(Clone, Debug)]
pub struct PcmDevice {
    /// Conductance right after the last programming event.
    pub g_prog: f64,
    pub pulses: u32,
    pub programmed_at: f64,
    rng: ChaCha8Rng,
}

impl PartialEq for PcmDevice {
    fn eq(&self, other: &Self) -> bool {
        self.g_prog == other.g_prog && self.pulses == other.pulses && self.programmed_at == other.programmed_at
    }
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("finite sd").sample(rng)
}

impl PcmDevice {
    /// A device in the fully amorphous state, drawing noise from its own
    /// generator.
    pub fn new(p: &PcmParams, key: u64) -> Self {
        PcmDevice {
            g_prog: p.g_min,
            pulses: 0,
            programmed_at: 0.0,
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }

    pub fn restore(g_prog: f64, pulses: u32, programmed_at: f64, key: u64) -> Self {
        PcmDevice {
            g_prog,
            pulses,
            programmed_at,
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }

    /// Conductance at time `now` after drift.
    pub fn conductance(&self, p: &PcmParams, now: f64) -> f64 {
        if p.nu == 0.0 {
            return self.g_prog;
        }
        let elapsed = (now - self.programmed_at).max(0.0);
        (self.g_prog * ((elapsed + p.t0) / p.t0).powf(-p.nu)).max(p.g_min)
    }

    /// One noisy observation of the conductance.
    pub fn read(&mut self, p: &PcmParams, now: f64) -> f64 {
        let g = self.conductance(p, now);
        normal(&mut self.rng, g, p.sigma_read)
    }

    /// Applies `n` SET pulses; each adds a nonnegative Normal(μ, σ) step and
    /// the conductance saturates at `g_max`.
    pub fn set_pulses(&mut self, p: &PcmParams, n: u32, now: f64) {
        if n == 0 {
            return;
        }
        let mut g = self.conductance(p, now);
        for _ in 0..n {
            g = (g + normal(&mut self.rng, p.mu_set, p.sigma_set).max(0.0)).min(p.g_max);
        }
        self.g_prog = g;
        self.pulses += n;
        self.programmed_at = now;
    }

    /// Moves the conductance up by exactly `dg` (saturating).
    pub fn increase_exact(&mut self, p: &PcmParams, dg: f64, now: f64) {
        if dg <= 0.0 {
            return;
        }
        self.g_prog = (self.conductance(p, now) + dg).min(p.g_max);
        self.programmed_at = now;
    }

    /// RESET to near `g_min`.
    pub fn reset(&mut self, p: &PcmParams, now: f64) {
        let noise = normal(&mut self.rng, 0.0, p.sigma_reset).abs();
        self.g_prog = (p.g_min + noise).min(p.g_max);
        self.pulses = 0;
        self.programmed_at = now;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_pulses_add_mu() {
        let p = PcmParams {
            sigma_set: 0.0,
            nu: 0.0,
            ..PcmParams::default()
        };
        let mut d = PcmDevice::new(&p, 1);
        d.set_pulses(&p, 3, 0.0);
        assert!((d.conductance(&p, 5.0) - (0.1 + 3.0 * 0.2)).abs() < 1e-12);
        d.set_pulses(&p, 200, 0.0);
        assert_eq!(d.conductance(&p, 0.0), p.g_max);
    }

    #[test]
    fn drift_is_a_power_law_floored_at_g_min() {
        let p = PcmParams::default();
        let mut d = PcmDevice::new(&p, 2);
        d.increase_exact(&p, 4.9, 0.0);
        let g = d.conductance(&p, 99.0);
        assert!((g - 5.0 * 100f64.powf(-0.03)).abs() < 1e-12);
        let fresh = PcmDevice::new(&p, 3);
        assert_eq!(fresh.conductance(&p, 1e9), p.g_min);
    }

    #[test]
    fn default_params() {
        let p = PcmParams::default();
        assert_eq!((p.g_min, p.g_max, p.mu_set, p.sigma_set, p.sigma_read), (0.1, 10.0, 0.2, 0.06, 0.05));
        assert_eq!((p.nu, p.pulse_cap), (0.03, 20));
        assert!((p.beta() - 1.0 / 9.9).abs() < 1e-15);
        p.validate().unwrap();
    }
}
