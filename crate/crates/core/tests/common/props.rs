//! Property checks shared by the property suites and the acceptance run.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use snu::autodiff::Graph;
use snu::encoding::rate::encode_sample;
use snu::pcm::{crossbar_from_bytes, crossbar_to_bytes, CrossbarPair, PcmParams};
use snu::training::checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes};
use snu::units::{
    lif_equivalence_check, DecayMode, InputFn, LayerKind, LayerSpec, Network, NetworkSpec, OutputFn, SnuLayer,
};
use snu::{Exec, Tensor};

pub type Check = Result<(), TestCaseError>;

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

#[derive(Clone, Debug)]
pub struct SnuCase {
    pub m: usize,
    pub n: usize,
    pub weights: Vec<f64>,
    pub decay: f64,
    pub bias: f64,
    pub inputs: Vec<Vec<f64>>,
}

pub fn snu_case() -> impl Strategy<Value = SnuCase> {
    (1usize..5, 1usize..5, 1usize..40).prop_flat_map(|(m, n, t)| {
        (
            proptest::collection::vec(-2.0f64..2.0, m * n),
            0.0f64..=1.0,
            -3.0f64..0.0,
            proptest::collection::vec(proptest::collection::vec(-1.0f64..2.0, m), t),
        )
            .prop_map(move |(weights, decay, bias, inputs)| SnuCase {
                m,
                n,
                weights,
                decay,
                bias,
                inputs,
            })
    })
}

impl SnuCase {
    fn layer(&self, decay: f64, w: impl Fn(f64) -> f64) -> SnuLayer {
        SnuLayer::new(
            Tensor::new(vec![self.m, self.n], self.weights.iter().map(|&v| w(v)).collect()).unwrap(),
            Tensor::scalar(decay),
            Tensor::vector(vec![self.bias; self.n]),
            InputFn::Relu,
            OutputFn::Step,
        )
        .unwrap()
    }

    fn xs(&self, x: impl Fn(f64) -> f64) -> Vec<Tensor> {
        self.inputs
            .iter()
            .map(|r| Tensor::new(vec![1, self.m], r.iter().map(|&v| x(v)).collect()).unwrap())
            .collect()
    }
}

/// `(s_t, y_t)` for every step.
fn trace(layer: &SnuLayer, xs: &[Tensor]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut g = Graph::new();
    let p = layer.bind(&mut g);
    let mut st = layer.zero_state(&mut g, 1);
    xs.iter()
        .map(|x| {
            let xv = g.constant(x.clone());
            layer.step(&mut g, &p, &mut st, xv).unwrap();
            (g.value(st.s).data().to_vec(), g.value(st.y).data().to_vec())
        })
        .collect()
}

/// Decay 1 and nonnegative drive: the state never falls between spikes.
pub fn if_monotone(c: &SnuCase) -> Check {
    let tr = trace(&c.layer(1.0, f64::abs), &c.xs(f64::abs));
    for t in 1..tr.len() {
        for j in 0..c.n {
            if tr[t - 1].1[j] == 0.0 && tr[t].0[j] < tr[t - 1].0[j] {
                return Err(fail(format!("unit {j} fell from {} to {} at step {t}", tr[t - 1].0[j], tr[t].0[j])));
            }
        }
    }
    Ok(())
}

/// After a spike the state is rebuilt from the input alone.
pub fn reset_to_input(c: &SnuCase) -> Check {
    let layer = c.layer(c.decay, |v| v);
    let xs = c.xs(|v| v);
    let tr = trace(&layer, &xs);
    for t in 1..tr.len() {
        let fresh = trace(&layer, &xs[t..=t]);
        for j in 0..c.n {
            if tr[t - 1].1[j] == 1.0 && tr[t].0[j] != fresh[0].0[j] {
                return Err(fail(format!("unit {j} kept carry-over after a spike at step {t}")));
            }
        }
    }
    Ok(())
}

/// With a ReLU input function the state is never negative.
pub fn relu_nonnegative(c: &SnuCase) -> Check {
    let tr = trace(&c.layer(c.decay, |v| v), &c.xs(|v| v));
    match tr.iter().flat_map(|(s, _)| s).find(|&&s| s < 0.0) {
        Some(s) => Err(fail(format!("negative state {s}"))),
        None => Ok(()),
    }
}

pub fn bernoulli_case() -> impl Strategy<Value = (f64, usize, u64)> {
    (0.01f64..0.99, 1usize..40, any::<u64>())
}

/// Spike counts of one pixel value over many pixels stay within 3σ.
pub fn bernoulli_rate((p, n_s, seed): (f64, usize, u64)) -> Check {
    let pixels = vec![p; 2000];
    let spikes = encode_sample(&pixels, n_s, seed, 0);
    let count = spikes.iter().filter(|&&s| s).count() as f64;
    let trials = (pixels.len() * n_s) as f64;
    let sigma = (trials * p * (1.0 - p)).sqrt();
    if (count - trials * p).abs() > 3.0 * sigma {
        return Err(fail(format!("{count} spikes, expected {} ± {}", trials * p, 3.0 * sigma)));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub enum PcmOp {
    Program(Vec<f64>),
    Read,
    Rebalance,
    Advance(f64),
}

pub fn pcm_ops(weights: usize) -> impl Strategy<Value = Vec<PcmOp>> {
    let op = prop_oneof![
        4 => proptest::collection::vec(-1.5f64..1.5, weights).prop_map(PcmOp::Program),
        1 => Just(PcmOp::Read),
        1 => Just(PcmOp::Rebalance),
        1 => (0.0f64..1e4).prop_map(PcmOp::Advance),
    ];
    proptest::collection::vec(op, 1..40)
}

fn in_bounds(cb: &CrossbarPair, now: f64) -> Check {
    let p = &cb.params;
    let (gp, gm) = cb.conductances(now);
    let (plus, minus) = cb.devices();
    for (g, prog) in gp.iter().chain(&gm).zip(plus.iter().chain(minus).map(|d| d.g_prog)) {
        if !(p.g_min..=p.g_max).contains(g) || !(p.g_min..=p.g_max).contains(&prog) {
            return Err(fail(format!("conductance {g} (programmed {prog}) outside bounds")));
        }
    }
    Ok(())
}

/// Conductances stay in `[g_min, g_max]` and programming never lowers one.
pub fn pcm_bounds(ops: &[PcmOp]) -> Check {
    let mut cb = CrossbarPair::new(&[2, 3], PcmParams::default(), 7, 0).unwrap();
    let mut now = 0.0;
    for op in ops {
        match op {
            PcmOp::Program(d) => {
                let before = cb.conductances(now);
                cb.program(d, now).unwrap();
                let after = cb.conductances(now);
                let rising = before.0.iter().chain(&before.1).zip(after.0.iter().chain(&after.1));
                if let Some((a, b)) = rising.into_iter().find(|(a, b)| b < a) {
                    return Err(fail(format!("programming lowered a conductance from {a} to {b}")));
                }
            }
            PcmOp::Read => {
                cb.read(now);
            }
            PcmOp::Rebalance => {
                cb.rebalance(now);
            }
            PcmOp::Advance(dt) => now += dt,
        }
        in_bounds(&cb, now)?;
    }
    Ok(())
}

pub fn pulse_pairs() -> impl Strategy<Value = (Vec<(u32, u32)>, u64)> {
    (proptest::collection::vec((0u32..60, 0u32..60), 1..30), any::<u64>())
}

/// Rebalancing moves no effective weight by more than `β μ + 6 β σ_set`.
pub fn rebalance_preserves((pulses, seed): &(Vec<(u32, u32)>, u64)) -> Check {
    let p = PcmParams::default();
    let mut cb = CrossbarPair::new(&[1, pulses.len()], p.clone(), *seed, 0).unwrap();
    {
        let (plus, minus) = cb.devices_mut();
        for (i, &(a, b)) in pulses.iter().enumerate() {
            plus[i].set_pulses(&p, a, 0.0);
            minus[i].set_pulses(&p, b, 0.0);
        }
    }
    let before = cb.effective(0.0);
    cb.rebalance(0.0);
    let after = cb.effective(0.0);
    let bound = p.beta() * p.mu_set + 6.0 * p.beta() * p.sigma_set;
    for (i, (a, b)) in before.data().iter().zip(after.data()).enumerate() {
        if (a - b).abs() > bound {
            return Err(fail(format!("weight {i} moved from {a} to {b}, bound {bound}")));
        }
    }
    in_bounds(&cb, 0.0)
}

/// A run of positive updates never lowers the effective weight by more than
/// the read noise.
pub fn positive_updates_never_decrease((deltas, seed): &(Vec<f64>, u64)) -> Check {
    let p = PcmParams::default();
    let mut cb = CrossbarPair::new(&[1, 1], p.clone(), *seed, 0).unwrap();
    let tol = 3.0 * 2f64.sqrt() * p.beta() * p.sigma_read;
    let mut last = cb.effective(0.0).data()[0];
    for d in deltas {
        cb.program(&[*d], 0.0).unwrap();
        let w = cb.effective(0.0).data()[0];
        if w < last - tol {
            return Err(fail(format!("weight fell from {last} to {w}")));
        }
        last = w;
    }
    Ok(())
}

pub fn positive_deltas() -> impl Strategy<Value = (Vec<f64>, u64)> {
    (proptest::collection::vec(0.0f64..0.2, 1..100), any::<u64>())
}

pub fn network_spec() -> impl Strategy<Value = (NetworkSpec, u64)> {
    let hidden = (prop_oneof![Just(LayerKind::Snu), Just(LayerKind::Ssnu)], 1usize..12, any::<bool>());
    (
        1usize..10,
        proptest::collection::vec(hidden, 1..3),
        prop_oneof![Just(None), Just(Some(LayerKind::DenseSigmoid)), Just(Some(LayerKind::DenseSoftmax))],
        1usize..8,
        any::<u64>(),
    )
        .prop_map(|(input, hidden, out, k, seed)| {
            let mut layers: Vec<LayerSpec> = hidden
                .into_iter()
                .map(|(kind, units, per_unit)| {
                    let mut l = LayerSpec::new(kind, units);
                    if per_unit {
                        l.decay_mode = DecayMode::PerUnit;
                    }
                    l
                })
                .collect();
            if let Some(kind) = out {
                layers.push(LayerSpec::new(kind, k));
            }
            (NetworkSpec { input: vec![input], layers }, seed)
        })
}

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

pub fn checkpoint_round_trip((spec, seed): &(NetworkSpec, u64)) -> Check {
    let net = Network::new(spec.clone(), *seed).unwrap();
    let bytes = checkpoint_to_bytes(&net, *seed).unwrap();
    let (back, _) = checkpoint_from_bytes(&bytes, Some(spec)).map_err(|e| fail(e.to_string()))?;
    for ((id, a), (_, b)) in net.tensors().into_iter().zip(back.tensors()) {
        if bits(a) != bits(b) || a.shape() != b.shape() {
            return Err(fail(format!("{id} changed in the round trip")));
        }
    }
    Ok(())
}

pub fn crossbar_case() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, u64)> {
    (1usize..5, 1usize..6, any::<u64>()).prop_flat_map(|(r, c, seed)| {
        (
            Just(r),
            proptest::collection::vec(-1.0f64..1.0, r * c),
            proptest::collection::vec(-0.3f64..0.3, r * c),
            Just(seed),
        )
    })
}

pub fn crossbar_round_trip((rows, w, d, seed): &(usize, Vec<f64>, Vec<f64>, u64)) -> Check {
    let shape = vec![*rows, w.len() / rows];
    let t = Tensor::new(shape, w.clone()).unwrap();
    let mut cb = CrossbarPair::from_weights(&t, PcmParams::default(), *seed, 1, 0.0).unwrap();
    cb.program(d, 5.0).unwrap();
    cb.rebalance(9.0);
    let back = crossbar_from_bytes(&crossbar_to_bytes(&cb).unwrap()).map_err(|e| fail(e.to_string()))?;
    if back != cb || bits(&back.effective(20.0)) != bits(&cb.effective(20.0)) {
        return Err(fail("crossbar state changed in the round trip".into()));
    }
    Ok(())
}

pub fn lif_case() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1usize..8, 1usize..8, 1usize..400, any::<u64>())
}

pub fn lif_equivalent((neurons, inputs, steps, seed): (usize, usize, usize, u64)) -> Check {
    let r = lif_equivalence_check(neurons, inputs, steps, seed, Exec::Sequential).unwrap();
    if r.mismatches > 0 {
        return Err(fail(format!("{r:?}")));
    }
    Ok(())
}

fn ulps(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

/// SNU → LIF → SNU returns the same weights and bias within 1 ulp and the
/// same decay within 2⁻⁵².
pub fn lif_round_trip(seed: u64) -> Check {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let cfg = snu::units::equivalence::random_lif_config(&mut rng, 4);
    let layer = snu::units::lif_to_snu(&cfg).unwrap();
    let back = snu::units::snu_to_lif(&layer, cfg.delta_t, cfg.capacitance, false).map_err(|e| fail(e.to_string()))?;
    let again = snu::units::lif_to_snu(&back).unwrap();
    let pairs = layer.weight.data().iter().chain(layer.bias.data());
    let pairs2 = again.weight.data().iter().chain(again.bias.data());
    if let Some((a, b)) = pairs.zip(pairs2).find(|(a, b)| ulps(**a, **b) > 1) {
        return Err(fail(format!("{a} became {b}")));
    }
    let (d, d2) = (layer.decay.data()[0], again.decay.data()[0]);
    if (d - d2).abs() > f64::EPSILON {
        return Err(fail(format!("decay {d} became {d2}")));
    }
    Ok(())
}
