#![allow(dead_code)]

pub mod props;

use proptest::test_runner::{Config, RngSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use snu::training::{OptimizerConfig, SequenceTask, TrainConfig};
use snu::units::{LayerKind, LayerSpec, NetworkSpec};
use snu::Tensor;

/// Reproducible proptest configuration.
pub fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..Config::default()
    }
}

/// Random sparse binary rolls of random length.
pub fn synthetic_rolls(n: usize, max_len: usize, features: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(3..=max_len);
            let data = (0..len * features).map(|_| rng.random_bool(0.15) as u8 as f64).collect();
            Tensor::new(vec![len, features], data).unwrap()
        })
        .collect()
}

pub fn sequence_spec(features: usize, hidden: usize) -> NetworkSpec {
    NetworkSpec {
        input: vec![features],
        layers: vec![
            LayerSpec::new(LayerKind::Snu, hidden),
            LayerSpec::new(LayerKind::DenseSigmoid, features),
        ],
    }
}

pub fn sequence_task(features: usize, seed: u64) -> SequenceTask {
    SequenceTask::new(
        synthetic_rolls(12, 10, features, seed),
        synthetic_rolls(4, 10, features, seed + 1),
        synthetic_rolls(4, 10, features, seed + 2),
        0,
    )
}

pub fn adam(lr: f64, epochs: usize, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(OptimizerConfig::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }, epochs);
    cfg.batch_size = 4;
    cfg.seed = seed;
    cfg
}
