mod common;

use snu::pcm::{PcmBackend, PcmParams};
use snu::training::{bptt_train, RunRecord, WeightBackend};
use snu::units::Network;
use snu::{Error, Exec};

fn train(params: PcmParams, epochs: usize, dump: Option<&std::path::Path>) -> PcmBackend {
    let task = common::sequence_task(6, 11);
    let cfg = common::adam(0.05, epochs, 2);
    let mut net = Network::new(common::sequence_spec(6, 5), 2).unwrap();
    let mut backend = PcmBackend::new(&net, params, 4).unwrap();
    if let Some(d) = dump {
        backend = backend.with_dump_dir(d);
    }
    let mut rec = RunRecord::new(2, "pcm".into(), "test_nll");
    bptt_train(&mut net, &task, &cfg, &mut backend, &mut rec, Exec::default()).unwrap();
    backend
}

#[test]
fn rebalance_schedule_follows_config() {
    // 12 samples in batches of 4: three batches per epoch.
    let per_epoch = train(PcmParams::default(), 2, None);
    assert_eq!(per_epoch.rebalances.len(), 2);
    let every_two = train(PcmParams { rebalance_every: Some(2), ..PcmParams::default() }, 2, None);
    assert_eq!(every_two.rebalances.len(), 3);
    let every_batch = train(PcmParams { rebalance_every: Some(1), ..PcmParams::default() }, 2, None);
    assert_eq!(every_batch.rebalances.len(), 6);
    assert_eq!(every_batch.now(), 6.0);
}

#[test]
fn histograms_written_per_layer_and_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let b = train(PcmParams::default(), 2, Some(dir.path()));
    for layer in 0..2 {
        for epoch in 1..=2 {
            let text = std::fs::read_to_string(dir.path().join(format!("hist_{layer}_{epoch}.csv"))).unwrap();
            assert_eq!(text.lines().count(), 51);
        }
    }
    b.save_crossbars(dir.path()).unwrap();
    for (id, cb) in b.crossbars() {
        let back = snu::pcm::crossbar_load(&dir.path().join(format!("crossbar_{}.pcm", id.layer))).unwrap();
        assert_eq!(back.conductances(b.now()), cb.conductances(b.now()));
    }
}

#[test]
fn shape_mismatch_is_a_config_error() {
    let net = Network::new(common::sequence_spec(6, 5), 0).unwrap();
    let mut other = Network::new(common::sequence_spec(6, 7), 0).unwrap();
    let mut b = PcmBackend::new(&net, PcmParams::default(), 0).unwrap();
    assert_eq!(b.weight_count(), 6 * 5 + 5 * 6);
    assert_eq!(b.device_count(), 2 * b.weight_count());
    assert!(matches!(b.prepare(&mut other), Err(Error::Config(_))));
}

#[test]
fn invalid_params_are_rejected() {
    let net = Network::new(common::sequence_spec(6, 5), 0).unwrap();
    let bad = PcmParams { g_min: 5.0, g_max: 1.0, ..PcmParams::default() };
    assert!(matches!(PcmBackend::new(&net, bad, 0), Err(Error::Config(_))));
}
