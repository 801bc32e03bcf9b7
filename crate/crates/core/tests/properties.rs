mod common;

use common::props::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(common::config(96))]

    #[test]
    fn integrate_and_fire_state_is_monotone(c in snu_case()) {
        if_monotone(&c)?;
    }

    #[test]
    fn spike_resets_state_to_input(c in snu_case()) {
        reset_to_input(&c)?;
    }

    #[test]
    fn relu_state_is_nonnegative(c in snu_case()) {
        relu_nonnegative(&c)?;
    }

    #[test]
    fn rate_encoder_matches_bernoulli_statistics(c in bernoulli_case()) {
        bernoulli_rate(c)?;
    }

    #[test]
    fn conductances_stay_in_bounds(ops in pcm_ops(6)) {
        pcm_bounds(&ops)?;
    }

    #[test]
    fn rebalance_preserves_effective_weights(c in pulse_pairs()) {
        rebalance_preserves(&c)?;
    }

    #[test]
    fn positive_programming_never_lowers_weight(c in positive_deltas()) {
        positive_updates_never_decrease(&c)?;
    }

    #[test]
    fn checkpoints_round_trip(c in network_spec()) {
        checkpoint_round_trip(&c)?;
    }

    #[test]
    fn crossbar_dumps_round_trip(c in crossbar_case()) {
        crossbar_round_trip(&c)?;
    }

    #[test]
    fn snu_matches_lif_oracle(c in lif_case()) {
        lif_equivalent(c)?;
    }
}

proptest! {
    #![proptest_config(common::config(256))]

    #[test]
    fn lif_parameters_round_trip(seed in any::<u64>()) {
        lif_round_trip(seed)?;
    }
}
