//! Structural invariants of the pipeline, checked on random inputs.

mod common;

use proptest::prelude::*;

fn run(check: common::Check) -> Result<(), TestCaseError> {
    check.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn snn_pairs_are_lnn_pairs(seed in any::<u64>()) {
        run(common::snn_within_lnn(seed))?;
    }

    #[test]
    fn components_agree_with_bfs(seed in any::<u64>()) {
        run(common::components_match_bfs(seed))?;
    }

    #[test]
    fn merged_statistics_equal_batch_recomputation(seed in any::<u64>()) {
        run(common::merge_statistics_match_batch(seed))?;
    }

    #[test]
    fn merge_order_ignores_coordinate_scale(seed in any::<u64>(), gamma in prop::sample::select(vec![0.5, 3.0])) {
        run(common::merge_order_is_scale_free(seed, gamma))?;
    }

    #[test]
    fn metrics_match_brute_force_on_random_labels(
        labels in (7usize..=10).prop_flat_map(|n| (
            prop::collection::vec(0usize..4, n),
            prop::collection::vec(0usize..5, n),
        ))
    ) {
        run(common::metrics_match_oracles(&labels.0, &labels.1))?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn uploads_never_contain_raw_rows(seed in any::<u64>()) {
        run(common::uploads_hold_no_raw_rows(seed))?;
    }

    #[test]
    fn every_client_sends_exactly_one_message(seed in any::<u64>()) {
        run(common::one_message_per_client(seed))?;
    }
}

#[test]
fn metrics_match_brute_force_on_every_small_partition_pair() {
    for n in 1..=6 {
        common::metrics_exhaustive(n).unwrap();
    }
}
