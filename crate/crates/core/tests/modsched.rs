mod common;

use common::sched::run_sched_oracle;
use proptest::prelude::*;

#[test]
fn ten_thousand_ops_match_the_model() {
    let st = run_sched_oracle(7, 10_000, 16, 8);
    assert!(st.clean(), "{st:?}");
    assert!(st.grants > 500 && st.releases > 500, "{st:?}");
}

#[test]
fn tiny_machine() {
    let st = run_sched_oracle(3, 5_000, 1, 1);
    assert!(st.clean(), "{st:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_machines_match_the_model(seed in any::<u64>(), c in 1usize..20, b in 0usize..10) {
        let st = run_sched_oracle(seed, 1_000, c, b);
        prop_assert!(st.clean(), "{:?}", st);
    }
}
