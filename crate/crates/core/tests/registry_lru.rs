mod oracles;

use dmoe_core::expert_registry::{ExpertRegistry, RegistryError};
use dmoe_core::LogicalTime;
use oracles::lru::{check_sequence, op, record, BASE};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn lru_matches_brute_force_oracle(
        k in prop::sample::select(vec![1usize, 2, 3, 5]),
        ops in prop::collection::vec(op(), 1..50),
    ) {
        check_sequence(k, &ops)?;
    }
}

#[test]
fn empty_registry_renders_base_only() {
    let reg = ExpertRegistry::new(3).unwrap();
    let doc = reg.render_manifest(BASE);
    assert_eq!(doc.rendered, BASE);
    assert!(doc.expert_sections.is_empty());
}

#[test]
fn zero_capacity_is_rejected() {
    assert_eq!(ExpertRegistry::new(0), Err(RegistryError::ZeroCapacity));
}

#[test]
fn all_busy_defers_hydration() {
    let mut reg = ExpertRegistry::new(1).unwrap();
    reg.hydrate(&record(0), LogicalTime(1)).unwrap();
    reg.mark_busy("Kit0Expert").unwrap();
    let err = reg.hydrate(&record(1), LogicalTime(2)).unwrap_err();
    assert_eq!(err, RegistryError::Deferred);
    assert!(err.is_retryable());
    assert_eq!(reg.experts()[0].name, "Kit0Expert");
}
