use std::collections::BTreeSet;

use proptest::prelude::*;

use sgr_core::graph::build_graph;
use sgr_core::projection::{DistanceBin, RelationConfig, Sector};
use sgr_core::query::{vocab, AttributeConstraint, RelationalConstraint, StructuredQuery};
use sgr_core::search::{execute, phase1_filter};
use sgr_core::synth::{gen_scene, CameraKind};

fn attrs() -> impl Strategy<Value = Vec<AttributeConstraint>> {
    let per_key: Vec<_> = vocab::KEYS
        .iter()
        .map(|k| {
            proptest::option::of(proptest::sample::select(vocab::values(k).unwrap().to_vec()))
                .prop_map(move |v| v.map(|v| AttributeConstraint::new(k, v)))
        })
        .collect();
    per_key.prop_map(|vs| vs.into_iter().flatten().collect())
}

fn relation() -> impl Strategy<Value = RelationalConstraint> {
    (0u8..3, 0usize..8, 0usize..3, attrs()).prop_map(|(kind, s, b, related)| match kind {
        0 => RelationalConstraint::robot(Some(Sector::ALL[s]), None),
        1 => RelationalConstraint::person(None, Some(DistanceBin::ALL[b]), related),
        _ => RelationalConstraint::adjacent_to(related),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phase1_matches_brute_force(seed in 0u64..500, anchor in attrs()) {
        let (_, bundle) = gen_scene(seed, 50, CameraKind::Pinhole).unwrap();
        let graph = build_graph(&bundle, &RelationConfig::default());
        let got: Vec<_> = phase1_filter(&graph, &anchor).iter().map(|c| c.node_id).collect();
        let want: Vec<_> = graph
            .nodes()
            .iter()
            .filter(|n| {
                let hits = anchor.iter().filter(|c| n.attributes.get(&c.key) == Some(c.value.as_str())).count();
                anchor.is_empty() || 2 * hits > anchor.len()
            })
            .map(|n| n.id)
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn extra_relation_never_adds_results(
        seed in 0u64..500,
        anchor in attrs(),
        rels in proptest::collection::vec(relation(), 0..3),
        extra in relation(),
    ) {
        let (_, bundle) = gen_scene(seed, 20, CameraKind::Cylindrical).unwrap();
        let graph = build_graph(&bundle, &RelationConfig::default());
        let base = StructuredQuery::vg(anchor.clone(), rels.clone());
        let mut more = rels;
        more.push(extra);
        let narrowed = StructuredQuery::vg(anchor, more);
        let a: BTreeSet<_> = execute(&graph, &base).node_ids.into_iter().collect();
        let b: BTreeSet<_> = execute(&graph, &narrowed).node_ids.into_iter().collect();
        prop_assert!(b.is_subset(&a));
    }
}
