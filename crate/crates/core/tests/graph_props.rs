use std::collections::BTreeSet;

use mosedti_core::kgraph::{KgOptions, KnowledgeGraph};
use proptest::prelude::*;

/// Entities `d*`, `t*` and `e*`; every drug and target appears in some triple.
fn graph() -> impl Strategy<Value = (Vec<(String, String, String)>, Vec<String>, Vec<String>)> {
    (1usize..6, 1usize..6, 1usize..8).prop_flat_map(|(nd, nt, ne)| {
        let names: Vec<String> = (0..nd)
            .map(|i| format!("d{i}"))
            .chain((0..nt).map(|i| format!("t{i}")))
            .chain((0..ne).map(|i| format!("e{i}")))
            .collect();
        let n = names.len();
        let edge = (0..n, 0..3usize, 0..n);
        proptest::collection::vec(edge, 0..60).prop_map(move |edges| {
            let mut triples: Vec<(String, String, String)> = edges
                .into_iter()
                .map(|(h, r, t)| (names[h].clone(), format!("r{r}"), names[t].clone()))
                .collect();
            for name in &names[..nd + nt] {
                triples.push((name.clone(), "anchor".into(), "e0".into()));
            }
            let drugs = (0..nd).map(|i| format!("d{i}")).collect();
            let targets = (0..nt).map(|i| format!("t{i}")).collect();
            (triples, drugs, targets)
        })
    })
}

fn build(t: &[(String, String, String)], d: &[String], g: &[String]) -> KnowledgeGraph {
    KnowledgeGraph::from_triples(t.iter().cloned(), d, g, KgOptions::default()).unwrap()
}

proptest! {
    #[test]
    fn leakage_filter_is_exhaustive_and_idempotent((t, d, g) in graph()) {
        let kg = build(&t, &d, &g);
        let once = kg.remove_dti_leakage();
        let twice = once.remove_dti_leakage();
        prop_assert_eq!(once.triples(), twice.triples());
        let drugs: BTreeSet<&str> = d.iter().map(String::as_str).collect();
        let targets: BTreeSet<&str> = g.iter().map(String::as_str).collect();
        for tr in once.triples() {
            let (h, tl) = (once.entities.id(tr.head), once.entities.id(tr.tail));
            prop_assert!(!(drugs.contains(h) && targets.contains(tl)));
            prop_assert!(!(targets.contains(h) && drugs.contains(tl)));
        }
        // Only drug-target links were removed.
        for tr in kg.triples() {
            if !once.contains(tr) {
                prop_assert!(kg.is_drug_target_link(tr));
            }
        }
        prop_assert_eq!(once.entities.len(), kg.entities.len());
    }

    #[test]
    fn vocabularies_are_bijections((t, d, g) in graph()) {
        let kg = build(&t, &d, &g);
        for v in [&kg.entities, &kg.relations] {
            for (i, id) in v.ids().iter().enumerate() {
                prop_assert_eq!(v.get(id), Some(i));
                prop_assert_eq!(v.id(i), id.as_str());
            }
        }
    }
}
