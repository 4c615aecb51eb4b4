use std::collections::BTreeSet;

use mosedti_core::dataset::few_shot_split;
use mosedti_core::kg_embed::{pretrain, EmbedConfig, EntityEmbeddingTable};
use mosedti_core::moe::{Availability, Catalog, ModelConfig, MoseModel, Pair};
use mosedti_core::mol_encoder::GnnConfig;
use mosedti_core::rng::stream;
use mosedti_core::seq_encoder::CnnConfig;
use mosedti_core::synergy::{
    joint_negatives, needed_negatives, rank_order, run_training, sample_candidates, select_joint, select_pseudo_labels,
    stage_loss, synergize_loss, Expert, Head, SynergyConfig, TrainingData, WeightedExamples,
};
use mosedti_core::synth::{SynthConfig, SyntheticWorld};
use mosedti_core::{Tape, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn pairs(prefix: usize, n: usize) -> Vec<Pair> {
    (0..n).map(|i| Pair::new(prefix + i, prefix)).collect()
}

fn scores(seed: u64, n: usize, levels: u32) -> Vec<f64> {
    let mut r = stream(seed, 1);
    (0..n).map(|_| r.gen_range(0..levels) as f64 / levels as f64).collect()
}

proptest! {
    #[test]
    fn stage_batches_balance(gamma in 1u32..6, p in 1usize..30, pp in 0usize..40, n in 0usize..120, extra in 0usize..20, seed in any::<u64>()) {
        let want = gamma as i64 * p as i64 + pp as i64 - n as i64;
        prop_assume!(want >= 0);
        let (m, clamped) = needed_negatives(gamma, p, pp, n);
        prop_assert_eq!(m as i64, want);
        prop_assert!(!clamped);
        let size = pp + m + extra;
        let pool = pairs(1000, size);
        let beta = (pp as f64 + 0.5) / size.max(1) as f64;
        let batch = select_pseudo_labels(Expert::Intrinsic, &pool, &scores(seed, size, 5), beta, m).unwrap();
        let ex = WeightedExamples::new(&pairs(0, p), &pairs(200, n), &batch.positives, &batch.negatives, gamma);
        prop_assert_eq!(ex.positive_weight(), ex.negative_weight());
    }

    #[test]
    fn pseudo_labels_are_disjoint_and_ordered(n in 1usize..200, beta in 0.0f64..0.5, m_frac in 0.0f64..0.5, levels in 1u32..8, seed in any::<u64>()) {
        let pool = pairs(0, n);
        let s = scores(seed, n, levels);
        let m = (m_frac * n as f64) as usize;
        let batch = select_pseudo_labels(Expert::Extrinsic, &pool, &s, beta, m).unwrap();
        prop_assert_eq!(batch.positives.len(), (beta * n as f64).floor() as usize);
        prop_assert_eq!(batch.negatives.len(), m);
        let pos: BTreeSet<Pair> = batch.positives.iter().copied().collect();
        prop_assert!(batch.negatives.iter().all(|q| !pos.contains(q)));
        let score_of = |q: &Pair| s[q.drug];
        let min_pos = batch.positives.iter().map(score_of).fold(f64::INFINITY, f64::min);
        let max_neg = batch.negatives.iter().map(score_of).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_pos >= max_neg);
    }

    #[test]
    fn candidates_avoid_ground_truth(nd in 1usize..15, nt in 1usize..15, alpha in 0.05f64..1.0, labeled_frac in 0.0f64..0.5, seed in any::<u64>()) {
        let mut r = stream(seed, 2);
        let labeled: BTreeSet<Pair> = (0..nd)
            .flat_map(|d| (0..nt).map(move |t| Pair::new(d, t)))
            .filter(|_| r.gen_bool(labeled_frac))
            .collect();
        match sample_candidates(nd, nt, alpha, &labeled, |_| true, &mut r) {
            Ok(c) => {
                let uniq: BTreeSet<Pair> = c.iter().copied().collect();
                prop_assert_eq!(uniq.len(), c.len());
                prop_assert!(c.iter().all(|q| !labeled.contains(q) && q.drug < nd && q.target < nt));
                let want = (alpha * (nd * nt) as f64).floor() as usize;
                prop_assert_eq!(c.len(), want.min(nd * nt - labeled.len()));
            }
            Err(_) => prop_assert!((alpha * (nd * nt) as f64).floor() == 0.0 || labeled.len() == nd * nt),
        }
    }

    #[test]
    fn joint_positives_are_trimmed_to_equal_length(na in 1usize..80, nb in 1usize..80, beta in 0.0f64..0.5, gamma in 1u32..5, p in 1usize..10, n in 0usize..20, seed in any::<u64>()) {
        let (pa, pb) = (pairs(1000, na), pairs(5000, nb));
        let (sa, sb) = (scores(seed, na, 7), scores(seed ^ 1, nb, 7));
        let j = select_joint((&pa, &sa), (&pb, &sb), beta, gamma, p, n);
        let k = ((beta * na as f64).floor() as usize).min((beta * nb as f64).floor() as usize);
        prop_assert_eq!(j.per_expert_positives, k);
        let from_a = j.positives.iter().filter(|q| q.drug < 5000).count();
        let from_b = j.positives.len() - from_a;
        prop_assert_eq!(from_a, k);
        prop_assert_eq!(from_b, k);
        let pos: BTreeSet<Pair> = j.positives.iter().copied().collect();
        prop_assert!(j.negatives.iter().all(|q| !pos.contains(q)));
        let c = joint_negatives(gamma, p, 2 * k, 0, n);
        prop_assert_eq!(j.counts, c);
    }
}

/// Repeatedly takes the best remaining position: highest score, then lowest index.
fn rank_oracle(s: &[f64]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..s.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            if s[left[i]] > s[left[best]] {
                best = i;
            }
        }
        out.push(left.remove(best));
    }
    out
}

#[test]
fn rank_order_matches_selection_oracle() {
    let mut r = stream(77, 0);
    for v in 0..1000 {
        let n = r.gen_range(0..60);
        let levels = if v % 2 == 0 { 4 } else { 1_000_000 };
        let s: Vec<f64> = (0..n).map(|_| r.gen_range(0..levels) as f64).collect();
        assert_eq!(rank_order(&s), rank_oracle(&s), "vector {v}");
    }
}

fn ln_sigmoid(x: f64) -> f64 {
    -(1.0 + (-x).exp()).ln()
}

#[test]
fn weighted_loss_equals_expanded_multiset() {
    let mut r = stream(78, 0);
    let gamma = 3;
    let pos = pairs(0, 5);
    let pseudo_pos = pairs(100, 4);
    let neg = pairs(200, 6);
    let pseudo_neg = pairs(300, 5);
    let ex = WeightedExamples::new(&pos, &neg, &pseudo_pos, &pseudo_neg, gamma);
    assert_eq!(ex.len(), 20);
    let logits: Vec<f64> = (0..20).map(|_| r.gen_range(-4.0..4.0)).collect();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::column(logits.clone()));
    let loss = synergize_loss(&mut tape, x, &ex).unwrap();
    let got = tape.value(loss).item().unwrap();
    // Every true positive appears gamma times; everything else once.
    let mut expanded: Vec<(f64, bool)> = Vec::new();
    for (i, &l) in logits.iter().enumerate() {
        let (copies, y) = match i {
            0..=4 => (gamma as usize, true),
            5..=8 => (1, true),
            _ => (1, false),
        };
        expanded.extend(std::iter::repeat((l, y)).take(copies));
    }
    let want: f64 = expanded.iter().map(|&(l, y)| if y { -ln_sigmoid(l) } else { -ln_sigmoid(-l) }).sum();
    assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
}

struct Tiny {
    catalog: Catalog,
    positives: Vec<Pair>,
    negatives: Vec<Pair>,
    embeddings: EntityEmbeddingTable,
    config: ModelConfig,
}

fn tiny() -> Tiny {
    let world = SyntheticWorld::generate(SynthConfig {
        drugs: 16,
        targets: 16,
        entities: 80,
        leaks: 5,
        min_len: 20,
        max_len: 30,
        ..SynthConfig::default()
    })
    .unwrap();
    let kg = world.knowledge_graph().unwrap().remove_dti_leakage();
    let embeddings = pretrain(&kg, &EmbedConfig { dim: 8, epochs: 3, ..EmbedConfig::default() }).unwrap();
    let config = ModelConfig {
        expert_hidden: 8,
        gate_hidden: 6,
        gnn: GnnConfig { layers: 2, hidden: 8, readout_hidden: 8, out_dim: 6 },
        cnn: CnnConfig { e_dim: 4, kernel: 3, channels: vec![6], pool_len: 4, out_dim: 6, max_len: 100 },
    };
    let catalog = world.catalog(&embeddings.entity_ids, 100).unwrap();
    Tiny {
        catalog,
        positives: world.positives(),
        negatives: world.negatives(),
        embeddings,
        config,
    }
}

#[test]
fn s1_leaves_entity_gradients_empty() {
    let t = tiny();
    let mut model = MoseModel::new(t.config.clone(), &t.embeddings, 1);
    model.store.freeze_all();
    for id in model.extrinsic_params() {
        model.store.set_trainable(id, true);
    }
    let ex = WeightedExamples::new(&t.positives[..4], &t.negatives[..4], &[], &[], 1);
    let mut tape = Tape::new();
    let loss = stage_loss(&model, &mut tape, &t.catalog, Head::Extrinsic, &ex).unwrap();
    let grads = tape.backward(loss).unwrap();
    model.store.accumulate(&grads).unwrap();
    assert!(grads.params().all(|(id, _)| id != model.entity_table));
    assert!(model.store.grad(model.entity_table).is_none());
    assert!(model.g_ex.params().iter().all(|&id| model.store.grad(id).is_some()));

    // The table is bit-identical after a full S1.
    let before = model.store.value(model.entity_table).clone();
    let dataset = few_shot_split(t.catalog.clone(), &t.positives, Some(&t.negatives), 6, 3).unwrap();
    let data = TrainingData {
        catalog: &dataset.catalog,
        positives: &dataset.train_positives,
        negatives: &dataset.train_negatives,
    };
    let cfg = SynergyConfig { epochs: [5, 0, 0, 0], alpha_a: 0.5, alpha_b: 0.5, ..SynergyConfig::default() };
    let mut after_s1 = None;
    run_training(&mut model, &data, &cfg, &mut |stage, m| {
        if stage.name() == "S1" {
            after_s1 = Some(m.store.value(m.entity_table).clone());
        }
    })
    .unwrap();
    assert_eq!(after_s1.unwrap(), before);
}

#[test]
fn training_is_deterministic_and_finite() {
    let t = tiny();
    let dataset = few_shot_split(t.catalog.clone(), &t.positives, Some(&t.negatives), 6, 4).unwrap();
    let data = TrainingData {
        catalog: &dataset.catalog,
        positives: &dataset.train_positives,
        negatives: &dataset.train_negatives,
    };
    let cfg = SynergyConfig { epochs: [3, 3, 3, 3], alpha_a: 0.5, alpha_b: 0.5, seed: 9, ..SynergyConfig::default() };
    let run = || {
        let mut m = MoseModel::new(t.config.clone(), &t.embeddings, 9);
        let log = run_training(&mut m, &data, &cfg, &mut |_, _| {}).unwrap();
        let (pairs, _) = dataset.test_pairs();
        (log, m.scores(&dataset.catalog, &pairs, Availability::Both).unwrap())
    };
    let (la, sa) = run();
    let (lb, sb) = run();
    assert_eq!(la, lb);
    assert_eq!(sa.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), sb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert!(la.epochs.iter().all(|e| e.loss.is_finite()));
}

#[test]
fn mixture_is_convex_and_gate_sums_to_one() {
    let t = tiny();
    let model = MoseModel::new(t.config.clone(), &t.embeddings, 5);
    let all: Vec<Pair> = (0..16).flat_map(|d| (0..16).map(move |g| Pair::new(d, g))).collect();
    let mut tape = Tape::new();
    let (p, w, p_ex, p_in) = model.mixed_on_tape(&mut tape, &t.catalog, &all).unwrap();
    for i in 0..all.len() {
        let (p, w, a, b) = (tape.value(p).data()[i], tape.value(w).data()[i], tape.value(p_ex).data()[i], tape.value(p_in).data()[i]);
        assert!((0.0..=1.0).contains(&w));
        assert!(p >= a.min(b) - 1e-15 && p <= a.max(b) + 1e-15, "pair {i}");
    }
    // Both gate components, recomputed from the hidden blocks.
    let h = model.hidden(&mut tape, &t.catalog, &all).unwrap();
    let mut parts = [h.ex_d, h.ex_t, h.in_d, h.in_t];
    for part in &mut parts {
        *part = tape.normalize_rows(*part, 1e-9).unwrap();
    }
    let x = tape.concat(&parts, 1).unwrap();
    let logits = model.gate.forward(&mut tape, &model.store, x).unwrap();
    let probs = tape.softmax(logits, 1).unwrap();
    let v = tape.value(probs);
    assert_eq!(v.shape(), &[all.len(), 2]);
    for r in 0..all.len() {
        assert!((v.row_slice(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
    let preds = model.predict_mixed(&t.catalog, &all, Availability::Both).unwrap();
    for pr in preds {
        let pr = pr.unwrap();
        let (a, b) = (pr.p_ex.unwrap(), pr.p_in.unwrap());
        assert!(pr.p >= a.min(b) && pr.p <= a.max(b));
    }
}
