//! Knowledge graph vocabulary, drug–target leakage filtering and negative
//! triple sampling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// String ids interned to dense indices in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), self.ids.len() - 1);
        self.ids.len() - 1
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn from_ids<S: AsRef<str>>(ids: &[S]) -> Result<Self> {
        let mut v = Vocab::new();
        for id in ids {
            let before = v.len();
            v.intern(id.as_ref());
            if v.len() == before {
                return Err(Error::contract(alloc::format!("duplicate vocabulary id {}", id.as_ref())));
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: usize,
    pub rel: usize,
    pub tail: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptedSide {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KgStats {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub drugs: usize,
    pub targets: usize,
    pub duplicates_dropped: usize,
    pub leakage_removed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    pub entities: Vocab,
    pub relations: Vocab,
    triples: Vec<Triple>,
    observed: BTreeSet<Triple>,
    drugs: BTreeSet<usize>,
    targets: BTreeSet<usize>,
    duplicates_dropped: usize,
    leakage_removed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KgOptions {
    /// Register drug/target ids that never occur in a triple instead of
    /// rejecting them.
    pub register_isolated: bool,
}

impl KnowledgeGraph {
    /// Builds the graph from string triples plus drug and target id lists.
    pub fn from_triples<S, I>(triples: I, drugs: &[S], targets: &[S], options: KgOptions) -> Result<Self>
    where
        S: AsRef<str>,
        I: IntoIterator<Item = (S, S, S)>,
    {
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let mut list = Vec::new();
        let mut observed = BTreeSet::new();
        let mut duplicates = 0;
        for (h, r, t) in triples {
            let triple = Triple {
                head: entities.intern(h.as_ref()),
                rel: relations.intern(r.as_ref()),
                tail: entities.intern(t.as_ref()),
            };
            if observed.insert(triple) {
                list.push(triple);
            } else {
                duplicates += 1;
            }
        }
        let mut resolve = |ids: &[S]| -> Result<BTreeSet<usize>> {
            let mut set = BTreeSet::new();
            let mut missing = Vec::new();
            for id in ids {
                let id = id.as_ref();
                match entities.get(id) {
                    Some(i) => {
                        set.insert(i);
                    }
                    None if options.register_isolated => {
                        set.insert(entities.intern(id));
                    }
                    None => missing.push(id.to_string()),
                }
            }
            if missing.is_empty() {
                Ok(set)
            } else {
                Err(Error::MissingEntities(missing))
            }
        };
        let drugs = resolve(drugs)?;
        let targets = resolve(targets)?;
        Ok(Self {
            entities,
            relations,
            triples: list,
            observed,
            drugs,
            targets,
            duplicates_dropped: duplicates,
            leakage_removed: 0,
        })
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.observed.contains(t)
    }

    pub fn drugs(&self) -> &BTreeSet<usize> {
        &self.drugs
    }

    pub fn targets(&self) -> &BTreeSet<usize> {
        &self.targets
    }

    pub fn is_drug_target_link(&self, t: &Triple) -> bool {
        (self.drugs.contains(&t.head) && self.targets.contains(&t.tail))
            || (self.targets.contains(&t.head) && self.drugs.contains(&t.tail))
    }

    /// Drops every triple joining a drug and a target in either direction.
    /// Vocabularies are kept, so entity indices stay stable.
    pub fn remove_dti_leakage(&self) -> KnowledgeGraph {
        let kept: Vec<Triple> = self
            .triples
            .iter()
            .copied()
            .filter(|t| !self.is_drug_target_link(t))
            .collect();
        let removed = self.triples.len() - kept.len();
        log::info!("leakage filter removed {removed} drug-target triples");
        KnowledgeGraph {
            observed: kept.iter().copied().collect(),
            triples: kept,
            leakage_removed: self.leakage_removed + removed,
            ..self.clone()
        }
    }

    /// Number of drug–target triples, found by a full scan.
    pub fn count_leakage(&self) -> usize {
        self.triples.iter().filter(|t| self.is_drug_target_link(t)).count()
    }

    /// Replaces the head or the tail (fair coin) by a different uniformly
    /// drawn entity, re-drawing up to 100 times while the result is an
    /// observed triple.
    pub fn sample_negative_triple(&self, triple: Triple, rng: &mut Rng) -> Result<(Triple, CorruptedSide)> {
        let n = self.entities.len();
        if n < 2 {
            return Err(Error::contract("negative sampling needs at least two entities"));
        }
        let side = if rng.gen_bool(0.5) {
            CorruptedSide::Head
        } else {
            CorruptedSide::Tail
        };
        let original = match side {
            CorruptedSide::Head => triple.head,
            CorruptedSide::Tail => triple.tail,
        };
        let mut candidate = triple;
        for _ in 0..100 {
            let mut e = rng.gen_range(0..n - 1);
            if e >= original {
                e += 1;
            }
            candidate = match side {
                CorruptedSide::Head => Triple { head: e, ..triple },
                CorruptedSide::Tail => Triple { tail: e, ..triple },
            };
            if !self.observed.contains(&candidate) {
                break;
            }
        }
        Ok((candidate, side))
    }

    pub fn stats(&self) -> KgStats {
        KgStats {
            entities: self.entities.len(),
            relations: self.relations.len(),
            triples: self.triples.len(),
            drugs: self.drugs.len(),
            targets: self.targets.len(),
            duplicates_dropped: self.duplicates_dropped,
            leakage_removed: self.leakage_removed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use alloc::vec;

    fn kg(triples: &[(&str, &str, &str)], drugs: &[&str], targets: &[&str]) -> KnowledgeGraph {
        KnowledgeGraph::from_triples(triples.iter().copied(), drugs, targets, KgOptions::default()).unwrap()
    }

    #[test]
    fn counts_and_dedup() {
        let g = kg(&[("a", "r", "b"), ("b", "r", "a"), ("a", "r", "b")], &["a"], &["b"]);
        let s = g.stats();
        assert_eq!((s.entities, s.relations, s.triples, s.duplicates_dropped), (2, 1, 2, 1));
    }

    #[test]
    fn drkg_style_ids() {
        let g = kg(
            &[("Compound::DB00001", "DGIDB::AGONIST", "Gene::1813")],
            &["Compound::DB00001"],
            &["Gene::1813"],
        );
        assert_eq!(g.entities.len(), 2);
        assert_eq!(g.triples().len(), 1);
        assert_eq!(g.entities.id(1), "Gene::1813");
    }

    #[test]
    fn missing_ids_are_listed() {
        let err = KnowledgeGraph::from_triples([("a", "r", "b")], &["a", "x"], &["y"], KgOptions::default());
        assert_eq!(err, Err(Error::MissingEntities(vec!["x".into()])));
        let g = KnowledgeGraph::from_triples(
            [("a", "r", "b")],
            &["a", "x"],
            &["b"],
            KgOptions { register_isolated: true },
        )
        .unwrap();
        assert_eq!(g.entities.get("x"), Some(2));
    }

    #[test]
    fn leakage_both_directions() {
        let g = kg(&[("d", "r", "t"), ("d", "r", "e"), ("e", "r", "t")], &["d"], &["t"]);
        let f = g.remove_dti_leakage();
        assert_eq!(f.triples().len(), 2);
        assert_eq!(f.stats().leakage_removed, 1);
        let g = kg(&[("t", "r", "d"), ("e", "r", "d")], &["d"], &["t"]);
        assert_eq!(g.remove_dti_leakage().triples().len(), 1);
        let clean = KnowledgeGraph::from_triples(
            [("d", "r", "e")],
            &["d"],
            &["t2"],
            KgOptions { register_isolated: true },
        )
        .unwrap()
        .remove_dti_leakage();
        assert_eq!(clean.triples().len(), 1);
        assert_eq!(clean.remove_dti_leakage().triples(), clean.triples());
    }

    #[test]
    fn forced_corruption_with_two_entities() {
        let g = kg(&[("e0", "r", "e1")], &["e0"], &["e1"]);
        let mut rng = stream(1, 0);
        for _ in 0..50 {
            let t = g.triples()[0];
            let (c, side) = g.sample_negative_triple(t, &mut rng).unwrap();
            match side {
                CorruptedSide::Head => assert_eq!((c.head, c.tail), (1, 1)),
                CorruptedSide::Tail => assert_eq!((c.head, c.tail), (0, 0)),
            }
        }
    }

    #[test]
    fn head_tail_ratio_is_fair() {
        let triples: Vec<(String, String, String)> = (0..40)
            .map(|i| (alloc::format!("e{i}"), "r".into(), alloc::format!("e{}", (i + 1) % 40)))
            .collect();
        let g = KnowledgeGraph::from_triples(triples, &["e0".to_string()], &["e1".to_string()], KgOptions::default())
            .unwrap();
        let mut rng = stream(3, 0);
        let mut heads = 0;
        for k in 0..10_000 {
            let t = g.triples()[k % 40];
            let (c, side) = g.sample_negative_triple(t, &mut rng).unwrap();
            assert!(!g.contains(&c));
            heads += usize::from(side == CorruptedSide::Head);
        }
        let ratio = heads as f64 / 10_000.0;
        assert!((ratio - 0.5).abs() <= 0.02, "{ratio}");
    }
}
