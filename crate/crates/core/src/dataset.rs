//! Few-shot train/test splits.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::moe::{Catalog, Pair};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DtiDataset {
    pub catalog: Catalog,
    pub train_positives: Vec<Pair>,
    pub train_negatives: Vec<Pair>,
    pub test_positives: Vec<Pair>,
    pub test_negatives: Vec<Pair>,
    pub shots: usize,
    /// Negatives were drawn from unlabeled pairs rather than supplied.
    pub sampled_negatives: bool,
}

impl DtiDataset {
    pub fn test_pairs(&self) -> (Vec<Pair>, Vec<bool>) {
        let pairs: Vec<Pair> = self.test_positives.iter().chain(&self.test_negatives).copied().collect();
        let labels = (0..pairs.len()).map(|i| i < self.test_positives.len()).collect();
        (pairs, labels)
    }

    pub fn train_labeled(&self) -> BTreeSet<Pair> {
        self.train_positives.iter().chain(&self.train_negatives).copied().collect()
    }
}

/// Takes `shots` positives and as many negatives for training; the other
/// positives form the test set, paired 1:1 with held-out negatives. Without
/// a negative list, negatives come from pairs not listed as positive.
pub fn few_shot_split(
    catalog: Catalog,
    positives: &[Pair],
    negatives: Option<&[Pair]>,
    shots: usize,
    seed: u64,
) -> Result<DtiDataset> {
    let pos_set: BTreeSet<Pair> = positives.iter().copied().collect();
    if shots == 0 || shots > pos_set.len() {
        return Err(Error::config(format!(
            "shots must lie in 1..={}, got {shots}",
            pos_set.len()
        )));
    }
    let mut pos: Vec<Pair> = pos_set.iter().copied().collect();
    let mut neg: Vec<Pair> = match negatives {
        Some(n) => {
            let set: BTreeSet<Pair> = n.iter().copied().collect();
            if let Some(p) = set.intersection(&pos_set).next() {
                return Err(Error::contract(format!(
                    "pair ({}, {}) is labeled both positive and negative",
                    p.drug, p.target
                )));
            }
            set.into_iter().collect()
        }
        None => (0..catalog.drugs.len())
            .flat_map(|d| (0..catalog.targets.len()).map(move |t| Pair::new(d, t)))
            .filter(|p| !pos_set.contains(p))
            .collect(),
    };
    pos.shuffle(&mut rng::tagged(seed, "split.positives"));
    neg.shuffle(&mut rng::tagged(seed, "split.negatives"));
    if neg.len() < shots {
        return Err(Error::config(format!("only {} negatives for {shots} shots", neg.len())));
    }
    let test_positives = pos.split_off(shots);
    let mut rest = neg.split_off(shots);
    if rest.len() < test_positives.len() {
        log::warn!(
            "{} held-out negatives for {} test positives",
            rest.len(),
            test_positives.len()
        );
    }
    rest.truncate(test_positives.len());
    Ok(DtiDataset {
        catalog,
        train_positives: pos,
        train_negatives: neg,
        test_positives,
        test_negatives: rest,
        shots,
        sampled_negatives: negatives.is_none(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::Vocab;
    use alloc::collections::BTreeMap;
    use alloc::string::String;

    fn catalog(n: usize) -> Catalog {
        let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let v = Vocab::from_ids(&ids).unwrap();
        Catalog::new(v.clone(), v, &Vocab::new(), BTreeMap::new(), BTreeMap::new())
    }

    fn diagonal(n: usize) -> Vec<Pair> {
        (0..n).map(|i| Pair::new(i, i)).collect()
    }

    #[test]
    fn shot_counts_and_disjointness() {
        let ds = few_shot_split(catalog(30), &diagonal(30), None, 10, 7).unwrap();
        assert_eq!(ds.train_positives.len(), 10);
        assert_eq!(ds.train_negatives.len(), 10);
        assert_eq!(ds.test_positives.len(), 20);
        assert_eq!(ds.test_negatives.len(), 20);
        assert!(ds.sampled_negatives);
        let train = ds.train_labeled();
        let (test, labels) = ds.test_pairs();
        assert!(test.iter().all(|p| !train.contains(p)));
        for (p, y) in test.iter().zip(labels) {
            assert_eq!(p.drug == p.target, y);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = few_shot_split(catalog(20), &diagonal(20), None, 5, 3).unwrap();
        let b = few_shot_split(catalog(20), &diagonal(20), None, 5, 3).unwrap();
        assert_eq!(a, b);
        let c = few_shot_split(catalog(20), &diagonal(20), None, 5, 4).unwrap();
        assert_ne!(a.train_positives, c.train_positives);
    }

    #[test]
    fn supplied_negatives() {
        let neg: Vec<Pair> = (0..10).map(|i| Pair::new(i, (i + 1) % 10)).collect();
        let ds = few_shot_split(catalog(10), &diagonal(10), Some(&neg), 4, 1).unwrap();
        assert!(!ds.sampled_negatives);
        assert_eq!(ds.test_negatives.len(), 6);
        assert!(few_shot_split(catalog(10), &diagonal(10), Some(&diagonal(2)), 4, 1).is_err());
        assert!(few_shot_split(catalog(10), &diagonal(10), None, 11, 1).is_err());
    }
}
