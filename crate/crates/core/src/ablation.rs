//! The six ablation variants and their evaluation.
//!
//! One ground-truth-only run yields True-intr (after S2), True-extr (after
//! S3) and True-all (after S4). One full run yields Mose-intr, Mose-extr
//! and MoseDTI, all read off the final model.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::dataset::DtiDataset;
use crate::error::Result;
use crate::kg_embed::EntityEmbeddingTable;
use crate::metrics::{compute_metrics, Metrics};
use crate::moe::{Availability, ModelConfig, MoseModel};
use crate::synergy::{run_training, Stage, SynergyConfig, TrainingData, TrainingLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    TrueIntr,
    TrueExtr,
    TrueAll,
    MoseIntr,
    MoseExtr,
    MoseDti,
}

pub const VARIANTS: [Variant; 6] = [
    Variant::TrueIntr,
    Variant::TrueExtr,
    Variant::TrueAll,
    Variant::MoseIntr,
    Variant::MoseExtr,
    Variant::MoseDti,
];

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::TrueIntr => "True-intr",
            Variant::TrueExtr => "True-extr",
            Variant::TrueAll => "True-all",
            Variant::MoseIntr => "Mose-intr",
            Variant::MoseExtr => "Mose-extr",
            Variant::MoseDti => "MoseDTI",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        VARIANTS.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }

    pub fn uses_pseudo_labels(self) -> bool {
        matches!(self, Variant::MoseIntr | Variant::MoseExtr | Variant::MoseDti)
    }

    /// Inference view of this variant under a scarcity setting; `None`
    /// when the variant has nothing to look at.
    pub fn view(self, setting: Availability) -> Option<Availability> {
        match self {
            Variant::TrueIntr | Variant::MoseIntr => {
                (setting != Availability::ExtrinsicOnly).then_some(Availability::IntrinsicOnly)
            }
            Variant::TrueExtr | Variant::MoseExtr => {
                (setting != Availability::IntrinsicOnly).then_some(Availability::ExtrinsicOnly)
            }
            Variant::TrueAll | Variant::MoseDti => Some(setting),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub availability: Availability,
    pub metrics: core::result::Result<Metrics, String>,
}

/// Trained models of one seed.
#[derive(Debug, Clone)]
pub struct SeedModels {
    pub true_intr: MoseModel,
    pub true_extr: MoseModel,
    pub true_all: MoseModel,
    pub mose: MoseModel,
    pub true_log: TrainingLog,
    pub mose_log: TrainingLog,
}

impl SeedModels {
    pub fn model(&self, v: Variant) -> &MoseModel {
        match v {
            Variant::TrueIntr => &self.true_intr,
            Variant::TrueExtr => &self.true_extr,
            Variant::TrueAll => &self.true_all,
            _ => &self.mose,
        }
    }
}

fn train(
    dataset: &DtiDataset,
    embeddings: &EntityEmbeddingTable,
    model_cfg: &ModelConfig,
    synergy: &SynergyConfig,
    snapshots: &mut [Option<MoseModel>; 2],
) -> Result<(MoseModel, TrainingLog)> {
    let mut model = MoseModel::new(model_cfg.clone(), embeddings, synergy.seed);
    let data = TrainingData {
        catalog: &dataset.catalog,
        positives: &dataset.train_positives,
        negatives: &dataset.train_negatives,
    };
    let mut hook = |stage: Stage, m: &MoseModel| match stage {
        Stage::S2 => snapshots[0] = Some(m.clone()),
        Stage::S3 => snapshots[1] = Some(m.clone()),
        _ => {}
    };
    let log = run_training(&mut model, &data, synergy, &mut hook)?;
    Ok((model, log))
}

/// Trains the ground-truth-only and the full run for one seed.
pub fn train_seed(
    dataset: &DtiDataset,
    embeddings: &EntityEmbeddingTable,
    model_cfg: &ModelConfig,
    synergy: &SynergyConfig,
    seed: u64,
) -> Result<SeedModels> {
    let mut snaps = [None, None];
    let truth = SynergyConfig {
        pseudo_labels: false,
        seed,
        ..*synergy
    };
    let (true_all, true_log) = train(dataset, embeddings, model_cfg, &truth, &mut snaps)?;
    let [s2, s3] = snaps;
    let full = SynergyConfig {
        pseudo_labels: true,
        seed,
        ..*synergy
    };
    let (mose, mose_log) = train(dataset, embeddings, model_cfg, &full, &mut [None, None])?;
    Ok(SeedModels {
        true_intr: s2.expect("hook runs after S2"),
        true_extr: s3.expect("hook runs after S3"),
        true_all,
        mose,
        true_log,
        mose_log,
    })
}

/// Scores one variant on the test split under a scarcity setting.
pub fn evaluate(models: &SeedModels, dataset: &DtiDataset, variant: Variant, setting: Availability) -> VariantOutcome {
    let metrics = match variant.view(setting) {
        None => Err(alloc::format!("{} has no usable perspective under {}", variant.name(), setting.name())),
        Some(view) => {
            let (pairs, labels) = dataset.test_pairs();
            models
                .model(variant)
                .scores(&dataset.catalog, &pairs, view)
                .and_then(|s| compute_metrics(&s, &labels))
                .map_err(|e| e.to_string())
        }
    };
    VariantOutcome {
        variant,
        availability: setting,
        metrics,
    }
}

/// Every variant under every setting, in a fixed order.
pub fn run_seed(
    dataset: &DtiDataset,
    embeddings: &EntityEmbeddingTable,
    model_cfg: &ModelConfig,
    synergy: &SynergyConfig,
    seed: u64,
    settings: &[Availability],
) -> Vec<VariantOutcome> {
    match train_seed(dataset, embeddings, model_cfg, synergy, seed) {
        Ok(models) => settings
            .iter()
            .flat_map(|&s| VARIANTS.iter().map(move |&v| (v, s)))
            .map(|(v, s)| evaluate(&models, dataset, v, s))
            .collect(),
        Err(e) => {
            log::warn!("training failed for seed {seed}: {e}");
            settings
                .iter()
                .flat_map(|&s| {
                    let msg = e.to_string();
                    VARIANTS.iter().map(move |&v| VariantOutcome {
                        variant: v,
                        availability: s,
                        metrics: Err(msg.clone()),
                    })
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in VARIANTS {
            assert_eq!(Variant::parse(v.name()), Some(v));
        }
        assert_eq!(Variant::parse("mosedti"), Some(Variant::MoseDti));
        assert!(Variant::parse("other").is_none());
    }

    #[test]
    fn views_follow_settings() {
        use Availability::*;
        assert_eq!(Variant::MoseIntr.view(Both), Some(IntrinsicOnly));
        assert_eq!(Variant::MoseIntr.view(ExtrinsicOnly), None);
        assert_eq!(Variant::TrueExtr.view(IntrinsicOnly), None);
        assert_eq!(Variant::MoseDti.view(IntrinsicOnly), Some(IntrinsicOnly));
        assert!(!Variant::TrueAll.uses_pseudo_labels());
    }
}
