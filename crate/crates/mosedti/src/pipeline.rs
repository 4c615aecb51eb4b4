//! From files or a synthetic world to trained models and metric rows.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use mosedti_core::ablation::{run_seed, Variant};
use mosedti_core::config::RunConfig;
use mosedti_core::dataset::{few_shot_split, DtiDataset};
use mosedti_core::kg_embed::{pretrain, EntityEmbeddingTable};
use mosedti_core::kgraph::{KnowledgeGraph, Vocab};
use mosedti_core::metrics::compute_metrics;
use mosedti_core::moe::{Availability, Catalog, MoseModel, Pair};
use mosedti_core::synergy::{run_training, SynergyConfig, TrainingData, TrainingLog};
use mosedti_core::synth::{SynthConfig, SyntheticWorld};
use mosedti_core::Tensor;

use crate::binfmt;
use crate::io::{self, IoError, Result};
use crate::report::MetricsRow;

fn core(e: mosedti_core::Error) -> IoError {
    IoError::Invalid(e.to_string())
}

/// Input files of a real (or exported synthetic) dataset.
#[derive(Debug, Clone)]
pub struct DataPaths {
    pub triples: PathBuf,
    pub drugs: PathBuf,
    pub targets: PathBuf,
    pub smiles: PathBuf,
    pub sequences: PathBuf,
    pub positives: PathBuf,
    pub negatives: Option<PathBuf>,
    pub residue_features: Option<PathBuf>,
}

impl DataPaths {
    /// The file names written by `gen-synth`; `negatives.tsv` is optional.
    pub fn from_dir(dir: &Path) -> Self {
        let negatives = dir.join("negatives.tsv");
        Self {
            triples: dir.join("triples.tsv"),
            drugs: dir.join("drugs.txt"),
            targets: dir.join("targets.txt"),
            smiles: dir.join("smiles.tsv"),
            sequences: dir.join("sequences.tsv"),
            positives: dir.join("positives.tsv"),
            negatives: negatives.exists().then_some(negatives),
            residue_features: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    Synthetic,
    Files(DataPaths),
}

/// Everything a split needs.
#[derive(Debug, Clone)]
pub struct World {
    pub name: String,
    pub catalog: Catalog,
    pub positives: Vec<Pair>,
    pub negatives: Option<Vec<Pair>>,
    pub embeddings: EntityEmbeddingTable,
    pub residue_features: Option<BTreeMap<String, Tensor>>,
    pub leakage_removed: usize,
}

impl World {
    pub fn split(&self, shots: usize, seed: u64) -> Result<DtiDataset> {
        few_shot_split(self.catalog.clone(), &self.positives, self.negatives.as_deref(), shots, seed).map_err(core)
    }

    pub fn model(&self, config: &RunConfig, seed: u64) -> Result<MoseModel> {
        match &self.residue_features {
            None => Ok(MoseModel::new(config.model.clone(), &self.embeddings, seed)),
            Some(f) => MoseModel::with_residue_features(config.model.clone(), &self.embeddings, f.clone(), seed).map_err(core),
        }
    }
}

/// Leakage-filtered graph and the embeddings trained on it.
pub fn embed_graph(kg: &KnowledgeGraph, config: &RunConfig) -> Result<(KnowledgeGraph, EntityEmbeddingTable, usize)> {
    let filtered = kg.remove_dti_leakage();
    let removed = kg.triples().len() - filtered.triples().len();
    let emb = pretrain(&filtered, &config.embed).map_err(core)?;
    Ok((filtered, emb, removed))
}

pub fn synthetic_config(config: &RunConfig, run_seed: u64) -> SynthConfig {
    let mut s = config.synth;
    if config.eval.vary_world {
        s.seed = s.seed.wrapping_add(run_seed);
    }
    s
}

pub fn synthetic_world(config: &RunConfig, run_seed: u64) -> Result<World> {
    let world = SyntheticWorld::generate(synthetic_config(config, run_seed)).map_err(core)?;
    let kg = world.knowledge_graph().map_err(core)?;
    let (_, embeddings, removed) = embed_graph(&kg, config)?;
    let catalog = world.catalog(&embeddings.entity_ids, config.model.cnn.max_len).map_err(core)?;
    Ok(World {
        name: config.eval.dataset.clone(),
        catalog,
        positives: world.positives(),
        negatives: Some(world.negatives()),
        embeddings,
        residue_features: None,
        leakage_removed: removed,
    })
}

/// Catalog of the listed drugs and targets; `entity_ids` maps them to
/// embedding rows.
pub fn file_catalog(paths: &DataPaths, entity_ids: &Vocab, max_len: usize) -> Result<Catalog> {
    let drugs = io::parse_id_list(&io::read_text(&paths.drugs)?).map_err(core)?;
    let targets = io::parse_id_list(&io::read_text(&paths.targets)?).map_err(core)?;
    let data = io::load_intrinsic(&paths.smiles, &paths.sequences, &drugs, &targets, max_len)?;
    for m in &data.missing {
        warn!("no intrinsic data: {m}");
    }
    io::catalog(&drugs, &targets, entity_ids, data)
}

/// Labeled pairs of the dataset; `None` negatives when no file is given.
pub fn file_labels(paths: &DataPaths, catalog: &Catalog) -> Result<(Vec<Pair>, Option<Vec<Pair>>)> {
    let (positives, dropped) = io::resolve_pairs(&paths.positives, catalog, true)?;
    if dropped > 0 {
        warn!("{dropped} positive pairs dropped for missing intrinsic data");
    }
    let negatives = match &paths.negatives {
        Some(p) => {
            let (n, d) = io::resolve_pairs(p, catalog, true)?;
            if d > 0 {
                warn!("{d} negative pairs dropped for missing intrinsic data");
            }
            Some(n)
        }
        None => {
            warn!("no negative file; negatives are sampled from unlabeled pairs");
            None
        }
    };
    Ok((positives, negatives))
}

/// Loads a dataset from files. Embeddings are read from `embeddings` when
/// given, otherwise pretrained on the filtered graph.
pub fn file_world(paths: &DataPaths, config: &RunConfig, embeddings: Option<&Path>) -> Result<World> {
    let kg = io::load_kg(&paths.triples, &paths.drugs, &paths.targets, config.kg)?;
    let (filtered, trained, removed) = match embeddings {
        None => embed_graph(&kg, config)?,
        Some(p) => {
            let filtered = kg.remove_dti_leakage();
            let removed = kg.triples().len() - filtered.triples().len();
            let emb = binfmt::load_embeddings(p)?;
            emb.check_against(&filtered).map_err(core)?;
            (filtered, emb, removed)
        }
    };
    info!("{} leaking drug-target triples removed, {} remain", removed, filtered.triples().len());
    let catalog = file_catalog(paths, &trained.entity_ids, config.model.cnn.max_len)?;
    let (positives, negatives) = file_labels(paths, &catalog)?;
    let residue_features = paths.residue_features.as_deref().map(binfmt::load_residue_features).transpose()?;
    Ok(World {
        name: config.eval.dataset.clone(),
        catalog,
        positives,
        negatives,
        embeddings: trained,
        residue_features,
        leakage_removed: removed,
    })
}

pub fn world(source: &Source, config: &RunConfig, run_seed: u64, embeddings: Option<&Path>) -> Result<World> {
    match source {
        Source::Synthetic => synthetic_world(config, run_seed),
        Source::Files(p) => file_world(p, config, embeddings),
    }
}

fn seeded(config: &RunConfig, seed: u64) -> SynergyConfig {
    SynergyConfig { seed, ..config.synergy }
}

/// Trains the full model on one split.
pub fn train(world: &World, config: &RunConfig, shots: usize, seed: u64) -> Result<(DtiDataset, MoseModel, TrainingLog)> {
    let dataset = world.split(shots, seed)?;
    let mut model = world.model(config, seed)?;
    let data = TrainingData {
        catalog: &dataset.catalog,
        positives: &dataset.train_positives,
        negatives: &dataset.train_negatives,
    };
    let log = run_training(&mut model, &data, &seeded(config, seed), &mut |_, _| {}).map_err(core)?;
    Ok((dataset, model, log))
}

/// Metric rows of a trained model's three inference views on the test split.
pub fn evaluate_model(model: &MoseModel, dataset: &DtiDataset, name: &str, seed: u64, settings: &[Availability]) -> Vec<MetricsRow> {
    let (pairs, labels) = dataset.test_pairs();
    let mut rows = Vec::new();
    for &setting in settings {
        for variant in [Variant::MoseIntr, Variant::MoseExtr, Variant::MoseDti] {
            let metrics = match variant.view(setting) {
                None => Err(format!("{} has no usable perspective under {}", variant.name(), setting.name())),
                Some(view) => model
                    .scores(&dataset.catalog, &pairs, view)
                    .and_then(|s| compute_metrics(&s, &labels))
                    .map_err(|e| e.to_string()),
            };
            let outcome = mosedti_core::ablation::VariantOutcome {
                variant,
                availability: setting,
                metrics,
            };
            rows.push(MetricsRow::from_outcome(&outcome, name, dataset.shots, seed));
        }
    }
    rows
}

/// Every (shots, seed) job of an ablation, run in parallel and merged in
/// job order so the output does not depend on scheduling.
pub fn ablate(source: &Source, config: &RunConfig, embeddings: Option<&Path>) -> Result<Vec<MetricsRow>> {
    let per_seed_world = config.eval.vary_world && matches!(source, Source::Synthetic);
    let shared = if per_seed_world {
        None
    } else {
        Some(world(source, config, 0, embeddings)?)
    };
    let worlds: BTreeMap<u64, World> = if per_seed_world {
        config
            .eval
            .seeds
            .par_iter()
            .map(|&s| synthetic_world(config, s).map(|w| (s, w)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect()
    } else {
        BTreeMap::new()
    };
    if shared.as_ref().is_some_and(|w| w.residue_features.is_some()) {
        warn!("ablate trains with the learned residue table; precomputed residue features are ignored");
    }
    let jobs: Vec<(usize, u64)> = config
        .eval
        .shots
        .iter()
        .flat_map(|&k| config.eval.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results: Vec<Vec<MetricsRow>> = jobs
        .par_iter()
        .map(|&(shots, seed)| -> Result<Vec<MetricsRow>> {
            let w = shared.as_ref().unwrap_or_else(|| &worlds[&seed]);
            let dataset = w.split(shots, seed)?;
            let outcomes = run_seed(
                &dataset,
                &w.embeddings,
                &config.model,
                &seeded(config, seed),
                seed,
                &config.eval.availability,
            );
            info!("finished shots={shots} seed={seed}");
            Ok(outcomes
                .iter()
                .map(|o| MetricsRow::from_outcome(o, &w.name, shots, seed))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().flatten().collect())
}
