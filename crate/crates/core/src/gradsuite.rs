//! Gradient checks of every trainable module inside a full model.
//!
//! Each configuration draws a small random architecture, catalog and
//! weighted batch, then checks one module's parameters through the loss
//! the training stages actually optimize.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::Result;
use crate::gradcheck::{check_param_gradients, GradCheckConfig, GradCheckReport};
use crate::kg_embed::{EmbedMethod, EntityEmbeddingTable};
use crate::kgraph::Vocab;
use crate::moe::{Catalog, ModelConfig, MoseModel, Pair};
use crate::mol_encoder::GnnConfig;
use crate::nn::uniform;
use crate::param::ParamId;
use crate::rng::{stream, Rng};
use crate::seq_encoder::{CnnConfig, ResidueSequence, ALPHABET};
use crate::smiles::parse_smiles;
use crate::synergy::{stage_loss, Head, WeightedExamples};

const SMILES: [&str; 6] = ["CCO", "c1ccccc1O", "CC(=O)N", "C1CCCCC1N", "c1ccncc1C", "CS(=O)(=O)N"];

pub const MODULES: [&str; 6] = ["kg-embeddings (S3)", "gnn", "cnn", "g_ex", "g_in", "gate"];

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleCheck {
    pub module: &'static str,
    pub configurations: usize,
    pub report: GradCheckReport,
}

struct Setup {
    model: MoseModel,
    catalog: Catalog,
    examples: WeightedExamples,
}

fn ids(prefix: &str, n: usize) -> Vocab {
    let names: Vec<String> = (0..n).map(|i| alloc::format!("{prefix}{i}")).collect();
    Vocab::from_ids(&names).expect("distinct ids")
}

fn setup(r: &mut Rng) -> Result<Setup> {
    let d = r.gen_range(2..=4);
    let (drugs, targets, background) = (3, 3, 2);
    let mut entity_names: Vec<String> = ids("d", drugs).ids().to_vec();
    entity_names.extend(ids("t", targets).ids().iter().cloned());
    entity_names.extend(ids("e", background).ids().iter().cloned());
    let n_entities = entity_names.len();
    let embeddings = EntityEmbeddingTable {
        method: EmbedMethod::TransE,
        dim: d,
        seed: 0,
        epochs: 0,
        entities: uniform(&[n_entities, d], 1.0, r),
        relations: uniform(&[1, d], 1.0, r),
        entity_ids: Vocab::from_ids(&entity_names)?,
        relation_ids: ids("r", 1),
        loss_trace: Vec::new(),
    };
    let channels = (0..r.gen_range(1..=2)).map(|_| r.gen_range(2..=4)).collect();
    let config = ModelConfig {
        expert_hidden: r.gen_range(3..=6),
        gate_hidden: r.gen_range(3..=6),
        gnn: GnnConfig {
            layers: r.gen_range(1..=3),
            hidden: r.gen_range(3..=5),
            readout_hidden: r.gen_range(3..=5),
            out_dim: r.gen_range(2..=4),
        },
        cnn: CnnConfig {
            e_dim: r.gen_range(2..=4),
            kernel: r.gen_range(1..=4),
            channels,
            pool_len: r.gen_range(1..=4),
            out_dim: r.gen_range(2..=4),
            max_len: 2000,
        },
    };
    let mut model = MoseModel::new(config, &embeddings, r.gen());
    // Every parameter, the entity table included, enters the tape as trainable.
    let all: Vec<ParamId> = model.store.ids().collect();
    for id in all {
        model.store.set_trainable(id, true);
    }
    let mut molecules = BTreeMap::new();
    for i in 0..drugs {
        molecules.insert(alloc::format!("d{i}"), parse_smiles(SMILES[r.gen_range(0..SMILES.len())])?);
    }
    let mut sequences = BTreeMap::new();
    for i in 0..targets {
        let id = alloc::format!("t{i}");
        let letters: String = (0..r.gen_range(3..=14))
            .map(|_| ALPHABET[r.gen_range(0..ALPHABET.len())] as char)
            .collect();
        sequences.insert(id.clone(), ResidueSequence::from_letters(&id, &letters, 2000)?);
    }
    let catalog = Catalog::new(ids("d", drugs), ids("t", targets), &model.entity_ids, molecules, sequences);
    let mut pair = || Pair::new(r.gen_range(0..drugs), r.gen_range(0..targets));
    let pos = [pair(), pair()];
    let neg = [pair(), pair()];
    let pseudo_pos = [pair()];
    let pseudo_neg = [pair()];
    let gamma = r.gen_range(1..=4);
    let examples = WeightedExamples::new(&pos, &neg, &pseudo_pos, &pseudo_neg, gamma);
    Ok(Setup {
        model,
        catalog,
        examples,
    })
}

fn module(model: &MoseModel, name: &str) -> (Vec<ParamId>, Head) {
    match name {
        "kg-embeddings (S3)" => (alloc::vec![model.entity_table], Head::Extrinsic),
        "gnn" => (model.mol.params(), Head::Intrinsic),
        "cnn" => (model.seq.params(), Head::Intrinsic),
        "g_ex" => (model.g_ex.params(), Head::Extrinsic),
        "g_in" => (model.g_in.params(), Head::Intrinsic),
        _ => (model.gate_params(), Head::Mixed),
    }
}

/// Runs `configurations` random setups per module.
pub fn module_suite(configurations: usize, seed: u64, config: &GradCheckConfig) -> Result<Vec<ModuleCheck>> {
    let mut out: Vec<ModuleCheck> = MODULES
        .iter()
        .map(|&m| ModuleCheck {
            module: m,
            configurations,
            report: GradCheckReport::default(),
        })
        .collect();
    for c in 0..configurations {
        let mut r = stream(seed, c as u64);
        let s = setup(&mut r)?;
        for check in &mut out {
            let (params, head) = module(&s.model, check.module);
            let report = check_param_gradients(
                &s.model.store,
                &params,
                |tape, store| {
                    let mut m = s.model.clone();
                    m.store = store.clone();
                    stage_loss(&m, tape, &s.catalog, head, &s.examples)
                },
                config,
                &mut r,
            )?;
            check.report.merge(&report);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_module_passes_on_a_few_configurations() {
        let checks = module_suite(3, 11, &GradCheckConfig::default()).unwrap();
        assert_eq!(checks.len(), MODULES.len());
        for c in checks {
            assert!(c.report.passed(), "{}: {:?}", c.module, c.report);
        }
    }
}
