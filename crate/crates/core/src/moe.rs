//! Extrinsic classifier, intrinsic classifier, gate, and the blended
//! prediction with single-perspective fallback.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kg_embed::EntityEmbeddingTable;
use crate::kgraph::Vocab;
use crate::mol_encoder::{GnnConfig, MolBatch, MolEncoder};
use crate::nn::Mlp;
use crate::param::{ParamId, ParamStore};
use crate::rng;
use crate::seq_encoder::{CnnConfig, ResidueSequence, SeqEncoder};
use crate::smiles::MolecularGraph;
use crate::tape::{logistic, Tape, Var};
use crate::tensor::Tensor;

/// A drug–target pair as indices into a [`Catalog`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub drug: usize,
    pub target: usize,
}

impl Pair {
    pub fn new(drug: usize, target: usize) -> Self {
        Self { drug, target }
    }
}

/// Which data perspectives the model may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Availability {
    Both,
    IntrinsicOnly,
    ExtrinsicOnly,
}

impl Availability {
    pub fn name(self) -> &'static str {
        match self {
            Availability::Both => "both",
            Availability::IntrinsicOnly => "intrinsic-only",
            Availability::ExtrinsicOnly => "extrinsic-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "both" => Some(Availability::Both),
            "intrinsic-only" => Some(Availability::IntrinsicOnly),
            "extrinsic-only" => Some(Availability::ExtrinsicOnly),
            _ => None,
        }
    }

    fn allows_extrinsic(self) -> bool {
        self != Availability::IntrinsicOnly
    }

    fn allows_intrinsic(self) -> bool {
        self != Availability::ExtrinsicOnly
    }
}

/// Drugs and targets with whatever data exists for each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub drugs: Vocab,
    pub targets: Vocab,
    /// Knowledge-graph entity row of each drug / target.
    pub drug_rows: Vec<Option<usize>>,
    pub target_rows: Vec<Option<usize>>,
    pub molecules: Vec<Option<MolecularGraph>>,
    pub sequences: Vec<Option<ResidueSequence>>,
}

impl Catalog {
    /// Builds a catalog; `kg_entities` resolves ids to embedding rows.
    pub fn new(
        drugs: Vocab,
        targets: Vocab,
        kg_entities: &Vocab,
        mut molecules: BTreeMap<String, MolecularGraph>,
        mut sequences: BTreeMap<String, ResidueSequence>,
    ) -> Self {
        let drug_rows = drugs.ids().iter().map(|id| kg_entities.get(id)).collect();
        let target_rows = targets.ids().iter().map(|id| kg_entities.get(id)).collect();
        let molecules = drugs.ids().iter().map(|id| molecules.remove(id)).collect();
        let sequences = targets.ids().iter().map(|id| sequences.remove(id)).collect();
        Self {
            drugs,
            targets,
            drug_rows,
            target_rows,
            molecules,
            sequences,
        }
    }

    pub fn has_extrinsic(&self, p: Pair) -> bool {
        self.drug_rows[p.drug].is_some() && self.target_rows[p.target].is_some()
    }

    pub fn has_intrinsic(&self, p: Pair) -> bool {
        self.molecules[p.drug].is_some() && self.sequences[p.target].is_some()
    }

    pub fn pair_name(&self, p: Pair) -> (String, String) {
        (self.drugs.id(p.drug).to_string(), self.targets.id(p.target).to_string())
    }

    pub fn available(&self, p: Pair, mode: Availability) -> (bool, bool) {
        (
            mode.allows_extrinsic() && self.has_extrinsic(p),
            mode.allows_intrinsic() && self.has_intrinsic(p),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub expert_hidden: usize,
    pub gate_hidden: usize,
    pub gnn: GnnConfig,
    pub cnn: CnnConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            expert_hidden: 64,
            gate_hidden: 64,
            gnn: GnnConfig::default(),
            cnn: CnnConfig::default(),
        }
    }
}

/// One pair's scores. Missing experts are `None`; `w` is 1 for extrinsic
/// fallback and 0 for intrinsic fallback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub p: f64,
    pub w: f64,
    pub p_ex: Option<f64>,
    pub p_in: Option<f64>,
}

/// Blends expert probabilities; the result never leaves their interval.
/// Keeps zero hidden rows finite when normalized for the gate.
const GATE_EPS: f64 = 1e-9;

pub fn blend(w: f64, p_ex: f64, p_in: f64) -> f64 {
    let p = w * p_ex + (1.0 - w) * p_in;
    p.clamp(p_ex.min(p_in), p_ex.max(p_in))
}

#[derive(Debug, Clone)]
pub struct MoseModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    /// `[|E|, d]` extrinsic entity embeddings.
    pub entity_table: ParamId,
    pub entity_ids: Vocab,
    pub g_ex: Mlp,
    pub mol: MolEncoder,
    pub seq: SeqEncoder,
    pub g_in: Mlp,
    pub gate: Mlp,
}

/// Hidden representations of a batch of pairs.
#[derive(Debug, Clone, Copy)]
pub struct Hidden {
    pub ex_d: Var,
    pub ex_t: Var,
    pub in_d: Var,
    pub in_t: Var,
}

impl MoseModel {
    pub fn new(config: ModelConfig, embeddings: &EntityEmbeddingTable, seed: u64) -> Self {
        Self::build(config, embeddings, None, seed).expect("learned residue table needs no validation")
    }

    /// Model whose target encoder reads fixed per-residue vectors.
    pub fn with_residue_features(
        config: ModelConfig,
        embeddings: &EntityEmbeddingTable,
        features: BTreeMap<String, Tensor>,
        seed: u64,
    ) -> Result<Self> {
        Self::build(config, embeddings, Some(features), seed)
    }

    fn build(
        config: ModelConfig,
        embeddings: &EntityEmbeddingTable,
        precomputed: Option<BTreeMap<String, Tensor>>,
        seed: u64,
    ) -> Result<Self> {
        let d = embeddings.dim;
        let mut store = ParamStore::new();
        let entity_table = store.add("kg.entities", embeddings.entities.clone());
        store.set_trainable(entity_table, false);
        let g_ex = Mlp::new(
            &mut store,
            "g_ex",
            &[2 * d, config.expert_hidden, 1],
            &mut rng::tagged(seed, "model.g_ex"),
        );
        let mol = MolEncoder::new(&mut store, config.gnn, &mut rng::tagged(seed, "model.gnn"));
        let seq = match precomputed {
            None => SeqEncoder::new(&mut store, config.cnn.clone(), &mut rng::tagged(seed, "model.cnn")),
            Some(f) => SeqEncoder::precomputed(&mut store, config.cnn.clone(), f, &mut rng::tagged(seed, "model.cnn"))?,
        };
        let d_in_drug = config.gnn.out_dim;
        let d_in_target = config.cnn.out_dim;
        let g_in = Mlp::new(
            &mut store,
            "g_in",
            &[d_in_drug + d_in_target, config.expert_hidden, 1],
            &mut rng::tagged(seed, "model.g_in"),
        );
        let gate = Mlp::new(
            &mut store,
            "gate",
            &[2 * d + d_in_drug + d_in_target, config.gate_hidden, 2],
            &mut rng::tagged(seed, "model.gate"),
        );
        Ok(Self {
            config,
            store,
            entity_table,
            entity_ids: embeddings.entity_ids.clone(),
            g_ex,
            mol,
            seq,
            g_in,
            gate,
        })
    }

    /// Re-derives component handles from a store holding every parameter
    /// by name, as produced by [`MoseModel::new`].
    pub fn from_store(config: ModelConfig, store: ParamStore, entity_ids: Vocab, seq: SeqEncoder) -> Result<Self> {
        let find = |name: &str| {
            store
                .find(name)
                .ok_or_else(|| Error::contract(format!("parameter {name} missing from store")))
        };
        let entity_table = find("kg.entities")?;
        let (rows, d) = store.value(entity_table).dims2("kg.entities")?;
        if rows != entity_ids.len() {
            return Err(Error::EmbeddingMismatch(format!(
                "entity table has {rows} rows for {} ids",
                entity_ids.len()
            )));
        }
        let mlp = |prefix: &str, layers: usize| -> Result<Mlp> {
            let mut out = Vec::new();
            for i in 0..layers {
                let weight = find(&format!("{prefix}.{i}.weight"))?;
                let bias = find(&format!("{prefix}.{i}.bias"))?;
                let (input, output) = store.value(weight).dims2("linear")?;
                out.push(crate::nn::Linear {
                    weight,
                    bias,
                    input,
                    output,
                });
            }
            Ok(Mlp { layers: out })
        };
        let g_ex = mlp("g_ex", 2)?;
        let g_in = mlp("g_in", 2)?;
        let gate = mlp("gate", 2)?;
        if g_ex.layers[0].input != 2 * d {
            return Err(Error::EmbeddingMismatch("g_ex input width differs from 2d".into()));
        }
        let mut layers = Vec::new();
        for l in 0..config.gnn.layers {
            let weight = find(&format!("gnn.layer{l}.weight"))?;
            let bias = find(&format!("gnn.layer{l}.bias"))?;
            let (input, output) = store.value(weight).dims2("linear")?;
            layers.push(crate::nn::Linear {
                weight,
                bias,
                input,
                output,
            });
        }
        let mol = MolEncoder {
            config: config.gnn,
            layers,
            readout: mlp("gnn.readout", 2)?,
        };
        Ok(Self {
            config,
            store,
            entity_table,
            entity_ids,
            g_ex,
            mol,
            seq,
            g_in,
            gate,
        })
    }

    pub fn extrinsic_params(&self) -> Vec<ParamId> {
        self.g_ex.params()
    }

    pub fn intrinsic_params(&self) -> Vec<ParamId> {
        let mut p = self.mol.params();
        p.extend(self.seq.params());
        p.extend(self.g_in.params());
        p
    }

    pub fn gate_params(&self) -> Vec<ParamId> {
        self.gate.params()
    }

    /// Extrinsic embeddings of the pairs' drugs and targets, `[n, d]` each.
    pub fn extrinsic_hidden(&self, tape: &mut Tape, cat: &Catalog, pairs: &[Pair]) -> Result<(Var, Var)> {
        let mut drows = Vec::with_capacity(pairs.len());
        let mut trows = Vec::with_capacity(pairs.len());
        for &p in pairs {
            drows.push(cat.drug_rows[p.drug].ok_or_else(|| Error::ColdEntity(cat.drugs.id(p.drug).into()))?);
            trows.push(cat.target_rows[p.target].ok_or_else(|| Error::ColdEntity(cat.targets.id(p.target).into()))?);
        }
        let table = tape.param(&self.store, self.entity_table);
        Ok((
            tape.embedding_lookup(table, drows)?,
            tape.embedding_lookup(table, trows)?,
        ))
    }

    /// Intrinsic embeddings; each distinct drug and target is encoded once.
    pub fn intrinsic_hidden(&self, tape: &mut Tape, cat: &Catalog, pairs: &[Pair]) -> Result<(Var, Var)> {
        let mut drug_slot = BTreeMap::new();
        let mut target_slot = BTreeMap::new();
        for p in pairs {
            let n = drug_slot.len();
            drug_slot.entry(p.drug).or_insert(n);
            let n = target_slot.len();
            target_slot.entry(p.target).or_insert(n);
        }
        let mut mols: Vec<(usize, &MolecularGraph)> = Vec::new();
        for (&d, &slot) in &drug_slot {
            let g = cat.molecules[d]
                .as_ref()
                .ok_or_else(|| Error::MissingIntrinsic(cat.drugs.id(d).into()))?;
            mols.push((slot, g));
        }
        mols.sort_by_key(|m| m.0);
        let mut seqs: Vec<(usize, &ResidueSequence)> = Vec::new();
        for (&t, &slot) in &target_slot {
            let s = cat.sequences[t]
                .as_ref()
                .ok_or_else(|| Error::MissingIntrinsic(cat.targets.id(t).into()))?;
            seqs.push((slot, s));
        }
        seqs.sort_by_key(|s| s.0);
        let batch = MolBatch::new(&mols.iter().map(|m| m.1).collect::<Vec<_>>())?;
        let drug_h = self.mol.encode(tape, &self.store, &batch)?;
        let target_h = self.seq.encode(tape, &self.store, &seqs.iter().map(|s| s.1).collect::<Vec<_>>())?;
        let drug_idx = pairs.iter().map(|p| drug_slot[&p.drug]).collect();
        let target_idx = pairs.iter().map(|p| target_slot[&p.target]).collect();
        Ok((
            tape.embedding_lookup(drug_h, drug_idx)?,
            tape.embedding_lookup(target_h, target_idx)?,
        ))
    }

    pub fn extrinsic_logits(&self, tape: &mut Tape, ex_d: Var, ex_t: Var) -> Result<Var> {
        let x = tape.concat(&[ex_d, ex_t], 1)?;
        self.g_ex.forward(tape, &self.store, x)
    }

    pub fn intrinsic_logits(&self, tape: &mut Tape, in_d: Var, in_t: Var) -> Result<Var> {
        let x = tape.concat(&[in_d, in_t], 1)?;
        self.g_in.forward(tape, &self.store, x)
    }

    /// Gate weight of the extrinsic expert, `[n, 1]`. Each hidden block is
    /// scaled to unit length first so encoder growth cannot saturate it.
    pub fn gate_weight(&self, tape: &mut Tape, h: &Hidden) -> Result<Var> {
        let mut parts = [h.ex_d, h.ex_t, h.in_d, h.in_t];
        for p in &mut parts {
            *p = tape.normalize_rows(*p, GATE_EPS)?;
        }
        let x = tape.concat(&parts, 1)?;
        let logits = self.gate.forward(tape, &self.store, x)?;
        let probs = tape.softmax(logits, 1)?;
        tape.slice_cols(probs, 0, 1)
    }

    pub fn hidden(&self, tape: &mut Tape, cat: &Catalog, pairs: &[Pair]) -> Result<Hidden> {
        let (ex_d, ex_t) = self.extrinsic_hidden(tape, cat, pairs)?;
        let (in_d, in_t) = self.intrinsic_hidden(tape, cat, pairs)?;
        Ok(Hidden { ex_d, ex_t, in_d, in_t })
    }

    /// Blended probability on the tape, with the extrinsic and intrinsic
    /// probabilities and the gate weight, all `[n, 1]`.
    pub fn mixed_on_tape(&self, tape: &mut Tape, cat: &Catalog, pairs: &[Pair]) -> Result<(Var, Var, Var, Var)> {
        let h = self.hidden(tape, cat, pairs)?;
        let lex = self.extrinsic_logits(tape, h.ex_d, h.ex_t)?;
        let lin = self.intrinsic_logits(tape, h.in_d, h.in_t)?;
        let p_ex = tape.sigmoid(lex)?;
        let p_in = tape.sigmoid(lin)?;
        let w = self.gate_weight(tape, &h)?;
        let neg_w = tape.scale(w, -1.0)?;
        let one_minus_w = tape.add_scalar(neg_w, 1.0)?;
        let a = tape.mul(w, p_ex)?;
        let b = tape.mul(one_minus_w, p_in)?;
        let p = tape.add(a, b)?;
        Ok((p, w, p_ex, p_in))
    }

    /// Extrinsic expert probabilities.
    pub fn predict_extrinsic(&self, cat: &Catalog, pairs: &[Pair]) -> Result<Vec<f64>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let (d, t) = self.extrinsic_hidden(&mut tape, cat, pairs)?;
        let l = self.extrinsic_logits(&mut tape, d, t)?;
        Ok(tape.value(l).data().iter().map(|&x| logistic(x)).collect())
    }

    /// Intrinsic expert probabilities.
    pub fn predict_intrinsic(&self, cat: &Catalog, pairs: &[Pair]) -> Result<Vec<f64>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let (d, t) = self.intrinsic_hidden(&mut tape, cat, pairs)?;
        let l = self.intrinsic_logits(&mut tape, d, t)?;
        Ok(tape.value(l).data().iter().map(|&x| logistic(x)).collect())
    }

    /// Blended predictions. Pairs with a single usable perspective fall
    /// back to that expert alone; pairs with none yield an error entry.
    pub fn predict_mixed(&self, cat: &Catalog, pairs: &[Pair], mode: Availability) -> Result<Vec<Result<Prediction>>> {
        let mut both = Vec::new();
        let mut ex_only = Vec::new();
        let mut in_only = Vec::new();
        let mut out: Vec<Option<Result<Prediction>>> = vec![None; pairs.len()];
        for (i, &p) in pairs.iter().enumerate() {
            match cat.available(p, mode) {
                (true, true) => both.push(i),
                (true, false) => ex_only.push(i),
                (false, true) => in_only.push(i),
                (false, false) => {
                    let (drug, target) = cat.pair_name(p);
                    out[i] = Some(Err(Error::NoPerspective { drug, target }));
                }
            }
        }
        let select = |idx: &[usize]| idx.iter().map(|&i| pairs[i]).collect::<Vec<_>>();

        let p_ex = self.predict_extrinsic(cat, &select(&ex_only))?;
        for (&i, &p) in ex_only.iter().zip(&p_ex) {
            out[i] = Some(Ok(Prediction {
                p,
                w: 1.0,
                p_ex: Some(p),
                p_in: None,
            }));
        }
        let p_in = self.predict_intrinsic(cat, &select(&in_only))?;
        for (&i, &p) in in_only.iter().zip(&p_in) {
            out[i] = Some(Ok(Prediction {
                p,
                w: 0.0,
                p_ex: None,
                p_in: Some(p),
            }));
        }
        if !both.is_empty() {
            let sel = select(&both);
            let mut tape = Tape::new();
            let h = self.hidden(&mut tape, cat, &sel)?;
            let lex = self.extrinsic_logits(&mut tape, h.ex_d, h.ex_t)?;
            let lin = self.intrinsic_logits(&mut tape, h.in_d, h.in_t)?;
            let w = self.gate_weight(&mut tape, &h)?;
            for (k, &i) in both.iter().enumerate() {
                let pe = logistic(tape.value(lex).data()[k]);
                let pi = logistic(tape.value(lin).data()[k]);
                let wk = tape.value(w).data()[k];
                out[i] = Some(Ok(Prediction {
                    p: blend(wk, pe, pi),
                    w: wk,
                    p_ex: Some(pe),
                    p_in: Some(pi),
                }));
            }
        }
        Ok(out.into_iter().map(|o| o.expect("every pair assigned")).collect())
    }

    /// Scores pairs with the requested view, erroring on unscorable pairs.
    pub fn scores(&self, cat: &Catalog, pairs: &[Pair], mode: Availability) -> Result<Vec<f64>> {
        self.predict_mixed(cat, pairs, mode)?
            .into_iter()
            .map(|r| r.map(|p| p.p))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg_embed::EmbedMethod;
    use crate::smiles::parse_smiles;

    pub(crate) fn toy() -> (MoseModel, Catalog) {
        let ids = ["d0", "d1", "t0", "t1", "x"];
        let entity_ids = Vocab::from_ids(&ids).unwrap();
        let emb = EntityEmbeddingTable {
            method: EmbedMethod::TransE,
            dim: 4,
            seed: 0,
            epochs: 0,
            entities: crate::nn::uniform(&[5, 4], 1.0, &mut rng::stream(9, 9)),
            relations: Tensor::zeros(&[1, 4]),
            entity_ids: entity_ids.clone(),
            relation_ids: Vocab::from_ids(&["r"]).unwrap(),
            loss_trace: Vec::new(),
        };
        let config = ModelConfig {
            expert_hidden: 8,
            gate_hidden: 8,
            gnn: GnnConfig {
                layers: 2,
                hidden: 8,
                readout_hidden: 8,
                out_dim: 6,
            },
            cnn: CnnConfig {
                e_dim: 4,
                kernel: 3,
                channels: vec![5, 5],
                pool_len: 3,
                out_dim: 6,
                max_len: 100,
            },
        };
        let model = MoseModel::new(config, &emb, 11);
        let mut mols = BTreeMap::new();
        mols.insert("d0".to_string(), parse_smiles("CCO").unwrap());
        mols.insert("d1".to_string(), parse_smiles("c1ccccc1N").unwrap());
        mols.insert("d2".to_string(), parse_smiles("CC(=O)O").unwrap());
        let mut seqs = BTreeMap::new();
        seqs.insert("t0".to_string(), ResidueSequence::from_letters("t0", "MKTAYIAKQR", 100).unwrap());
        seqs.insert("t2".to_string(), ResidueSequence::from_letters("t2", "GGSGGS", 100).unwrap());
        let cat = Catalog::new(
            Vocab::from_ids(&["d0", "d1", "d2", "d3"]).unwrap(),
            Vocab::from_ids(&["t0", "t1", "t2"]).unwrap(),
            &entity_ids,
            mols,
            seqs,
        );
        (model, cat)
    }

    #[test]
    fn blend_endpoints() {
        assert_eq!(blend(1.0, 0.8, 0.2), 0.8);
        assert_eq!(blend(0.0, 0.8, 0.2), 0.2);
        assert!((blend(0.5, 0.8, 0.2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_give_one_half() {
        let (mut model, cat) = toy();
        for id in model.g_ex.params() {
            model.store.value_mut(id).data_mut().fill(0.0);
        }
        let p = model.predict_extrinsic(&cat, &[Pair::new(0, 0)]).unwrap();
        assert_eq!(p, vec![0.5]);
        let bias = model.g_ex.layers[1].bias;
        model.store.value_mut(bias).data_mut()[0] = 0.3;
        assert!(model.predict_extrinsic(&cat, &[Pair::new(0, 0)]).unwrap()[0] > 0.5);
    }

    #[test]
    fn routing_by_availability() {
        let (model, cat) = toy();
        // d0-t0 both; d1-t1 extrinsic only; d2-t2 intrinsic only; d3-t1 none
        let pairs = [Pair::new(0, 0), Pair::new(1, 1), Pair::new(2, 2), Pair::new(3, 1)];
        let out = model.predict_mixed(&cat, &pairs, Availability::Both).unwrap();
        let both = out[0].as_ref().unwrap();
        assert!(both.p_ex.is_some() && both.p_in.is_some());
        assert!(both.w >= 0.0 && both.w <= 1.0);
        let ex = out[1].as_ref().unwrap();
        assert_eq!((ex.w, ex.p_in), (1.0, None));
        let inn = out[2].as_ref().unwrap();
        assert_eq!((inn.w, inn.p_ex), (0.0, None));
        assert!(matches!(out[3], Err(Error::NoPerspective { .. })));
        assert!(matches!(
            model.predict_extrinsic(&cat, &[Pair::new(2, 0)]),
            Err(Error::ColdEntity(_))
        ));
        assert!(matches!(
            model.predict_intrinsic(&cat, &[Pair::new(3, 0)]),
            Err(Error::MissingIntrinsic(_))
        ));
    }

    #[test]
    fn forced_single_perspective_is_bit_exact() {
        let (model, cat) = toy();
        let pairs = [Pair::new(0, 0), Pair::new(1, 0), Pair::new(0, 0)];
        let pin = model.predict_intrinsic(&cat, &pairs).unwrap();
        let pex = model.predict_extrinsic(&cat, &pairs).unwrap();
        let only_in = model.scores(&cat, &pairs, Availability::IntrinsicOnly).unwrap();
        let only_ex = model.scores(&cat, &pairs, Availability::ExtrinsicOnly).unwrap();
        assert_eq!(pin, only_in);
        assert_eq!(pex, only_ex);
        let mixed = model.predict_mixed(&cat, &pairs, Availability::Both).unwrap();
        for (k, m) in mixed.iter().enumerate() {
            let m = m.as_ref().unwrap();
            assert_eq!(m.p_ex, Some(pex[k]));
            assert_eq!(m.p_in, Some(pin[k]));
            assert!(m.p >= pex[k].min(pin[k]) && m.p <= pex[k].max(pin[k]));
        }
    }

    #[test]
    fn store_round_trip_rebuilds_components() {
        let (model, cat) = toy();
        let rebuilt = MoseModel::from_store(
            model.config.clone(),
            model.store.clone(),
            model.entity_ids.clone(),
            model.seq.clone(),
        )
        .unwrap();
        let pairs = [Pair::new(0, 0), Pair::new(1, 0)];
        assert_eq!(
            model.scores(&cat, &pairs, Availability::Both).unwrap(),
            rebuilt.scores(&cat, &pairs, Availability::Both).unwrap()
        );
    }
}
