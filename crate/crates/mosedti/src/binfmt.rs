//! Little-endian binary files.
//!
//! | magic      | contents                                               |
//! |------------|--------------------------------------------------------|
//! | `MOSEEMB1` | pretrained entity and relation embeddings with ids     |
//! | `MOSERES1` | per-target residue feature matrices                    |
//! | `MOSEBNDL` | model bundle: config fingerprint plus named sections   |
//!
//! Strings are a `u32` byte length followed by UTF-8. Matrices are raw
//! `f64` values in row-major order.

use std::collections::BTreeMap;
use std::path::Path;

use mosedti_core::config::RunConfig;
use mosedti_core::kg_embed::{EmbedMethod, EntityEmbeddingTable};
use mosedti_core::kgraph::Vocab;
use mosedti_core::moe::MoseModel;
use mosedti_core::rng::fnv1a;
use mosedti_core::{ParamStore, Tensor};

use crate::io::{IoError, Result};

pub const EMB_MAGIC: &[u8; 8] = b"MOSEEMB1";
pub const RES_MAGIC: &[u8; 8] = b"MOSERES1";
pub const BUNDLE_MAGIC: &[u8; 8] = b"MOSEBNDL";

fn bad(msg: impl Into<String>) -> IoError {
    IoError::Invalid(msg.into())
}

#[derive(Default)]
pub struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, xs: &[f64]) {
        for x in xs {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn strs(&mut self, xs: &[String]) {
        self.u64(xs.len() as u64);
        for s in xs {
            self.str(s);
        }
    }

    pub fn tensor(&mut self, t: &Tensor) {
        self.u32(t.shape().len() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        self.f64s(t.data());
    }
}

pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad(format!("truncated file at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn magic(&mut self, m: &[u8; 8]) -> Result<()> {
        if self.take(8)? != m {
            return Err(bad(format!("not a {} file", String::from_utf8_lossy(m))));
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| bad("length does not fit in memory"))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| bad("matrix too large"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("invalid UTF-8 string"))
    }

    pub fn strs(&mut self) -> Result<Vec<String>> {
        let n = self.usize()?;
        (0..n).map(|_| self.str()).collect()
    }

    pub fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        let shape = (0..rank).map(|_| self.usize()).collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("tensor too large"))?;
        let data = self.f64s(len)?;
        Tensor::new(shape, data).map_err(|e| bad(e.to_string()))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(bad(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| IoError::Read {
        path: path.into(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| IoError::Read {
        path: path.into(),
        source,
    })
}

fn vocab(ids: &[String]) -> Result<Vocab> {
    Vocab::from_ids(ids).map_err(|e| bad(e.to_string()))
}

pub fn encode_embeddings(t: &EntityEmbeddingTable) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(EMB_MAGIC);
    w.u64(t.dim as u64);
    w.u64(t.entity_ids.len() as u64);
    w.u64(t.relation_ids.len() as u64);
    w.u32(t.method.code());
    w.u64(t.seed);
    w.u64(t.epochs as u64);
    w.f64s(t.entities.data());
    w.f64s(t.relations.data());
    w.strs(t.entity_ids.ids());
    w.strs(t.relation_ids.ids());
    w.u64(t.loss_trace.len() as u64);
    w.f64s(&t.loss_trace);
    w.buf
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EntityEmbeddingTable> {
    let mut r = Reader::new(bytes);
    r.magic(EMB_MAGIC)?;
    let dim = r.usize()?;
    let n_ent = r.usize()?;
    let n_rel = r.usize()?;
    let method = EmbedMethod::from_code(r.u32()?).ok_or_else(|| bad("unknown embedding method"))?;
    let seed = r.u64()?;
    let epochs = r.usize()?;
    let width = match method {
        EmbedMethod::TransE => dim,
        EmbedMethod::RotatE => dim / 2,
    };
    let entities = Tensor::new(vec![n_ent, dim], r.f64s(n_ent * dim)?).map_err(|e| bad(e.to_string()))?;
    let relations = Tensor::new(vec![n_rel, width], r.f64s(n_rel * width)?).map_err(|e| bad(e.to_string()))?;
    let entity_ids = vocab(&r.strs()?)?;
    let relation_ids = vocab(&r.strs()?)?;
    let n_loss = r.usize()?;
    let loss_trace = r.f64s(n_loss)?;
    r.finish()?;
    let table = EntityEmbeddingTable {
        method,
        dim,
        seed,
        epochs,
        entities,
        relations,
        entity_ids,
        relation_ids,
        loss_trace,
    };
    table.validate().map_err(|e| bad(e.to_string()))?;
    Ok(table)
}

pub fn save_embeddings(path: &Path, t: &EntityEmbeddingTable) -> Result<()> {
    write_file(path, &encode_embeddings(t))
}

pub fn load_embeddings(path: &Path) -> Result<EntityEmbeddingTable> {
    decode_embeddings(&read_file(path)?).map_err(|e| bad(format!("{}: {e}", path.display())))
}

pub fn encode_residue_features(features: &BTreeMap<String, Tensor>) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(RES_MAGIC);
    let width = features.values().next().map(|t| t.shape().get(1).copied().unwrap_or(0)).unwrap_or(0);
    w.u64(features.len() as u64);
    w.u64(width as u64);
    for (id, t) in features {
        let (m, e) = t.dims2("residue features").map_err(|e| bad(e.to_string()))?;
        if e != width {
            return Err(bad(format!("residue features for {id} have width {e}, expected {width}")));
        }
        w.str(id);
        w.u64(m as u64);
        w.f64s(t.data());
    }
    Ok(w.buf)
}

pub fn decode_residue_features(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    let mut r = Reader::new(bytes);
    r.magic(RES_MAGIC)?;
    let n = r.usize()?;
    let width = r.usize()?;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let id = r.str()?;
        let m = r.usize()?;
        let t = Tensor::new(vec![m, width], r.f64s(m * width)?).map_err(|e| bad(e.to_string()))?;
        if out.insert(id.clone(), t).is_some() {
            return Err(bad(format!("duplicate residue features for {id}")));
        }
    }
    r.finish()?;
    Ok(out)
}

pub fn load_residue_features(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    decode_residue_features(&read_file(path)?).map_err(|e| bad(format!("{}: {e}", path.display())))
}

pub fn save_residue_features(path: &Path, features: &BTreeMap<String, Tensor>) -> Result<()> {
    write_file(path, &encode_residue_features(features)?)
}

/// A trained model with the configuration it was built from.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub config: RunConfig,
    pub model: MoseModel,
}

/// Sections: `config` (canonical text), `entities` (id list) and
/// `params` (named tensors). The header fingerprint is the hash of the
/// config text.
pub fn encode_bundle(config: &RunConfig, model: &MoseModel) -> Vec<u8> {
    let text = config.render();
    let mut sections: Vec<(&str, Vec<u8>)> = Vec::new();
    sections.push(("config", text.as_bytes().to_vec()));
    let mut w = Writer::default();
    w.strs(model.entity_ids.ids());
    sections.push(("entities", w.buf));
    let mut w = Writer::default();
    w.u64(model.store.len() as u64);
    for (_, p) in model.store.iter() {
        w.str(&p.name);
        w.tensor(&p.value);
    }
    sections.push(("params", w.buf));

    let mut out = Writer::default();
    out.buf.extend_from_slice(BUNDLE_MAGIC);
    out.u64(fnv1a(text.as_bytes()));
    out.u32(sections.len() as u32);
    for (name, body) in sections {
        out.str(name);
        out.u64(body.len() as u64);
        out.buf.extend_from_slice(&body);
    }
    out.buf
}

/// Rebuilds the model. Precomputed residue features are not stored in
/// the bundle and must be supplied again if the model was trained on them.
pub fn decode_bundle(bytes: &[u8], residue_features: Option<BTreeMap<String, Tensor>>) -> Result<Bundle> {
    let mut r = Reader::new(bytes);
    r.magic(BUNDLE_MAGIC)?;
    let fingerprint = r.u64()?;
    let n = r.u32()?;
    let mut sections: BTreeMap<String, &[u8]> = BTreeMap::new();
    for _ in 0..n {
        let name = r.str()?;
        let len = r.usize()?;
        sections.insert(name, r.take(len)?);
    }
    r.finish()?;
    let section = |name: &str| sections.get(name).copied().ok_or_else(|| bad(format!("bundle lacks the {name} section")));

    let text = std::str::from_utf8(section("config")?).map_err(|_| bad("config section is not UTF-8"))?;
    if fnv1a(text.as_bytes()) != fingerprint {
        return Err(bad("config fingerprint does not match the bundle header"));
    }
    let config = RunConfig::parse(text).map_err(|e| bad(format!("bundle config: {e}")))?;

    let mut er = Reader::new(section("entities")?);
    let entity_ids = vocab(&er.strs()?)?;
    er.finish()?;

    let mut pr = Reader::new(section("params")?);
    let mut store = ParamStore::new();
    for _ in 0..pr.usize()? {
        let name = pr.str()?;
        let value = pr.tensor()?;
        store.add(name, value);
    }
    pr.finish()?;

    let table = store.find("kg.entities").ok_or_else(|| bad("bundle lacks kg.entities"))?;
    let (rows, dim) = store.value(table).dims2("kg.entities").map_err(|e| bad(e.to_string()))?;
    if rows != entity_ids.len() {
        return Err(bad("entity table rows differ from the entity id list"));
    }
    let placeholder = EntityEmbeddingTable {
        method: config.embed.method,
        dim,
        seed: config.embed.seed,
        epochs: 0,
        entities: store.value(table).clone(),
        relations: Tensor::zeros(&[0, dim]),
        entity_ids,
        relation_ids: Vocab::new(),
        loss_trace: Vec::new(),
    };
    let mut model = match residue_features {
        None => MoseModel::new(config.model.clone(), &placeholder, 0),
        Some(f) => MoseModel::with_residue_features(config.model.clone(), &placeholder, f, 0).map_err(|e| bad(e.to_string()))?,
    };
    for (_, p) in model.store.iter() {
        if store.find(&p.name).is_none() {
            return Err(bad(format!("bundle lacks parameter {}", p.name)));
        }
    }
    model.store.copy_values_from(&store).map_err(|e| bad(e.to_string()))?;
    Ok(Bundle { config, model })
}

pub fn save_bundle(path: &Path, config: &RunConfig, model: &MoseModel) -> Result<()> {
    write_file(path, &encode_bundle(config, model))
}

pub fn load_bundle(path: &Path, residue_features: Option<BTreeMap<String, Tensor>>) -> Result<Bundle> {
    decode_bundle(&read_file(path)?, residue_features).map_err(|e| bad(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mosedti_core::kg_embed::{pretrain, EmbedConfig};
    use mosedti_core::synth::{SynthConfig, SyntheticWorld};

    fn table() -> EntityEmbeddingTable {
        let world = SyntheticWorld::generate(SynthConfig::default()).unwrap();
        let kg = world.knowledge_graph().unwrap().remove_dti_leakage();
        pretrain(&kg, &EmbedConfig { epochs: 2, ..EmbedConfig::default() }).unwrap()
    }

    #[test]
    fn embeddings_round_trip_bit_exact() {
        let t = table();
        let back = decode_embeddings(&encode_embeddings(&t)).unwrap();
        assert_eq!(back, t);
        let bits = |x: &Tensor| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.entities), bits(&t.entities));
        assert_eq!((back.dim, back.method, back.seed), (t.dim, t.method, t.seed));
    }

    #[test]
    fn embeddings_reject_wrong_counts() {
        let mut bytes = encode_embeddings(&table());
        // |E| lives right after the magic and d.
        bytes[16] ^= 1;
        assert!(decode_embeddings(&bytes).is_err());
        let bytes = encode_embeddings(&table());
        assert!(decode_embeddings(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_embeddings(&extra).is_err());
        assert!(decode_embeddings(b"MOSEBNDL").is_err());
    }

    #[test]
    fn residue_features_round_trip() {
        let mut f = BTreeMap::new();
        f.insert("t1".to_string(), Tensor::new(vec![3, 2], vec![1.0, -2.0, 0.5, 0.25, 1e-300, 7.0]).unwrap());
        f.insert("t0".to_string(), Tensor::zeros(&[1, 2]));
        assert_eq!(decode_residue_features(&encode_residue_features(&f).unwrap()).unwrap(), f);
        f.insert("t2".to_string(), Tensor::zeros(&[1, 3]));
        assert!(encode_residue_features(&f).is_err());
    }

    #[test]
    fn bundle_round_trip_predicts_identically() {
        let t = table();
        let cfg = RunConfig::default();
        let model = MoseModel::new(cfg.model.clone(), &t, 9);
        let bytes = encode_bundle(&cfg, &model);
        let back = decode_bundle(&bytes, None).unwrap();
        assert_eq!(back.config, cfg);
        for (a, b) in model.store.iter().zip(back.model.store.iter()) {
            assert_eq!(a.1.name, b.1.name);
            assert_eq!(a.1.value, b.1.value);
        }
        let mut tampered = bytes.clone();
        tampered[8] ^= 0xff;
        assert!(decode_bundle(&tampered, None).is_err());
    }
}
