//! Label-free pretraining of entity embeddings on the filtered knowledge
//! graph (TransE, optionally RotatE).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::kgraph::{KnowledgeGraph, Triple, Vocab};
use crate::nn::uniform;
use crate::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use crate::param::ParamStore;
use crate::rng::{self, Rng};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedMethod {
    TransE,
    RotatE,
}

impl EmbedMethod {
    pub fn name(self) -> &'static str {
        match self {
            EmbedMethod::TransE => "transe",
            EmbedMethod::RotatE => "rotate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Some(EmbedMethod::TransE),
            "rotate" => Some(EmbedMethod::RotatE),
            _ => None,
        }
    }

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(EmbedMethod::TransE),
            1 => Some(EmbedMethod::RotatE),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedConfig {
    pub method: EmbedMethod,
    pub dim: usize,
    pub margin: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            method: EmbedMethod::TransE,
            dim: 32,
            margin: 1.0,
            epochs: 100,
            lr: 0.01,
            batch_size: 256,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

/// Pretrained embeddings: `entities` is `[|E|, d]`; `relations` is
/// `[|R|, d]` for TransE and `[|R|, d/2]` phases for RotatE.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityEmbeddingTable {
    pub method: EmbedMethod,
    pub dim: usize,
    pub seed: u64,
    pub epochs: usize,
    pub entities: Tensor,
    pub relations: Tensor,
    pub entity_ids: Vocab,
    pub relation_ids: Vocab,
    /// Mean loss of each epoch.
    pub loss_trace: Vec<f64>,
}

impl EntityEmbeddingTable {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn row(&self, id: &str) -> Option<&[f64]> {
        self.entity_ids.get(id).map(|i| self.entities.row_slice(i))
    }

    pub fn relation_width(&self) -> usize {
        match self.method {
            EmbedMethod::TransE => self.dim,
            EmbedMethod::RotatE => self.dim / 2,
        }
    }

    /// Structural validation used after loading from disk.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::EmbeddingMismatch(m.into()));
        if self.entities.shape() != [self.entity_ids.len(), self.dim] {
            return bad("entity matrix shape differs from header");
        }
        if self.relations.shape() != [self.relation_ids.len(), self.relation_width()] {
            return bad("relation matrix shape differs from header");
        }
        if !self.entities.all_finite() || !self.relations.all_finite() {
            return bad("non-finite embedding values");
        }
        Ok(())
    }

    /// Checks the table was trained on the given graph's vocabulary.
    pub fn check_against(&self, kg: &KnowledgeGraph) -> Result<()> {
        if self.entity_ids.len() != kg.entities.len() {
            return Err(Error::EmbeddingMismatch(alloc::format!(
                "table has {} entities, graph has {}",
                self.entity_ids.len(),
                kg.entities.len()
            )));
        }
        if self.entity_ids != kg.entities || self.relation_ids != kg.relations {
            return Err(Error::EmbeddingMismatch("vocabulary order differs".into()));
        }
        Ok(())
    }
}

pub fn transe_distance(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    libm::sqrt(h.iter().zip(r).zip(t).map(|((h, r), t)| (h + r - t) * (h + r - t)).sum())
}

/// Rotates complex coordinates `[re | im]` of `h` by `phases`.
pub fn rotate(h: &[f64], phases: &[f64]) -> Vec<f64> {
    let k = phases.len();
    let mut out = vec![0.0; 2 * k];
    for j in 0..k {
        let (s, c) = (libm::sin(phases[j]), libm::cos(phases[j]));
        out[j] = h[j] * c - h[k + j] * s;
        out[k + j] = h[j] * s + h[k + j] * c;
    }
    out
}

pub fn rotate_distance(h: &[f64], phases: &[f64], t: &[f64]) -> f64 {
    let hr = rotate(h, phases);
    libm::sqrt(hr.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum())
}

pub fn margin_loss(pos_distance: f64, neg_distance: f64, margin: f64) -> f64 {
    (margin + pos_distance - neg_distance).max(0.0)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = libm::fmod(x + PI, 2.0 * PI);
    if y <= 0.0 {
        y += 2.0 * PI;
    }
    y - PI
}

struct Batch {
    pos: Vec<Triple>,
    neg: Vec<Triple>,
}

fn distances(tape: &mut Tape, method: EmbedMethod, ent: Var, rel: Var, triples: &[Triple]) -> Result<Var> {
    let h = tape.embedding_lookup(ent, triples.iter().map(|t| t.head).collect())?;
    let r = tape.embedding_lookup(rel, triples.iter().map(|t| t.rel).collect())?;
    let t = tape.embedding_lookup(ent, triples.iter().map(|t| t.tail).collect())?;
    let diff = match method {
        EmbedMethod::TransE => {
            let hr = tape.add(h, r)?;
            tape.sub(hr, t)?
        }
        EmbedMethod::RotatE => {
            let k = tape.value(r).shape()[1];
            let (c, s) = (tape.cos(r)?, tape.sin(r)?);
            let re = tape.slice_cols(h, 0, k)?;
            let im = tape.slice_cols(h, k, k)?;
            let (re_c, im_s) = (tape.mul(re, c)?, tape.mul(im, s)?);
            let (re_s, im_c) = (tape.mul(re, s)?, tape.mul(im, c)?);
            let out_re = tape.sub(re_c, im_s)?;
            let out_im = tape.add(re_s, im_c)?;
            let hr = tape.concat(&[out_re, out_im], 1)?;
            tape.sub(hr, t)?
        }
    };
    tape.l2_norm(diff)
}

fn batch_loss(tape: &mut Tape, cfg: &EmbedConfig, ent: Var, rel: Var, batch: &Batch) -> Result<Var> {
    let dp = distances(tape, cfg.method, ent, rel, &batch.pos)?;
    let dn = distances(tape, cfg.method, ent, rel, &batch.neg)?;
    let n = batch.pos.len();
    let total = match cfg.method {
        EmbedMethod::TransE => {
            let gap = tape.sub(dp, dn)?;
            let shifted = tape.add_scalar(gap, cfg.margin)?;
            let hinge = tape.relu(shifted)?;
            tape.sum(hinge)?
        }
        EmbedMethod::RotatE => {
            // -log sigma(margin - d+) - log sigma(d- - margin)
            let both = tape.concat(&[dp, dn], 0)?;
            let neg = tape.scale(both, -1.0)?;
            let logits = tape.add_scalar(neg, cfg.margin)?;
            let mut y = vec![1.0; n];
            y.extend(core::iter::repeat_n(0.0, n));
            tape.bce_with_logits(logits, &y, &vec![1.0; 2 * n])?
        }
    };
    tape.scale(total, 1.0 / n as f64)
}

fn normalize_rows(t: &mut Tensor) {
    let (r, _) = t.dims2("normalize_rows").expect("matrix");
    for i in 0..r {
        let row = t.row_slice_mut(i);
        let norm = libm::sqrt(row.iter().map(|v| v * v).sum());
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

/// Trains entity and relation embeddings on `kg`, which should already be
/// leakage filtered.
pub fn pretrain(kg: &KnowledgeGraph, cfg: &EmbedConfig) -> Result<EntityEmbeddingTable> {
    if kg.triples().is_empty() {
        return Err(Error::EmptyGraph);
    }
    if cfg.dim < 2 {
        return Err(Error::config("embedding dimension must be at least 2"));
    }
    if cfg.method == EmbedMethod::RotatE && cfg.dim % 2 != 0 {
        return Err(Error::config("RotatE needs an even embedding dimension"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let d = cfg.dim;
    let bound = 6.0 / libm::sqrt(d as f64);
    let mut init = rng::tagged(cfg.seed, "kg-embed.init");
    let mut store = ParamStore::new();
    let mut entities = uniform(&[kg.entities.len(), d], bound, &mut init);
    let relations = match cfg.method {
        EmbedMethod::TransE => {
            let mut r = uniform(&[kg.relations.len(), d], bound, &mut init);
            normalize_rows(&mut r);
            normalize_rows(&mut entities);
            r
        }
        EmbedMethod::RotatE => {
            let mut r = uniform(&[kg.relations.len(), d / 2], PI, &mut init);
            r.data_mut().iter_mut().for_each(|p| *p = wrap_phase(*p));
            r
        }
    };
    let ent_id = store.add("kg.entities", entities);
    let rel_id = store.add("kg.relations", relations);
    let mut opt = Optimizer::new(OptimizerConfig {
        kind: cfg.optimizer,
        ..OptimizerConfig::adam(cfg.lr)
    });
    let mut order_rng = rng::tagged(cfg.seed, "kg-embed.order");
    let mut neg_rng: Rng = rng::tagged(cfg.seed, "kg-embed.negatives");
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<Triple> = kg.triples().to_vec();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let neg = chunk
                .iter()
                .map(|&t| kg.sample_negative_triple(t, &mut neg_rng).map(|(c, _)| c))
                .collect::<Result<Vec<_>>>()?;
            let batch = Batch {
                pos: chunk.to_vec(),
                neg,
            };
            let mut tape = Tape::new();
            let ent = tape.param(&store, ent_id);
            let rel = tape.param(&store, rel_id);
            let loss = batch_loss(&mut tape, cfg, ent, rel, &batch)?;
            let value = tape.value(loss).item()?;
            epoch_loss += value * chunk.len() as f64;
            let grads = tape.backward(loss)?;
            store.accumulate(&grads)?;
            opt.step(&mut store)?;
        }
        match cfg.method {
            EmbedMethod::TransE => normalize_rows(store.value_mut(ent_id)),
            EmbedMethod::RotatE => store
                .value_mut(rel_id)
                .data_mut()
                .iter_mut()
                .for_each(|p| *p = wrap_phase(*p)),
        }
        let mean = epoch_loss / order.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NumericOverflow { op: "kg pretraining loss" });
        }
        log::debug!("kg-embed epoch {epoch}: loss {mean:.6}");
        trace.push(mean);
    }

    Ok(EntityEmbeddingTable {
        method: cfg.method,
        dim: d,
        seed: cfg.seed,
        epochs: cfg.epochs,
        entities: store.value(ent_id).clone(),
        relations: store.value(rel_id).clone(),
        entity_ids: kg.entities.clone(),
        relation_ids: kg.relations.clone(),
        loss_trace: trace,
    })
}
