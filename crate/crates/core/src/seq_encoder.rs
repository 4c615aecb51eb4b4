//! 1-D CNN protein encoder with adaptive max pooling.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{glorot, uniform, Linear};
use crate::param::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// The 20 standard amino acids; index 20 is the unknown bucket `X`.
pub const ALPHABET: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";
pub const UNKNOWN_RESIDUE: u8 = 20;

pub fn residue_index(letter: u8) -> u8 {
    let up = letter.to_ascii_uppercase();
    ALPHABET
        .iter()
        .position(|&a| a == up)
        .map_or(UNKNOWN_RESIDUE, |i| i as u8)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidueSequence {
    pub id: String,
    pub residues: Vec<u8>,
    /// Original length when the sequence was truncated.
    pub truncated_from: Option<usize>,
}

impl ResidueSequence {
    pub fn from_letters(id: &str, letters: &str, max_len: usize) -> Result<Self> {
        let letters = letters.trim();
        if letters.is_empty() {
            return Err(Error::contract(format!("empty sequence for {id}")));
        }
        let mut residues: Vec<u8> = letters.bytes().map(residue_index).collect();
        let mut truncated_from = None;
        if residues.len() > max_len {
            log::warn!("sequence {id} truncated from {} to {max_len}", residues.len());
            truncated_from = Some(residues.len());
            residues.truncate(max_len);
        }
        Ok(Self {
            id: id.to_string(),
            residues,
            truncated_from,
        })
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResidueFeaturizer {
    /// Trainable `[21, e_dim]` table.
    Learned { table: ParamId },
    /// Fixed per-target `[M, e_dim]` matrices keyed by target id.
    Precomputed { features: BTreeMap<String, Tensor> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnnConfig {
    pub e_dim: usize,
    pub kernel: usize,
    /// Output channels of each conv layer.
    pub channels: Vec<usize>,
    pub pool_len: usize,
    pub out_dim: usize,
    pub max_len: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            e_dim: 16,
            kernel: 5,
            channels: alloc::vec![32, 32, 32],
            pool_len: 8,
            out_dim: 32,
            max_len: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvLayer {
    /// `[kernel, c_in, c_out]`.
    pub kernel: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqEncoder {
    pub config: CnnConfig,
    pub featurizer: ResidueFeaturizer,
    pub convs: Vec<ConvLayer>,
    pub projection: Linear,
}

impl SeqEncoder {
    pub fn new(store: &mut ParamStore, config: CnnConfig, rng: &mut Rng) -> Self {
        let table = store.add(
            "cnn.residues",
            uniform(&[21, config.e_dim], glorot(21, config.e_dim), rng),
        );
        Self::with_featurizer(store, config, ResidueFeaturizer::Learned { table }, rng)
    }

    /// Encoder over fixed per-residue vectors, checked for width.
    pub fn precomputed(
        store: &mut ParamStore,
        config: CnnConfig,
        features: BTreeMap<String, Tensor>,
        rng: &mut Rng,
    ) -> Result<Self> {
        for (id, f) in &features {
            let (_, w) = f.dims2("residue features")?;
            if w != config.e_dim {
                return Err(Error::config(format!(
                    "residue features for {id} have width {w}, expected {}",
                    config.e_dim
                )));
            }
        }
        Ok(Self::with_featurizer(
            store,
            config,
            ResidueFeaturizer::Precomputed { features },
            rng,
        ))
    }

    fn with_featurizer(store: &mut ParamStore, config: CnnConfig, featurizer: ResidueFeaturizer, rng: &mut Rng) -> Self {
        let mut c_in = config.e_dim;
        let mut convs = Vec::new();
        for (l, &c_out) in config.channels.iter().enumerate() {
            let bound = glorot(config.kernel * c_in, config.kernel * c_out);
            let kernel = store.add(
                format!("cnn.conv{l}.kernel"),
                uniform(&[config.kernel, c_in, c_out], bound, rng),
            );
            let bias = store.add(format!("cnn.conv{l}.bias"), Tensor::zeros(&[1, c_out]));
            convs.push(ConvLayer { kernel, bias });
            c_in = c_out;
        }
        let projection = Linear::new(store, "cnn.projection", c_in * config.pool_len, config.out_dim, rng);
        Self {
            config,
            featurizer,
            convs,
            projection,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = Vec::new();
        if let ResidueFeaturizer::Learned { table } = self.featurizer {
            p.push(table);
        }
        for c in &self.convs {
            p.extend([c.kernel, c.bias]);
        }
        p.extend(self.projection.params());
        p
    }

    /// Per-residue input vectors `[M, e_dim]` of one sequence.
    pub fn residue_inputs(&self, tape: &mut Tape, store: &ParamStore, seq: &ResidueSequence) -> Result<Var> {
        if seq.is_empty() {
            return Err(Error::contract(format!("empty sequence for {}", seq.id)));
        }
        match &self.featurizer {
            ResidueFeaturizer::Learned { table } => {
                let t = tape.param(store, *table);
                tape.embedding_lookup(t, seq.residues.iter().map(|&r| r as usize).collect())
            }
            ResidueFeaturizer::Precomputed { features } => {
                let f = features
                    .get(&seq.id)
                    .ok_or_else(|| Error::MissingIntrinsic(format!("residue features for {}", seq.id)))?;
                let (m, _) = f.dims2("residue features")?;
                if m < seq.len() {
                    return Err(Error::config(format!(
                        "residue features for {} cover {m} of {} positions",
                        seq.id,
                        seq.len()
                    )));
                }
                let rows = Tensor::matrix(seq.len(), self.config.e_dim, f.data()[..seq.len() * self.config.e_dim].to_vec())?;
                Ok(tape.constant(rows))
            }
        }
    }

    /// Conv stack, pooling and flattening for one `[M, e_dim]` input;
    /// returns `[1, channels * pool_len]`.
    pub fn pooled(&self, tape: &mut Tape, store: &ParamStore, mut x: Var) -> Result<Var> {
        for conv in &self.convs {
            let k = tape.param(store, conv.kernel);
            let b = tape.param(store, conv.bias);
            let c = tape.conv1d(x, k, 1)?;
            let c = tape.add_bias(c, b)?;
            x = tape.relu(c)?;
        }
        let pooled = tape.adaptive_max_pool(x, self.config.pool_len)?;
        let width = tape.value(pooled).len();
        tape.reshape(pooled, &[1, width])
    }

    /// Encodes sequences into `[n, out_dim]`.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, seqs: &[&ResidueSequence]) -> Result<Var> {
        let mut rows = Vec::with_capacity(seqs.len());
        for seq in seqs {
            let x = self.residue_inputs(tape, store, seq)?;
            rows.push(self.pooled(tape, store, x)?);
        }
        let stacked = tape.concat(&rows, 0)?;
        self.projection.forward(tape, store, stacked)
    }

    pub fn encode_target(&self, store: &ParamStore, seq: &ResidueSequence) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.encode(&mut tape, store, &[seq])?;
        Ok(tape.value(out).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_param_gradients, project, GradCheckConfig};
    use crate::rng::stream;
    use crate::tape::pool_segment;
    use alloc::vec;

    fn encoder(seed: u64) -> (ParamStore, SeqEncoder) {
        let mut store = ParamStore::new();
        let enc = SeqEncoder::new(&mut store, CnnConfig::default(), &mut stream(seed, 0));
        (store, enc)
    }

    fn seq(len: usize) -> ResidueSequence {
        let letters: String = (0..len).map(|i| ALPHABET[(i * 7 + 3) % 20] as char).collect();
        ResidueSequence::from_letters("t", &letters, 2000).unwrap()
    }

    #[test]
    fn alphabet_and_unknowns() {
        assert_eq!(residue_index(b'A'), 0);
        assert_eq!(residue_index(b'y'), 19);
        assert_eq!(residue_index(b'B'), UNKNOWN_RESIDUE);
        assert_eq!(residue_index(b'*'), UNKNOWN_RESIDUE);
        assert!(ResidueSequence::from_letters("t", "  ", 10).is_err());
        let s = ResidueSequence::from_letters("t", "ACDEFG", 4).unwrap();
        assert_eq!((s.len(), s.truncated_from), (4, Some(6)));
    }

    #[test]
    fn output_shape_independent_of_length() {
        let (store, enc) = encoder(1);
        for m in [1, 10, 50, 500, 1000] {
            assert_eq!(enc.encode_target(&store, &seq(m)).unwrap().len(), 32);
        }
    }

    #[test]
    fn zero_inputs_and_biases_give_zero_output() {
        let (mut store, enc) = encoder(2);
        if let ResidueFeaturizer::Learned { table } = enc.featurizer {
            store.value_mut(table).data_mut().fill(0.0);
        }
        let out = enc.encode_target(&store, &seq(30)).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pool_segments_partition() {
        for len in [8, 9, 50, 1000] {
            let mut next = 0;
            for i in 0..8 {
                let (s, e) = pool_segment(i, len, 8);
                assert_eq!(s, next);
                assert_eq!((s, e), (i * len / 8, (i + 1) * len / 8));
                next = e;
            }
            assert_eq!(next, len);
        }
    }

    #[test]
    fn precomputed_features() {
        let mut store = ParamStore::new();
        let cfg = CnnConfig {
            e_dim: 4,
            ..CnnConfig::default()
        };
        let mut feats = BTreeMap::new();
        feats.insert("t".to_string(), Tensor::full(&[12, 4], 0.5));
        let enc = SeqEncoder::precomputed(&mut store, cfg.clone(), feats.clone(), &mut stream(3, 0)).unwrap();
        let s = ResidueSequence::from_letters("t", "ACDEFGHIKLMN", 2000).unwrap();
        assert_eq!(enc.encode_target(&store, &s).unwrap().len(), 32);
        let other = ResidueSequence::from_letters("u", "ACD", 2000).unwrap();
        assert!(matches!(enc.encode_target(&store, &other), Err(Error::MissingIntrinsic(_))));
        feats.insert("bad".to_string(), Tensor::zeros(&[3, 5]));
        assert!(SeqEncoder::precomputed(&mut ParamStore::new(), cfg, feats, &mut stream(3, 0)).is_err());
    }

    #[test]
    fn gradients_including_residue_table() {
        let (store, enc) = encoder(4);
        let seqs = [seq(13), seq(5)];
        let weights = Tensor::new(vec![2, 32], (0..64).map(|i| libm::cos(i as f64)).collect()).unwrap();
        let report = check_param_gradients(
            &store,
            &enc.params(),
            |tape, s| {
                let out = enc.encode(tape, s, &[&seqs[0], &seqs[1]])?;
                project(tape, out, &weights)
            },
            &GradCheckConfig::default(),
            &mut stream(4, 1),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
