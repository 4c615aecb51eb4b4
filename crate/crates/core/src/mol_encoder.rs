//! GCN drug encoder with an MLP + max readout.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{Linear, Mlp};
use crate::param::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::smiles::{MolecularGraph, ATOM_FEATURES};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GnnConfig {
    pub layers: usize,
    pub hidden: usize,
    pub readout_hidden: usize,
    pub out_dim: usize,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 64,
            readout_hidden: 64,
            out_dim: 32,
        }
    }
}

/// Several molecules stacked into one disjoint graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MolBatch {
    /// `[atoms, ATOM_FEATURES]`.
    pub features: Tensor,
    /// Messages `src -> dst`, self loops included.
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// `1 / sqrt((deg_src + 1)(deg_dst + 1))` per message, `[messages, 1]`.
    pub norm: Tensor,
    /// Molecule index of each atom.
    pub graph_of: Vec<usize>,
    pub graphs: usize,
}

impl MolBatch {
    pub fn new(graphs: &[&MolecularGraph]) -> Result<Self> {
        let mut features = Vec::new();
        let (mut src, mut dst, mut norm, mut graph_of) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut offset = 0;
        for (g, mol) in graphs.iter().enumerate() {
            if mol.atoms.is_empty() {
                return Err(Error::contract("molecule without atoms"));
            }
            features.extend(mol.feature_matrix());
            let deg = |i: usize| (mol.atoms[i].degree + 1) as f64;
            for i in 0..mol.atoms.len() {
                src.push(offset + i);
                dst.push(offset + i);
                norm.push(1.0 / deg(i));
                graph_of.push(g);
            }
            for b in &mol.bonds {
                let w = 1.0 / libm::sqrt(deg(b.a) * deg(b.b));
                src.extend([offset + b.a, offset + b.b]);
                dst.extend([offset + b.b, offset + b.a]);
                norm.extend([w, w]);
            }
            offset += mol.atoms.len();
        }
        Ok(Self {
            features: Tensor::matrix(offset, ATOM_FEATURES, features)?,
            src,
            dst,
            norm: Tensor::column(norm),
            graph_of,
            graphs: graphs.len(),
        })
    }

    pub fn atoms(&self) -> usize {
        self.graph_of.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolEncoder {
    pub config: GnnConfig,
    pub layers: Vec<Linear>,
    pub readout: Mlp,
}

impl MolEncoder {
    pub fn new(store: &mut ParamStore, config: GnnConfig, rng: &mut Rng) -> Self {
        let layers = (0..config.layers)
            .map(|l| {
                let input = if l == 0 { ATOM_FEATURES } else { config.hidden };
                Linear::new(store, &format!("gnn.layer{l}"), input, config.hidden, rng)
            })
            .collect();
        let last = if config.layers == 0 { ATOM_FEATURES } else { config.hidden };
        let readout = Mlp::new(
            store,
            "gnn.readout",
            &[last, config.readout_hidden, config.out_dim],
            rng,
        );
        Self {
            config,
            layers,
            readout,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p: Vec<ParamId> = self.layers.iter().flat_map(|l| l.params()).collect();
        p.extend(self.readout.params());
        p
    }

    /// Encodes atom features given as a tape variable (so gradients can
    /// flow to them) into `[graphs, out_dim]`.
    pub fn encode_features(&self, tape: &mut Tape, store: &ParamStore, batch: &MolBatch, mut h: Var) -> Result<Var> {
        let norm = tape.constant(batch.norm.clone());
        for layer in &self.layers {
            let w = tape.param(store, layer.weight);
            let b = tape.param(store, layer.bias);
            let hw = tape.matmul(h, w)?;
            let messages = tape.embedding_lookup(hw, batch.src.clone())?;
            let scaled = tape.mul_column(messages, norm)?;
            let reduced = tape.segment_sum(scaled, batch.dst.clone(), batch.atoms())?;
            let biased = tape.add_bias(reduced, b)?;
            h = tape.relu(biased)?;
        }
        let per_node = self.readout.forward(tape, store, h)?;
        tape.segment_max(per_node, batch.graph_of.clone(), batch.graphs)
    }

    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, batch: &MolBatch) -> Result<Var> {
        let x = tape.constant(batch.features.clone());
        self.encode_features(tape, store, batch, x)
    }

    /// Readout of a single molecule as a plain vector.
    pub fn encode_molecule(&self, store: &ParamStore, graph: &MolecularGraph) -> Result<Vec<f64>> {
        let batch = MolBatch::new(&[graph])?;
        let mut tape = Tape::new();
        let out = self.encode(&mut tape, store, &batch)?;
        Ok(tape.value(out).data().to_vec())
    }
}

/// Renumbers atoms so that old atom `i` becomes `perm[i]`.
pub fn permute_atoms(graph: &MolecularGraph, perm: &[usize]) -> MolecularGraph {
    let mut atoms = graph.atoms.clone();
    for (old, atom) in graph.atoms.iter().enumerate() {
        atoms[perm[old]] = atom.clone();
    }
    let bonds = graph
        .bonds
        .iter()
        .map(|b| crate::smiles::Bond {
            a: perm[b.a],
            b: perm[b.b],
            order: b.order,
        })
        .collect();
    MolecularGraph {
        atoms,
        bonds,
        source: graph.source.clone(),
        warnings: graph.warnings.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, check_param_gradients, project, GradCheckConfig};
    use crate::rng::stream;
    use crate::smiles::parse_smiles;

    fn encoder(seed: u64) -> (ParamStore, MolEncoder) {
        let mut store = ParamStore::new();
        let enc = MolEncoder::new(&mut store, GnnConfig::default(), &mut stream(seed, 0));
        (store, enc)
    }

    #[test]
    fn single_atom_readout_is_mlp_of_node() {
        let (store, enc) = encoder(1);
        let g = parse_smiles("C").unwrap();
        let out = enc.encode_molecule(&store, &g).unwrap();
        assert_eq!(out.len(), 32);
        // Rebuild by hand: one atom, self-loop weight 1 / (0 + 1).
        let mut tape = Tape::new();
        let mut h = tape.constant(Tensor::matrix(1, ATOM_FEATURES, g.feature_matrix()).unwrap());
        for layer in &enc.layers {
            let z = layer.forward(&mut tape, &store, h).unwrap();
            h = tape.relu(z).unwrap();
        }
        let r = enc.readout.forward(&mut tape, &store, h).unwrap();
        assert_eq!(tape.value(r).data(), &out[..]);
    }

    #[test]
    fn symmetric_atoms_share_embeddings() {
        let (store, enc) = encoder(2);
        let g = parse_smiles("CC").unwrap();
        let batch = MolBatch::new(&[&g]).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(batch.features.clone());
        let norm = tape.constant(batch.norm.clone());
        let mut h = x;
        for layer in &enc.layers {
            let hw = {
                let w = tape.param(&store, layer.weight);
                tape.matmul(h, w).unwrap()
            };
            let m = tape.embedding_lookup(hw, batch.src.clone()).unwrap();
            let s = tape.mul_column(m, norm).unwrap();
            let r = tape.segment_sum(s, batch.dst.clone(), 2).unwrap();
            let b = tape.param(&store, layer.bias);
            let z = tape.add_bias(r, b).unwrap();
            h = tape.relu(z).unwrap();
        }
        let v = tape.value(h);
        assert_eq!(v.row_slice(0), v.row_slice(1));
    }

    #[test]
    fn output_width_is_fixed() {
        let (store, enc) = encoder(3);
        for s in ["C", "CCO", "c1ccc2ccccc2c1C(=O)NCCN(C)C"] {
            let g = parse_smiles(s).unwrap();
            assert_eq!(enc.encode_molecule(&store, &g).unwrap().len(), 32);
        }
    }

    #[test]
    fn permutation_invariance_ethanol() {
        let (store, enc) = encoder(4);
        let g = parse_smiles("CCO").unwrap();
        let base = enc.encode_molecule(&store, &g).unwrap();
        for perm in [[2, 0, 1], [1, 2, 0], [0, 2, 1]] {
            let out = enc.encode_molecule(&store, &permute_atoms(&g, &perm)).unwrap();
            for (a, b) in base.iter().zip(&out) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn batched_equals_individual() {
        let (store, enc) = encoder(5);
        let a = parse_smiles("CC(=O)O").unwrap();
        let b = parse_smiles("c1ccncc1").unwrap();
        let batch = MolBatch::new(&[&a, &b]).unwrap();
        let mut tape = Tape::new();
        let out = enc.encode(&mut tape, &store, &batch).unwrap();
        let v = tape.value(out);
        assert_eq!(v.row_slice(0), &enc.encode_molecule(&store, &a).unwrap()[..]);
        assert_eq!(v.row_slice(1), &enc.encode_molecule(&store, &b).unwrap()[..]);
    }

    #[test]
    fn gradients_wrt_features_and_weights() {
        let (store, enc) = encoder(6);
        let g = parse_smiles("CC(N)C(=O)O").unwrap();
        let batch = MolBatch::new(&[&g]).unwrap();
        let weights = Tensor::row((0..32).map(|i| libm::sin(i as f64 * 0.37)).collect());
        let cfg = GradCheckConfig::default();
        let report = check_param_gradients(
            &store,
            &enc.params(),
            |tape, s| {
                let out = enc.encode(tape, s, &batch)?;
                project(tape, out, &weights)
            },
            &cfg,
            &mut stream(6, 1),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        let report = check_gradients(
            &[batch.features.clone()],
            |tape, v| {
                let out = enc.encode_features(tape, &store, &batch, v[0])?;
                project(tape, out, &weights)
            },
            &cfg,
            &mut stream(6, 2),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
