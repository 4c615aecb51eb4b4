//! Mixture-of-experts drug–target interaction prediction.
//!
//! Two experts score a drug–target pair: an extrinsic expert over
//! knowledge-graph embeddings and an intrinsic expert over molecular graphs
//! and protein sequences. A gate blends them, and the experts supervise
//! each other with pseudo-labels during training.

#![no_std]

extern crate alloc;

pub mod ablation;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod gradsuite;
pub mod kg_embed;
pub mod kgraph;
pub mod metrics;
pub mod moe;
pub mod mol_encoder;
pub mod nn;
pub mod optim;
pub mod param;
pub mod rng;
pub mod seq_encoder;
pub mod smiles;
pub mod synergy;
pub mod synth;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use param::{ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
