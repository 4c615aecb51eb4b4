use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::smiles::SmilesError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Operand shapes do not conform for the named operation.
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by {op}")]
    NumericOverflow { op: &'static str },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error("ids missing from the entity vocabulary: {0:?}")]
    MissingEntities(Vec<String>),

    #[error("knowledge graph has no triples")]
    EmptyGraph,

    #[error("embedding mismatch: {0}")]
    EmbeddingMismatch(String),

    #[error("entity {0} has no extrinsic embedding")]
    ColdEntity(String),

    #[error("no intrinsic data for {0}")]
    MissingIntrinsic(String),

    #[error("both data perspectives are missing for pair ({drug}, {target})")]
    NoPerspective { drug: String, target: String },

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error(
        "pseudo-label selection needs {positives} positives and {negatives} negatives \
         but only {candidates} candidates exist"
    )]
    SelectionOverlap {
        positives: usize,
        negatives: usize,
        candidates: usize,
    },

    #[error("loss has no positive samples")]
    NoPositives,

    #[error(transparent)]
    Smiles(#[from] SmilesError),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
