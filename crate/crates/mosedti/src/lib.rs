//! File formats, data loading and experiment drivers around `mosedti-core`.

pub mod binfmt;
pub mod io;
pub mod pipeline;
pub mod report;
