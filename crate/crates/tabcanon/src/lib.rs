//! Toolkit for table-structure ground truth: alignment of markup text to page
//! tokens, spatial completion, canonicalization, quality control, object
//! emission, assembly of detected objects into logical tables, and
//! structure-similarity metrics.

pub mod align;
pub mod assemble;
pub mod canon;
pub mod cli;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod qc;
pub mod spatial;
