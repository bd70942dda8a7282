//! Semi-supervised text classification over a heterogeneous word/document
//! graph, trained with cross-entropy on labeled documents plus a two-view
//! graph contrastive loss whose negatives are filtered by cluster
//! pseudo-labels and re-expanded with a distance-percentile correction.

pub mod augment;
pub mod checkpoint;
pub mod cluster;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod negatives;
pub mod objective;
pub mod sparse;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
