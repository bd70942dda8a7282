//! Edge-dropping views and symmetric adjacency normalization.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView {
    pub adjacency: SparseMatrix,
    pub drop_probability: f64,
    pub seed: u64,
}

/// Removes each undirected off-diagonal edge with probability `p`, one draw
/// per edge in upper-triangle order. Self-loops and surviving weights are
/// left untouched.
pub fn drop_edges(adjacency: &SparseMatrix, p: f64, seed: u64) -> Result<AugmentedView> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("drop probability must be in [0, 1], got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut upper = BTreeMap::new();
    for (r, c, v) in adjacency.upper_entries() {
        if r == c || !rng.random_bool(p) {
            upper.insert((r, c), v);
        }
    }
    Ok(AugmentedView {
        adjacency: SparseMatrix::symmetric_from_upper(adjacency.dim(), &upper),
        drop_probability: p,
        seed,
    })
}

/// `D^{-1/2} A D^{-1/2}` with `D` the row sums of `A`. The unit diagonal is
/// expected to already be present in `A`.
pub fn normalize(adjacency: &SparseMatrix) -> Result<SparseMatrix> {
    let deg = adjacency.row_sums();
    if let Some(row) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::Data(format!("node {row} has non-positive degree {}", deg[row])));
    }
    Ok(adjacency.map_values(|r, c, v| v / (deg[r] * deg[c]).sqrt()))
}

/// `A + I`. Only used when self-loops should count twice.
pub fn add_identity(adjacency: &SparseMatrix) -> SparseMatrix {
    adjacency.map_values(|r, c, v| if r == c { v + 1.0 } else { v })
}
