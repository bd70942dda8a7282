//! Cluster-refined negative sets.
//!
//! An anchor's negatives are every document outside its cluster plus the
//! farthest `d%` of its own cluster (the self-correction set). With `m =
//! ⌈d/100 · n⌉` for `n` same-cluster companions, the self-correction set is
//! the top `m` companions by Euclidean distance, ties going to the larger
//! node id.

use std::fmt::Write as _;

use ndarray::ArrayView2;

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};

pub const DEFAULT_SELF_CORRECT_PCT: f64 = 20.0;

/// Per-anchor sorted negative document ids.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeIndex {
    sets: Vec<Vec<usize>>,
    pub d_pct: f64,
}

impl NegativeIndex {
    /// Wraps explicit sets. Sets are sorted and deduplicated; an anchor may
    /// not list itself.
    pub fn from_sets(mut sets: Vec<Vec<usize>>, d_pct: f64) -> Result<Self> {
        let n = sets.len();
        for (anchor, set) in sets.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.binary_search(&anchor).is_ok() {
                return Err(Error::Data(format!("anchor {anchor} listed as its own negative")));
            }
            if let Some(&bad) = set.iter().find(|&&j| j >= n) {
                return Err(Error::Data(format!("negative id {bad} out of range for {n} documents")));
            }
        }
        Ok(Self { sets, d_pct })
    }

    /// Every other document for every anchor.
    pub fn all_pairs(n: usize) -> Self {
        Self {
            sets: (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect(),
            d_pct: 100.0,
        }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn negatives(&self, anchor: usize) -> &[usize] {
        &self.sets[anchor]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.sets.iter().map(Vec::as_slice)
    }

    pub fn total_pairs(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    /// `<anchor>\t<comma-separated negative ids>` lines.
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        for (anchor, set) in self.sets.iter().enumerate() {
            let ids: Vec<String> = set.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "{anchor}\t{}", ids.join(","));
        }
        s
    }
}

/// `(companion id, Euclidean distance)` for every other member of the anchor's cluster.
pub fn pairwise_distances(z: ArrayView2<'_, f64>, assignment: &ClusterAssignment) -> Result<Vec<Vec<(usize, f64)>>> {
    let labels = &assignment.labels;
    if labels.len() != z.nrows() {
        return Err(Error::shape("cluster labels vs representation rows", z.nrows(), labels.len()));
    }
    let mut members = vec![Vec::new(); assignment.k.max(labels.iter().max().map_or(0, |m| m + 1))];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    Ok((0..z.nrows())
        .map(|i| {
            members[labels[i]]
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    let d = z
                        .row(i)
                        .iter()
                        .zip(z.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    (j, d)
                })
                .collect()
        })
        .collect())
}

/// Number of companions the self-correction keeps out of `n` at `d_pct` percent.
pub fn distant_count(n: usize, d_pct: f64) -> usize {
    // Multiply before dividing so integer percentages give exact products.
    let m = (d_pct * n as f64 / 100.0).ceil();
    (m.max(0.0) as usize).min(n)
}

/// The farthest `⌈d% · n⌉` companions, sorted by id.
pub fn distant_set(distances: &[(usize, f64)], d_pct: f64) -> Vec<usize> {
    let m = distant_count(distances.len(), d_pct);
    let mut ranked = distances.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.cmp(&a.0)));
    let mut out: Vec<usize> = ranked.into_iter().take(m).map(|(id, _)| id).collect();
    out.sort_unstable();
    out
}

pub fn build_negative_index(
    z: ArrayView2<'_, f64>,
    assignment: &ClusterAssignment,
    d_pct: f64,
) -> Result<NegativeIndex> {
    if !(0.0..=100.0).contains(&d_pct) {
        return Err(Error::Config(format!("self-correction percentage must be in [0, 100], got {d_pct}")));
    }
    let distances = pairwise_distances(z, assignment)?;
    let labels = &assignment.labels;
    let sets = distances
        .iter()
        .enumerate()
        .map(|(i, companions)| {
            let mut set: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] != labels[i]).collect();
            set.extend(distant_set(companions, d_pct));
            set.sort_unstable();
            set
        })
        .collect();
    Ok(NegativeIndex { sets, d_pct })
}

/// Fraction of `(anchor, negative)` pairs whose true labels agree. Pairs with
/// an unlabeled side are skipped; returns 0 when no pair qualifies.
pub fn false_negative_rate(index: &NegativeIndex, true_labels: &[Option<usize>]) -> f64 {
    let mut same = 0usize;
    let mut total = 0usize;
    for (anchor, set) in index.iter().enumerate() {
        let Some(la) = true_labels[anchor] else { continue };
        for &j in set {
            if let Some(lj) = true_labels[j] {
                total += 1;
                same += usize::from(lj == la);
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    }
}
