//! Pseudo-labels for document representations.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterMethod {
    #[default]
    KMeans,
    Agglomerative,
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterMethod::KMeans => "kmeans",
            ClusterMethod::Agglomerative => "agglomerative",
        })
    }
}

impl FromStr for ClusterMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(ClusterMethod::KMeans),
            "agglomerative" => Ok(ClusterMethod::Agglomerative),
            other => Err(Error::Config(format!("unknown cluster method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Present for k-means only.
    pub centroids: Option<Array2<f64>>,
    /// Sum of squared distances to the assigned cluster mean.
    pub inertia: f64,
    /// Inertia after each assignment step (k-means only).
    pub inertia_history: Vec<f64>,
    pub method: ClusterMethod,
}

impl ClusterAssignment {
    /// Every document in one cluster.
    pub fn single(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            k: 1,
            centroids: None,
            inertia: 0.0,
            inertia_history: Vec::new(),
            method: ClusterMethod::KMeans,
        }
    }

    /// Each document in its own cluster.
    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            k: n,
            centroids: None,
            inertia: 0.0,
            inertia_history: Vec::new(),
            method: ClusterMethod::Agglomerative,
        }
    }

    /// `<doc_index>\t<cluster_id>` lines.
    pub fn to_tsv(&self) -> String {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{i}\t{c}\n"))
            .collect()
    }
}

pub trait Clusterer {
    fn cluster(&self, points: ArrayView2<'_, f64>, k: usize) -> Result<ClusterAssignment>;
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::Config(format!("cluster count k = {k} must be in [1, {n}]")));
    }
    Ok(())
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point, lowest id on ties; returns labels and inertia.
fn assign(points: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (c, centroid) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best.1 {
                    best = (c, d);
                }
            }
            inertia += best.1;
            best.0
        })
        .collect();
    (labels, inertia)
}

fn means(points: ArrayView2<'_, f64>, labels: &[usize], k: usize) -> (Array2<f64>, Vec<usize>) {
    let mut sums = Array2::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (p, &l) in points.rows().into_iter().zip(labels) {
        sums.row_mut(l).scaled_add(1.0, &p);
        counts[l] += 1;
    }
    for (mut row, &c) in sums.rows_mut().into_iter().zip(&counts) {
        if c > 0 {
            row /= c as f64;
        }
    }
    (sums, counts)
}

/// Sum of squared distances to each cluster's mean.
pub fn inertia_of(points: ArrayView2<'_, f64>, labels: &[usize], k: usize) -> f64 {
    let (centers, _) = means(points, labels, k);
    points
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, centers.row(l)))
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Empty clusters are re-seeded at the point farthest from its current
/// centroid, so `k` stays constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeans {
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the largest centroid shift is below this.
    pub tol: f64,
}

impl Default for KMeans {
    fn default() -> Self {
        Self {
            seed: 0,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

impl KMeans {
    fn plus_plus(&self, points: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let n = points.nrows();
        let mut chosen = vec![rng.random_range(0..n)];
        let mut d2: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, points.row(chosen[0]))).collect();
        while chosen.len() < k {
            let total: f64 = d2.iter().sum();
            let next = if total > 0.0 {
                let mut target = rng.random_range(0.0..total);
                let mut pick = n - 1;
                for (i, &w) in d2.iter().enumerate() {
                    if w > 0.0 && target < w {
                        pick = i;
                        break;
                    }
                    target -= w;
                }
                // Guard against rounding landing on a zero-weight tail.
                if d2[pick] == 0.0 {
                    pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
                }
                pick
            } else {
                // Fewer distinct points than k.
                (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
            };
            chosen.push(next);
            for (i, p) in points.rows().into_iter().enumerate() {
                d2[i] = d2[i].min(sq_dist(p, points.row(next)));
            }
        }
        points.select(Axis(0), &chosen)
    }
}

impl Clusterer for KMeans {
    fn cluster(&self, points: ArrayView2<'_, f64>, k: usize) -> Result<ClusterAssignment> {
        check_k(points.nrows(), k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut centroids = self.plus_plus(points, k, &mut rng);
        let mut history = Vec::new();

        for _ in 0..self.max_iter {
            let (labels, inertia) = assign(points, &centroids);
            debug_assert!(
                history.last().is_none_or(|&prev: &f64| inertia <= prev + 1e-9 * prev.abs().max(1.0)),
                "k-means inertia increased: {history:?} -> {inertia}"
            );
            history.push(inertia);

            let (mut next, counts) = means(points, &labels, k);
            for c in (0..k).filter(|&c| counts[c] == 0) {
                let far = points
                    .rows()
                    .into_iter()
                    .zip(&labels)
                    .map(|(p, &l)| sq_dist(p, next.row(l)))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, d)| if d > best.1 { (i, d) } else { best });
                next.row_mut(c).assign(&points.row(far.0));
            }
            let shift = centroids
                .rows()
                .into_iter()
                .zip(next.rows())
                .map(|(a, b)| sq_dist(a, b).sqrt())
                .fold(0.0, f64::max);
            centroids = next;
            if shift < self.tol {
                break;
            }
        }

        let (labels, inertia) = assign(points, &centroids);
        history.push(inertia);
        Ok(ClusterAssignment {
            labels,
            k,
            centroids: Some(centroids),
            inertia,
            inertia_history: history,
            method: ClusterMethod::KMeans,
        })
    }
}

/// Bottom-up Ward-linkage clustering. Ties go to the lexicographically
/// smallest pair of cluster slots; cluster ids follow the smallest member index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Agglomerative;

impl Clusterer for Agglomerative {
    fn cluster(&self, points: ArrayView2<'_, f64>, k: usize) -> Result<ClusterAssignment> {
        let n = points.nrows();
        check_k(n, k)?;
        let mut centers: Vec<Array1<f64>> = points.rows().into_iter().map(|r| r.to_owned()).collect();
        let mut sizes = vec![1usize; n];
        let mut slot_of: Vec<usize> = (0..n).collect();
        let mut active: Vec<bool> = vec![true; n];

        let ward = |ca: &Array1<f64>, na: usize, cb: &Array1<f64>, nb: usize| {
            (na * nb) as f64 / (na + nb) as f64 * sq_dist(ca.view(), cb.view())
        };
        let mut cost = Array2::from_elem((n, n), f64::INFINITY);
        for a in 0..n {
            for b in a + 1..n {
                cost[[a, b]] = ward(&centers[a], 1, &centers[b], 1);
            }
        }

        for _ in 0..n - k {
            let mut best = (0, 0, f64::INFINITY);
            for a in (0..n).filter(|&a| active[a]) {
                for b in (a + 1..n).filter(|&b| active[b]) {
                    if cost[[a, b]] < best.2 {
                        best = (a, b, cost[[a, b]]);
                    }
                }
            }
            let (a, b, _) = best;
            let merged = (&centers[a] * sizes[a] as f64 + &centers[b] * sizes[b] as f64) / (sizes[a] + sizes[b]) as f64;
            centers[a] = merged;
            sizes[a] += sizes[b];
            active[b] = false;
            for s in slot_of.iter_mut().filter(|s| **s == b) {
                *s = a;
            }
            for o in (0..n).filter(|&o| active[o] && o != a) {
                let c = ward(&centers[a], sizes[a], &centers[o], sizes[o]);
                cost[[a.min(o), a.max(o)]] = c;
            }
        }

        let mut id_of_slot = vec![usize::MAX; n];
        let mut next_id = 0;
        let labels: Vec<usize> = slot_of
            .iter()
            .map(|&s| {
                if id_of_slot[s] == usize::MAX {
                    id_of_slot[s] = next_id;
                    next_id += 1;
                }
                id_of_slot[s]
            })
            .collect();
        let inertia = inertia_of(points, &labels, k);
        Ok(ClusterAssignment {
            labels,
            k,
            centroids: None,
            inertia,
            inertia_history: Vec::new(),
            method: ClusterMethod::Agglomerative,
        })
    }
}

pub fn clusterer(method: ClusterMethod, seed: u64) -> Box<dyn Clusterer> {
    match method {
        ClusterMethod::KMeans => Box::new(KMeans {
            seed,
            ..KMeans::default()
        }),
        ClusterMethod::Agglomerative => Box::new(Agglomerative),
    }
}
