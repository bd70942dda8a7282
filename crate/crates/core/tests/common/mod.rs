//! Fixtures and brute-force reference implementations shared by the
//! integration tests. The oracles never call into the library's own
//! counting, ranking or loss code.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Writes seeded standard-normal document embeddings in the exporter's text
/// format, the same file `export --random` produces.
pub fn write_random_embeddings(path: &Path, n_docs: usize, dim: usize, seed: u64) -> io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = format!("{n_docs} {dim}\n");
    for _ in 0..n_docs {
        let row: Vec<String> = (0..dim).map(|_| normal.sample(&mut rng).to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out)
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_clustertext")
}

/// Up to `max_docs` documents of 1..=12 tokens over at most `max_vocab` words.
pub fn random_documents(rng: &mut impl Rng, max_docs: usize, max_vocab: usize) -> Vec<Vec<String>> {
    let n_docs = rng.random_range(1..=max_docs);
    let vocab = rng.random_range(1..=max_vocab);
    (0..n_docs)
        .map(|_| {
            let len = rng.random_range(1..=12);
            (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))).collect()
        })
        .collect()
}

fn windows(doc: &[String], window: usize) -> Vec<&[String]> {
    if doc.len() <= window {
        vec![doc]
    } else {
        doc.windows(window).collect()
    }
}

/// Positive PMI keyed by the lexicographically ordered word pair.
pub fn pmi_oracle(docs: &[Vec<String>], window: usize) -> BTreeMap<(String, String), f64> {
    let all: Vec<&[String]> = docs.iter().flat_map(|d| windows(d, window)).collect();
    let mut words: Vec<&String> = docs.iter().flatten().collect();
    words.sort();
    words.dedup();
    let containing = |w: &String| all.iter().filter(|win| win.contains(w)).count();

    let mut out = BTreeMap::new();
    for (a, &wa) in words.iter().enumerate() {
        for &wb in &words[a + 1..] {
            let both = all.iter().filter(|win| win.contains(wa) && win.contains(wb)).count();
            if both == 0 {
                continue;
            }
            let ratio = (both * all.len()) as f64 / (containing(wa) * containing(wb)) as f64;
            let pmi = ratio.ln();
            if pmi > 0.0 {
                out.insert((wa.clone(), wb.clone()), pmi);
            }
        }
    }
    out
}

/// TF-IDF weight of `word` in document `d`, zero when absent.
pub fn tfidf_oracle(docs: &[Vec<String>], d: usize, word: &str) -> f64 {
    let tf = docs[d].iter().filter(|w| *w == word).count();
    let df = docs.iter().filter(|doc| doc.iter().any(|w| w == word)).count();
    if tf == 0 {
        return 0.0;
    }
    tf as f64 * (docs.len() as f64 / df as f64).ln()
}

fn euclidean(z: &Array2<f64>, i: usize, j: usize) -> f64 {
    z.row(i)
        .iter()
        .zip(z.row(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Negative set of every anchor by exhaustive comparison: all docs in other
/// clusters, plus each same-cluster companion that has fewer than
/// `ceil(d·n/100)` companions ranked strictly before it (farther, or equally
/// far with a larger id).
pub fn negative_oracle(z: &Array2<f64>, labels: &[usize], d_pct: usize) -> Vec<Vec<usize>> {
    let n = labels.len();
    (0..n)
        .map(|i| {
            let companions: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            let m = (d_pct * companions.len()).div_ceil(100);
            (0..n)
                .filter(|&j| {
                    if labels[j] != labels[i] {
                        return true;
                    }
                    if j == i {
                        return false;
                    }
                    let dj = euclidean(z, i, j);
                    let ahead = companions
                        .iter()
                        .filter(|&&l| {
                            let dl = euclidean(z, i, l);
                            dl > dj || (dl == dj && l > j)
                        })
                        .count();
                    ahead < m
                })
                .collect()
        })
        .collect()
}

fn cosine(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
}

/// Cosine InfoNCE with every other document of both views as a negative.
pub fn reference_infonce(z1: &Array2<f64>, z2: &Array2<f64>, tau: f64) -> f64 {
    let n = z1.nrows();
    let views = [z1, z2];
    let mut total = 0.0;
    for a in 0..2 {
        let anchor_view = views[a];
        let other = views[1 - a];
        for i in 0..n {
            let pos = (cosine(anchor_view.row(i), other.row(i)) / tau).exp();
            let mut den = pos;
            for j in (0..n).filter(|&j| j != i) {
                den += (cosine(anchor_view.row(i), z1.row(j)) / tau).exp();
                den += (cosine(anchor_view.row(i), z2.row(j)) / tau).exp();
            }
            total -= (pos / den).ln();
        }
    }
    total / (2 * n) as f64
}

/// Multinomial logistic regression fit by full-batch gradient descent on
/// the `train` rows; returns accuracy on the remaining rows.
pub fn logistic_regression_accuracy(x: &Array2<f64>, labels: &[usize], train: &[bool], n_classes: usize) -> f64 {
    let (n, dim) = x.dim();
    let mut design = Array2::ones((n, dim + 1));
    design.slice_mut(ndarray::s![.., ..dim]).assign(x);
    let rows: Vec<usize> = (0..n).filter(|&i| train[i]).collect();
    let xt = design.select(Axis(0), &rows);
    let mut y = Array2::<f64>::zeros((rows.len(), n_classes));
    for (r, &i) in rows.iter().enumerate() {
        y[[r, labels[i]]] = 1.0;
    }

    let mut w = Array2::<f64>::zeros((dim + 1, n_classes));
    let (lr, l2) = (0.5, 1e-3);
    for _ in 0..2000 {
        let p = softmax_rows(&xt.dot(&w));
        let grad = xt.t().dot(&(p - &y)) / rows.len() as f64 + &w * l2;
        w.scaled_add(-lr, &grad);
    }

    let scores = design.dot(&w);
    let test: Vec<usize> = (0..n).filter(|&i| !train[i]).collect();
    let correct = test
        .iter()
        .filter(|&&i| {
            let row = scores.row(i);
            let argmax = (0..n_classes).max_by(|&a, &b| row[a].total_cmp(&row[b])).expect("classes");
            argmax == labels[i]
        })
        .count();
    correct as f64 / test.len() as f64
}

fn softmax_rows(s: &Array2<f64>) -> Array2<f64> {
    let mut p = s.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Rows scaled to unit length; zero rows stay zero.
pub fn l2_rows(x: &Array2<f64>) -> Array2<f64> {
    let norms: Array1<f64> = x.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(1e-300));
    x / &norms.insert_axis(Axis(1))
}

/// Relative error with a floor on the denominator so that entries that are
/// zero in both computations do not divide by zero.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub mod grad {
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use clustertext::augment::{add_identity, drop_edges, normalize};
    use clustertext::cluster::{Clusterer, KMeans};
    use clustertext::corpus::Corpus;
    use clustertext::encoder::{backward, forward, Activation, EncoderDims, EncoderParams, Gradients};
    use clustertext::negatives::{build_negative_index, NegativeIndex};
    use clustertext::objective::{contrastive_loss, cross_entropy_loss};
    use clustertext::sparse::SparseMatrix;
    use clustertext::train::Dataset;

    /// A graph of at most 20 nodes with two fixed views and a fixed negative index.
    pub struct Case {
        pub data: Dataset,
        pub views: [SparseMatrix; 2],
        pub index: NegativeIndex,
        pub params: EncoderParams,
        pub beta: f64,
        pub tau: f64,
    }

    pub fn case(seed: u64, activation: Activation, double_self_loops: bool) -> Case {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_docs = 6;
        let documents: Vec<Vec<String>> = (0..n_docs)
            .map(|_| (0..rng.random_range(3..8)).map(|_| format!("w{}", rng.random_range(0..8))).collect())
            .collect();
        let labels = (0..n_docs).map(|i| Some(i % 2)).collect();
        let train_mask = (0..n_docs).map(|i| i < 4).collect();
        let corpus = Corpus::new(documents, labels, vec!["a".into(), "b".into()], train_mask).unwrap();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let emb = Array2::from_shape_fn((n_docs, 4), |_| normal.sample(&mut rng));
        let data = Dataset::new(corpus, &emb, 3, double_self_loops).unwrap();
        assert!(data.graph.n_nodes() <= 20);

        let dims = EncoderDims {
            emb_dim: 4,
            hidden: 5,
            out_dim: 3,
            n_classes: 2,
        };
        let mut params = EncoderParams::init(dims, rng.random_range(0.2..0.9), seed).unwrap();
        params.activation = activation;
        // Larger weights than Glorot so every term has a visible gradient.
        for m in [&mut params.w0, &mut params.w1, &mut params.fc_h, &mut params.fc_x] {
            m.mapv_inplace(|v| v * 2.0);
        }

        let views = [1, 2].map(|s| {
            let dropped = drop_edges(&data.graph.adjacency, 0.3, seed * 10 + s).unwrap().adjacency;
            if double_self_loops {
                normalize(&add_identity(&dropped)).unwrap()
            } else {
                normalize(&dropped).unwrap()
            }
        });
        let z0 = forward(&data.adjacency, &data.features, &params).unwrap().z;
        let assignment = KMeans { seed, ..KMeans::default() }.cluster(z0.view(), 2).unwrap();
        let index = build_negative_index(z0.view(), &assignment, 34.0).unwrap();
        Case {
            data,
            views,
            index,
            params,
            beta: rng.random_range(0.5..2.0),
            tau: rng.random_range(0.3..1.0),
        }
    }

    /// `CE + β·CL` with the case's fixed views and negatives.
    pub fn loss(case: &Case, params: &EncoderParams) -> f64 {
        let corpus = &case.data.corpus;
        let t0 = forward(&case.data.adjacency, &case.data.features, params).unwrap();
        let ce = cross_entropy_loss(&t0.p, &corpus.labels, &corpus.train_mask).unwrap().loss;
        let t1 = forward(&case.views[0], &case.data.features, params).unwrap();
        let t2 = forward(&case.views[1], &case.data.features, params).unwrap();
        ce + case.beta * contrastive_loss(&t1.z, &t2.z, &case.index, case.tau).unwrap().loss
    }

    pub fn gradients(case: &Case) -> Gradients {
        let corpus = &case.data.corpus;
        let p = &case.params;
        let t0 = forward(&case.data.adjacency, &case.data.features, p).unwrap();
        let ce = cross_entropy_loss(&t0.p, &corpus.labels, &corpus.train_mask).unwrap();
        let mut g = backward(p, &t0, Some(&ce.grad_logits), None).unwrap();
        let t1 = forward(&case.views[0], &case.data.features, p).unwrap();
        let t2 = forward(&case.views[1], &case.data.features, p).unwrap();
        let cl = contrastive_loss(&t1.z, &t2.z, &case.index, case.tau).unwrap();
        g.accumulate(&backward(p, &t1, Some(&(cl.grad_z1 * case.beta)), None).unwrap());
        g.accumulate(&backward(p, &t2, Some(&(cl.grad_z2 * case.beta)), None).unwrap());
        g
    }

    pub fn param_mut(p: &mut EncoderParams, which: usize) -> &mut Array2<f64> {
        match which {
            0 => &mut p.w0,
            1 => &mut p.w1,
            2 => &mut p.fc_h,
            _ => &mut p.fc_x,
        }
    }

    pub fn grad_of(g: &Gradients, which: usize) -> &Array2<f64> {
        match which {
            0 => &g.w0,
            1 => &g.w1,
            2 => &g.fc_h,
            _ => &g.fc_x,
        }
    }

    fn grad_of_params(p: &EncoderParams, which: usize) -> &Array2<f64> {
        [&p.w0, &p.w1, &p.fc_h, &p.fc_x][which]
    }

    pub const NAMES: [&str; 4] = ["W0", "W1", "FC_h", "FC_x"];

    /// Central difference of `f` at every entry of `x`.
    pub fn numeric_gradient(x: &Array2<f64>, h: f64, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
        let mut probe = x.clone();
        let mut out = Array2::zeros(x.raw_dim());
        for idx in ndarray::indices(x.raw_dim()) {
            let orig = probe[idx];
            probe[idx] = orig + h;
            let plus = f(&probe);
            probe[idx] = orig - h;
            let minus = f(&probe);
            probe[idx] = orig;
            out[idx] = (plus - minus) / (2.0 * h);
        }
        out
    }

    /// Numeric gradient of the case loss w.r.t. parameter matrix `which`.
    pub fn numeric_param_gradient(case: &Case, which: usize, h: f64) -> Array2<f64> {
        let x = grad_of_params(&case.params, which).clone();
        numeric_gradient(&x, h, |m| {
            let mut p = case.params.clone();
            *param_mut(&mut p, which) = m.clone();
            loss(case, &p)
        })
    }
}
