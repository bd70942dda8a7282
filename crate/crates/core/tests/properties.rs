mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use clustertext::augment::{drop_edges, normalize};
use clustertext::checkpoint::Checkpoint;
use clustertext::cluster::{ClusterAssignment, ClusterMethod, Clusterer, KMeans};
use clustertext::corpus::{Corpus, Vocabulary};
use clustertext::encoder::{classify, gcn_forward, Activation, EncoderDims, EncoderParams};
use clustertext::graph::{build_graph, compute_pmi, format_embeddings, parse_embeddings, FeatureMatrix};
use clustertext::negatives::{build_negative_index, NegativeIndex};
use clustertext::objective::contrastive_loss;

use common::grad;

fn documents() -> impl Strategy<Value = Vec<Vec<String>>> {
    let doc = prop::collection::vec((0..12usize).prop_map(|w| format!("w{w}")), 1..10);
    prop::collection::vec(doc, 1..8)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0..3.0f64, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn assignment(labels: Vec<usize>, k: usize) -> ClusterAssignment {
    ClusterAssignment {
        labels,
        k,
        centroids: None,
        inertia: 0.0,
        inertia_history: Vec::new(),
        method: ClusterMethod::KMeans,
    }
}

/// Points, cluster labels and k.
fn clustered(max_n: usize) -> impl Strategy<Value = (Array2<f64>, Vec<usize>, usize)> {
    (1..=max_n, 1..4usize, 1..5usize).prop_flat_map(|(n, dim, k)| {
        (
            prop_oneof![
                matrix(n, dim),
                prop::collection::vec(-2..=2i32, n * dim)
                    .prop_map(move |v| Array2::from_shape_vec((n, dim), v.into_iter().map(f64::from).collect()).unwrap()),
            ],
            prop::collection::vec(0..k, n),
            Just(k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_is_symmetric_with_unit_diagonal(docs in documents(), window in 1..6usize) {
        let corpus = Corpus::unlabeled(docs).unwrap();
        let vocab = Vocabulary::build(&corpus);
        let g = build_graph(&corpus, &vocab, window).unwrap();
        prop_assert!(g.adjacency.is_symmetric());
        for i in 0..g.n_nodes() {
            prop_assert_eq!(g.adjacency.get(i, i), 1.0);
        }
        prop_assert!(g.adjacency.iter().all(|(_, _, w)| w > 0.0));
    }

    #[test]
    fn pmi_matches_counting_oracle(docs in documents(), window in 1..6usize) {
        let corpus = Corpus::unlabeled(docs.clone()).unwrap();
        let vocab = Vocabulary::build(&corpus);
        let pmi = compute_pmi(&corpus, &vocab, window).unwrap();
        let oracle = common::pmi_oracle(&docs, window);
        prop_assert_eq!(pmi.len(), oracle.len());
        for ((i, j), v) in pmi {
            let (a, b) = (vocab.word(i).to_string(), vocab.word(j).to_string());
            let key = if a < b { (a, b) } else { (b, a) };
            prop_assert!((v - oracle[&key]).abs() <= 1e-12);
        }
    }

    #[test]
    fn dropped_views_keep_diagonal_and_symmetry(docs in documents(), p in 0.0..=1.0f64, seed in any::<u64>()) {
        let corpus = Corpus::unlabeled(docs).unwrap();
        let g = build_graph(&corpus, &Vocabulary::build(&corpus), 3).unwrap();
        let view = drop_edges(&g.adjacency, p, seed).unwrap().adjacency;
        prop_assert!(view.is_symmetric());
        for (r, c, w) in view.iter() {
            prop_assert_eq!(w, g.adjacency.get(r, c));
        }
        for i in 0..g.n_nodes() {
            prop_assert_eq!(view.get(i, i), 1.0);
        }
        let norm = normalize(&view).unwrap();
        prop_assert!(norm.is_symmetric());
        prop_assert!(norm.iter().all(|(_, _, w)| w > 0.0 && w <= 1.0));
    }

    #[test]
    fn negatives_match_oracle((z, labels, k) in clustered(30), d in 0..=100usize) {
        let idx = build_negative_index(z.view(), &assignment(labels.clone(), k), d as f64).unwrap();
        let sets: Vec<Vec<usize>> = idx.iter().map(<[usize]>::to_vec).collect();
        prop_assert_eq!(sets, common::negative_oracle(&z, &labels, d));
    }

    #[test]
    fn negatives_grow_with_d((z, labels, k) in clustered(30), d1 in 0..=100usize, d2 in 0..=100usize) {
        let (lo, hi) = (d1.min(d2), d1.max(d2));
        let a = assignment(labels, k);
        let small = build_negative_index(z.view(), &a, lo as f64).unwrap();
        let large = build_negative_index(z.view(), &a, hi as f64).unwrap();
        for (s, l) in small.iter().zip(large.iter()) {
            prop_assert!(s.iter().all(|j| l.contains(j)));
        }
    }

    #[test]
    fn negatives_ignore_cluster_names((z, labels, k) in clustered(30), d in 0..=100usize, seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let renamed: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let a = build_negative_index(z.view(), &assignment(labels, k), d as f64).unwrap();
        let b = build_negative_index(z.view(), &assignment(renamed, k), d as f64).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn negatives_never_contain_the_anchor((z, labels, k) in clustered(30), d in 0..=100usize) {
        let idx = build_negative_index(z.view(), &assignment(labels, k), d as f64).unwrap();
        for (i, set) in idx.iter().enumerate() {
            prop_assert!(!set.contains(&i));
            prop_assert!(set.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn contrastive_loss_ignores_row_scale(
        z1 in matrix(6, 3),
        z2 in matrix(6, 3),
        scales in prop::collection::vec(0.1..10.0f64, 12),
        tau in 0.1..2.0f64,
    ) {
        prop_assume!(z1.rows().into_iter().chain(z2.rows()).all(|r| r.dot(&r) > 1e-6));
        let idx = NegativeIndex::all_pairs(6);
        let base = contrastive_loss(&z1, &z2, &idx, tau).unwrap();
        let mut s1 = z1.clone();
        let mut s2 = z2.clone();
        for r in 0..6 {
            s1.row_mut(r).mapv_inplace(|v| v * scales[r]);
            s2.row_mut(r).mapv_inplace(|v| v * scales[6 + r]);
        }
        let scaled = contrastive_loss(&s1, &s2, &idx, tau).unwrap();
        prop_assert!((base.loss - scaled.loss).abs() <= 1e-12 * base.loss.abs().max(1.0));
        prop_assert!(base.loss >= 0.0);
    }

    #[test]
    fn identity_gcn_is_linear_in_features(
        docs in documents(),
        x1 in matrix(8, 3),
        x2 in matrix(8, 3),
        seed in any::<u64>(),
        alpha in -2.0..2.0f64,
    ) {
        let corpus = Corpus::unlabeled(docs).unwrap();
        let g = build_graph(&corpus, &Vocabulary::build(&corpus), 3).unwrap();
        let a = normalize(&g.adjacency).unwrap();
        let n = g.n_nodes();
        let dims = EncoderDims { emb_dim: 3, hidden: 4, out_dim: 2, n_classes: 2 };
        let mut params = EncoderParams::init(dims, 0.5, seed).unwrap();
        params.activation = Activation::Identity;
        let feats = |m: &Array2<f64>| {
            let mut data = Array2::zeros((n, 3));
            for r in 0..n {
                data.row_mut(r).assign(&m.row(r % 8));
            }
            FeatureMatrix { n_word: g.n_word, data }
        };
        let combined = &x1 + &(&x2 * alpha);
        let h1 = gcn_forward(&a, &feats(&x1), &params).unwrap().h;
        let h2 = gcn_forward(&a, &feats(&x2), &params).unwrap().h;
        let h = gcn_forward(&a, &feats(&combined), &params).unwrap().h;
        let expected = &h1 + &(&h2 * alpha);
        for (got, want) in h.iter().zip(expected.iter()) {
            prop_assert!((got - want).abs() <= 1e-10);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(z in matrix(5, 4)) {
        let p = classify(&(z * 100.0)).unwrap();
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn kmeans_inertia_never_rises((z, _, k) in clustered(40), seed in any::<u64>()) {
        let k = k.min(z.nrows());
        let a = KMeans { seed, ..KMeans::default() }.cluster(z.view(), k).unwrap();
        prop_assert!(a.inertia_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(a.labels.iter().all(|&l| l < k));
    }

    #[test]
    fn embedding_text_round_trips(m in matrix(4, 3)) {
        prop_assert_eq!(parse_embeddings(&format_embeddings(&m)).unwrap(), m);
    }

    #[test]
    fn checkpoint_round_trips(seed in any::<u64>(), lambda in 0.0..=1.0f64, window in 1..50usize, double in any::<bool>()) {
        let dims = EncoderDims { emb_dim: 3, hidden: 2, out_dim: 4, n_classes: 3 };
        let ck = Checkpoint {
            params: EncoderParams::init(dims, lambda, seed).unwrap(),
            seed,
            window,
            min_df: 2,
            double_self_loops: double,
        };
        prop_assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn parameter_gradients_match_central_differences(seed in 0..10_000u64, relu in any::<bool>(), double in any::<bool>()) {
        let activation = if relu { Activation::Relu } else { Activation::Identity };
        let case = grad::case(seed, activation, double);
        let analytic = grad::gradients(&case);
        for which in 0..4 {
            let numeric = grad::numeric_param_gradient(&case, which, 1e-5);
            for (a, n) in grad::grad_of(&analytic, which).iter().zip(numeric.iter()) {
                prop_assert!(common::rel_err(*a, *n, 1e-6) < 1e-4, "{}: {} vs {}", grad::NAMES[which], a, n);
            }
        }
    }
}
