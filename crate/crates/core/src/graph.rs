//! Heterogeneous word/document graph: PMI word-word edges, TF-IDF
//! document-word edges, unit self-loops, and the initial feature matrix.
//!
//! Node ordering is fixed: word nodes `0..n_word`, then document nodes
//! `n_word..n_word + n_doc` in corpus order.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub const DEFAULT_WINDOW: usize = 20;

/// Positive PMI over sliding windows, keyed by word-id pairs `(i, j)` with `i < j`.
///
/// A document shorter than the window contributes exactly one window.
pub fn compute_pmi(corpus: &Corpus, vocab: &Vocabulary, window: usize) -> Result<BTreeMap<(usize, usize), f64>> {
    if window == 0 {
        return Err(Error::Config("window size must be at least 1".into()));
    }
    let mut total_windows = 0usize;
    let mut word_windows = vec![0usize; vocab.len()];
    let mut pair_windows: HashMap<(usize, usize), usize> = HashMap::new();

    for doc in vocab.encode(corpus) {
        let n_windows = doc.len().saturating_sub(window) + 1;
        for start in 0..n_windows {
            let end = (start + window).min(doc.len());
            let mut ids = doc[start..end].to_vec();
            ids.sort_unstable();
            ids.dedup();
            total_windows += 1;
            for (a, &i) in ids.iter().enumerate() {
                word_windows[i] += 1;
                for &j in &ids[a + 1..] {
                    *pair_windows.entry((i, j)).or_default() += 1;
                }
            }
        }
    }

    let mut pmi = BTreeMap::new();
    for ((i, j), count) in pair_windows {
        // Integer products keep independent pairs at exactly ln 1 = 0.
        let value = ((count * total_windows) as f64 / (word_windows[i] * word_windows[j]) as f64).ln();
        if value > 0.0 {
            pmi.insert((i, j), value);
        }
    }
    Ok(pmi)
}

/// Raw term count times `ln(n_doc / df)`, keyed by `(doc index, word id)`.
/// Zero weights are omitted.
pub fn compute_tfidf(corpus: &Corpus, vocab: &Vocabulary) -> BTreeMap<(usize, usize), f64> {
    let n_doc = corpus.n_docs() as f64;
    let mut out = BTreeMap::new();
    for (d, doc) in vocab.encode(corpus).into_iter().enumerate() {
        let mut tf: BTreeMap<usize, usize> = BTreeMap::new();
        for id in doc {
            *tf.entry(id).or_default() += 1;
        }
        for (id, count) in tf {
            let weight = count as f64 * (n_doc / vocab.doc_freq(id) as f64).ln();
            if weight != 0.0 {
                out.insert((d, id), weight);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextGraph {
    pub n_word: usize,
    pub n_doc: usize,
    pub adjacency: SparseMatrix,
}

impl TextGraph {
    pub fn n_nodes(&self) -> usize {
        self.n_word + self.n_doc
    }

    pub fn doc_node(&self, doc: usize) -> usize {
        self.n_word + doc
    }

    /// Writes the `<i> <j> <weight>` triplet dump.
    pub fn dump(&self, path: &Path) -> Result<()> {
        fs::write(path, self.adjacency.to_triplet_string()).map_err(|e| Error::io(path, e))
    }
}

pub fn build_graph(corpus: &Corpus, vocab: &Vocabulary, window: usize) -> Result<TextGraph> {
    let pmi = compute_pmi(corpus, vocab, window)?;
    let tfidf = compute_tfidf(corpus, vocab);
    let n_word = vocab.len();
    let n_doc = corpus.n_docs();

    let mut upper = BTreeMap::new();
    for node in 0..n_word + n_doc {
        upper.insert((node, node), 1.0);
    }
    upper.extend(pmi);
    for ((d, w), weight) in tfidf {
        upper.insert((w, n_word + d), weight);
    }
    Ok(TextGraph {
        n_word,
        n_doc,
        adjacency: SparseMatrix::symmetric_from_upper(n_word + n_doc, &upper),
    })
}

/// Node features: zero rows for words, ingested embeddings for documents.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_word: usize,
    pub data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn n_doc(&self) -> usize {
        self.data.nrows() - self.n_word
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn doc_rows(&self) -> ArrayView2<'_, f64> {
        self.data.slice(s![self.n_word.., ..])
    }
}

pub fn assemble_features(graph: &TextGraph, doc_embeddings: &Array2<f64>) -> Result<FeatureMatrix> {
    if doc_embeddings.nrows() != graph.n_doc {
        return Err(Error::shape(
            "document embeddings (rows)",
            graph.n_doc,
            doc_embeddings.nrows(),
        ));
    }
    check_finite(doc_embeddings.view(), "document embeddings")?;
    let mut data = Array2::zeros((graph.n_nodes(), doc_embeddings.ncols()));
    data.slice_mut(s![graph.n_word.., ..]).assign(doc_embeddings);
    Ok(FeatureMatrix {
        n_word: graph.n_word,
        data,
    })
}

pub(crate) fn check_finite(m: ArrayView2<'_, f64>, context: &'static str) -> Result<()> {
    match m.rows().into_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        Some(row) => Err(Error::NonFinite { context, row }),
        None => Ok(()),
    }
}

/// Parses the embedding file: a `<n_doc> <dim>` header, then one
/// space-separated row per document.
pub fn parse_embeddings(text: &str) -> Result<Array2<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Data("embedding file is empty".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Data(format!("bad embedding header {header:?}")))?;
    let [n, dim] = dims[..] else {
        return Err(Error::Data(format!("embedding header must be `<n_doc> <dim>`, found {header:?}")));
    };

    let mut data = Vec::with_capacity(n * dim);
    let mut rows = 0;
    for (row, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Data(format!("embedding row {row}: bad number {tok:?}")))?;
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(Error::shape("embedding row width", dim, data.len() - before));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::shape("embedding row count", n, rows));
    }
    let m = Array2::from_shape_vec((n, dim), data).expect("row widths checked");
    check_finite(m.view(), "embedding file")?;
    Ok(m)
}

pub fn read_embeddings(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text)
}

pub fn format_embeddings(m: &Array2<f64>) -> String {
    let mut s = format!("{} {}\n", m.nrows(), m.ncols());
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn write_embeddings(path: &Path, m: &Array2<f64>) -> Result<()> {
    fs::write(path, format_embeddings(m)).map_err(|e| Error::io(path, e))
}
