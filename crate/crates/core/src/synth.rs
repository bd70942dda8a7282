//! Seeded synthetic corpora with class-owned topic vocabularies.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{tokenize_corpus, Corpus, TokenizeConfig};
use crate::error::{Error, Result};
use crate::graph::format_embeddings;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub n_classes: usize,
    /// Topic words owned by each class.
    pub vocab_per_class: usize,
    /// Words shared by every class.
    pub noise_vocab: usize,
    pub doc_len: usize,
    /// Probability that a token is drawn from the class vocabulary rather than the shared one.
    pub topic_frac: f64,
    /// Fraction of each class marked as training documents.
    pub label_rate: f64,
    pub emb_dim: usize,
    /// Length of the class direction in the embedding.
    pub emb_signal: f64,
    /// Standard deviation of the isotropic embedding noise.
    pub emb_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_docs: 200,
            n_classes: 2,
            vocab_per_class: 40,
            noise_vocab: 40,
            doc_len: 30,
            topic_frac: 0.6,
            label_rate: 0.1,
            emb_dim: 32,
            emb_signal: 1.0,
            emb_noise: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub texts: Vec<String>,
    pub labels: Vec<usize>,
    pub train_mask: Vec<bool>,
    pub embeddings: Array2<f64>,
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticCorpus> {
    let c = config;
    if c.n_docs == 0 || c.n_classes == 0 || c.vocab_per_class == 0 || c.doc_len == 0 {
        return Err(Error::Config("synthetic sizes must be positive".into()));
    }
    if c.emb_dim < c.n_classes {
        return Err(Error::Config(format!(
            "embedding dim {} cannot hold {} one-hot class directions",
            c.emb_dim, c.n_classes
        )));
    }
    if !(0.0..=1.0).contains(&c.label_rate) || !(0.0..=1.0).contains(&c.topic_frac) {
        return Err(Error::Config("label_rate and topic_frac must be in [0, 1]".into()));
    }
    if c.noise_vocab == 0 && c.topic_frac < 1.0 {
        return Err(Error::Config("topic_frac < 1 needs a shared vocabulary".into()));
    }
    let noise = Normal::new(0.0, c.emb_noise).map_err(|e| Error::Config(format!("embedding noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);

    let labels: Vec<usize> = (0..c.n_docs).map(|i| i % c.n_classes).collect();
    let mut texts = Vec::with_capacity(c.n_docs);
    for &class in &labels {
        let mut text = String::new();
        for t in 0..c.doc_len {
            if t > 0 {
                text.push(' ');
            }
            if rng.random_bool(c.topic_frac) {
                let _ = write!(text, "c{class}w{}", rng.random_range(0..c.vocab_per_class));
            } else {
                let _ = write!(text, "nz{}", rng.random_range(0..c.noise_vocab));
            }
        }
        texts.push(text);
    }

    let mut train_mask = vec![false; c.n_docs];
    for class in 0..c.n_classes {
        let mut members: Vec<usize> = (0..c.n_docs).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let take = (c.label_rate * members.len() as f64).round() as usize;
        for &i in &members[..take] {
            train_mask[i] = true;
        }
    }

    let mut embeddings = Array2::zeros((c.n_docs, c.emb_dim));
    for (mut row, &class) in embeddings.rows_mut().into_iter().zip(&labels) {
        for v in row.iter_mut() {
            *v = noise.sample(&mut rng);
        }
        row[class] += c.emb_signal;
    }

    Ok(SyntheticCorpus {
        texts,
        labels,
        train_mask,
        embeddings,
    })
}

impl SyntheticCorpus {
    pub fn class_name(class: usize) -> String {
        format!("class{class:03}")
    }

    pub fn label_lines(&self) -> String {
        let mut s = String::new();
        for (i, (&l, &train)) in self.labels.iter().zip(&self.train_mask).enumerate() {
            let _ = writeln!(s, "{i}\t{}\t{}", Self::class_name(l), if train { "train" } else { "test" });
        }
        s
    }

    /// Tokenized corpus with every document labeled.
    pub fn to_corpus(&self, tokenize: &TokenizeConfig) -> Result<Corpus> {
        let documents = tokenize_corpus(&self.texts, tokenize)?;
        let n_classes = self.labels.iter().max().map_or(0, |m| m + 1);
        Corpus::new(
            documents,
            self.labels.iter().map(|&l| Some(l)).collect(),
            (0..n_classes).map(Self::class_name).collect(),
            self.train_mask.clone(),
        )
    }

    /// Writes `corpus.txt`, `labels.tsv` and `embeddings.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("corpus.txt", self.texts.join("\n") + "\n"),
            ("labels.tsv", self.label_lines()),
            ("embeddings.txt", format_embeddings(&self.embeddings)),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// `n` points in `k` isotropic Gaussian blobs whose centers sit on the first
/// `k` coordinate axes at distance `separation`; returns points and blob ids.
pub fn gaussian_mixture(n: usize, k: usize, dim: usize, separation: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    assert!(dim >= k, "need dim >= k");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut points = Array2::zeros((n, dim));
    for (mut row, &l) in points.rows_mut().into_iter().zip(&labels) {
        for v in row.iter_mut() {
            *v = unit.sample(&mut rng);
        }
        row[l] += separation;
    }
    (points, labels)
}
