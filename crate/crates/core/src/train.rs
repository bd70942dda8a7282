//! Training loop, evaluation, repeated runs and the ablation grid.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};

use crate::augment::{add_identity, drop_edges, normalize};
use crate::checkpoint::Checkpoint;
use crate::cluster::{clusterer, ClusterAssignment, ClusterMethod};
use crate::corpus::{Corpus, TokenizeConfig, Vocabulary};
use crate::encoder::{backward, forward, EncoderDims, EncoderParams, Gradients};
use crate::error::{Error, Result};
use crate::graph::{assemble_features, build_graph, FeatureMatrix, TextGraph};
use crate::negatives::{build_negative_index, false_negative_rate, NegativeIndex, DEFAULT_SELF_CORRECT_PCT};
use crate::objective::{contrastive_loss, cross_entropy_loss, LossReport};
use crate::sparse::SparseMatrix;

/// Corpus, graph and features prepared once per run.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub corpus: Corpus,
    pub vocab: Vocabulary,
    pub graph: TextGraph,
    pub features: FeatureMatrix,
    /// Normalized adjacency of the un-augmented graph.
    pub adjacency: SparseMatrix,
    pub double_self_loops: bool,
}

impl Dataset {
    pub fn new(corpus: Corpus, embeddings: &Array2<f64>, window: usize, double_self_loops: bool) -> Result<Self> {
        let vocab = Vocabulary::build(&corpus);
        let graph = build_graph(&corpus, &vocab, window)?;
        let features = assemble_features(&graph, embeddings)?;
        let adjacency = normalized(&graph.adjacency, double_self_loops)?;
        Ok(Self {
            corpus,
            vocab,
            graph,
            features,
            adjacency,
            double_self_loops,
        })
    }

    pub fn load(paths: &DataPaths, tokenize: &TokenizeConfig, window: usize, double_self_loops: bool) -> Result<Self> {
        let corpus = Corpus::load(&paths.corpus, paths.labels.as_deref(), tokenize)?;
        let embeddings = crate::graph::read_embeddings(&paths.embeddings)?;
        Self::new(corpus, &embeddings, window, double_self_loops)
    }

    pub fn n_docs(&self) -> usize {
        self.corpus.n_docs()
    }
}

fn normalized(adjacency: &SparseMatrix, double_self_loops: bool) -> Result<SparseMatrix> {
    if double_self_loops {
        normalize(&add_identity(adjacency))
    } else {
        normalize(adjacency)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub corpus: PathBuf,
    pub labels: Option<PathBuf>,
    pub embeddings: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Edge drop probability for view 1 (and view 2 unless overridden).
    pub drop_prob: f64,
    pub drop_prob_view2: Option<f64>,
    pub tau: f64,
    pub beta: f64,
    pub lambda: f64,
    pub self_correct_pct: f64,
    /// Cluster count; defaults to the number of classes.
    pub k: Option<usize>,
    pub cluster_method: ClusterMethod,
    /// Recompute clusters and negatives every this many epochs.
    pub cluster_refresh: usize,
    pub hidden_dim: usize,
    /// Defaults to `hidden_dim`.
    pub out_dim: Option<usize>,
    pub no_correction: bool,
    pub no_clustering: bool,
    pub no_gcl: bool,
    /// Drop test documents from every negative set.
    pub exclude_test_negatives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.02,
            seed: 0,
            drop_prob: 0.2,
            drop_prob_view2: None,
            tau: 0.5,
            beta: 1.0,
            lambda: 0.7,
            self_correct_pct: DEFAULT_SELF_CORRECT_PCT,
            k: None,
            cluster_method: ClusterMethod::KMeans,
            cluster_refresh: 1,
            hidden_dim: 64,
            out_dim: None,
            no_correction: false,
            no_clustering: false,
            no_gcl: false,
            exclude_test_negatives: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.lr));
        }
        for p in std::iter::once(self.drop_prob).chain(self.drop_prob_view2) {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("drop probability must be in [0, 1], got {p}"));
            }
        }
        if !(self.tau > 0.0) {
            return fail(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.beta >= 0.0) {
            return fail(format!("beta must be non-negative, got {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if !(0.0..=100.0).contains(&self.self_correct_pct) {
            return fail(format!("self-correct percentage must be in [0, 100], got {}", self.self_correct_pct));
        }
        if self.k == Some(0) {
            return fail("k must be at least 1".into());
        }
        if self.cluster_refresh == 0 {
            return fail("cluster refresh must be at least 1".into());
        }
        if self.hidden_dim == 0 || self.out_dim == Some(0) {
            return fail("hidden and output dims must be positive".into());
        }
        Ok(())
    }

    pub fn dims(&self, data: &Dataset) -> EncoderDims {
        EncoderDims {
            emb_dim: data.features.dim(),
            hidden: self.hidden_dim,
            out_dim: self.out_dim.unwrap_or(self.hidden_dim),
            n_classes: data.corpus.n_classes(),
        }
    }

    /// Self-correction percentage after ablations.
    pub fn effective_d(&self) -> f64 {
        if self.no_clustering {
            100.0
        } else if self.no_correction {
            0.0
        } else {
            self.self_correct_pct
        }
    }
}

/// Independent stream seeds derived from the master seed.
pub fn derive_seed(master: u64, stream: u64, epoch: u64) -> u64 {
    // splitmix64 finalizer over a mixed input
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(epoch.wrapping_mul(0xD1B5_4A32_D192_ED69));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_VIEW1: u64 = 2;
const STREAM_VIEW2: u64 = 3;
const STREAM_CLUSTER: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossReport,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Fraction of negative pairs sharing the true label; `None` without contrastive training.
    pub fn_rate: Option<f64>,
}

pub const METRICS_HEADER: &str = "epoch\tL_ce\tL_cl\tL\ttrain_acc\ttest_acc\tfn_rate";

impl EpochRecord {
    pub fn to_line(&self) -> String {
        let fn_rate = self.fn_rate.map_or_else(|| "NA".to_owned(), |r| r.to_string());
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.epoch,
            self.loss.cross_entropy,
            self.loss.contrastive,
            self.loss.combined,
            self.train_acc,
            self.test_acc,
            fn_rate
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub records: Vec<EpochRecord>,
    pub best_test_acc: f64,
    pub best_epoch: usize,
}

impl RunMetrics {
    fn push(&mut self, record: EpochRecord) {
        if self.records.is_empty() || record.test_acc > self.best_test_acc {
            self.best_test_acc = record.test_acc;
            self.best_epoch = record.epoch;
        }
        self.records.push(record);
    }

    pub fn final_test_acc(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.test_acc)
    }
}

/// Streams one tab-separated line per epoch after a header.
pub struct MetricsWriter {
    file: File,
    path: PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(file, "{METRICS_HEADER}").map_err(|e| Error::io(path, e))?;
        drop(file);
        let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            file,
            path: path.to_owned(),
        })
    }

    pub fn append(&mut self, record: &EpochRecord) -> Result<()> {
        writeln!(self.file, "{}", record.to_line()).map_err(|e| Error::io(&self.path, e))
    }
}

/// Argmax accuracy over the masked rows, lowest class on ties. Returns 0 for an empty mask.
pub fn accuracy(p: ArrayView2<'_, f64>, labels: &[Option<usize>], mask: &[bool]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (i, row) in p.rows().into_iter().enumerate() {
        let (true, Some(y)) = (mask[i], labels[i]) else { continue };
        let pred = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
            .0;
        total += 1;
        correct += usize::from(pred == y);
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

pub struct TrainOutcome {
    pub metrics: RunMetrics,
    pub params: EncoderParams,
    pub negatives: Option<NegativeIndex>,
    pub assignment: Option<ClusterAssignment>,
}

impl TrainOutcome {
    pub fn checkpoint(&self, config: &TrainConfig, window: usize, min_df: usize, double_self_loops: bool) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            seed: config.seed,
            window,
            min_df,
            double_self_loops,
        }
    }
}

fn check_loss(epoch: usize, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric {
            epoch,
            what: format!("{what} is {v}"),
        })
    }
}

fn numeric(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::ZeroNorm { .. } | Error::NonFinite { .. } => Error::Numeric {
            epoch,
            what: e.to_string(),
        },
        other => other,
    }
}

pub struct Trainer<'d> {
    data: &'d Dataset,
    config: TrainConfig,
    params: EncoderParams,
    negatives: Option<NegativeIndex>,
    assignment: Option<ClusterAssignment>,
    test_mask: Vec<bool>,
}

impl<'d> Trainer<'d> {
    pub fn new(data: &'d Dataset, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if data.corpus.n_classes() == 0 {
            return Err(Error::Data("training needs at least one labeled class".into()));
        }
        let params = EncoderParams::init(config.dims(data), config.lambda, derive_seed(config.seed, STREAM_INIT, 0))?;
        Ok(Self {
            data,
            config: config.clone(),
            params,
            negatives: None,
            assignment: None,
            test_mask: data.corpus.test_mask(),
        })
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    /// Recomputes pseudo-labels and negative sets from detached representations.
    fn refresh_negatives(&mut self, z: &Array2<f64>, epoch: usize) -> Result<()> {
        let cfg = &self.config;
        let n = z.nrows();
        let assignment = if cfg.no_clustering {
            ClusterAssignment::single(n)
        } else {
            let k = cfg.k.unwrap_or(self.data.corpus.n_classes()).min(n);
            let seed = derive_seed(cfg.seed, STREAM_CLUSTER, epoch as u64);
            clusterer(cfg.cluster_method, seed).cluster(z.view(), k)?
        };
        let mut index = build_negative_index(z.view(), &assignment, cfg.effective_d())?;
        if cfg.exclude_test_negatives {
            let sets = index
                .iter()
                .map(|s| s.iter().copied().filter(|&j| !self.test_mask[j]).collect())
                .collect();
            index = NegativeIndex::from_sets(sets, index.d_pct)?;
        }
        self.negatives = Some(index);
        self.assignment = Some(assignment);
        Ok(())
    }

    fn view_adjacency(&self, epoch: usize, stream: u64, p: f64) -> Result<SparseMatrix> {
        let seed = derive_seed(self.config.seed, stream, epoch as u64);
        let view = drop_edges(&self.data.graph.adjacency, p, seed)?;
        normalized(&view.adjacency, self.data.double_self_loops)
    }

    /// One optimization step followed by evaluation with the updated parameters.
    pub fn step(&mut self, epoch: usize) -> Result<EpochRecord> {
        let data = self.data;
        let corpus = &data.corpus;
        let trace0 = forward(&data.adjacency, &data.features, &self.params).map_err(numeric(epoch))?;
        let ce = cross_entropy_loss(&trace0.p, &corpus.labels, &corpus.train_mask)?;
        check_loss(epoch, "cross-entropy loss", ce.loss)?;
        let mut grads = backward(&self.params, &trace0, Some(&ce.grad_logits), None)?;

        let mut contrastive = 0.0;
        let mut fn_rate = None;
        if !self.config.no_gcl {
            if self.negatives.is_none() || epoch % self.config.cluster_refresh == 0 {
                self.refresh_negatives(&trace0.z, epoch)?;
            }
            let index = self.negatives.as_ref().expect("refreshed above");
            fn_rate = Some(false_negative_rate(index, &corpus.labels));

            let p1 = self.config.drop_prob;
            let p2 = self.config.drop_prob_view2.unwrap_or(p1);
            let a1 = self.view_adjacency(epoch, STREAM_VIEW1, p1)?;
            let a2 = self.view_adjacency(epoch, STREAM_VIEW2, p2)?;
            let t1 = forward(&a1, &data.features, &self.params).map_err(numeric(epoch))?;
            let t2 = forward(&a2, &data.features, &self.params).map_err(numeric(epoch))?;
            let cl = contrastive_loss(&t1.z, &t2.z, index, self.config.tau).map_err(numeric(epoch))?;
            check_loss(epoch, "contrastive loss", cl.loss)?;
            contrastive = cl.loss;

            let beta = self.config.beta;
            grads.accumulate(&backward(&self.params, &t1, Some(&(cl.grad_z1 * beta)), None)?);
            grads.accumulate(&backward(&self.params, &t2, Some(&(cl.grad_z2 * beta)), None)?);
        }

        let loss = LossReport::new(ce.loss, contrastive, self.config.beta, self.config.tau);
        check_loss(epoch, "combined loss", loss.combined)?;
        self.params.sgd_step(&grads, self.config.lr);
        if !self.params.is_finite() {
            return Err(Error::Numeric {
                epoch,
                what: "non-finite parameters after update".into(),
            });
        }

        let eval = forward(&data.adjacency, &data.features, &self.params).map_err(numeric(epoch))?;
        Ok(EpochRecord {
            epoch,
            loss,
            train_acc: accuracy(eval.p.view(), &corpus.labels, &corpus.train_mask),
            test_acc: accuracy(eval.p.view(), &corpus.labels, &self.test_mask),
            fn_rate,
        })
    }

    pub fn into_outcome(self, metrics: RunMetrics) -> TrainOutcome {
        TrainOutcome {
            metrics,
            params: self.params,
            negatives: self.negatives,
            assignment: self.assignment,
        }
    }
}

/// Full training run; `on_epoch` sees every record as it is produced.
pub fn train(
    data: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(data, config)?;
    let mut metrics = RunMetrics::default();
    for epoch in 0..config.epochs {
        let record = trainer.step(epoch)?;
        on_epoch(&record)?;
        metrics.push(record);
    }
    Ok(trainer.into_outcome(metrics))
}

/// Cross-entropy-only training on the original graph, kept as a separate
/// reference path for the no-contrastive ablation.
pub fn train_supervised(data: &Dataset, config: &TrainConfig) -> Result<RunMetrics> {
    config.validate()?;
    let corpus = &data.corpus;
    let test_mask = corpus.test_mask();
    let mut params = EncoderParams::init(config.dims(data), config.lambda, derive_seed(config.seed, STREAM_INIT, 0))?;
    let mut metrics = RunMetrics::default();
    for epoch in 0..config.epochs {
        let trace = forward(&data.adjacency, &data.features, &params)?;
        let ce = cross_entropy_loss(&trace.p, &corpus.labels, &corpus.train_mask)?;
        check_loss(epoch, "cross-entropy loss", ce.loss)?;
        let grads: Gradients = backward(&params, &trace, Some(&ce.grad_logits), None)?;
        params.sgd_step(&grads, config.lr);
        let eval = forward(&data.adjacency, &data.features, &params)?;
        metrics.push(EpochRecord {
            epoch,
            loss: LossReport::new(ce.loss, 0.0, config.beta, config.tau),
            train_acc: accuracy(eval.p.view(), &corpus.labels, &corpus.train_mask),
            test_acc: accuracy(eval.p.view(), &corpus.labels, &test_mask),
            fn_rate: None,
        });
    }
    Ok(metrics)
}

/// Test accuracy of fixed parameters on the dataset.
pub fn evaluate(params: &EncoderParams, data: &Dataset) -> Result<f64> {
    let dims = params.dims();
    if dims.emb_dim != data.features.dim() {
        return Err(Error::shape("checkpoint embedding dim", dims.emb_dim, data.features.dim()));
    }
    if dims.n_classes != data.corpus.n_classes() {
        return Err(Error::shape("checkpoint class count", dims.n_classes, data.corpus.n_classes()));
    }
    let test_mask = data.corpus.test_mask();
    if !test_mask.iter().any(|&t| t) {
        return Err(Error::Data("no labeled test documents to evaluate".into()));
    }
    let trace = forward(&data.adjacency, &data.features, params)?;
    Ok(accuracy(trace.p.view(), &data.corpus.labels, &test_mask))
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `repeats` trainings with seeds `seed, seed + 1, …` and returns their final test accuracies.
pub fn repeated_final_accuracy(data: &Dataset, config: &TrainConfig, repeats: usize) -> Result<Vec<f64>> {
    (0..repeats as u64)
        .map(|r| {
            let cfg = TrainConfig {
                seed: config.seed.wrapping_add(r),
                ..config.clone()
            };
            Ok(train(data, &cfg, |_| Ok(()))?.metrics.final_test_acc())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Full,
    NoCorrection,
    NoClustering,
    NoGcl,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoCorrection, Ablation::NoClustering, Ablation::NoGcl];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoCorrection => "w/o correction",
            Ablation::NoClustering => "w/o clustering",
            Ablation::NoGcl => "w/o GCL",
        }
    }

    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            Ablation::Full => {}
            Ablation::NoCorrection => cfg.no_correction = true,
            Ablation::NoClustering => cfg.no_clustering = true,
            Ablation::NoGcl => cfg.no_gcl = true,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub ablation: Ablation,
    /// Final test accuracy per seed.
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, ablation: Ablation) -> &AblationRow {
        self.rows.iter().find(|r| r.ablation == ablation).expect("all four rows present")
    }

    pub fn render(&self) -> String {
        let mut s = String::from("setting\tmean_test_acc\tstd\tper_seed\n");
        for row in &self.rows {
            let (mean, std) = mean_std(&row.accuracies);
            let per: Vec<String> = row.accuracies.iter().map(|a| format!("{a:.4}")).collect();
            let _ = writeln!(s, "{}\t{mean:.4}\t{std:.4}\t{}", row.ablation.name(), per.join(","));
        }
        s
    }
}

/// Four-row grid (full, w/o correction, w/o clustering, w/o GCL), each over `repeats` seeds.
pub fn ablate(data: &Dataset, base: &TrainConfig, repeats: usize) -> Result<AblationReport> {
    let rows = Ablation::ALL
        .into_iter()
        .map(|ablation| {
            Ok(AblationRow {
                ablation,
                accuracies: repeated_final_accuracy(data, &ablation.apply(base), repeats)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AblationReport { rows })
}
