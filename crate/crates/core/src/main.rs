use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clustertext::checkpoint::Checkpoint;
use clustertext::cluster::ClusterMethod;
use clustertext::corpus::{Corpus, TokenizeConfig, Vocabulary};
use clustertext::graph::{build_graph, DEFAULT_WINDOW};
use clustertext::synth::{generate_synthetic, SynthConfig};
use clustertext::train::{ablate, evaluate, mean_std, train, DataPaths, Dataset, MetricsWriter, TrainConfig};
use clustertext::{Error, Result};

#[derive(Parser)]
#[command(name = "clustertext", version, about = "Graph contrastive text classification with cluster-refined negatives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the word/document graph and optionally dump it as triplets.
    BuildGraph(BuildGraphArgs),
    /// Train the encoder.
    Train(TrainCmd),
    /// Test accuracy of one or more checkpoints.
    Evaluate(EvaluateArgs),
    /// Run the four-row ablation grid.
    Ablate(AblateArgs),
    /// Generate a synthetic corpus, label file and embedding file.
    Synth(SynthArgs),
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = 2)]
    min_df: usize,
}

#[derive(Args)]
struct BuildGraphArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Write `<i> <j> <weight>` lines for the upper triangle.
    #[arg(long)]
    graph_out: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    embeddings: PathBuf,
    /// Add the identity again before normalization (self-loop weight 2).
    #[arg(long)]
    double_self_loops: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let paths = DataPaths {
            corpus: self.graph.corpus.clone(),
            labels: self.graph.labels.clone(),
            embeddings: self.embeddings.clone(),
        };
        Dataset::load(
            &paths,
            &TokenizeConfig { min_df: self.graph.min_df },
            self.graph.window,
            self.double_self_loops,
        )
    }
}

#[derive(Args)]
struct HyperArgs {
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    drop_prob: f64,
    /// Separate drop probability for the second view.
    #[arg(long)]
    drop_prob_view2: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long = "lambda", default_value_t = 0.7)]
    lambda: f64,
    #[arg(long, default_value_t = 20.0)]
    self_correct_pct: f64,
    /// Cluster count (defaults to the number of classes).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value = "kmeans")]
    cluster_method: String,
    #[arg(long, default_value_t = 1)]
    cluster_refresh: usize,
    #[arg(long, default_value_t = 64)]
    hidden_dim: usize,
    #[arg(long)]
    out_dim: Option<usize>,
    #[arg(long)]
    no_correction: bool,
    #[arg(long)]
    no_clustering: bool,
    #[arg(long)]
    no_gcl: bool,
    /// Keep test documents out of every negative set.
    #[arg(long)]
    exclude_test_negatives: bool,
}

impl HyperArgs {
    fn config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            seed: self.seed,
            drop_prob: self.drop_prob,
            drop_prob_view2: self.drop_prob_view2,
            tau: self.tau,
            beta: self.beta,
            lambda: self.lambda,
            self_correct_pct: self.self_correct_pct,
            k: self.k,
            cluster_method: self.cluster_method.parse::<ClusterMethod>()?,
            cluster_refresh: self.cluster_refresh,
            hidden_dim: self.hidden_dim,
            out_dim: self.out_dim,
            no_correction: self.no_correction,
            no_clustering: self.no_clustering,
            no_gcl: self.no_gcl,
            exclude_test_negatives: self.exclude_test_negatives,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
    /// Write the final negative sets as `<anchor>\t<ids>` lines.
    #[arg(long)]
    dump_negatives: Option<PathBuf>,
    /// Write the final cluster assignment as `<doc>\t<cluster>` lines.
    #[arg(long)]
    dump_clusters: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Repeat to average over several checkpoints.
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    n_docs: usize,
    #[arg(long, default_value_t = 2)]
    n_classes: usize,
    #[arg(long, default_value_t = 40)]
    vocab_per_class: usize,
    #[arg(long, default_value_t = 40)]
    noise_vocab: usize,
    #[arg(long, default_value_t = 30)]
    doc_len: usize,
    #[arg(long, default_value_t = 0.6)]
    topic_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    label_rate: f64,
    #[arg(long, default_value_t = 32)]
    emb_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    emb_signal: f64,
    #[arg(long, default_value_t = 1.0)]
    emb_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives corpus.txt, labels.tsv and embeddings.txt.
    #[arg(long)]
    out_dir: PathBuf,
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

/// `path` for a single run, `path.<r>` for repeat `r` otherwise.
fn per_repeat(path: &Path, r: usize, repeats: usize) -> PathBuf {
    if repeats == 1 {
        path.to_owned()
    } else {
        let mut s = path.as_os_str().to_owned();
        s.push(format!(".{r}"));
        PathBuf::from(s)
    }
}

fn build_graph_cmd(args: &BuildGraphArgs) -> Result<()> {
    let g = &args.graph;
    let corpus = Corpus::load(&g.corpus, g.labels.as_deref(), &TokenizeConfig { min_df: g.min_df })?;
    let vocab = Vocabulary::build(&corpus);
    let graph = build_graph(&corpus, &vocab, g.window)?;
    println!(
        "words={} docs={} stored_entries={}",
        graph.n_word,
        graph.n_doc,
        graph.adjacency.nnz()
    );
    if let Some(path) = &args.graph_out {
        graph.dump(path)?;
    }
    Ok(())
}

fn train_cmd(args: &TrainCmd) -> Result<()> {
    let base = args.hyper.config()?;
    if args.repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let data = args.data.load()?;
    let mut finals = Vec::new();
    for r in 0..args.repeats {
        let cfg = TrainConfig {
            seed: base.seed.wrapping_add(r as u64),
            ..base.clone()
        };
        let mut writer = match &args.metrics_out {
            Some(p) => Some(MetricsWriter::create(&per_repeat(p, r, args.repeats))?),
            None => None,
        };
        let outcome = train(&data, &cfg, |rec| match writer.as_mut() {
            Some(w) => w.append(rec),
            None => Ok(()),
        })?;
        let m = &outcome.metrics;
        println!(
            "run {r} seed {}: final test acc {:.4}, best {:.4} at epoch {}",
            cfg.seed,
            m.final_test_acc(),
            m.best_test_acc,
            m.best_epoch
        );
        finals.push(m.final_test_acc());

        if let Some(p) = &args.checkpoint_out {
            outcome
                .checkpoint(&cfg, args.data.graph.window, args.data.graph.min_df, args.data.double_self_loops)
                .save(&per_repeat(p, r, args.repeats))?;
        }
        if let (Some(p), Some(idx)) = (&args.dump_negatives, &outcome.negatives) {
            write_file(&per_repeat(p, r, args.repeats), &idx.to_dump())?;
        }
        if let (Some(p), Some(a)) = (&args.dump_clusters, &outcome.assignment) {
            write_file(&per_repeat(p, r, args.repeats), &a.to_tsv())?;
        }
    }
    if args.repeats > 1 {
        let (mean, std) = mean_std(&finals);
        println!("test accuracy over {} runs: {mean:.4} ± {std:.4}", args.repeats);
    }
    Ok(())
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let mut accs = Vec::new();
    for path in &args.checkpoint {
        let ck = Checkpoint::load(path)?;
        let paths = DataPaths {
            corpus: args.corpus.clone(),
            labels: Some(args.labels.clone()),
            embeddings: args.embeddings.clone(),
        };
        let data = Dataset::load(&paths, &TokenizeConfig { min_df: ck.min_df }, ck.window, ck.double_self_loops)?;
        let acc = evaluate(&ck.params, &data)?;
        println!("{}: test acc {acc:.4}", path.display());
        accs.push(acc);
    }
    if accs.len() > 1 {
        let (mean, std) = mean_std(&accs);
        println!("test accuracy over {} checkpoints: {mean:.4} ± {std:.4}", accs.len());
    }
    Ok(())
}

fn ablate_cmd(args: &AblateArgs) -> Result<()> {
    let cfg = args.hyper.config()?;
    if args.repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let data = args.data.load()?;
    let report = ablate(&data, &cfg, args.repeats)?;
    let text = report.render();
    print!("{text}");
    if let Some(p) = &args.report_out {
        write_file(p, &text)?;
    }
    Ok(())
}

fn synth_cmd(args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_docs: args.n_docs,
        n_classes: args.n_classes,
        vocab_per_class: args.vocab_per_class,
        noise_vocab: args.noise_vocab,
        doc_len: args.doc_len,
        topic_frac: args.topic_frac,
        label_rate: args.label_rate,
        emb_dim: args.emb_dim,
        emb_signal: args.emb_signal,
        emb_noise: args.emb_noise,
        seed: args.seed,
    };
    generate_synthetic(&cfg)?.write(&args.out_dir)?;
    println!("wrote synthetic corpus to {}", args.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::BuildGraph(a) => build_graph_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
