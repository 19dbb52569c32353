use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use xlaug::classifier::{evaluate_f1, train, Example};
use xlaug::eval::{Experiment, ExperimentFile};
use xlaug::pool::{read_retrieved_manifest, read_vectors, Exclusions};
use xlaug::synthetic::{domain_pair, DomainPairSpec};
use xlaug::{
    filter_pool, load_pool, pool_stats, retrieve, write_pool, AnnIndex, Error, HnswParams, MmrConfig, Pool,
    RetrievalConfig, TrainConfig,
};

const EXIT_VALIDATION: u8 = 2;
const EXIT_SHORTFALL: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "xlaug", version, about = "Cross-lingual retrieval augmentation over embedding pools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and save an HNSW index over a pool.
    BuildIndex(BuildIndexArgs),
    /// Retrieve R unique pool instances for a set of query vectors.
    Retrieve(RetrieveArgs),
    /// Train a linear probe on a pool, optionally plus retrieved instances.
    Train(TrainArgs),
    /// Run an experiment sweep described by a config file.
    Sweep(SweepArgs),
    /// Print pool composition.
    Stats(PoolArgs),
    /// Write a synthetic target/source pool pair and a sample sweep config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PoolArgs {
    /// Manifest (.pool.jsonl).
    #[arg(long)]
    pool: PathBuf,
    /// Companion vector file (.vec).
    #[arg(long)]
    vectors: PathBuf,
}

#[derive(Args)]
struct BuildIndexArgs {
    #[command(flatten)]
    pool: PoolArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = HnswParams::default().max_neighbors)]
    m: usize,
    #[arg(long, default_value_t = HnswParams::default().ef_construction)]
    ef_construction: usize,
    #[arg(long, default_value_t = HnswParams::default().ef_search)]
    ef_search: usize,
    #[arg(long, default_value_t = HnswParams::default().rng_seed)]
    seed: u64,
    /// Views smaller than this are searched exhaustively.
    #[arg(long, default_value_t = HnswParams::default().exact_threshold)]
    exact_threshold: usize,
    /// Leave rows of these languages out of the index (comma-separated or repeated).
    #[arg(long, value_delimiter = ',')]
    exclude_lang: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    exclude_task: Vec<String>,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    index: PathBuf,
    #[command(flatten)]
    pool: PoolArgs,
    /// Query vectors (.vec).
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    r: usize,
    #[arg(long, value_delimiter = ',')]
    exclude_lang: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    exclude_task: Vec<String>,
    /// Diversify with MMR at this lambda.
    #[arg(long)]
    mmr_lambda: Option<f64>,
    #[arg(long, default_value_t = MmrConfig::default().candidate_multiplier)]
    mmr_candidates: usize,
    /// Initial per-query k (default ceil(R / queries)).
    #[arg(long)]
    k_init: Option<usize>,
    /// Retrieved manifest with provenance.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    pool: PoolArgs,
    /// Retrieved manifest whose rows are added to the training data.
    #[arg(long, requires_all = ["source_pool", "source_vectors"])]
    retrieved: Option<PathBuf>,
    #[arg(long)]
    source_pool: Option<PathBuf>,
    #[arg(long)]
    source_vectors: Option<PathBuf>,
    /// Validation data for checkpoint selection.
    #[arg(long, requires = "val_vectors")]
    val_pool: Option<PathBuf>,
    #[arg(long)]
    val_vectors: Option<PathBuf>,
    /// Held-out data to report F1-macro on.
    #[arg(long, requires = "eval_vectors")]
    eval_pool: Option<PathBuf>,
    #[arg(long)]
    eval_vectors: Option<PathBuf>,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = TrainConfig::default().l2)]
    l2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to save the model.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Parallel workers; overrides the config file.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 2600)]
    target_count: usize,
    #[arg(long, default_value_t = 10_000)]
    source_count: usize,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

/// Errors reading or checking inputs are validation failures.
fn input_err(context: impl std::fmt::Display) -> impl FnOnce(Error) -> Failure {
    move |e| match e {
        Error::Shortfall { .. } => shortfall(e),
        e => Failure::validation(format!("{context}: {e}")),
    }
}

fn shortfall(e: Error) -> Failure {
    Failure {
        code: EXIT_SHORTFALL,
        message: e.to_string(),
    }
}

/// Errors after inputs were accepted are runtime failures, except shortfall.
fn run_err(e: Error) -> Failure {
    match e {
        Error::Shortfall { .. } => shortfall(e),
        e => Failure::runtime(e.to_string()),
    }
}

fn load(args: &PoolArgs) -> Result<Pool, Failure> {
    load_pool(&args.pool, &args.vectors).map_err(input_err(format!(
        "pool {} / {}",
        args.pool.display(),
        args.vectors.display()
    )))
}

fn load_pair(manifest: &Path, vectors: &Path) -> Result<Pool, Failure> {
    load_pool(manifest, vectors).map_err(input_err(format!("pool {} / {}", manifest.display(), vectors.display())))
}

fn histogram(counts: &BTreeMap<String, usize>) {
    for (task, n) in counts {
        eprintln!("  {task}\t{n}");
    }
}

fn build_index(a: BuildIndexArgs) -> Result<(), Failure> {
    let params = HnswParams {
        max_neighbors: a.m,
        ef_construction: a.ef_construction,
        ef_search: a.ef_search,
        rng_seed: a.seed,
        exact_threshold: a.exact_threshold,
    };
    params.validate().map_err(input_err("index parameters"))?;
    let pool = Arc::new(load(&a.pool)?);
    let ex = Exclusions::new(a.exclude_lang, a.exclude_task);
    let view = filter_pool(&pool, &ex.languages, &ex.tasks);
    let index = AnnIndex::build(view, params).map_err(run_err)?;
    index.save(&a.out).map_err(run_err)?;
    eprintln!(
        "indexed {} of {} rows, dim {}, m {}, ef_construction {}, ef_search {}, seed {}, levels {}",
        index.len(),
        pool.len(),
        pool.dim(),
        params.max_neighbors,
        params.ef_construction,
        params.ef_search,
        params.rng_seed,
        index.max_level() + 1
    );
    Ok(())
}

fn retrieve_cmd(a: RetrieveArgs) -> Result<(), Failure> {
    let mut cfg = RetrievalConfig::new(a.r);
    cfg.exclusions = Exclusions::new(a.exclude_lang, a.exclude_task);
    cfg.k_init = a.k_init;
    cfg.mmr = a.mmr_lambda.map(|lambda| MmrConfig {
        lambda,
        candidate_multiplier: a.mmr_candidates,
    });
    cfg.validate().map_err(input_err("retrieval options"))?;
    let pool = Arc::new(load(&a.pool)?);
    let index = AnnIndex::load(&a.index, pool.clone()).map_err(input_err(format!("index {}", a.index.display())))?;
    let queries = read_vectors(&a.queries).map_err(input_err(format!("queries {}", a.queries.display())))?;
    if queries.dim() != pool.dim() {
        return Err(Failure::validation(format!(
            "queries {}: dim {} does not match pool dim {}",
            a.queries.display(),
            queries.dim(),
            pool.dim()
        )));
    }
    let queries: Vec<Vec<f32>> = queries.rows().map(<[f32]>::to_vec).collect();
    let set = match retrieve(&index, &pool, &queries, &cfg) {
        Ok(set) => set,
        Err(Error::Shortfall { achieved, requested }) => {
            return Err(Failure {
                code: EXIT_SHORTFALL,
                message: format!("shortfall: only {achieved} unique admissible instances, {requested} requested"),
            })
        }
        Err(e) => return Err(run_err(e)),
    };
    set.write_manifest(&a.out).map_err(run_err)?;
    eprintln!("retrieved {} instances for {} queries", set.len(), queries.len());
    histogram(&set.task_counts());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), Failure> {
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        l2: a.l2,
        rng_seed: a.seed,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(input_err("training options"))?;
    let target = load(&a.pool)?;
    let extra = match (&a.retrieved, &a.source_pool, &a.source_vectors) {
        (Some(r), Some(m), Some(v)) => {
            let source = load_pair(m, v)?;
            let recs = read_retrieved_manifest(r).map_err(input_err(format!("retrieved {}", r.display())))?;
            for (i, rec) in recs.iter().enumerate() {
                if rec.src_row >= source.len() || source.instance(rec.src_row).text != rec.text {
                    return Err(Failure::validation(format!(
                        "retrieved {}: line {} does not match source row {}",
                        r.display(),
                        i + 1,
                        rec.src_row
                    )));
                }
            }
            Some((source, recs))
        }
        _ => None,
    };
    let val = match (&a.val_pool, &a.val_vectors) {
        (Some(m), Some(v)) => Some(load_pair(m, v)?),
        _ => None,
    };
    let held_out = match (&a.eval_pool, &a.eval_vectors) {
        (Some(m), Some(v)) => Some(load_pair(m, v)?),
        _ => None,
    };

    let mut train_set = examples(&target);
    if let Some((source, recs)) = &extra {
        train_set.extend(recs.iter().map(|r| Example::new(source.vector(r.src_row), r.label as u8)));
    }
    let val_set = val.as_ref().map(examples).unwrap_or_default();
    let (model, history) = train(&train_set, &val_set, &cfg).map_err(input_err("training data"))?;
    model.save(&a.out).map_err(run_err)?;
    let picked = &history.epochs[history.selected_epoch];
    eprintln!(
        "trained on {} examples for {} epochs; kept epoch {} (loss {:.4})",
        train_set.len(),
        history.epochs.len(),
        picked.epoch + 1,
        picked.train_loss
    );
    if history.single_label {
        eprintln!("warning: training data has a single label");
    }
    if let Some(p) = &held_out {
        let f1 = evaluate_f1(&model, &examples(p)).map_err(input_err("evaluation data"))?;
        println!("f1_macro\t{f1}");
    }
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<(), Failure> {
    let file = ExperimentFile::load(&a.config).map_err(input_err(format!("config {}", a.config.display())))?;
    let config = file.to_config().map_err(input_err(format!("config {}", a.config.display())))?;
    let exp = Experiment::new(config).map_err(input_err(format!("config {}", a.config.display())))?;
    let workers = a.workers.unwrap_or(file.workers);
    let cells = exp.config().cells().len();
    eprintln!("running {cells} cells on {workers} worker(s)");
    let results = match exp.sweep(workers) {
        Ok(r) => r,
        Err(fail) => {
            let partial = PathBuf::from(format!("{}.partial", file.results.display()));
            let done = xlaug::eval::SweepResults {
                target_name: exp.config().target_name.clone(),
                rows: fail.completed.clone(),
            };
            let mut text = done.runs_csv();
            text.push_str(&format!("# incomplete; resume at {}\n", fail.failed_cell));
            std::fs::write(&partial, text)
                .map_err(|e| Failure::runtime(format!("{}: {e}", partial.display())))?;
            eprintln!("wrote {} completed runs to {}", fail.completed.len(), partial.display());
            let code = if matches!(fail.error, Error::Shortfall { .. }) {
                EXIT_SHORTFALL
            } else {
                EXIT_RUNTIME
            };
            return Err(Failure {
                code,
                message: fail.to_string(),
            });
        }
    };
    results.write_csv(&file.results).map_err(run_err)?;
    let prov = file
        .provenance
        .clone()
        .unwrap_or_else(|| file.results.with_extension("provenance.csv"));
    results.write_provenance_csv(&prov, file.provenance_top_n).map_err(run_err)?;
    if let Some(runs) = &file.runs {
        results.write_runs_csv(runs).map_err(run_err)?;
    }
    for s in results.summaries() {
        let size = s.train_size.map_or("AVG".to_string(), |v| v.to_string());
        eprintln!("  size {size:>5}  retrieved {:>5}  f1 {:.4}", s.retrieval_count, s.f1_macro);
    }
    eprintln!("results: {}; provenance: {}", file.results.display(), prov.display());
    Ok(())
}

fn stats_cmd(a: PoolArgs) -> Result<(), Failure> {
    let pool = load(&a)?;
    print!("{}", pool_stats(&pool));
    Ok(())
}

fn examples(p: &Pool) -> Vec<Example<'_>> {
    (0..p.len()).map(|i| Example::new(p.vector(i), p.instance(i).label)).collect()
}

const SAMPLE_CONFIG: &str = "\
target_name = synthetic
target_manifest = target.pool.jsonl
target_vectors = target.vec
source_manifest = source.pool.jsonl
source_vectors = source.vec
train_sizes = 10, 20, 50, 100
retrieval_counts = 0, 200, 1000
seeds = 1, 2, 3, 4, 5
val_size = 100
test_size = 2000
results = results.csv
runs = runs.csv
";

fn synth_cmd(a: SynthArgs) -> Result<(), Failure> {
    if a.dim == 0 || a.target_count == 0 || a.source_count == 0 {
        return Err(Failure::validation("dim and counts must be positive"));
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Failure::runtime(format!("{}: {e}", a.out_dir.display())))?;
    let pair = domain_pair(&DomainPairSpec {
        dim: a.dim,
        target_count: a.target_count,
        source_count: a.source_count,
        seed: a.seed,
        ..Default::default()
    });
    let d = &a.out_dir;
    write_pool(&pair.target, d.join("target.pool.jsonl"), d.join("target.vec")).map_err(run_err)?;
    write_pool(&pair.source, d.join("source.pool.jsonl"), d.join("source.vec")).map_err(run_err)?;
    let conf = d.join("experiment.conf");
    if !conf.exists() {
        std::fs::write(&conf, SAMPLE_CONFIG).map_err(|e| Failure::runtime(format!("{}: {e}", conf.display())))?;
    }
    eprintln!(
        "wrote {} target and {} source instances (dim {}) to {}",
        pair.target.len(),
        pair.source.len(),
        a.dim,
        d.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::BuildIndex(a) => build_index(a),
        Command::Retrieve(a) => retrieve_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Stats(a) => stats_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
