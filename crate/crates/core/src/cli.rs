//! Command-line entry point.
//!
//! Exit codes: `0` success, `1` usage error, `2` data or format error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use crate::evalharness::{self, EvalConfig, MetricReport, Split};
use crate::ranking::Method;
use crate::reduce::PcaModel;
use crate::server::{self, QueryService};
use crate::store::{self, MediaRecord, Repository};
use crate::synth::{self, SynthConfig};
use crate::temporal::{AggregationKind, AggregationStrategy, LstmWeights};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mediarank", version, about = "Content-based image and video retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index from an embeddings file.
    Index(IndexArgs),
    /// Rank the index against seed items.
    Query(QueryArgs),
    /// Evaluate retrieval quality against labelled queries.
    Eval(EvalArgs),
    /// Fit a PCA model on an embeddings file.
    PcaFit(PcaFitArgs),
    /// Serve an index over HTTP.
    Serve(ServeArgs),
    /// Generate a seeded Gaussian-cluster corpus.
    Synth(SynthArgs),
    /// Measure query throughput and latency.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "mean", value_parser = ["mean", "max", "last", "lstm"])]
    pub agg: String,
    #[arg(long)]
    pub lstm_weights: Option<PathBuf>,
    #[arg(long, conflicts_with = "pca_fit_variance")]
    pub pca: Option<PathBuf>,
    #[arg(long)]
    pub pca_fit_variance: Option<f64>,
    #[arg(long)]
    pub normalize: bool,
    /// Label manifest; labels of indexed items are copied next to the index
    /// as `<out>.labels`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, conflicts_with = "seed_id", required_unless_present = "seed_id")]
    pub seed_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub seed_id: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value = "par")]
    pub method: String,
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "euclidean,par")]
    pub methods: Vec<String>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// One class label per line; other labels form the unseen split.
    #[arg(long)]
    pub seen_classes: Option<PathBuf>,
    /// Where to write the CSV report.
    #[arg(long, default_value = "eval_report.csv")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct PcaFitArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub variance: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Pooling applied to each record before fitting.
    #[arg(long, default_value = "mean", value_parser = ["mean", "max", "last"])]
    pub agg: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: std::net::SocketAddr,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub clusters: usize,
    #[arg(long)]
    pub per_cluster: usize,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub frames: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = synth::DEFAULT_SIGMA)]
    pub sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub labels_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value = "par")]
    pub method: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub delta: Option<f64>,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parses `args` (including the program name) and runs the subcommand,
/// writing normal output to `out` and diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Index(a) => cmd_index(&a, out),
        Command::Query(a) => cmd_query(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::PcaFit(a) => cmd_pca_fit(&a, out),
        Command::Serve(a) => cmd_serve(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}

fn parse_method(flag: &str, value: &str) -> Result<Method, Failure> {
    value
        .parse()
        .map_err(|e| usage(format!("--{flag}: {e}")))
}

fn check_delta(delta: Option<f64>) -> CmdResult {
    match delta {
        Some(d) if !(-1.0..=1.0).contains(&d) => {
            Err(usage(format!("--delta must lie in [-1, 1], got {d}")))
        }
        _ => Ok(()),
    }
}

fn check_k(k: usize) -> CmdResult {
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    Ok(())
}

fn load_records(path: &Path) -> anyhow::Result<Vec<MediaRecord>> {
    store::read_embeddings(path).with_context(|| format!("reading embeddings {}", path.display()))
}

fn load_repo(path: &Path) -> anyhow::Result<Repository> {
    store::load_index(path).with_context(|| format!("loading index {}", path.display()))
}

fn write_line(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> anyhow::Result<()> {
    out.write_fmt(line).context("writing output")?;
    out.write_all(b"\n").context("writing output")?;
    Ok(())
}

fn cmd_index(a: &IndexArgs, out: &mut dyn Write) -> CmdResult {
    let kind: AggregationKind = a.agg.parse().map_err(|e| usage(format!("--agg: {e}")))?;
    match (kind, &a.lstm_weights) {
        (AggregationKind::LstmFinalHidden, None) => {
            return Err(usage("--agg lstm requires --lstm-weights"))
        }
        (k, Some(_)) if k != AggregationKind::LstmFinalHidden => {
            return Err(usage("--lstm-weights is only valid with --agg lstm"))
        }
        _ => {}
    }
    if let Some(v) = a.pca_fit_variance {
        if !(v > 0.0 && v <= 1.0) {
            return Err(usage(format!("--pca-fit-variance must lie in (0, 1], got {v}")));
        }
    }

    let records = load_records(&a.embeddings)?;
    let weights = a
        .lstm_weights
        .as_ref()
        .map(|p| LstmWeights::read(p).with_context(|| format!("reading LSTM weights {}", p.display())))
        .transpose()?;
    let aggregation = AggregationStrategy::new(kind, weights).map_err(anyhow::Error::from)?;
    let pca = match (&a.pca, a.pca_fit_variance) {
        (Some(p), _) => {
            Some(PcaModel::read(p).with_context(|| format!("reading PCA model {}", p.display()))?)
        }
        (None, Some(v)) => Some(
            store::fit_index_pca(&records, &aggregation, v)
                .with_context(|| format!("fitting PCA on {}", a.embeddings.display()))?,
        ),
        (None, None) => None,
    };
    let repo = store::build_index(&records, aggregation, pca, a.normalize)
        .with_context(|| format!("indexing {}", a.embeddings.display()))?;
    store::save_index(&repo, &a.out).with_context(|| format!("writing index {}", a.out.display()))?;

    if let Some(labels_path) = &a.labels {
        let labels = store::read_labels(labels_path)
            .with_context(|| format!("reading labels {}", labels_path.display()))?;
        let indexed: BTreeMap<String, String> = labels
            .into_iter()
            .filter(|(id, _)| repo.get(id).is_some())
            .collect();
        if indexed.len() < repo.len() {
            log::warn!(
                "{} of {} indexed items have no label in {}",
                repo.len() - indexed.len(),
                repo.len(),
                labels_path.display()
            );
        }
        let sidecar = sidecar_labels_path(&a.out);
        store::write_labels(&indexed, &sidecar)
            .with_context(|| format!("writing labels {}", sidecar.display()))?;
    }
    write_line(
        out,
        format_args!(
            "indexed {} items (dim {}, aggregation {}, pca {}, normalized {}) -> {}",
            repo.len(),
            repo.dim(),
            repo.aggregation().kind().name(),
            repo.pca().map_or("none".to_string(), |p| format!("{}->{}", p.input_dim(), p.output_dim())),
            repo.normalized(),
            a.out.display()
        ),
    )?;
    Ok(())
}

pub fn sidecar_labels_path(index: &Path) -> PathBuf {
    let mut name = index.as_os_str().to_owned();
    name.push(".labels");
    PathBuf::from(name)
}

fn cmd_query(a: &QueryArgs, out: &mut dyn Write) -> CmdResult {
    let method = parse_method("method", &a.method)?;
    check_k(a.k)?;
    check_delta(a.delta)?;
    let repo = load_repo(&a.index)?;
    let print = |out: &mut dyn Write, res: &crate::RankedResult| -> anyhow::Result<()> {
        for e in &res.entries {
            write_line(out, format_args!("{}\t{:.6}\t{:.6}", e.id, e.distance, e.cosine))?;
        }
        Ok(())
    };
    if let Some(id) = &a.seed_id {
        let res = repo
            .search_by_id(id, a.k, method, a.delta)
            .with_context(|| format!("--seed-id {id:?}"))?;
        print(out, &res)?;
        return Ok(());
    }
    let path = a.seed_embeddings.as_ref().expect("clap enforces one seed");
    let seeds = load_records(path)?;
    for seed in &seeds {
        let query = repo
            .embed(seed)
            .with_context(|| format!("embedding seed {:?} from {}", seed.item_id, path.display()))?;
        let res = repo
            .search(&query, a.k, method, a.delta)
            .with_context(|| format!("ranking seed {:?}", seed.item_id))?;
        if seeds.len() > 1 {
            write_line(out, format_args!("# query {}", seed.item_id))?;
        }
        print(out, &res)?;
    }
    Ok(())
}

fn read_class_list(path: &Path) -> anyhow::Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CmdResult {
    let methods = a
        .methods
        .iter()
        .map(|m| parse_method("methods", m))
        .collect::<Result<Vec<_>, _>>()?;
    for &k in &a.k {
        check_k(k)?;
    }
    check_delta(a.delta)?;

    let mut repo = load_repo(&a.index)?;
    let labels = store::read_labels(&a.labels)
        .with_context(|| format!("reading labels {}", a.labels.display()))?;
    repo.attach_labels(&labels);
    let records = load_records(&a.queries)?;
    let queries = records
        .into_iter()
        .map(|r| {
            let label = labels.get(&r.item_id).cloned().ok_or_else(|| {
                anyhow!("query {:?} has no label in {}", r.item_id, a.labels.display())
            })?;
            Ok((r, label))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let seen_classes = match &a.seen_classes {
        Some(p) => read_class_list(p)?,
        None => queries.iter().map(|(_, l)| l.clone()).collect(),
    };
    let (seen, unseen): (Vec<_>, Vec<_>) = queries
        .into_iter()
        .partition(|(_, label)| seen_classes.contains(label));

    let mut reports: Vec<MetricReport> = Vec::new();
    for (split, qs) in [(Split::Seen, &seen), (Split::Unseen, &unseen)] {
        if qs.is_empty() {
            continue;
        }
        for &method in &methods {
            for &k in &a.k {
                let cfg = EvalConfig {
                    k,
                    method,
                    delta_t: a.delta,
                    split,
                };
                let report = evalharness::evaluate(&repo, qs, &cfg)
                    .with_context(|| format!("evaluating {} against {}", a.queries.display(), a.index.display()))?;
                reports.push(report);
            }
        }
    }
    out.write_all(evalharness::render_table(&reports).as_bytes())
        .context("writing output")?;
    std::fs::write(&a.report, evalharness::render_csv(&reports))
        .with_context(|| format!("writing report {}", a.report.display()))?;
    Ok(())
}

fn cmd_pca_fit(a: &PcaFitArgs, out: &mut dyn Write) -> CmdResult {
    if !(a.variance > 0.0 && a.variance <= 1.0) {
        return Err(usage(format!("--variance must lie in (0, 1], got {}", a.variance)));
    }
    let kind: AggregationKind = a.agg.parse().map_err(|e| usage(format!("--agg: {e}")))?;
    let aggregation = AggregationStrategy::new(kind, None).map_err(anyhow::Error::from)?;
    let records = load_records(&a.embeddings)?;
    let model = store::fit_index_pca(&records, &aggregation, a.variance)
        .with_context(|| format!("fitting PCA on {}", a.embeddings.display()))?;
    model
        .write(&a.out)
        .with_context(|| format!("writing PCA model {}", a.out.display()))?;
    write_line(
        out,
        format_args!(
            "PCA {} -> {} dims, cumulative variance {:.4} -> {}",
            model.input_dim(),
            model.output_dim(),
            model.cumulative_ratio(),
            a.out.display()
        ),
    )?;
    Ok(())
}

fn cmd_serve(a: &ServeArgs, out: &mut dyn Write) -> CmdResult {
    let repo = load_repo(&a.index)?;
    let service = QueryService::new(repo).with_context(|| format!("serving {}", a.index.display()))?;
    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind(a.addr))
        .with_context(|| format!("binding --addr {}", a.addr))?;
    let bound = listener.local_addr().context("reading bound address")?;
    write_line(out, format_args!("listening on http://{bound}"))?;
    out.flush().context("writing output")?;
    runtime
        .block_on(server::serve_listener(listener, Arc::new(service)))
        .with_context(|| format!("serving on {bound}"))?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = SynthConfig {
        clusters: a.clusters,
        per_cluster: a.per_cluster,
        dim: a.dim,
        frames: a.frames,
        sigma: a.sigma,
        seed: a.seed,
    };
    let records = synth::generate(&cfg).map_err(|e| usage(e.to_string()))?;
    store::write_embeddings(&records, &a.out)
        .with_context(|| format!("writing embeddings {}", a.out.display()))?;
    store::write_labels(&synth::labels_of(&records), &a.labels_out)
        .with_context(|| format!("writing labels {}", a.labels_out.display()))?;
    write_line(
        out,
        format_args!("wrote {} records to {}", records.len(), a.out.display()),
    )?;
    Ok(())
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> CmdResult {
    let method = parse_method("method", &a.method)?;
    check_k(a.k)?;
    check_delta(a.delta)?;
    let repo = load_repo(&a.index)?;
    let records = load_records(&a.queries)?;
    if records.is_empty() {
        return Err(Failure::Data(anyhow!("{} contains no queries", a.queries.display())));
    }
    let mut latencies = Vec::with_capacity(records.len());
    let start = Instant::now();
    for r in &records {
        let t = Instant::now();
        let query = repo.embed(r).with_context(|| format!("embedding {:?}", r.item_id))?;
        repo.search(&query, a.k, method, a.delta)
            .with_context(|| format!("ranking {:?}", r.item_id))?;
        latencies.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let elapsed = start.elapsed().as_secs_f64();
    latencies.sort_by(f64::total_cmp);
    write_line(
        out,
        format_args!(
            "method {} k {} over {} items: {} queries in {:.3}s, {:.1} queries/s",
            method,
            a.k,
            repo.len(),
            records.len(),
            elapsed,
            records.len() as f64 / elapsed.max(f64::MIN_POSITIVE)
        ),
    )?;
    write_line(
        out,
        format_args!(
            "latency ms: p50 {:.3} p90 {:.3} p99 {:.3} max {:.3}",
            percentile(&latencies, 50.0),
            percentile(&latencies, 90.0),
            percentile(&latencies, 99.0),
            latencies.last().copied().unwrap_or(0.0)
        ),
    )?;
    Ok(())
}
