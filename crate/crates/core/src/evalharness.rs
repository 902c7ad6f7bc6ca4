//! Retrieval evaluation: confusion counts, accuracy/precision/recall/F1, and
//! the seen/unseen protocol.
//!
//! Every item in the repository that shares the query's label counts as
//! relevant. Per-query metrics are macro-averaged. A `0/0` ratio is `0`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::ranking::Method;
use crate::store::{MediaRecord, Repository};

pub const CSV_HEADER: &str = "method,split,k,accuracy,precision,recall,f1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub total: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Result<Self> {
        let total = tp + fp + fn_ + tn;
        if total == 0 {
            return Err(Error::Argument("confusion counts must not all be zero".into()));
        }
        Ok(Self { tp, fp, fn_, tn, total })
    }
}

pub fn confusion_counts(
    retrieved: &BTreeSet<&str>,
    relevant: &BTreeSet<&str>,
    universe_size: u64,
) -> Result<ConfusionCounts> {
    let tp = retrieved.intersection(relevant).count() as u64;
    let fp = retrieved.len() as u64 - tp;
    let fn_ = relevant.len() as u64 - tp;
    let implied = tp + fp + fn_;
    if universe_size == 0 || universe_size < implied {
        return Err(Error::Argument(format!(
            "universe size {universe_size} is smaller than the {implied} items referenced"
        )));
    }
    Ok(ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: universe_size - implied,
        total: universe_size,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(c: &ConfusionCounts) -> Metrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        accuracy: ratio(c.tp + c.tn, c.total),
        precision,
        recall,
        f1,
    }
}

/// Arithmetic mean of each metric. Empty input yields all zeros.
pub fn macro_average(per_query: &[Metrics]) -> Metrics {
    if per_query.is_empty() {
        return Metrics::default();
    }
    let n = per_query.len() as f64;
    let sum = per_query.iter().fold(Metrics::default(), |acc, m| Metrics {
        accuracy: acc.accuracy + m.accuracy,
        precision: acc.precision + m.precision,
        recall: acc.recall + m.recall,
        f1: acc.f1 + m.f1,
    });
    Metrics {
        accuracy: sum.accuracy / n,
        precision: sum.precision / n,
        recall: sum.recall / n,
        f1: sum.f1 / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Seen,
    Unseen,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Seen => "seen",
            Split::Unseen => "unseen",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metrics: Metrics,
    pub k: usize,
    pub method: Method,
    pub split: Split,
    pub queries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub k: usize,
    pub method: Method,
    /// PAR threshold; ignored by the other methods.
    pub delta_t: Option<f64>,
    pub split: Split,
}

fn relevance_index(repo: &Repository) -> Result<HashMap<&str, BTreeSet<&str>>> {
    let mut by_label: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for (id, item) in repo.items() {
        let label = item.label.as_deref().ok_or_else(|| {
            Error::Configuration(format!("repository item {id:?} has no label"))
        })?;
        by_label.entry(label).or_default().insert(id);
    }
    Ok(by_label)
}

/// Confusion counts for each query, in input order.
pub fn evaluate_per_query(
    repo: &Repository,
    queries: &[(MediaRecord, String)],
    config: &EvalConfig,
) -> Result<Vec<ConfusionCounts>> {
    if repo.is_empty() {
        return Err(Error::EmptyRepository);
    }
    let by_label = relevance_index(repo)?;
    let empty = BTreeSet::new();
    let universe = repo.len() as u64;
    queries
        .iter()
        .map(|(record, label)| {
            let query = repo.embed(record)?;
            let ranked = repo.search(&query, config.k, config.method, config.delta_t)?;
            let retrieved: BTreeSet<&str> = ranked.ids().collect();
            let relevant = by_label.get(label.as_str()).unwrap_or(&empty);
            confusion_counts(&retrieved, relevant, universe)
        })
        .collect()
}

pub fn evaluate(
    repo: &Repository,
    queries: &[(MediaRecord, String)],
    config: &EvalConfig,
) -> Result<MetricReport> {
    if queries.is_empty() {
        return Err(Error::Argument("no queries to evaluate".into()));
    }
    let per_query: Vec<Metrics> = evaluate_per_query(repo, queries, config)?
        .iter()
        .map(compute_metrics)
        .collect();
    Ok(MetricReport {
        metrics: macro_average(&per_query),
        k: config.k,
        method: config.method,
        split: config.split,
        queries: queries.len(),
    })
}

/// Partitions ids by whether their label is in `seen_classes`. Both halves
/// are sorted.
pub fn seen_unseen_split(
    labels: &BTreeMap<String, String>,
    seen_classes: &BTreeSet<String>,
) -> (Vec<String>, Vec<String>) {
    labels
        .iter()
        .map(|(id, label)| (id.clone(), seen_classes.contains(label)))
        .fold((Vec::new(), Vec::new()), |(mut seen, mut unseen), (id, is_seen)| {
            if is_seen {
                seen.push(id);
            } else {
                unseen.push(id);
            }
            (seen, unseen)
        })
}

/// Splits ids into (indexed, query) sets, taking `round(n * query_fraction)`
/// evenly spaced ids per label as queries.
pub fn holdout_split(
    labels: &BTreeMap<String, String>,
    query_fraction: f64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(0.0..=1.0).contains(&query_fraction) {
        return Err(Error::Argument(format!(
            "query fraction must lie in [0, 1], got {query_fraction}"
        )));
    }
    let mut by_label: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, label) in labels {
        by_label.entry(label).or_default().push(id);
    }
    let mut indexed = Vec::new();
    let mut queries = Vec::new();
    for ids in by_label.values() {
        let n = ids.len();
        let q = ((n as f64 * query_fraction).round() as usize).min(n);
        let picks: BTreeSet<usize> = (0..q).map(|j| j * n / q.max(1)).collect();
        for (i, id) in ids.iter().enumerate() {
            if picks.contains(&i) {
                queries.push(id.to_string());
            } else {
                indexed.push(id.to_string());
            }
        }
    }
    indexed.sort();
    queries.sort();
    Ok((indexed, queries))
}

pub fn render_table(reports: &[MetricReport]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<10} {:<7} {:>4} {:>7} {:>9} {:>9} {:>9} {:>9}",
        "method", "split", "k", "queries", "accuracy", "precision", "recall", "f1"
    )
    .unwrap();
    for r in reports {
        writeln!(
            out,
            "{:<10} {:<7} {:>4} {:>7} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            r.method.as_str(),
            r.split,
            r.k,
            r.queries,
            r.metrics.accuracy,
            r.metrics.precision,
            r.metrics.recall,
            r.metrics.f1
        )
        .unwrap();
    }
    out
}

pub fn render_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method.as_str(),
            r.split,
            r.k,
            r.metrics.accuracy,
            r.metrics.precision,
            r.metrics.recall,
            r.metrics.f1
        )
        .unwrap();
    }
    out
}
