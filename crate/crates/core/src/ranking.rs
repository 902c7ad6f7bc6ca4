//! Query-by-example ranking: euclidean top-k, cosine top-k, and proximal
//! affinity re-ranking (PAR).
//!
//! PAR takes the euclidean top-k short-list and keeps only the entries whose
//! cosine similarity to the query is strictly greater than `delta_t`,
//! preserving the euclidean order.
//!
//! Top-k selection uses a bounded max-heap (`O(n log k)`). Ties in the
//! primary key are broken by item id ascending, so results are fully
//! deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectors::{cosine_with_query_norm, dot, squared_distance, FeatureVector};

/// Default cosine threshold for PAR. Chosen empirically; override per corpus.
pub const DEFAULT_DELTA_T: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euclidean,
    Cosine,
    Par,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Euclidean => "euclidean",
            Method::Cosine => "cosine",
            Method::Par => "par",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "eu" | "l2" => Ok(Method::Euclidean),
            "cosine" | "cos" => Ok(Method::Cosine),
            "par" => Ok(Method::Par),
            other => Err(Error::Argument(format!(
                "unknown method {other:?} (expected euclidean, cosine or par)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    pub id: String,
    pub distance: f64,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub entries: Vec<RankedEntry>,
    pub method: Method,
    pub k_requested: usize,
    /// Only set for [`Method::Par`].
    pub delta_t: Option<f64>,
}

impl RankedResult {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Heap candidate ordered by `(key, id)` ascending; the heap root is the worst
/// candidate kept so far.
struct Candidate<'a> {
    key: f64,
    id: &'a str,
    vector: &'a FeatureVector,
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then_with(|| self.id.cmp(other.id))
    }
}

/// Keeps the `k` smallest candidates by `(key, id)`, returned ascending.
fn select_smallest<'a, I>(
    query: &FeatureVector,
    items: I,
    k: usize,
    key: impl Fn(&[f64]) -> f64,
) -> Result<Vec<Candidate<'a>>>
where
    I: IntoIterator<Item = (&'a str, &'a FeatureVector)>,
{
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let mut heap: BinaryHeap<Candidate<'a>> = BinaryHeap::with_capacity(k + 1);
    let mut seen = 0usize;
    for (id, vector) in items {
        seen += 1;
        if vector.dim() != query.dim() {
            return Err(Error::Dimension {
                expected: query.dim(),
                actual: vector.dim(),
            });
        }
        let cand = Candidate {
            key: key(vector),
            id,
            vector,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if let Some(mut worst) = heap.peek_mut() {
            if cand < *worst {
                *worst = cand;
            }
        }
    }
    if seen == 0 {
        return Err(Error::EmptyRepository);
    }
    Ok(heap.into_sorted_vec())
}

fn query_norm(query: &FeatureVector) -> f64 {
    dot(query, query).sqrt()
}

/// The `k` items closest to `query` by euclidean distance, ascending.
///
/// Each entry also carries its cosine similarity to the query (`0.0` when the
/// query itself has zero norm).
pub fn rank_euclidean<'a, I>(query: &FeatureVector, items: I, k: usize) -> Result<RankedResult>
where
    I: IntoIterator<Item = (&'a str, &'a FeatureVector)>,
{
    let top = select_smallest(query, items, k, |v| squared_distance(query, v))?;
    let qn = query_norm(query);
    let entries = top
        .into_iter()
        .map(|c| RankedEntry {
            id: c.id.to_owned(),
            distance: c.key.sqrt(),
            cosine: cosine_with_query_norm(query, qn, c.vector),
        })
        .collect();
    Ok(RankedResult {
        entries,
        method: Method::Euclidean,
        k_requested: k,
        delta_t: None,
    })
}

/// Proximal affinity re-ranking: euclidean top-k, then keep entries with
/// cosine strictly above `delta_t`.
pub fn par_rerank<'a, I>(
    query: &FeatureVector,
    items: I,
    k: usize,
    delta_t: f64,
) -> Result<RankedResult>
where
    I: IntoIterator<Item = (&'a str, &'a FeatureVector)>,
{
    if !(-1.0..=1.0).contains(&delta_t) {
        return Err(Error::Argument(format!(
            "delta_t must lie in [-1, 1], got {delta_t}"
        )));
    }
    if query_norm(query) == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mut shortlist = rank_euclidean(query, items, k)?;
    shortlist.entries.retain(|e| e.cosine > delta_t);
    shortlist.method = Method::Par;
    shortlist.delta_t = Some(delta_t);
    Ok(shortlist)
}

/// The `k` items with the highest cosine similarity to `query`, descending.
pub fn rank_cosine<'a, I>(query: &FeatureVector, items: I, k: usize) -> Result<RankedResult>
where
    I: IntoIterator<Item = (&'a str, &'a FeatureVector)>,
{
    let qn = query_norm(query);
    if qn == 0.0 {
        return Err(Error::ZeroVector);
    }
    // Negated cosine so the smallest key is the most similar item.
    let top = select_smallest(query, items, k, |v| -cosine_with_query_norm(query, qn, v))?;
    let entries = top
        .into_iter()
        .map(|c| RankedEntry {
            id: c.id.to_owned(),
            distance: squared_distance(query, c.vector).sqrt(),
            cosine: -c.key,
        })
        .collect();
    Ok(RankedResult {
        entries,
        method: Method::Cosine,
        k_requested: k,
        delta_t: None,
    })
}

/// Dispatches on `method`. `delta_t` is only used by PAR and defaults to
/// [`DEFAULT_DELTA_T`].
pub fn rank<'a, I>(
    method: Method,
    query: &FeatureVector,
    items: I,
    k: usize,
    delta_t: Option<f64>,
) -> Result<RankedResult>
where
    I: IntoIterator<Item = (&'a str, &'a FeatureVector)>,
{
    match method {
        Method::Euclidean => rank_euclidean(query, items, k),
        Method::Cosine => rank_cosine(query, items, k),
        Method::Par => par_rerank(query, items, k, delta_t.unwrap_or(DEFAULT_DELTA_T)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repo() -> Vec<(String, FeatureVector)> {
        [
            ("a", [1.0, 0.0]),
            ("b", [0.9, 0.1]),
            ("c", [-1.0, 0.0]),
            ("d", [0.0, 1.0]),
        ]
        .into_iter()
        .map(|(id, v)| (id.to_string(), FeatureVector::new(v.to_vec()).unwrap()))
        .collect()
    }

    fn items(r: &[(String, FeatureVector)]) -> impl Iterator<Item = (&str, &FeatureVector)> {
        r.iter().map(|(id, v)| (id.as_str(), v))
    }

    fn q(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn euclidean_four_point_example() {
        let r = repo();
        let res = rank_euclidean(&q(&[1.0, 0.0]), items(&r), 3).unwrap();
        let ids: Vec<_> = res.ids().collect();
        assert_eq!(ids, ["a", "b", "d"]);
        assert_eq!(res.entries[0].distance, 0.0);
        assert!((res.entries[1].distance - 0.02f64.sqrt()).abs() < 1e-12);
        assert!((res.entries[2].distance - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(res.delta_t, None);
    }

    #[test]
    fn k_beyond_repo_returns_everything() {
        let r = repo();
        let res = rank_euclidean(&q(&[1.0, 0.0]), items(&r), 10).unwrap();
        let ids: Vec<_> = res.ids().collect();
        assert_eq!(ids, ["a", "b", "d", "c"]);
        assert_eq!(res.k_requested, 10);
    }

    #[test]
    fn par_four_point_example() {
        let r = repo();
        let res = par_rerank(&q(&[1.0, 0.0]), items(&r), 3, 0.5).unwrap();
        let ids: Vec<_> = res.ids().collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(res.entries[0].cosine, 1.0);
        let expected_b = 0.9 / (0.82f64).sqrt();
        assert!((res.entries[1].cosine - expected_b).abs() < 1e-12);
        assert!((expected_b - 0.9939).abs() < 1e-4);
        assert_eq!(res.method, Method::Par);
        assert_eq!(res.delta_t, Some(0.5));
    }

    #[test]
    fn par_threshold_extremes() {
        let r = repo();
        let query = q(&[1.0, 0.0]);
        assert!(par_rerank(&query, items(&r), 4, 1.0).unwrap().is_empty());
        // c is exactly antiparallel and excluded even at -1.
        let all = par_rerank(&query, items(&r), 4, -1.0).unwrap();
        assert_eq!(all.ids().collect::<Vec<_>>(), ["a", "b", "d"]);
        assert!(par_rerank(&query, items(&r), 4, 1.5).is_err());
    }

    #[test]
    fn cosine_axis_example_and_scale_invariance() {
        let r: Vec<(String, FeatureVector)> = vec![
            ("a".into(), q(&[2.0, 0.0])),
            ("b".into(), q(&[0.0, 1.0])),
        ];
        let res = rank_cosine(&q(&[1.0, 0.0]), items(&r), 2).unwrap();
        assert_eq!(res.ids().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(res.entries[0].cosine, 1.0);
        assert_eq!(res.entries[1].cosine, 0.0);
        let scaled = rank_cosine(&q(&[10.0, 0.0]), items(&r), 2).unwrap();
        assert_eq!(
            scaled.ids().collect::<Vec<_>>(),
            res.ids().collect::<Vec<_>>()
        );
    }

    #[test]
    fn ties_break_by_id() {
        let r: Vec<(String, FeatureVector)> = ["z", "m", "a", "q"]
            .iter()
            .map(|id| (id.to_string(), q(&[1.0, 1.0])))
            .collect();
        let res = rank_euclidean(&q(&[0.0, 0.0]), items(&r), 3).unwrap();
        assert_eq!(res.ids().collect::<Vec<_>>(), ["a", "m", "q"]);
        let res = rank_cosine(&q(&[1.0, 0.0]), items(&r), 2).unwrap();
        assert_eq!(res.ids().collect::<Vec<_>>(), ["a", "m"]);
    }

    #[test]
    fn error_paths() {
        let empty: Vec<(String, FeatureVector)> = vec![];
        assert!(matches!(
            rank_euclidean(&q(&[1.0]), items(&empty), 1),
            Err(Error::EmptyRepository)
        ));
        let r = repo();
        assert!(matches!(
            rank_euclidean(&q(&[1.0, 0.0, 0.0]), items(&r), 1),
            Err(Error::Dimension { .. })
        ));
        assert!(rank_euclidean(&q(&[1.0, 0.0]), items(&r), 0).is_err());
        assert!(matches!(
            rank_cosine(&q(&[0.0, 0.0]), items(&r), 1),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            par_rerank(&q(&[0.0, 0.0]), items(&r), 1, 0.5),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn method_parsing() {
        assert_eq!("PAR".parse::<Method>().unwrap(), Method::Par);
        assert_eq!("euclidean".parse::<Method>().unwrap(), Method::Euclidean);
        assert!("manhattan".parse::<Method>().is_err());
    }
}
