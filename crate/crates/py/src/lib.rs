//! Python bindings. Build with `maturin develop -m crates/py/Cargo.toml`
//! (or `cargo build -p mediarank-py --features extension-module` and copy the
//! shared library to `mediarank.so`).
//!
//! Media records cross the boundary as `(item_id, kind, frames)` tuples where
//! `kind` is `"image"` or `"video"` and `frames` is a list of float lists.

use std::collections::BTreeMap;
use std::path::PathBuf;

use mediarank::evalharness::{self, ConfusionCounts};
use mediarank::store::{self, MediaKind};
use mediarank::synth::SynthConfig;
use mediarank::temporal::{self, AggregationKind};
use mediarank::{
    AggregationStrategy, Error, FeatureVector, FrameFeatureSequence, LstmWeights, MediaRecord, Method, PcaModel,
    RankedResult,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyKeyError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(mediarank, MediarankError, PyValueError);
create_exception!(mediarank, DimensionError, MediarankError);
create_exception!(mediarank, ZeroVectorError, MediarankError);
create_exception!(mediarank, FormatError, MediarankError);
create_exception!(mediarank, DuplicateIdError, MediarankError);
create_exception!(mediarank, EmptyRepositoryError, MediarankError);

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Dimension { .. } => DimensionError::new_err(msg),
        Error::ZeroVector => ZeroVectorError::new_err(msg),
        Error::Format { .. } => FormatError::new_err(msg),
        Error::DuplicateId(_) => DuplicateIdError::new_err(msg),
        Error::EmptyRepository => EmptyRepositoryError::new_err(msg),
        Error::UnknownItem(_) => PyKeyError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        _ => MediarankError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> OrPy<T> for mediarank::error::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(err)
    }
}

fn vector(values: Vec<f64>) -> PyResult<FeatureVector> {
    FeatureVector::new(values).py_err()
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().py_err()
}

type PyRecord = (String, String, Vec<Vec<f64>>);
type PyEntry = (String, f64, f64);

fn record_from_py((id, kind, frames): PyRecord) -> PyResult<MediaRecord> {
    let frames = frames.into_iter().map(vector).collect::<PyResult<Vec<_>>>()?;
    let seq = FrameFeatureSequence::new(frames).py_err()?;
    let record = match kind.as_str() {
        "image" if seq.len() == 1 => MediaRecord::image(id, seq.frames()[0].clone()),
        "image" => return Err(MediarankError::new_err(format!("image {id:?} must have exactly one frame"))),
        "video" => MediaRecord::video(id, seq),
        other => return Err(MediarankError::new_err(format!("unknown media kind {other:?}"))),
    };
    Ok(record)
}

fn record_to_py(r: &MediaRecord) -> PyRecord {
    (
        r.item_id.clone(),
        r.kind.name().to_owned(),
        r.frames.frames().iter().map(FeatureVector::to_vec).collect(),
    )
}

fn entries(r: &RankedResult) -> Vec<PyEntry> {
    r.entries.iter().map(|e| (e.id.clone(), e.distance, e.cosine)).collect()
}

fn named_vectors(items: Vec<(String, Vec<f64>)>) -> PyResult<Vec<(String, FeatureVector)>> {
    items.into_iter().map(|(id, v)| Ok((id, vector(v)?))).collect()
}

#[pyfunction]
fn euclidean_distance(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    mediarank::euclidean_distance(&vector(p)?, &vector(q)?).py_err()
}

#[pyfunction]
fn cosine_similarity(query: Vec<f64>, item: Vec<f64>) -> PyResult<f64> {
    mediarank::cosine_similarity(&vector(query)?, &vector(item)?).py_err()
}

#[pyfunction]
fn l2_norm(v: Vec<f64>) -> PyResult<f64> {
    Ok(mediarank::l2_norm(&vector(v)?))
}

/// Ranks `items` (a list of `(id, vector)`) against `query`.
#[pyfunction]
#[pyo3(signature = (query, items, k, method = "par", delta_t = None))]
fn rank(query: Vec<f64>, items: Vec<(String, Vec<f64>)>, k: usize, method: &str, delta_t: Option<f64>) -> PyResult<Vec<PyEntry>> {
    let items = named_vectors(items)?;
    let ranked = mediarank::rank(
        parse::<Method>(method)?,
        &vector(query)?,
        items.iter().map(|(id, v)| (id.as_str(), v)),
        k,
        delta_t,
    )
    .py_err()?;
    Ok(entries(&ranked))
}

#[pyfunction]
#[pyo3(signature = (query, items, k, delta_t = mediarank::ranking::DEFAULT_DELTA_T))]
fn par_rerank(query: Vec<f64>, items: Vec<(String, Vec<f64>)>, k: usize, delta_t: f64) -> PyResult<Vec<PyEntry>> {
    let items = named_vectors(items)?;
    let ranked =
        mediarank::par_rerank(&vector(query)?, items.iter().map(|(id, v)| (id.as_str(), v)), k, delta_t).py_err()?;
    Ok(entries(&ranked))
}

#[pyfunction]
#[pyo3(signature = (total_frames, target = temporal::DEFAULT_FRAMES))]
fn sample_frame_indices(total_frames: usize, target: usize) -> Vec<usize> {
    temporal::sample_frame_indices(total_frames, target)
}

#[pyfunction]
fn segment_chunks(total_frames: usize, fps: f64, chunk_seconds: f64) -> PyResult<Vec<(usize, usize)>> {
    let chunks = temporal::segment_chunks(total_frames, fps, chunk_seconds).py_err()?;
    Ok(chunks.into_iter().map(|r| (r.start, r.end)).collect())
}

/// Aggregates frames with `"mean"`, `"max"` or `"last"` pooling.
#[pyfunction]
#[pyo3(signature = (frames, kind = "mean"))]
fn aggregate(frames: Vec<Vec<f64>>, kind: &str) -> PyResult<Vec<f64>> {
    let seq = FrameFeatureSequence::new(frames.into_iter().map(vector).collect::<PyResult<_>>()?).py_err()?;
    let strategy = AggregationStrategy::new(parse::<AggregationKind>(kind)?, None).py_err()?;
    Ok(mediarank::aggregate(&seq, &strategy).py_err()?.to_vec())
}

#[pyfunction]
fn lstm_forward(frames: Vec<Vec<f64>>, weights_path: PathBuf) -> PyResult<Vec<f64>> {
    let weights = LstmWeights::read(&weights_path).py_err()?;
    let seq = FrameFeatureSequence::new(frames.into_iter().map(vector).collect::<PyResult<_>>()?).py_err()?;
    Ok(mediarank::lstm_forward(&seq, &weights).py_err()?.to_vec())
}

/// Returns `{"accuracy", "precision", "recall", "f1"}`.
#[pyfunction]
fn compute_metrics(tp: u64, fp: u64, fn_: u64, tn: u64) -> PyResult<BTreeMap<&'static str, f64>> {
    let m = evalharness::compute_metrics(&ConfusionCounts::new(tp, fp, fn_, tn).py_err()?);
    Ok(BTreeMap::from([
        ("accuracy", m.accuracy),
        ("precision", m.precision),
        ("recall", m.recall),
        ("f1", m.f1),
    ]))
}

#[pyfunction]
fn read_embeddings(path: PathBuf) -> PyResult<Vec<PyRecord>> {
    Ok(store::read_embeddings(&path).py_err()?.iter().map(record_to_py).collect())
}

#[pyfunction]
fn write_embeddings(records: Vec<PyRecord>, path: PathBuf) -> PyResult<()> {
    let records = records.into_iter().map(record_from_py).collect::<PyResult<Vec<_>>>()?;
    store::write_embeddings(&records, &path).py_err()
}

/// Generates the seeded Gaussian-cluster corpus; returns `(records, labels)`.
#[pyfunction]
#[pyo3(signature = (clusters, per_cluster, dim, frames, seed, sigma = mediarank::synth::DEFAULT_SIGMA))]
fn synth(
    clusters: usize,
    per_cluster: usize,
    dim: usize,
    frames: usize,
    seed: u64,
    sigma: f64,
) -> PyResult<(Vec<PyRecord>, BTreeMap<String, String>)> {
    let cfg = SynthConfig { clusters, per_cluster, dim, frames, sigma, seed };
    let records = mediarank::synth::generate(&cfg).py_err()?;
    Ok((records.iter().map(record_to_py).collect(), mediarank::synth::labels_of(&records)))
}

#[pyclass(name = "PcaModel", module = "mediarank", frozen)]
struct PyPcaModel {
    inner: PcaModel,
}

#[pymethods]
impl PyPcaModel {
    #[staticmethod]
    #[pyo3(signature = (data, variance = mediarank::reduce::DEFAULT_VARIANCE_THRESHOLD))]
    fn fit(data: Vec<Vec<f64>>, variance: f64) -> PyResult<Self> {
        let data = data.into_iter().map(vector).collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: mediarank::pca_fit(&data, variance).py_err()? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: PcaModel::read(&path).py_err()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write(&path).py_err()
    }

    fn transform(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(mediarank::pca_transform(&self.inner, &vector(v)?).py_err()?.to_vec())
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().to_vec()
    }

    #[getter]
    fn components(&self) -> Vec<Vec<f64>> {
        self.inner.components().map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn explained_variance_ratio(&self) -> Vec<f64> {
        self.inner.explained_variance_ratio().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("PcaModel(input_dim={}, output_dim={})", self.inner.input_dim(), self.inner.output_dim())
    }
}

#[pyclass(name = "Repository", module = "mediarank")]
struct PyRepository {
    inner: store::Repository,
}

#[pymethods]
impl PyRepository {
    /// Builds an index from records. `agg` is `"mean"`, `"max"`, `"last"` or
    /// `"lstm"` (which needs `lstm_weights`, a path to an MRLW file).
    #[staticmethod]
    #[pyo3(signature = (records, agg = "mean", lstm_weights = None, pca_variance = None, normalize = false))]
    fn build(
        records: Vec<PyRecord>,
        agg: &str,
        lstm_weights: Option<PathBuf>,
        pca_variance: Option<f64>,
        normalize: bool,
    ) -> PyResult<Self> {
        let records = records.into_iter().map(record_from_py).collect::<PyResult<Vec<_>>>()?;
        let weights = lstm_weights.map(|p| LstmWeights::read(&p)).transpose().py_err()?;
        let strategy = AggregationStrategy::new(parse(agg)?, weights).py_err()?;
        let pca = pca_variance
            .map(|v| store::fit_index_pca(&records, &strategy, v))
            .transpose()
            .py_err()?;
        Ok(Self { inner: store::build_index(&records, strategy, pca, normalize).py_err()? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: store::load_index(&path).py_err()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        store::save_index(&self.inner, &path).py_err()
    }

    fn add(&mut self, record: PyRecord) -> PyResult<()> {
        self.inner.add_item(&record_from_py(record)?).py_err()
    }

    /// Queries by a raw seed vector or by an indexed id. Returns
    /// `[(id, distance, cosine), ...]`.
    #[pyo3(signature = (seed_vector = None, seed_id = None, k = 10, method = "par", delta_t = None))]
    fn query(
        &self,
        seed_vector: Option<Vec<f64>>,
        seed_id: Option<&str>,
        k: usize,
        method: &str,
        delta_t: Option<f64>,
    ) -> PyResult<Vec<PyEntry>> {
        let method: Method = parse(method)?;
        let ranked = match (seed_vector, seed_id) {
            (Some(v), None) => {
                let q = self.inner.project(&vector(v)?).py_err()?;
                self.inner.search(&q, k, method, delta_t)
            }
            (None, Some(id)) => self.inner.search_by_id(id, k, method, delta_t),
            _ => return Err(MediarankError::new_err("pass exactly one of seed_vector or seed_id")),
        }
        .py_err()?;
        Ok(entries(&ranked))
    }

    fn ids(&self) -> Vec<String> {
        self.inner.items().map(|(id, _)| id.to_owned()).collect()
    }

    fn vector(&self, id: &str) -> PyResult<Vec<f64>> {
        match self.inner.get(id) {
            Some(item) => Ok(item.vector.to_vec()),
            None => Err(PyKeyError::new_err(id.to_owned())),
        }
    }

    fn health<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("items", self.inner.len())?;
        d.set_item("dim", self.inner.dim())?;
        d.set_item("query_dim", self.inner.query_dim())?;
        d.set_item("aggregation", self.inner.aggregation().kind().name())?;
        d.set_item("pca", self.inner.pca().is_some())?;
        d.set_item("normalized", self.inner.normalized())?;
        Ok(d)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, id: &str) -> bool {
        self.inner.get(id).is_some()
    }

    fn __repr__(&self) -> String {
        format!("Repository(items={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

#[pymodule]
#[pyo3(name = "mediarank")]
fn mediarank_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("MediarankError", py.get_type::<MediarankError>())?;
    m.add("DimensionError", py.get_type::<DimensionError>())?;
    m.add("ZeroVectorError", py.get_type::<ZeroVectorError>())?;
    m.add("FormatError", py.get_type::<FormatError>())?;
    m.add("DuplicateIdError", py.get_type::<DuplicateIdError>())?;
    m.add("EmptyRepositoryError", py.get_type::<EmptyRepositoryError>())?;
    m.add("DEFAULT_DELTA_T", mediarank::ranking::DEFAULT_DELTA_T)?;
    m.add("IMAGE", MediaKind::Image.name())?;
    m.add("VIDEO", MediaKind::Video.name())?;
    m.add_class::<PyPcaModel>()?;
    m.add_class::<PyRepository>()?;
    m.add_function(wrap_pyfunction!(euclidean_distance, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(l2_norm, m)?)?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add_function(wrap_pyfunction!(par_rerank, m)?)?;
    m.add_function(wrap_pyfunction!(sample_frame_indices, m)?)?;
    m.add_function(wrap_pyfunction!(segment_chunks, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(lstm_forward, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(read_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(write_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    Ok(())
}
