//! Embedding files, index construction and index persistence.
//!
//! Index build runs each record through aggregation, then the optional PCA
//! projection, then optional L2 normalisation. Stored vectors are rounded to
//! `f32` precision so an index survives a save/load cycle unchanged.
//!
//! ```text
//! MRF1  "MRF1" u32 version u32 dim u8 kind_default u64 count
//!       { u32 id_len, id, u8 kind, u32 frames, frames*dim f32 }*
//! MRIX  "MRIX" u32 version u32 dim u8 normalized u8 aggregation
//!       u8 has_lstm [MRLW] u8 has_pca [MRPC] u64 count
//!       { u32 id_len, id, u8 kind, dim f32 }*
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::codec::{read_file, write_file_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::ranking::{self, Method, RankedResult};
use crate::reduce::{pca_fit, pca_transform, PcaModel};
use crate::temporal::{aggregate, AggregationKind, AggregationStrategy, FrameFeatureSequence, LstmWeights};
use crate::vectors::FeatureVector;

pub const EMBEDDINGS_MAGIC: &[u8; 4] = b"MRF1";
pub const EMBEDDINGS_VERSION: u32 = 1;
pub const INDEX_MAGIC: &[u8; 4] = b"MRIX";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MediaKind {
    Image,
    Video,
}

impl MediaKind {
    pub fn code(self) -> u8 {
        match self {
            MediaKind::Image => 0,
            MediaKind::Video => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(MediaKind::Image),
            1 => Ok(MediaKind::Video),
            other => Err(Error::format(format!("unknown media kind {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MediaKind::Image => "image",
            MediaKind::Video => "video",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediaRecord {
    pub item_id: String,
    pub kind: MediaKind,
    pub frames: FrameFeatureSequence,
    /// Evaluation label; never written to MRF1 or MRIX.
    pub label: Option<String>,
}

impl MediaRecord {
    pub fn image(item_id: impl Into<String>, features: FeatureVector) -> Self {
        Self {
            item_id: item_id.into(),
            kind: MediaKind::Image,
            frames: FrameFeatureSequence::single(features),
            label: None,
        }
    }

    pub fn video(item_id: impl Into<String>, frames: FrameFeatureSequence) -> Self {
        Self {
            item_id: item_id.into(),
            kind: MediaKind::Video,
            frames,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    fn validate(&self) -> Result<()> {
        if self.item_id.is_empty() {
            return Err(Error::Argument("item id must not be empty".into()));
        }
        if self.kind == MediaKind::Image && self.frames.len() != 1 {
            return Err(Error::Argument(format!(
                "image {:?} has {} frames, expected 1",
                self.item_id,
                self.frames.len()
            )));
        }
        Ok(())
    }
}

pub fn encode_embeddings(records: &[MediaRecord]) -> Result<Vec<u8>> {
    let dim = records.first().map(|r| r.frames.dim()).unwrap_or(0);
    let mut ids = HashSet::with_capacity(records.len());
    for r in records {
        r.validate()?;
        if r.frames.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: r.frames.dim(),
            });
        }
        if !ids.insert(r.item_id.as_str()) {
            return Err(Error::DuplicateId(r.item_id.clone()));
        }
    }
    let mut w = Writer::new();
    w.bytes(EMBEDDINGS_MAGIC);
    w.u32(EMBEDDINGS_VERSION);
    w.u32(dim as u32);
    w.u8(records.first().map(|r| r.kind.code()).unwrap_or(0));
    w.u64(records.len() as u64);
    for r in records {
        w.string(&r.item_id);
        w.u8(r.kind.code());
        w.u32(r.frames.len() as u32);
        for f in r.frames.frames() {
            w.f32s(f);
        }
    }
    Ok(w.into_inner())
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Vec<MediaRecord>> {
    let mut r = Reader::new(bytes);
    r.magic(EMBEDDINGS_MAGIC)?;
    r.version(EMBEDDINGS_VERSION)?;
    let dim = r.u32("dim")? as usize;
    MediaKind::from_code(r.u8("default kind")?)?;
    let count = r.u64("record count")?;
    if count > 0 && dim == 0 {
        return Err(Error::format("records present but dim is 0"));
    }
    // Each record needs at least 9 header bytes; bound the allocation.
    let mut records = Vec::with_capacity((count as usize).min(r.remaining() / 9));
    let mut ids = HashSet::new();
    for n in 0..count {
        let item_id = r.string("item id")?;
        if item_id.is_empty() {
            return Err(Error::format(format!("record {n} has an empty id")));
        }
        let kind = MediaKind::from_code(r.u8("record kind")?)?;
        let frame_count = r.u32("frame count")? as usize;
        if frame_count == 0 {
            return Err(Error::format(format!("record {item_id:?} has no frames")));
        }
        if kind == MediaKind::Image && frame_count != 1 {
            return Err(Error::format(format!(
                "image record {item_id:?} has {frame_count} frames"
            )));
        }
        let mut frames = Vec::with_capacity(frame_count.min(r.remaining() / (4 * dim)));
        for _ in 0..frame_count {
            let values = r.f32s(dim, "frame payload")?;
            frames.push(FeatureVector::new(values)?);
        }
        if !ids.insert(item_id.clone()) {
            return Err(Error::DuplicateId(item_id));
        }
        records.push(MediaRecord {
            item_id,
            kind,
            frames: FrameFeatureSequence::new(frames)?,
            label: None,
        });
    }
    r.finish()?;
    Ok(records)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<MediaRecord>> {
    let path = path.as_ref();
    decode_embeddings(&read_file(path)?).map_err(|e| e.at_path(path))
}

pub fn write_embeddings(records: &[MediaRecord], path: impl AsRef<Path>) -> Result<()> {
    write_file_atomic(path.as_ref(), &encode_embeddings(records)?)
}

/// Reads a `item_id<TAB>label` manifest. Blank lines are skipped.
pub fn read_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, label) = line.split_once('\t').ok_or_else(|| Error::Format {
            path: Some(path.to_path_buf()),
            message: format!("line {}: expected item_id<TAB>label", n + 1),
        })?;
        if labels.insert(id.to_owned(), label.to_owned()).is_some() {
            return Err(Error::DuplicateId(id.to_owned()));
        }
    }
    Ok(labels)
}

pub fn write_labels(labels: &BTreeMap<String, String>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (id, label) in labels {
        writeln!(out, "{id}\t{label}").expect("string write");
    }
    write_file_atomic(path.as_ref(), out.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredItem {
    pub vector: FeatureVector,
    pub kind: MediaKind,
    pub label: Option<String>,
}

/// Flat in-memory index. Many readers may share it; `add_item` needs `&mut`.
#[derive(Debug, Clone, PartialEq)]
pub struct Repository {
    items: BTreeMap<String, StoredItem>,
    dim: usize,
    aggregation: AggregationStrategy,
    pca: Option<PcaModel>,
    normalized: bool,
}

impl Repository {
    /// An empty repository accepting frames of `frame_dim`.
    pub fn new(
        frame_dim: usize,
        aggregation: AggregationStrategy,
        pca: Option<PcaModel>,
        normalized: bool,
    ) -> Result<Self> {
        if let Some(w) = aggregation.weights() {
            if w.input_dim() != frame_dim {
                return Err(Error::Dimension {
                    expected: w.input_dim(),
                    actual: frame_dim,
                });
            }
        }
        let aggregated = aggregation.output_dim(frame_dim);
        let dim = match &pca {
            Some(p) if p.input_dim() != aggregated => {
                return Err(Error::Dimension {
                    expected: p.input_dim(),
                    actual: aggregated,
                })
            }
            Some(p) => p.output_dim(),
            None => aggregated,
        };
        Ok(Self {
            items: BTreeMap::new(),
            dim,
            aggregation: aggregation.to_f32_precision(),
            pca: pca.map(|p| p.to_f32_precision()),
            normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Dimension of stored vectors.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dimension of a raw query vector, before PCA.
    pub fn query_dim(&self) -> usize {
        self.pca.as_ref().map_or(self.dim, |p| p.input_dim())
    }

    pub fn aggregation(&self) -> &AggregationStrategy {
        &self.aggregation
    }

    pub fn pca(&self) -> Option<&PcaModel> {
        self.pca.as_ref()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, id: &str) -> Option<&StoredItem> {
        self.items.get(id)
    }

    pub fn items(&self) -> impl Iterator<Item = (&str, &StoredItem)> {
        self.items.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn vectors(&self) -> impl Iterator<Item = (&str, &FeatureVector)> {
        self.items.iter().map(|(k, v)| (k.as_str(), &v.vector))
    }

    /// Applies the stored PCA model and normalisation to an aggregated vector.
    pub fn project(&self, raw: &FeatureVector) -> Result<FeatureVector> {
        let v = match &self.pca {
            Some(p) => pca_transform(p, raw)?,
            None => {
                if raw.dim() != self.dim {
                    return Err(Error::Dimension {
                        expected: self.dim,
                        actual: raw.dim(),
                    });
                }
                raw.clone()
            }
        };
        Ok(if self.normalized { v.normalized() } else { v })
    }

    /// Runs a record through the full indexing pipeline.
    pub fn embed(&self, record: &MediaRecord) -> Result<FeatureVector> {
        self.project(&aggregate(&record.frames, &self.aggregation)?)
    }

    pub fn add_item(&mut self, record: &MediaRecord) -> Result<()> {
        record.validate()?;
        if self.items.contains_key(&record.item_id) {
            return Err(Error::DuplicateId(record.item_id.clone()));
        }
        let vector = self.embed(record)?.to_f32_precision();
        self.items.insert(
            record.item_id.clone(),
            StoredItem {
                vector,
                kind: record.kind,
                label: record.label.clone(),
            },
        );
        Ok(())
    }

    /// Sets labels for ids present in the repository; returns how many matched.
    pub fn attach_labels(&mut self, labels: &BTreeMap<String, String>) -> usize {
        let mut matched = 0;
        for (id, item) in self.items.iter_mut() {
            if let Some(label) = labels.get(id) {
                item.label = Some(label.clone());
                matched += 1;
            }
        }
        matched
    }

    /// Ranks the repository against an already-projected query vector.
    pub fn search(
        &self,
        query: &FeatureVector,
        k: usize,
        method: Method,
        delta_t: Option<f64>,
    ) -> Result<RankedResult> {
        ranking::rank(method, query, self.vectors(), k, delta_t)
    }

    /// Ranks against the stored vector of `id`.
    pub fn search_by_id(
        &self,
        id: &str,
        k: usize,
        method: Method,
        delta_t: Option<f64>,
    ) -> Result<RankedResult> {
        let item = self
            .items
            .get(id)
            .ok_or_else(|| Error::UnknownItem(id.to_owned()))?;
        self.search(&item.vector, k, method, delta_t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(INDEX_MAGIC);
        w.u32(INDEX_VERSION);
        w.u32(self.dim as u32);
        w.u8(self.normalized as u8);
        w.u8(self.aggregation.kind().code());
        match self.aggregation.weights() {
            Some(weights) => {
                w.u8(1);
                weights.encode(&mut w);
            }
            None => w.u8(0),
        }
        match &self.pca {
            Some(p) => {
                w.u8(1);
                p.encode(&mut w);
            }
            None => w.u8(0),
        }
        w.u64(self.items.len() as u64);
        for (id, item) in &self.items {
            w.string(id);
            w.u8(item.kind.code());
            w.f32s(&item.vector);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(INDEX_MAGIC)?;
        r.version(INDEX_VERSION)?;
        let dim = r.u32("dim")? as usize;
        if dim == 0 {
            return Err(Error::format("index dim must be positive"));
        }
        let normalized = r.flag("normalized")?;
        let kind = AggregationKind::from_code(r.u8("aggregation kind")?)?;
        let weights = if r.flag("LSTM presence")? {
            Some(LstmWeights::decode(&mut r)?)
        } else {
            None
        };
        let aggregation =
            AggregationStrategy::new(kind, weights).map_err(|e| Error::format(e.to_string()))?;
        let pca = if r.flag("PCA presence")? {
            Some(PcaModel::decode(&mut r)?)
        } else {
            None
        };
        match &pca {
            Some(p) if p.output_dim() != dim => {
                return Err(Error::format(format!(
                    "PCA output dim {} does not match index dim {dim}",
                    p.output_dim()
                )))
            }
            None if aggregation.weights().is_some_and(|w| w.units() != dim) => {
                return Err(Error::format("LSTM units do not match index dim"))
            }
            _ => {}
        }
        let count = r.u64("item count")?;
        let mut items = BTreeMap::new();
        for _ in 0..count {
            let id = r.string("item id")?;
            if id.is_empty() {
                return Err(Error::format("empty item id"));
            }
            let kind = MediaKind::from_code(r.u8("item kind")?)?;
            let vector = FeatureVector::new(r.f32s(dim, "item vector")?)?;
            let item = StoredItem {
                vector,
                kind,
                label: None,
            };
            if items.insert(id.clone(), item).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        r.finish()?;
        Ok(Self {
            items,
            dim,
            aggregation,
            pca,
            normalized,
        })
    }
}

pub fn save_index(repo: &Repository, path: impl AsRef<Path>) -> Result<()> {
    write_file_atomic(path.as_ref(), &repo.to_bytes())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<Repository> {
    let path = path.as_ref();
    Repository::from_bytes(&read_file(path)?).map_err(|e| e.at_path(path))
}

fn common_frame_dim(records: &[MediaRecord]) -> Result<usize> {
    let first = records.first().ok_or(Error::EmptyRepository)?;
    let dim = first.frames.dim();
    if let Some(bad) = records.iter().find(|r| r.frames.dim() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: bad.frames.dim(),
        });
    }
    Ok(dim)
}

/// Builds a repository from `records`. The result does not depend on record
/// order.
pub fn build_index(
    records: &[MediaRecord],
    aggregation: AggregationStrategy,
    pca: Option<PcaModel>,
    normalize: bool,
) -> Result<Repository> {
    let frame_dim = common_frame_dim(records)?;
    let mut repo = Repository::new(frame_dim, aggregation, pca, normalize)?;
    for r in records {
        repo.add_item(r)?;
    }
    Ok(repo)
}

/// Fits PCA on the aggregated vectors of `records`, for use with
/// [`build_index`].
pub fn fit_index_pca(
    records: &[MediaRecord],
    aggregation: &AggregationStrategy,
    variance_threshold: f64,
) -> Result<PcaModel> {
    common_frame_dim(records)?;
    let aggregated = records
        .iter()
        .map(|r| aggregate(&r.frames, aggregation))
        .collect::<Result<Vec<_>>>()?;
    pca_fit(&aggregated, variance_threshold)
}
