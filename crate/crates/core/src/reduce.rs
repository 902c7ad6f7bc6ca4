//! PCA fitting and projection for compressing embeddings before comparison.
//!
//! The output dimension is the smallest `r` whose cumulative explained
//! variance ratio reaches the requested threshold. Covariance uses the
//! `m - 1` denominator. Each component's sign is fixed so that its
//! largest-magnitude coordinate (lowest index on ties) is positive.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::codec::{read_file, write_file_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::vectors::FeatureVector;

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.90;

pub const PCA_MAGIC: &[u8; 4] = b"MRPC";
pub const PCA_VERSION: u32 = 1;

/// Slack when comparing the cumulative ratio with the threshold, so that a
/// threshold of 1.0 stops at the data rank despite rounding.
const CUMULATIVE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `output_dim x input_dim`, row-major, rows orthonormal.
    components: Vec<f64>,
    explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn new(mean: Vec<f64>, components: Vec<f64>, explained_variance_ratio: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        let r = explained_variance_ratio.len();
        if d == 0 || r == 0 || r > d {
            return Err(Error::Configuration(format!(
                "PCA model needs 1 <= output dim ({r}) <= input dim ({d})"
            )));
        }
        if components.len() != r * d {
            return Err(Error::Configuration(format!(
                "PCA components have {} values, expected {}",
                components.len(),
                r * d
            )));
        }
        if mean.iter().chain(&components).any(|v| !v.is_finite()) {
            return Err(Error::Configuration("PCA model contains non-finite values".into()));
        }
        let ratios_ok = explained_variance_ratio
            .iter()
            .all(|v| (0.0..=1.0 + 1e-6).contains(v))
            && explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]);
        if !ratios_ok {
            return Err(Error::Configuration(
                "explained variance ratios must lie in [0, 1] and be non-increasing".into(),
            ));
        }
        Ok(Self {
            mean,
            components,
            explained_variance_ratio,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.explained_variance_ratio.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let d = self.input_dim();
        &self.components[i * d..(i + 1) * d]
    }

    pub fn components(&self) -> impl Iterator<Item = &[f64]> {
        self.components.chunks_exact(self.input_dim())
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    pub fn cumulative_ratio(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }

    pub fn to_f32_precision(&self) -> Self {
        let q = |v: &[f64]| v.iter().map(|&x| f64::from(x as f32)).collect::<Vec<_>>();
        Self {
            mean: q(&self.mean),
            components: q(&self.components),
            explained_variance_ratio: q(&self.explained_variance_ratio),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.into_inner()
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.bytes(PCA_MAGIC);
        w.u32(PCA_VERSION);
        w.u32(self.input_dim() as u32);
        w.u32(self.output_dim() as u32);
        w.f32s(&self.mean);
        w.f32s(&self.components);
        w.f32s(&self.explained_variance_ratio);
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let model = Self::decode(&mut r)?;
        r.finish()?;
        Ok(model)
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        r.magic(PCA_MAGIC)?;
        r.version(PCA_VERSION)?;
        let d = r.u32("PCA input dim")? as usize;
        let out = r.u32("PCA output dim")? as usize;
        let mean = r.f32s(d, "PCA mean")?;
        let components = r.f32s(out * d, "PCA components")?;
        let ratios = r.f32s(out, "PCA explained variance ratios")?;
        Self::new(mean, components, ratios).map_err(|e| Error::format(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&read_file(path)?).map_err(|e| e.at_path(path))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file_atomic(path.as_ref(), &self.to_bytes())
    }
}

/// Fits PCA on `data` (one vector per row), keeping the fewest components
/// whose cumulative explained variance ratio is at least `variance_threshold`.
pub fn pca_fit(data: &[FeatureVector], variance_threshold: f64) -> Result<PcaModel> {
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(Error::Argument(format!(
            "variance threshold must lie in (0, 1], got {variance_threshold}"
        )));
    }
    let m = data.len();
    if m < 2 {
        return Err(Error::InsufficientData { needed: 2, got: m });
    }
    let d = data[0].dim();
    if let Some(bad) = data.iter().find(|v| v.dim() != d) {
        return Err(Error::Dimension {
            expected: d,
            actual: bad.dim(),
        });
    }

    let mut mean = vec![0.0; d];
    for v in data {
        for (acc, x) in mean.iter_mut().zip(v.iter()) {
            *acc += x;
        }
    }
    for acc in &mut mean {
        *acc /= m as f64;
    }

    let centered = DMatrix::from_fn(m, d, |i, j| data[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (m as f64 - 1.0);

    let scale = 1.0 + mean.iter().map(|x| x * x).sum::<f64>();
    if cov.trace() <= 1e-24 * scale {
        return Err(Error::DegenerateData);
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();

    let mut ratios = Vec::new();
    let mut cumulative = 0.0;
    for &v in &values {
        let ratio = v / total;
        ratios.push(ratio);
        cumulative += ratio;
        if cumulative + CUMULATIVE_SLACK >= variance_threshold {
            break;
        }
    }

    let mut components = Vec::with_capacity(ratios.len() * d);
    for &col in order.iter().take(ratios.len()) {
        let mut row: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        fix_sign(&mut row);
        components.extend(row);
    }
    PcaModel::new(mean, components, ratios)
}

fn fix_sign(row: &mut [f64]) {
    let mut pivot = 0;
    for (i, v) in row.iter().enumerate() {
        if v.abs() > row[pivot].abs() {
            pivot = i;
        }
    }
    if row[pivot] < 0.0 {
        row.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Projects `v` onto the model's components: `components · (v - mean)`.
pub fn pca_transform(model: &PcaModel, v: &FeatureVector) -> Result<FeatureVector> {
    if v.dim() != model.input_dim() {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            actual: v.dim(),
        });
    }
    let centered: Vec<f64> = v.iter().zip(&model.mean).map(|(x, mu)| x - mu).collect();
    let out = model
        .components()
        .map(|row| row.iter().zip(&centered).map(|(a, b)| a * b).sum())
        .collect();
    FeatureVector::new(out)
}
