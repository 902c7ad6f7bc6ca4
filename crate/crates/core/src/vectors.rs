//! Feature vectors and the two comparison metrics used by every ranker.
//!
//! Coordinates are held as `f64` regardless of the 32-bit storage format so
//! threshold comparisons downstream have precision headroom.

use std::ops::Deref;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Fixed-dimension embedding with finite coordinates.
///
/// Cloning is cheap: the coordinates are shared and never mutated.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Arc<[f64]>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidVector("dimension must be at least 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVector(format!(
                "coordinate {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self {
            values: values.into(),
        })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values.to_vec()
    }

    /// Coordinates rounded to the nearest `f32`, widened back to `f64`.
    pub fn to_f32_precision(&self) -> Self {
        Self {
            values: self.values.iter().map(|&v| f64::from(v as f32)).collect(),
        }
    }

    /// Scales to unit L2 norm. A zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let norm = l2_norm(self);
        if norm == 0.0 {
            return self.clone();
        }
        Self {
            values: self.values.iter().map(|v| v / norm).collect(),
        }
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

fn check_dims(p: &FeatureVector, q: &FeatureVector) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension {
            expected: p.dim(),
            actual: q.dim(),
        });
    }
    Ok(())
}

pub(crate) fn squared_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| {
            let d = b - a;
            d * d
        })
        .sum()
}

pub(crate) fn dot(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * b).sum()
}

pub fn l2_norm(v: &FeatureVector) -> f64 {
    dot(v, v).sqrt()
}

pub fn euclidean_distance(p: &FeatureVector, q: &FeatureVector) -> Result<f64> {
    check_dims(p, q)?;
    Ok(squared_distance(p, q).sqrt())
}

/// Cosine of the angle between `query` and `item`, clamped to `[-1, 1]`.
///
/// A zero-norm `query` is an error; a zero-norm `item` yields `0.0` so one
/// degenerate stored vector cannot abort a search.
pub fn cosine_similarity(query: &FeatureVector, item: &FeatureVector) -> Result<f64> {
    check_dims(query, item)?;
    let qn = l2_norm(query);
    if qn == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(cosine_with_query_norm(query, qn, item))
}

pub(crate) fn cosine_with_query_norm(query: &[f64], query_norm: f64, item: &[f64]) -> f64 {
    let inorm = dot(item, item).sqrt();
    if inorm == 0.0 || query_norm == 0.0 {
        return 0.0;
    }
    (dot(query, item) / (query_norm * inorm)).clamp(-1.0, 1.0)
}
