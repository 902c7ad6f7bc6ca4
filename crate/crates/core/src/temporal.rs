//! Turning a video's frame features into a single vector: chunk segmentation,
//! uniform frame sampling and aggregation.
//!
//! The recurrent aggregator is a single-layer LSTM without peepholes. Gate
//! order is fixed as input, forget, cell candidate, output:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g) o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
//! ```
//!
//! starting from `h = c = 0`; the hidden state after the last frame is the
//! video representation.

use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use crate::codec::{read_file, write_file_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::vectors::FeatureVector;

/// Frames per clip fed to the aggregator.
pub const DEFAULT_FRAMES: usize = 16;

/// Trailing chunks shorter than this fraction of a full chunk are merged into
/// the previous one.
pub const CHUNK_MERGE_FRACTION: f64 = 0.25;

pub const LSTM_MAGIC: &[u8; 4] = b"MRLW";
pub const LSTM_VERSION: u32 = 1;

/// Indices `floor(j * total / target)` for `j in 0..target`.
///
/// When `total < target` frames repeat rather than being padded.
pub fn sample_frame_indices(total_frames: usize, target: usize) -> Vec<usize> {
    let total = total_frames as u128;
    let n = target as u128;
    (0..n).map(|j| (j * total / n) as usize).collect()
}

/// Splits `[0, total_frames)` into consecutive chunks of `round(fps * seconds)`
/// frames. A short tail is merged into its predecessor.
pub fn segment_chunks(total_frames: usize, fps: f64, chunk_seconds: f64) -> Result<Vec<Range<usize>>> {
    if !(fps > 0.0 && fps.is_finite()) || !(chunk_seconds > 0.0 && chunk_seconds.is_finite()) {
        return Err(Error::Argument(format!(
            "fps and chunk length must be positive (fps={fps}, seconds={chunk_seconds})"
        )));
    }
    if total_frames == 0 {
        return Ok(Vec::new());
    }
    let chunk = ((fps * chunk_seconds).round() as usize).max(1);
    let mut chunks: Vec<Range<usize>> = (0..total_frames)
        .step_by(chunk)
        .map(|start| start..(start + chunk).min(total_frames))
        .collect();
    if chunks.len() > 1 {
        let tail = chunks.last().map(|r| r.len()).unwrap_or(0);
        if (tail as f64) < CHUNK_MERGE_FRACTION * chunk as f64 {
            let last = chunks.pop().expect("len > 1");
            chunks.last_mut().expect("len > 1").end = last.end;
        }
    }
    Ok(chunks)
}

/// Ordered per-frame embeddings of one clip (a single frame for images).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatureSequence {
    frames: Vec<FeatureVector>,
}

impl FrameFeatureSequence {
    pub fn new(frames: Vec<FeatureVector>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidVector("frame sequence must not be empty".into()))?;
        let dim = first.dim();
        if let Some(bad) = frames.iter().find(|f| f.dim() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                actual: bad.dim(),
            });
        }
        Ok(Self { frames })
    }

    pub fn single(frame: FeatureVector) -> Self {
        Self {
            frames: vec![frame],
        }
    }

    pub fn frames(&self) -> &[FeatureVector] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.frames[0].dim()
    }

    /// Uniformly resamples to exactly `target` frames.
    pub fn sampled(&self, target: usize) -> Result<Self> {
        if target == 0 {
            return Err(Error::Argument("target frame count must be at least 1".into()));
        }
        let frames = sample_frame_indices(self.frames.len(), target)
            .into_iter()
            .map(|i| self.frames[i].clone())
            .collect();
        Ok(Self { frames })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Cell, Gate::Output];
}

/// Parameters of a single-layer LSTM. Matrices are row-major `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    input_dim: usize,
    units: usize,
    /// Per gate, `units x input_dim`.
    input: [Vec<f64>; 4],
    /// Per gate, `units x units`.
    recurrent: [Vec<f64>; 4],
    /// Per gate, `units`.
    bias: [Vec<f64>; 4],
}

impl LstmWeights {
    pub fn new(
        input_dim: usize,
        units: usize,
        input: [Vec<f64>; 4],
        recurrent: [Vec<f64>; 4],
        bias: [Vec<f64>; 4],
    ) -> Result<Self> {
        if input_dim == 0 || units == 0 {
            return Err(Error::Configuration(
                "LSTM input_dim and units must be positive".into(),
            ));
        }
        let check = |arrs: &[Vec<f64>; 4], len: usize, name: &str| -> Result<()> {
            for (gate, a) in Gate::ALL.iter().zip(arrs) {
                if a.len() != len {
                    return Err(Error::Configuration(format!(
                        "{name} weights for {gate:?} gate have {} values, expected {len}",
                        a.len()
                    )));
                }
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Configuration(format!(
                        "{name} weights for {gate:?} gate contain non-finite values"
                    )));
                }
            }
            Ok(())
        };
        check(&input, units * input_dim, "input")?;
        check(&recurrent, units * units, "recurrent")?;
        check(&bias, units, "bias")?;
        Ok(Self {
            input_dim,
            units,
            input,
            recurrent,
            bias,
        })
    }

    pub fn zeros(input_dim: usize, units: usize) -> Result<Self> {
        let z = |n: usize| std::array::from_fn(|_| vec![0.0; n]);
        Self::new(input_dim, units, z(units * input_dim), z(units * units), z(units))
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn input_weights(&self, gate: Gate) -> &[f64] {
        &self.input[gate as usize]
    }

    pub fn recurrent_weights(&self, gate: Gate) -> &[f64] {
        &self.recurrent[gate as usize]
    }

    pub fn bias(&self, gate: Gate) -> &[f64] {
        &self.bias[gate as usize]
    }

    pub fn to_f32_precision(&self) -> Self {
        let q = |a: &[Vec<f64>; 4]| -> [Vec<f64>; 4] {
            std::array::from_fn(|g| a[g].iter().map(|&v| f64::from(v as f32)).collect())
        };
        Self {
            input_dim: self.input_dim,
            units: self.units,
            input: q(&self.input),
            recurrent: q(&self.recurrent),
            bias: q(&self.bias),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.into_inner()
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.bytes(LSTM_MAGIC);
        w.u32(LSTM_VERSION);
        w.u32(self.input_dim as u32);
        w.u32(self.units as u32);
        for a in self.input.iter().chain(&self.recurrent).chain(&self.bias) {
            w.f32s(a);
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let weights = Self::decode(&mut r)?;
        r.finish()?;
        Ok(weights)
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        r.magic(LSTM_MAGIC)?;
        r.version(LSTM_VERSION)?;
        let d = r.u32("LSTM input dim")? as usize;
        let h = r.u32("LSTM units")? as usize;
        if d == 0 || h == 0 {
            return Err(Error::format("LSTM dimensions must be positive"));
        }
        let mut read4 = |n: usize, what: &str| -> Result<[Vec<f64>; 4]> {
            let mut out: [Vec<f64>; 4] = Default::default();
            for slot in &mut out {
                *slot = r.f32s(n, what)?;
            }
            Ok(out)
        };
        let input = read4(h * d, "LSTM input weights")?;
        let recurrent = read4(h * h, "LSTM recurrent weights")?;
        let bias = read4(h, "LSTM biases")?;
        Self::new(d, h, input, recurrent, bias).map_err(|e| Error::format(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&read_file(path)?).map_err(|e| e.at_path(path))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file_atomic(path.as_ref(), &self.to_bytes())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += m · v` for row-major `m` with `out.len()` rows.
fn add_matvec(out: &mut [f64], m: &[f64], v: &[f64]) {
    let cols = v.len();
    for (row, o) in m.chunks_exact(cols).zip(out.iter_mut()) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Runs the LSTM over `seq` and returns the final hidden state.
pub fn lstm_forward(seq: &FrameFeatureSequence, weights: &LstmWeights) -> Result<FeatureVector> {
    if seq.dim() != weights.input_dim {
        return Err(Error::Dimension {
            expected: weights.input_dim,
            actual: seq.dim(),
        });
    }
    let h_units = weights.units;
    let mut h = vec![0.0; h_units];
    let mut c = vec![0.0; h_units];
    let mut pre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h_units]);

    for x in seq.frames() {
        for gate in Gate::ALL {
            let g = gate as usize;
            pre[g].copy_from_slice(&weights.bias[g]);
            add_matvec(&mut pre[g], &weights.input[g], x);
            add_matvec(&mut pre[g], &weights.recurrent[g], &h);
        }
        for j in 0..h_units {
            let i = sigmoid(pre[0][j]);
            let f = sigmoid(pre[1][j]);
            let g = pre[2][j].tanh();
            let o = sigmoid(pre[3][j]);
            c[j] = f * c[j] + i * g;
            h[j] = o * c[j].tanh();
        }
    }
    FeatureVector::new(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggregationKind {
    MeanPool,
    MaxPool,
    LastFrame,
    LstmFinalHidden,
}

impl AggregationKind {
    pub fn code(self) -> u8 {
        match self {
            AggregationKind::MeanPool => 0,
            AggregationKind::MaxPool => 1,
            AggregationKind::LastFrame => 2,
            AggregationKind::LstmFinalHidden => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => AggregationKind::MeanPool,
            1 => AggregationKind::MaxPool,
            2 => AggregationKind::LastFrame,
            3 => AggregationKind::LstmFinalHidden,
            other => return Err(Error::format(format!("unknown aggregation kind {other}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AggregationKind::MeanPool => "mean",
            AggregationKind::MaxPool => "max",
            AggregationKind::LastFrame => "last",
            AggregationKind::LstmFinalHidden => "lstm",
        }
    }
}

impl std::str::FromStr for AggregationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(AggregationKind::MeanPool),
            "max" => Ok(AggregationKind::MaxPool),
            "last" => Ok(AggregationKind::LastFrame),
            "lstm" => Ok(AggregationKind::LstmFinalHidden),
            other => Err(Error::Argument(format!(
                "unknown aggregation {other:?} (expected mean, max, last or lstm)"
            ))),
        }
    }
}

/// How a frame sequence collapses to one vector. LSTM weights are present
/// exactly when the kind is [`AggregationKind::LstmFinalHidden`].
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationStrategy {
    kind: AggregationKind,
    weights: Option<Arc<LstmWeights>>,
}

impl AggregationStrategy {
    pub fn new(kind: AggregationKind, weights: Option<LstmWeights>) -> Result<Self> {
        match (kind, weights) {
            (AggregationKind::LstmFinalHidden, None) => Err(Error::Configuration(
                "LSTM aggregation requires LSTM weights".into(),
            )),
            (AggregationKind::LstmFinalHidden, Some(w)) => Ok(Self {
                kind,
                weights: Some(Arc::new(w)),
            }),
            (k, Some(_)) => Err(Error::Configuration(format!(
                "LSTM weights given for {} aggregation",
                k.name()
            ))),
            (k, None) => Ok(Self {
                kind: k,
                weights: None,
            }),
        }
    }

    pub fn mean_pool() -> Self {
        Self {
            kind: AggregationKind::MeanPool,
            weights: None,
        }
    }

    pub fn lstm(weights: LstmWeights) -> Self {
        Self {
            kind: AggregationKind::LstmFinalHidden,
            weights: Some(Arc::new(weights)),
        }
    }

    pub fn kind(&self) -> AggregationKind {
        self.kind
    }

    pub fn weights(&self) -> Option<&LstmWeights> {
        self.weights.as_deref()
    }

    /// Dimension of the aggregated vector for frames of `input_dim`.
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match &self.weights {
            Some(w) => w.units,
            None => input_dim,
        }
    }

    pub(crate) fn to_f32_precision(&self) -> Self {
        Self {
            kind: self.kind,
            weights: self.weights.as_ref().map(|w| Arc::new(w.to_f32_precision())),
        }
    }
}

impl Default for AggregationStrategy {
    fn default() -> Self {
        Self::mean_pool()
    }
}

pub fn aggregate(seq: &FrameFeatureSequence, strategy: &AggregationStrategy) -> Result<FeatureVector> {
    let frames = seq.frames();
    let dim = seq.dim();
    match strategy.kind {
        AggregationKind::MeanPool => {
            let mut acc = vec![0.0; dim];
            for f in frames {
                for (a, v) in acc.iter_mut().zip(f.iter()) {
                    *a += v;
                }
            }
            let n = frames.len() as f64;
            FeatureVector::new(acc.into_iter().map(|a| a / n).collect())
        }
        AggregationKind::MaxPool => {
            let mut acc = frames[0].to_vec();
            for f in &frames[1..] {
                for (a, &v) in acc.iter_mut().zip(f.iter()) {
                    *a = a.max(v);
                }
            }
            FeatureVector::new(acc)
        }
        AggregationKind::LastFrame => Ok(frames[frames.len() - 1].clone()),
        AggregationKind::LstmFinalHidden => {
            let weights = strategy.weights.as_deref().ok_or_else(|| {
                Error::Configuration("LSTM aggregation requires LSTM weights".into())
            })?;
            lstm_forward(seq, weights)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(frames: &[&[f64]]) -> FrameFeatureSequence {
        FrameFeatureSequence::new(
            frames
                .iter()
                .map(|f| FeatureVector::new(f.to_vec()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sampling_examples() {
        assert_eq!(sample_frame_indices(32, 16), (0..32).step_by(2).collect::<Vec<_>>());
        assert_eq!(sample_frame_indices(16, 16), (0..16).collect::<Vec<_>>());
        assert_eq!(
            sample_frame_indices(10, 16),
            [0, 0, 1, 1, 2, 3, 3, 4, 5, 5, 6, 6, 7, 8, 8, 9]
        );
        assert_eq!(sample_frame_indices(1, 3), [0, 0, 0]);
    }

    #[test]
    fn chunk_examples() {
        assert_eq!(segment_chunks(300, 30.0, 10.0).unwrap(), vec![0..300]);
        assert_eq!(segment_chunks(600, 30.0, 10.0).unwrap(), [0..300, 300..600]);
        assert_eq!(segment_chunks(640, 30.0, 10.0).unwrap(), [0..300, 300..640]);
        // 75 frames is exactly a quarter and is kept.
        assert_eq!(
            segment_chunks(675, 30.0, 10.0).unwrap(),
            [0..300, 300..600, 600..675]
        );
        // A short clip is one chunk regardless of length.
        assert_eq!(segment_chunks(10, 30.0, 10.0).unwrap(), vec![0..10]);
        assert!(segment_chunks(10, 0.0, 10.0).is_err());
    }

    #[test]
    fn pooling_examples() {
        let s = seq(&[&[1.0, 1.0], &[3.0, 3.0]]);
        let mean = aggregate(&s, &AggregationStrategy::mean_pool()).unwrap();
        assert_eq!(mean.as_slice(), &[2.0, 2.0]);

        let s = seq(&[&[1.0, 5.0], &[4.0, 2.0]]);
        let max = AggregationStrategy::new(AggregationKind::MaxPool, None).unwrap();
        assert_eq!(aggregate(&s, &max).unwrap().as_slice(), &[4.0, 5.0]);
        let last = AggregationStrategy::new(AggregationKind::LastFrame, None).unwrap();
        assert_eq!(aggregate(&s, &last).unwrap().as_slice(), &[4.0, 2.0]);
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let w = LstmWeights::zeros(3, 5).unwrap();
        let s = seq(&[&[1.0, -2.0, 3.0], &[0.5, 0.5, 0.5]]);
        let h = lstm_forward(&s, &w).unwrap();
        assert_eq!(h.as_slice(), &[0.0; 5]);
    }

    #[test]
    fn lstm_requires_weights() {
        assert!(matches!(
            AggregationStrategy::new(AggregationKind::LstmFinalHidden, None),
            Err(Error::Configuration(_))
        ));
        assert!(AggregationStrategy::new(
            AggregationKind::MeanPool,
            Some(LstmWeights::zeros(1, 1).unwrap())
        )
        .is_err());
    }

    #[test]
    fn lstm_dimension_mismatch() {
        let w = LstmWeights::zeros(4, 2).unwrap();
        let s = seq(&[&[1.0, 2.0]]);
        assert!(matches!(lstm_forward(&s, &w), Err(Error::Dimension { .. })));
    }

    #[test]
    fn weights_shape_validation() {
        let z = |n: usize| -> [Vec<f64>; 4] { std::array::from_fn(|_| vec![0.0; n]) };
        assert!(LstmWeights::new(2, 3, z(5), z(9), z(3)).is_err());
        assert!(LstmWeights::new(2, 3, z(6), z(9), z(3)).is_ok());
    }

    #[test]
    fn mrlw_bytes_layout() {
        let w = LstmWeights::zeros(2, 1).unwrap();
        let bytes = w.to_bytes();
        assert_eq!(&bytes[..4], b"MRLW");
        // header + 4*(1*2) + 4*(1*1) + 4*1 floats
        assert_eq!(bytes.len(), 16 + 4 * (8 + 4 + 4));
        assert_eq!(LstmWeights::from_bytes(&bytes).unwrap(), w);
        assert!(LstmWeights::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn sequence_validation() {
        assert!(FrameFeatureSequence::new(vec![]).is_err());
        let a = FeatureVector::new(vec![1.0]).unwrap();
        let b = FeatureVector::new(vec![1.0, 2.0]).unwrap();
        assert!(FrameFeatureSequence::new(vec![a, b]).is_err());
    }
}
