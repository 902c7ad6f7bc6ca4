//! Independent reference implementations used by the integration suites.
//!
//! Everything here is written from the formulas with plain index loops and
//! shares no code path with the library beyond its public types.

#![allow(dead_code, clippy::needless_range_loop, clippy::manual_clamp)]

use mediarank::{FeatureVector, LstmWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_values(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> FeatureVector {
    FeatureVector::new(random_values(rng, dim, 1.0)).unwrap()
}

pub fn fv(values: &[f64]) -> FeatureVector {
    FeatureVector::new(values.to_vec()).unwrap()
}

pub fn euclidean_oracle(p: &[f64], q: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..p.len() {
        sum += (q[i] - p[i]) * (q[i] - p[i]);
    }
    sum.sqrt()
}

pub fn norm_oracle(v: &[f64]) -> f64 {
    let mut sum = 0.0;
    for x in v {
        sum += x * x;
    }
    sum.sqrt()
}

pub fn cosine_oracle(p: &[f64], q: &[f64]) -> f64 {
    let mut dot = 0.0;
    for i in 0..p.len() {
        dot += p[i] * q[i];
    }
    let denom = norm_oracle(p) * norm_oracle(q);
    if denom == 0.0 {
        return 0.0;
    }
    let c = dot / denom;
    c.max(-1.0).min(1.0)
}

/// Full sort of `(distance, id)`; returns the first `k` ids.
pub fn euclidean_topk_oracle(query: &[f64], repo: &[(String, FeatureVector)], k: usize) -> Vec<String> {
    let mut all: Vec<(f64, &str)> = repo
        .iter()
        .map(|(id, v)| (euclidean_oracle(query, v), id.as_str()))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)));
    all.into_iter().take(k).map(|(_, id)| id.to_string()).collect()
}

pub fn cosine_topk_oracle(query: &[f64], repo: &[(String, FeatureVector)], k: usize) -> Vec<String> {
    let mut all: Vec<(f64, &str)> = repo
        .iter()
        .map(|(id, v)| {
            let c = if norm_oracle(v) == 0.0 { 0.0 } else { cosine_oracle(query, v) };
            (c, id.as_str())
        })
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    all.into_iter().take(k).map(|(_, id)| id.to_string()).collect()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and eigenvectors (as columns, `vecs[row][col]`).
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for i in 0..n {
        v[i][i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[i][j] * a[i][j];
                }
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

pub struct PcaOracle {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub ratios: Vec<f64>,
}

pub fn pca_oracle(data: &[Vec<f64>], threshold: f64) -> PcaOracle {
    let m = data.len();
    let d = data[0].len();
    let mut mean = vec![0.0; d];
    for row in data {
        for j in 0..d {
            mean[j] += row[j] / m as f64;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for row in data {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]) / (m as f64 - 1.0);
            }
        }
    }
    let (vals, vecs) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let mut components = Vec::new();
    let mut ratios = Vec::new();
    let mut cum = 0.0;
    for &c in &order {
        let mut col: Vec<f64> = (0..d).map(|r| vecs[r][c]).collect();
        let mut pivot = 0;
        for i in 0..d {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            for x in col.iter_mut() {
                *x = -*x;
            }
        }
        let ratio = vals[c].max(0.0) / total;
        components.push(col);
        ratios.push(ratio);
        cum += ratio;
        if cum + 1e-9 >= threshold {
            break;
        }
    }
    PcaOracle { mean, components, ratios }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// LSTM recurrence written per unit with explicit indexing.
pub fn lstm_oracle(frames: &[Vec<f64>], w: &LstmWeights) -> Vec<f64> {
    use mediarank::temporal::Gate;
    let d = w.input_dim();
    let h_units = w.units();
    let mut h = vec![0.0; h_units];
    let mut c = vec![0.0; h_units];
    for x in frames {
        let mut next_h = vec![0.0; h_units];
        for j in 0..h_units {
            let mut z = [0.0f64; 4];
            for (g, gate) in Gate::ALL.iter().enumerate() {
                let wi = w.input_weights(*gate);
                let ui = w.recurrent_weights(*gate);
                let mut acc = w.bias(*gate)[j];
                for k in 0..d {
                    acc += wi[j * d + k] * x[k];
                }
                for k in 0..h_units {
                    acc += ui[j * h_units + k] * h[k];
                }
                z[g] = acc;
            }
            let i = sig(z[0]);
            let f = sig(z[1]);
            let g = z[2].tanh();
            let o = sig(z[3]);
            c[j] = f * c[j] + i * g;
            next_h[j] = o * c[j].tanh();
        }
        h = next_h;
    }
    h
}

pub fn random_lstm(rng: &mut ChaCha8Rng, d: usize, h: usize, scale: f64) -> LstmWeights {
    let mut arr = |n: usize| -> [Vec<f64>; 4] { std::array::from_fn(|_| random_values(rng, n, scale)) };
    let input = arr(h * d);
    let recurrent = arr(h * h);
    let bias = arr(h);
    LstmWeights::new(d, h, input, recurrent, bias).unwrap()
}

/// Accuracy, precision, recall and F1 computed from counts. F1 uses the
/// `2tp / (2tp + fp + fn)` form, algebraically equal to the harmonic mean.
pub fn metrics_oracle(tp: u64, fp: u64, fn_: u64, tn: u64) -> [f64; 4] {
    let total = (tp + fp + fn_ + tn) as f64;
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
    [(tp + tn) as f64 / total, p, r, f1]
}
