//! Seeded Gaussian-cluster corpus generator.
//!
//! The generator is fully specified so other implementations can reproduce a
//! corpus bit for bit:
//!
//! * PRNG: SplitMix64 (`state += 0x9E3779B97F4A7C15`, then the standard
//!   `30/27/31` xor-shift-multiply finaliser).
//! * Uniform `[0, 1)`: top 53 bits of the next output times `2^-53`.
//! * Normal: Box–Muller, `sqrt(-2 ln(1 - u1)) * cos(2π u2)`; the sine half is
//!   discarded.
//! * Streams: the generator for `(tag, index)` is seeded with
//!   `mix(seed ^ mix(tag * 0x9E3779B97F4A7C15 ^ index))`, where `mix` is the
//!   SplitMix64 finaliser. Tag 0 draws cluster centres (uniform in `[-1, 1]`
//!   per coordinate), tag 1 draws an item's frames (`centre + σ·N(0, 1)`,
//!   frame-major) with `index = cluster * per_cluster + item`.
//!
//! Ids are `c{cluster:03}-{item:04}`, labels `class{cluster:03}`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::store::MediaRecord;
use crate::temporal::FrameFeatureSequence;
use crate::vectors::FeatureVector;

pub const DEFAULT_SIGMA: f64 = 0.1;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream for `(tag, index)` under `seed`.
    pub fn stream(seed: u64, tag: u64, index: u64) -> Self {
        Self::new(mix(seed ^ mix(tag.wrapping_mul(GOLDEN) ^ index)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub clusters: usize,
    pub per_cluster: usize,
    pub dim: usize,
    pub frames: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            clusters: 10,
            per_cluster: 100,
            dim: 64,
            frames: 16,
            sigma: DEFAULT_SIGMA,
            seed: 0,
        }
    }
}

pub fn item_id(cluster: usize, item: usize) -> String {
    format!("c{cluster:03}-{item:04}")
}

pub fn class_label(cluster: usize) -> String {
    format!("class{cluster:03}")
}

/// Generates the corpus. Records carry their labels; single-frame items are
/// images, the rest videos.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<MediaRecord>> {
    if cfg.clusters == 0 || cfg.per_cluster == 0 || cfg.dim == 0 || cfg.frames == 0 {
        return Err(Error::Argument(
            "clusters, per-cluster, dim and frames must all be positive".into(),
        ));
    }
    if !(cfg.sigma >= 0.0 && cfg.sigma.is_finite()) {
        return Err(Error::Argument(format!("sigma must be non-negative, got {}", cfg.sigma)));
    }
    let mut records = Vec::with_capacity(cfg.clusters * cfg.per_cluster);
    for c in 0..cfg.clusters {
        let mut rng = SplitMix64::stream(cfg.seed, 0, c as u64);
        let centre: Vec<f64> = (0..cfg.dim).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
        for i in 0..cfg.per_cluster {
            let mut rng = SplitMix64::stream(cfg.seed, 1, (c * cfg.per_cluster + i) as u64);
            let frames = (0..cfg.frames)
                .map(|_| {
                    FeatureVector::new(
                        centre
                            .iter()
                            .map(|mu| mu + cfg.sigma * rng.next_normal())
                            .collect(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let seq = FrameFeatureSequence::new(frames)?;
            let id = item_id(c, i);
            let record = if cfg.frames == 1 {
                MediaRecord::image(id, seq.frames()[0].clone())
            } else {
                MediaRecord::video(id, seq)
            };
            records.push(record.with_label(class_label(c)));
        }
    }
    Ok(records)
}

pub fn labels_of(records: &[MediaRecord]) -> BTreeMap<String, String> {
    records
        .iter()
        .filter_map(|r| r.label.clone().map(|l| (r.item_id.clone(), l)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // Reference outputs of SplitMix64 seeded with 0.
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn uniform_and_normal_ranges() {
        let mut rng = SplitMix64::new(42);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.next_f64()).collect();
        assert!(xs.iter().all(|x| (0.0..1.0).contains(x)));
        let zs: Vec<f64> = (0..20_000).map(|_| rng.next_normal()).collect();
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / zs.len() as f64;
        assert!(mean.abs() < 0.03, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn deterministic_and_shaped() {
        let cfg = SynthConfig {
            clusters: 3,
            per_cluster: 4,
            dim: 5,
            frames: 2,
            sigma: 0.1,
            seed: 9,
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_eq!(a.len(), 12);
        assert_eq!(a[0].item_id, "c000-0000");
        assert_eq!(a[11].label.as_deref(), Some("class002"));
        assert!(a.iter().all(|r| r.frames.len() == 2 && r.frames.dim() == 5));
        let other = generate(&SynthConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a, other);
    }
}
