use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::EvalError;
use crate::datagen::ManifestRecord;

pub const HISTOGRAM_BIN_DEG: f64 = 15.0;
const HISTOGRAM_LO: f64 = -180.0;
const HISTOGRAM_BINS: usize = 24;
/// Yaw band used for the "outside frontal" summary.
const FRONTAL_YAW_DEG: f64 = 35.0;

/// Angle histogram with 15 degree bins over `[-180, 180]`; 180 itself lands in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_angles(angles: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        for a in angles {
            let k = ((a - HISTOGRAM_LO) / HISTOGRAM_BIN_DEG).floor();
            let k = (k.max(0.0) as usize).min(HISTOGRAM_BINS - 1);
            counts[k] += 1;
        }
        Self {
            lo: HISTOGRAM_LO,
            bin_width: HISTOGRAM_BIN_DEG,
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn bin_edges(&self) -> Vec<[f64; 2]> {
        (0..self.counts.len())
            .map(|k| {
                let lo = self.lo + k as f64 * self.bin_width;
                [lo, lo + self.bin_width]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub images: usize,
    pub identity_count: usize,
    /// Samples-per-identity value mapped to how many identities have it.
    pub samples_per_identity: BTreeMap<u64, u64>,
    pub yaw: Histogram,
    pub pitch: Histogram,
    pub roll: Histogram,
    pub yaw_abs_max: f64,
    /// Fraction of images with `|yaw| > 35`.
    pub yaw_outside_frontal: f64,
    pub illumination_mean: Vec<f64>,
    pub illumination_sd: Vec<f64>,
    pub background_usage: BTreeMap<String, u64>,
}

pub fn bias_report(records: &[ManifestRecord]) -> Result<BiasReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let n = records.len() as f64;
    let mut per_identity: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    let mut background_usage = BTreeMap::new();
    for r in records {
        per_identity
            .entry(r.identity_id)
            .or_default()
            .insert(r.sample_idx);
        *background_usage.entry(r.background_id.clone()).or_insert(0) += 1;
    }
    let mut samples_per_identity = BTreeMap::new();
    for s in per_identity.values() {
        *samples_per_identity.entry(s.len() as u64).or_insert(0) += 1;
    }

    let dims = records.iter().map(|r| r.illumination.len()).max().unwrap_or(0);
    let mut mean = vec![0.0; dims];
    for r in records {
        for (m, v) in mean.iter_mut().zip(&r.illumination) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dims];
    for r in records {
        for ((s, v), m) in var.iter_mut().zip(&r.illumination).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    let denom = (n - 1.0).max(1.0);
    let sd = var.into_iter().map(|s| (s / denom).sqrt()).collect();

    let yaw_abs_max = records.iter().map(|r| r.pose.yaw.abs()).fold(0.0, f64::max);
    let outside = records
        .iter()
        .filter(|r| r.pose.yaw.abs() > FRONTAL_YAW_DEG)
        .count();

    Ok(BiasReport {
        images: records.len(),
        identity_count: per_identity.len(),
        samples_per_identity,
        yaw: Histogram::from_angles(records.iter().map(|r| r.pose.yaw)),
        pitch: Histogram::from_angles(records.iter().map(|r| r.pose.pitch)),
        roll: Histogram::from_angles(records.iter().map(|r| r.pose.roll)),
        yaw_abs_max,
        yaw_outside_frontal: outside as f64 / n,
        illumination_mean: mean,
        illumination_sd: sd,
        background_usage,
    })
}

/// Per-bin `|freq_a - freq_b|` for each pose angle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasComparison {
    pub bin_edges: Vec<[f64; 2]>,
    pub yaw: Vec<f64>,
    pub pitch: Vec<f64>,
    pub roll: Vec<f64>,
    pub identity_count: [usize; 2],
    pub yaw_outside_frontal: [f64; 2],
}

pub fn compare_reports(a: &BiasReport, b: &BiasReport) -> BiasComparison {
    let diff = |x: &Histogram, y: &Histogram| {
        x.frequencies()
            .iter()
            .zip(y.frequencies())
            .map(|(p, q)| (p - q).abs())
            .collect()
    };
    BiasComparison {
        bin_edges: a.yaw.bin_edges(),
        yaw: diff(&a.yaw, &b.yaw),
        pitch: diff(&a.pitch, &b.pitch),
        roll: diff(&a.roll, &b.roll),
        identity_count: [a.identity_count, b.identity_count],
        yaw_outside_frontal: [a.yaw_outside_frontal, b.yaw_outside_frontal],
    }
}
