//! Verification and landmark metrics.
//!
//! Acceptance is always `score >= threshold`. ROC curves carry one point per
//! distinct score, TAR at a requested FAR is linearly interpolated between the
//! bracketing achievable points, and k-fold accuracy picks each fold's
//! threshold on the remaining folds (lowest threshold wins ties).

mod bias;
mod io;
mod landmarks;

pub use bias::{bias_report, compare_reports, BiasComparison, BiasReport, Histogram, HISTOGRAM_BIN_DEG};
pub use io::{
    join_predictions, parse_embeddings, parse_pairs, parse_predictions, read_embeddings, read_pairs,
    read_predictions, score_pairs, EmbeddingRecord, PairRecord, PredictionRecord, ScoreMode,
};
pub use landmarks::{
    detection_accuracy, landmark_error, landmark_report, LandmarkPrediction, LandmarkReport,
};

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use serde::Serialize;
use thiserror::Error;

use crate::Rng;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("zero-norm embedding")]
    ZeroVector,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty embedding set")]
    EmptySet,
    #[error("roc needs both positive and negative pairs")]
    OneClassOnly,
    #[error("bad fold shape: {0}")]
    BadFoldShape(String),
    #[error("face box has zero diagonal")]
    ZeroDiagonal,
    #[error("empty input")]
    EmptyInput,
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("unknown reference {0:?}")]
    UnknownId(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Feature vector of one image.
pub type Embedding = Vec<f64>;

/// `a . b / (|a| |b|)`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::DimensionMismatch(a.len(), b.len()));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(na > 0.0 && nb > 0.0) {
        return Err(EvalError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub const DEFAULT_BETA: f64 = 1.0;

/// Softmax-weighted average of all cross-template cosine similarities.
pub fn template_similarity<A, B>(a: &[A], b: &[B], beta: f64) -> Result<f64, EvalError>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
{
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptySet);
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(EvalError::BadParameter(format!("beta must be >= 0, got {beta}")));
    }
    let mut scores = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            scores.push(cosine_similarity(x.as_ref(), y.as_ref())?);
        }
    }
    if scores.len() == 1 {
        return Ok(scores[0]);
    }
    let peak = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (beta * (s - peak)).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(scores.iter().zip(&weights).map(|(s, w)| s * w).sum::<f64>() / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredPair {
    pub score: f64,
    pub same: bool,
}

impl ScoredPair {
    pub fn new(score: f64, same: bool) -> Self {
        Self { score, same }
    }
}

/// One ROC operating point: accept when `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
}

fn class_counts(pairs: &[ScoredPair]) -> (usize, usize) {
    let pos = pairs.iter().filter(|p| p.same).count();
    (pos, pairs.len() - pos)
}

/// ROC with one point per distinct score, ordered by decreasing threshold.
pub fn roc(pairs: &[ScoredPair]) -> Result<Vec<RocPoint>, EvalError> {
    if pairs.iter().any(|p| !p.score.is_finite()) {
        return Err(EvalError::BadParameter("non-finite score".into()));
    }
    let (pos, neg) = class_counts(pairs);
    if pos == 0 || neg == 0 {
        return Err(EvalError::OneClassOnly);
    }
    let mut sorted: Vec<&ScoredPair> = pairs.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].score;
        while i < sorted.len() && sorted[i].score == threshold {
            if sorted[i].same {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push(RocPoint {
            threshold,
            far: fp as f64 / neg as f64,
            tar: tp as f64 / pos as f64,
        });
    }
    Ok(curve)
}

/// TAR at `far`, interpolated between the last achievable point with
/// FAR <= `far` (the origin counts as achievable) and the next point.
pub fn tar_at_far(curve: &[RocPoint], far: f64) -> Result<f64, EvalError> {
    if !(far > 0.0 && far < 1.0) {
        return Err(EvalError::BadParameter(format!(
            "far must be in (0, 1), got {far}"
        )));
    }
    let (mut lo_far, mut lo_tar) = (0.0, 0.0);
    for p in curve {
        if p.far <= far {
            lo_far = p.far;
            lo_tar = p.tar;
        } else {
            let t = (far - lo_far) / (p.far - lo_far);
            return Ok(lo_tar + t * (p.tar - lo_tar));
        }
    }
    Ok(lo_tar)
}

/// A scored pair assigned to a cross-validation fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldedPair {
    pub score: f64,
    pub same: bool,
    pub fold: usize,
}

pub const VERIFICATION_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold_accuracies: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub sd: f64,
}

fn accuracy_at(pairs: &[&FoldedPair], threshold: f64) -> f64 {
    let correct = pairs.iter().filter(|p| (p.score >= threshold) == p.same).count();
    correct as f64 / pairs.len() as f64
}

/// Accuracy-maximizing threshold over `-inf`, all midpoints between adjacent
/// distinct scores and `+inf`; the lowest one wins ties.
pub fn best_threshold(pairs: &[&FoldedPair]) -> f64 {
    let mut sorted: Vec<&&FoldedPair> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    let pos_total = sorted.iter().filter(|p| p.same).count();

    // Threshold below everything: accept all.
    let mut best = (pos_total, f64::NEG_INFINITY);
    let (mut neg_rejected, mut pos_rejected) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].score;
        while i < sorted.len() && sorted[i].score == s {
            if sorted[i].same {
                pos_rejected += 1;
            } else {
                neg_rejected += 1;
            }
            i += 1;
        }
        let threshold = match sorted.get(i) {
            Some(next) => s + (next.score - s) / 2.0,
            None => f64::INFINITY,
        };
        let correct = (pos_total - pos_rejected) + neg_rejected;
        if correct > best.0 {
            best = (correct, threshold);
        }
    }
    best.1
}

/// k-fold verification accuracy: each fold is scored at the threshold chosen
/// on the other folds. Folds must be numbered `0..k`, be non-empty, balanced
/// between positives and negatives, and equally sized.
pub fn k_fold_accuracy(pairs: &[FoldedPair], folds: usize) -> Result<FoldReport, EvalError> {
    if folds < 2 {
        return Err(EvalError::BadFoldShape(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if pairs.iter().any(|p| !p.score.is_finite()) {
        return Err(EvalError::BadParameter("non-finite score".into()));
    }
    let mut shape: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for p in pairs {
        let e = shape.entry(p.fold).or_default();
        if p.same {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    if shape.len() != folds || shape.keys().copied().ne(0..folds) {
        return Err(EvalError::BadFoldShape(format!(
            "expected folds 0..{folds}, found {:?}",
            shape.keys().collect::<Vec<_>>()
        )));
    }
    let first = shape[&0];
    for (f, &(pos, neg)) in &shape {
        if pos != neg || pos == 0 {
            return Err(EvalError::BadFoldShape(format!(
                "fold {f} has {pos} positive and {neg} negative pairs"
            )));
        }
        if (pos, neg) != first {
            return Err(EvalError::BadFoldShape(format!(
                "fold {f} has {} pairs, fold 0 has {}",
                pos + neg,
                first.0 + first.1
            )));
        }
    }

    let mut fold_accuracies = Vec::with_capacity(folds);
    let mut thresholds = Vec::with_capacity(folds);
    for f in 0..folds {
        let (test, train): (Vec<&FoldedPair>, Vec<&FoldedPair>) = pairs.iter().partition(|p| p.fold == f);
        let t = best_threshold(&train);
        thresholds.push(t);
        fold_accuracies.push(accuracy_at(&test, t));
    }
    let mean = fold_accuracies.iter().sum::<f64>() / folds as f64;
    let sd = (fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (folds - 1) as f64).sqrt();
    Ok(FoldReport {
        fold_accuracies,
        thresholds,
        mean,
        sd,
    })
}

pub fn verification_accuracy_10fold(pairs: &[FoldedPair]) -> Result<FoldReport, EvalError> {
    k_fold_accuracy(pairs, VERIFICATION_FOLDS)
}

/// Pair definition by item index, before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairIndex {
    pub a: usize,
    pub b: usize,
    pub same: bool,
    pub fold: usize,
}

/// Draws a balanced k-fold pair list from labelled items: each fold gets
/// `per_class` same-label and `per_class` different-label pairs.
pub fn build_verification_pairs(
    labels: &[u64],
    folds: usize,
    per_class: usize,
    rng: &mut Rng,
) -> Result<Vec<PairIndex>, EvalError> {
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let multi: Vec<&Vec<usize>> = groups.values().filter(|g| g.len() >= 2).collect();
    if multi.is_empty() || groups.len() < 2 {
        return Err(EvalError::BadParameter(
            "need a label with two items and at least two labels".into(),
        ));
    }
    let mut out = Vec::with_capacity(2 * folds * per_class);
    for fold in 0..folds {
        for _ in 0..per_class {
            let g = multi.choose(rng).expect("non-empty");
            let picked: Vec<&usize> = g.choose_multiple(rng, 2).collect();
            out.push(PairIndex {
                a: *picked[0],
                b: *picked[1],
                same: true,
                fold,
            });
        }
        let mut made = 0;
        while made < per_class {
            let a = rand::Rng::random_range(rng, 0..labels.len());
            let b = rand::Rng::random_range(rng, 0..labels.len());
            if labels[a] != labels[b] {
                out.push(PairIndex {
                    a,
                    b,
                    same: false,
                    fold,
                });
                made += 1;
            }
        }
    }
    Ok(out)
}

/// Summary of a verification run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub pairs: usize,
    pub folds: usize,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
    pub fold_accuracies: Vec<f64>,
    /// `(far, tar)` for each requested FAR, from the ROC over all pairs.
    pub tar_at_far: Vec<(f64, f64)>,
}

pub fn verification_report(pairs: &[FoldedPair], fars: &[f64]) -> Result<VerificationReport, EvalError> {
    let folds = k_fold_accuracy(pairs, VERIFICATION_FOLDS)?;
    let scored: Vec<ScoredPair> = pairs.iter().map(|p| ScoredPair::new(p.score, p.same)).collect();
    let curve = roc(&scored)?;
    let tar_at_far = fars
        .iter()
        .map(|&f| tar_at_far(&curve, f).map(|t| (f, t)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VerificationReport {
        pairs: pairs.len(),
        folds: VERIFICATION_FOLDS,
        accuracy_mean: folds.mean,
        accuracy_sd: folds.sd,
        fold_accuracies: folds.fold_accuracies,
        tar_at_far,
    })
}
