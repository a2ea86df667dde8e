//! JSON-lines inputs for the evaluation harness.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{cosine_similarity, template_similarity, EvalError, FoldedPair, LandmarkPrediction};
use crate::datagen::ManifestRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub a: String,
    pub b: String,
    pub same: bool,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_path: String,
    pub predicted: Vec<[f64; 2]>,
}

fn parse_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::BadRecord {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

fn read_text(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => EvalError::Io(std::io::Error::new(
            ErrorKind::NotFound,
            format!("{}: not found", path.display()),
        )),
        _ => EvalError::Io(e),
    })
}

pub fn parse_embeddings(text: &str) -> Result<Vec<EmbeddingRecord>, EvalError> {
    let records: Vec<EmbeddingRecord> = parse_lines(text)?;
    for (i, r) in records.iter().enumerate() {
        if r.vector.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::BadRecord {
                line: i + 1,
                reason: format!("embedding {:?} has a non-finite value", r.id),
            });
        }
    }
    Ok(records)
}

pub fn parse_pairs(text: &str) -> Result<Vec<PairRecord>, EvalError> {
    parse_lines(text)
}

pub fn parse_predictions(text: &str) -> Result<Vec<PredictionRecord>, EvalError> {
    parse_lines(text)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>, EvalError> {
    parse_embeddings(&read_text(path.as_ref())?)
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<PairRecord>, EvalError> {
    parse_pairs(&read_text(path.as_ref())?)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>, EvalError> {
    parse_predictions(&read_text(path.as_ref())?)
}

/// How pair endpoints are resolved against the embedding file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreMode {
    /// `a`/`b` name single embeddings by `id`.
    Image,
    /// `a`/`b` name templates by `template_id`, scored with softmax weighting.
    Template { beta: f64 },
}

type PairScorer<'a> = dyn Fn(&str, &str) -> Result<f64, EvalError> + 'a;

pub fn score_pairs(
    embeddings: &[EmbeddingRecord],
    pairs: &[PairRecord],
    mode: ScoreMode,
) -> Result<Vec<FoldedPair>, EvalError> {
    let score: Box<PairScorer> = match mode {
        ScoreMode::Image => {
            let by_id: HashMap<&str, &[f64]> = embeddings
                .iter()
                .map(|e| (e.id.as_str(), e.vector.as_slice()))
                .collect();
            Box::new(move |a, b| {
                let get = |k: &str| {
                    by_id
                        .get(k)
                        .copied()
                        .ok_or_else(|| EvalError::UnknownId(k.into()))
                };
                cosine_similarity(get(a)?, get(b)?)
            })
        }
        ScoreMode::Template { beta } => {
            let mut templates: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
            for e in embeddings {
                if let Some(t) = &e.template_id {
                    templates.entry(t.as_str()).or_default().push(&e.vector);
                }
            }
            Box::new(move |a, b| {
                let get = |k: &str| templates.get(k).ok_or_else(|| EvalError::UnknownId(k.into()));
                template_similarity(get(a)?, get(b)?, beta)
            })
        }
    };
    pairs
        .iter()
        .map(|p| {
            Ok(FoldedPair {
                score: score(&p.a, &p.b)?,
                same: p.same,
                fold: p.fold,
            })
        })
        .collect()
}

/// Attaches manifest ground truth (all landmarks and the face box) to each prediction.
pub fn join_predictions(
    predictions: &[PredictionRecord],
    manifest: &[ManifestRecord],
) -> Result<Vec<LandmarkPrediction>, EvalError> {
    let by_path: HashMap<&str, &ManifestRecord> =
        manifest.iter().map(|r| (r.image_path.as_str(), r)).collect();
    predictions
        .iter()
        .map(|p| {
            let r = by_path
                .get(p.image_path.as_str())
                .ok_or_else(|| EvalError::UnknownId(p.image_path.clone()))?;
            if p.predicted.len() != r.landmarks.len() {
                return Err(EvalError::DimensionMismatch(p.predicted.len(), r.landmarks.len()));
            }
            Ok(LandmarkPrediction {
                image_path: p.image_path.clone(),
                predicted: p.predicted.clone(),
                ground_truth: r.landmarks.clone(),
                face_box: r.face_box,
            })
        })
        .collect()
}
