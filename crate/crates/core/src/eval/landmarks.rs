use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::render::FaceBox;

/// Predicted points for one image alongside the ground truth they are scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkPrediction {
    pub image_path: String,
    pub predicted: Vec<[f64; 2]>,
    pub ground_truth: Vec<[f64; 2]>,
    pub face_box: FaceBox,
}

impl LandmarkPrediction {
    pub fn error(&self) -> Result<f64, EvalError> {
        landmark_error(&self.predicted, &self.ground_truth, &self.face_box)
    }
}

/// Mean point-to-point distance divided by the face-box diagonal.
pub fn landmark_error(
    predicted: &[[f64; 2]],
    ground_truth: &[[f64; 2]],
    face_box: &FaceBox,
) -> Result<f64, EvalError> {
    if predicted.len() != ground_truth.len() {
        return Err(EvalError::DimensionMismatch(predicted.len(), ground_truth.len()));
    }
    if predicted.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let diag = face_box.diagonal();
    if !(diag > 0.0) {
        return Err(EvalError::ZeroDiagonal);
    }
    let total: f64 = predicted
        .iter()
        .zip(ground_truth)
        .map(|(p, g)| (p[0] - g[0]).hypot(p[1] - g[1]))
        .sum();
    Ok(total / predicted.len() as f64 / diag)
}

/// Fraction of errors at or below `threshold`.
pub fn detection_accuracy(errors: &[f64], threshold: f64) -> Result<f64, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if !(threshold > 0.0) {
        return Err(EvalError::BadParameter(format!(
            "threshold must be > 0, got {threshold}"
        )));
    }
    Ok(errors.iter().filter(|&&e| e <= threshold).count() as f64 / errors.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandmarkReport {
    pub images: usize,
    pub mean_error: f64,
    /// `(threshold, accuracy)` pairs.
    pub accuracy: Vec<(f64, f64)>,
}

pub fn landmark_report(
    predictions: &[LandmarkPrediction],
    thresholds: &[f64],
) -> Result<LandmarkReport, EvalError> {
    let errors = predictions
        .iter()
        .map(LandmarkPrediction::error)
        .collect::<Result<Vec<_>, _>>()?;
    if errors.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let accuracy = thresholds
        .iter()
        .map(|&t| detection_accuracy(&errors, t).map(|a| (t, a)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LandmarkReport {
        images: errors.len(),
        mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
        accuracy,
    })
}
