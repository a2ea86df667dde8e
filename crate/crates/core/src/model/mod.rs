//! Statistical 3D morphable face model.
//!
//! A model holds three PCA blocks (shape, per-vertex albedo, expression), each
//! as a mean (shape and color only), a column-major basis with unit-norm
//! columns and one standard deviation per component. Coefficients are kept in
//! standard-deviation units; the sigma scaling happens in [`synthesize_instance`].

mod io;
mod toy;

pub use io::{load_model, save_model, ModelHeader, MAGIC};
pub use toy::{make_toy_model, TOY_LANDMARK_COUNT};

use nalgebra::Vector3;
use rand::Rng as _;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::Rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model file not found: {0}")]
    MissingFile(String),
    #[error("bad magic {0:?}, expected \"MFM1\"")]
    BadMagic([u8; 4]),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("model invariant violated: {0}")]
    InvariantViolation(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Column norms must lie within this distance of 1.
pub const BASIS_NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    /// `3V` coordinates, xyz interleaved.
    pub mean_shape: Vec<f32>,
    /// `3V x Ks`, column-major.
    pub shape_basis: Vec<f32>,
    pub shape_sigma: Vec<f32>,
    /// `3V` linear RGB albedo values in `[0, 1]`.
    pub mean_color: Vec<f32>,
    pub color_basis: Vec<f32>,
    pub color_sigma: Vec<f32>,
    pub expr_basis: Vec<f32>,
    pub expr_sigma: Vec<f32>,
    pub triangles: Vec<[u32; 3]>,
    pub landmark_indices: Vec<u32>,
}

impl MorphableModel {
    pub fn vertex_count(&self) -> usize {
        self.mean_shape.len() / 3
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn shape_components(&self) -> usize {
        self.shape_sigma.len()
    }

    pub fn color_components(&self) -> usize {
        self.color_sigma.len()
    }

    pub fn expr_components(&self) -> usize {
        self.expr_sigma.len()
    }

    pub fn landmark_count(&self) -> usize {
        self.landmark_indices.len()
    }

    pub fn header(&self) -> ModelHeader {
        ModelHeader {
            vertices: self.vertex_count() as u32,
            triangles: self.triangle_count() as u32,
            shape_components: self.shape_components() as u32,
            color_components: self.color_components() as u32,
            expr_components: self.expr_components() as u32,
            landmarks: self.landmark_count() as u32,
        }
    }

    /// Checks every structural and statistical invariant of the model.
    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = 3 * self.vertex_count();
        if !self.mean_shape.len().is_multiple_of(3) || dims == 0 {
            return Err(ModelError::DimensionMismatch(format!(
                "mean_shape length {} is not a positive multiple of 3",
                self.mean_shape.len()
            )));
        }
        if self.mean_color.len() != dims {
            return Err(ModelError::DimensionMismatch(format!(
                "mean_color has {} entries, expected {dims}",
                self.mean_color.len()
            )));
        }
        for (name, basis, sigma) in [
            ("shape", &self.shape_basis, &self.shape_sigma),
            ("color", &self.color_basis, &self.color_sigma),
            ("expression", &self.expr_basis, &self.expr_sigma),
        ] {
            if basis.len() != dims * sigma.len() {
                return Err(ModelError::DimensionMismatch(format!(
                    "{name} basis has {} entries, expected {dims} x {}",
                    basis.len(),
                    sigma.len()
                )));
            }
            for (k, column) in basis.chunks_exact(dims).enumerate() {
                let norm = column_norm(column);
                if (norm - 1.0).abs() > BASIS_NORM_TOLERANCE {
                    return Err(ModelError::InvariantViolation(format!(
                        "{name} basis column {k} has norm {norm}"
                    )));
                }
            }
            if let Some((k, s)) = sigma.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
                return Err(ModelError::InvariantViolation(format!(
                    "{name} sigma {k} is {s}, must be positive"
                )));
            }
        }
        if self.mean_shape.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvariantViolation("non-finite mean shape".into()));
        }
        if let Some((i, c)) = self
            .mean_color
            .iter()
            .enumerate()
            .find(|(_, c)| !(0.0..=1.0).contains(*c))
        {
            return Err(ModelError::InvariantViolation(format!(
                "mean color entry {i} is {c}, outside [0, 1]"
            )));
        }
        let v = self.vertex_count() as u32;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= v) {
                return Err(ModelError::InvariantViolation(format!(
                    "triangle {t} {tri:?} references a vertex >= {v}"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(ModelError::InvariantViolation(format!(
                    "triangle {t} {tri:?} is degenerate"
                )));
            }
        }
        if self.landmark_indices.is_empty() {
            return Err(ModelError::InvariantViolation("model has no landmarks".into()));
        }
        if let Some(l) = self.landmark_indices.iter().find(|&&l| l >= v) {
            return Err(ModelError::InvariantViolation(format!(
                "landmark index {l} >= vertex count {v}"
            )));
        }
        Ok(())
    }

    /// Mean shape vertex `i`.
    pub fn mean_vertex(&self, i: usize) -> Vector3<f64> {
        let p = &self.mean_shape[3 * i..3 * i + 3];
        Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64)
    }
}

fn column_norm(column: &[f32]) -> f64 {
    column
        .iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

/// Shape and albedo coefficients of one identity, in standard-deviation units.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCoefficients {
    pub shape: Vec<f64>,
    pub color: Vec<f64>,
}

impl IdentityCoefficients {
    pub fn zeros(model: &MorphableModel) -> Self {
        Self {
            shape: vec![0.0; model.shape_components()],
            color: vec![0.0; model.color_components()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionCoefficients {
    pub expr: Vec<f64>,
}

impl ExpressionCoefficients {
    pub fn zeros(model: &MorphableModel) -> Self {
        Self {
            expr: vec![0.0; model.expr_components()],
        }
    }
}

/// One synthesized face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceMesh {
    pub positions: Vec<Vector3<f64>>,
    /// Linear RGB albedo, clamped to `[0, 1]`.
    pub colors: Vec<[f64; 3]>,
    pub normals: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl FaceMesh {
    /// Builds a mesh from positions and per-vertex colors, computing normals.
    pub fn from_parts(positions: Vec<Vector3<f64>>, colors: Vec<[f64; 3]>, triangles: Vec<[u32; 3]>) -> Self {
        let normals = compute_vertex_normals(&positions, &triangles);
        Self {
            positions,
            colors,
            normals,
            triangles,
        }
    }
}

fn standard_normals(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Draws i.i.d. standard-normal shape and color coefficients.
pub fn sample_identity(model: &MorphableModel, rng: &mut Rng) -> IdentityCoefficients {
    let shape = standard_normals(rng, model.shape_components());
    let color = standard_normals(rng, model.color_components());
    IdentityCoefficients { shape, color }
}

pub fn sample_expression(model: &MorphableModel, rng: &mut Rng) -> ExpressionCoefficients {
    ExpressionCoefficients {
        expr: standard_normals(rng, model.expr_components()),
    }
}

/// Accumulates `basis * (coeffs ⊙ sigma)` into `out`.
fn accumulate(out: &mut [f64], basis: &[f32], coeffs: &[f64], sigma: &[f32]) {
    let dims = out.len();
    for ((column, &c), &s) in basis.chunks_exact(dims).zip(coeffs).zip(sigma) {
        let w = c * s as f64;
        if w == 0.0 {
            continue;
        }
        for (o, &b) in out.iter_mut().zip(column) {
            *o += b as f64 * w;
        }
    }
}

fn check_lengths(
    model: &MorphableModel,
    id: &IdentityCoefficients,
    ex: &ExpressionCoefficients,
) -> Result<(), ModelError> {
    let checks = [
        ("shape", id.shape.len(), model.shape_components()),
        ("color", id.color.len(), model.color_components()),
        ("expression", ex.expr.len(), model.expr_components()),
    ];
    for (name, got, want) in checks {
        if got != want {
            return Err(ModelError::DimensionMismatch(format!(
                "{name} coefficients have length {got}, model expects {want}"
            )));
        }
    }
    Ok(())
}

/// Geometric offset from the mean shape, `3V` entries.
pub fn shape_displacement(
    model: &MorphableModel,
    id: &IdentityCoefficients,
    ex: &ExpressionCoefficients,
) -> Result<Vec<f64>, ModelError> {
    check_lengths(model, id, ex)?;
    let mut d = vec![0.0; model.mean_shape.len()];
    accumulate(&mut d, &model.shape_basis, &id.shape, &model.shape_sigma);
    accumulate(&mut d, &model.expr_basis, &ex.expr, &model.expr_sigma);
    Ok(d)
}

/// Albedo before clamping, `3V` entries.
pub fn unclamped_color(model: &MorphableModel, id: &IdentityCoefficients) -> Vec<f64> {
    let mut c: Vec<f64> = model.mean_color.iter().map(|&x| x as f64).collect();
    accumulate(&mut c, &model.color_basis, &id.color, &model.color_sigma);
    c
}

/// Materializes the face described by the given coefficients.
pub fn synthesize_instance(
    model: &MorphableModel,
    id: &IdentityCoefficients,
    ex: &ExpressionCoefficients,
) -> Result<FaceMesh, ModelError> {
    let d = shape_displacement(model, id, ex)?;
    let positions = model
        .mean_shape
        .chunks_exact(3)
        .zip(d.chunks_exact(3))
        .map(|(m, d)| Vector3::new(m[0] as f64 + d[0], m[1] as f64 + d[1], m[2] as f64 + d[2]))
        .collect();
    let colors = unclamped_color(model, id)
        .chunks_exact(3)
        .map(|c| [c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0), c[2].clamp(0.0, 1.0)])
        .collect();
    Ok(FaceMesh::from_parts(positions, colors, model.triangles.clone()))
}

/// Area-weighted vertex normals. Vertices with a zero normal sum get `+z`.
pub fn compute_vertex_normals(positions: &[Vector3<f64>], triangles: &[[u32; 3]]) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); positions.len()];
    for tri in triangles {
        let [a, b, c] = tri.map(|i| i as usize);
        // |cross| is twice the area, so the raw cross product is the weighted normal.
        let n = (positions[b] - positions[a]).cross(&(positions[c] - positions[a]));
        acc[a] += n;
        acc[b] += n;
        acc[c] += n;
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                Vector3::z()
            }
        })
        .collect()
}
