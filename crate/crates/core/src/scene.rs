//! Pose, camera and illumination.
//!
//! Frame conventions: `+x` is the viewer's right, `+y` up and `+z` toward the
//! camera, which looks down its own `-z` axis. Image `v` grows downward and
//! pixel centers sit at integer coordinates.

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::FaceMesh;
use crate::Rng;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("point at depth z = {z} is not in front of the near plane")]
    BehindCamera { z: f64 },
    #[error("mesh has a zero-radius bounding sphere")]
    DegenerateMesh,
    #[error("normal {0:?} is not unit length")]
    NotUnit([f64; 3]),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("illumination prior not found: {0}")]
    MissingFile(String),
    #[error("illumination prior has no samples")]
    EmptyPrior,
    #[error("illumination record {index}: {reason}")]
    BadRecord { index: usize, reason: String },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Head orientation (radians) and camera-frame translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn from_degrees(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self {
            yaw: yaw.to_radians(),
            pitch: pitch.to_radians(),
            roll: roll.to_radians(),
            translation: Vector3::zeros(),
        }
    }

    pub fn frontal() -> Self {
        Self::from_degrees(0.0, 0.0, 0.0)
    }

    pub fn with_translation(mut self, t: Vector3<f64>) -> Self {
        self.translation = t;
        self
    }

    pub fn degrees(&self) -> [f64; 3] {
        [
            self.yaw.to_degrees(),
            self.pitch.to_degrees(),
            self.roll.to_degrees(),
        ]
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix(self)
    }

    /// Model-space point to camera frame.
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation
    }
}

/// `R = Rz(roll) * Rx(pitch) * Ry(yaw)`.
pub fn rotation_matrix(pose: &Pose) -> Matrix3<f64> {
    let (sy, cy) = pose.yaw.sin_cos();
    let (sp, cp) = pose.pitch.sin_cos();
    let (sr, cr) = pose.roll.sin_cos();
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
    let rz = Matrix3::new(cr, -sr, 0.0, sr, cr, 0.0, 0.0, 0.0, 1.0);
    rz * rx * ry
}

/// Closed interval in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeRange {
    pub lo: f64,
    pub hi: f64,
}

impl DegreeRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    pub fn contains(&self, deg: f64) -> bool {
        (self.lo..=self.hi).contains(&deg)
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.random();
        (self.lo + (self.hi - self.lo) * u).clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRanges {
    pub yaw: DegreeRange,
    pub pitch: DegreeRange,
    pub roll: DegreeRange,
}

impl Default for PoseRanges {
    fn default() -> Self {
        Self {
            yaw: DegreeRange::new(-90.0, 90.0),
            pitch: DegreeRange::new(-30.0, 30.0),
            roll: DegreeRange::new(-15.0, 15.0),
        }
    }
}

impl PoseRanges {
    pub fn fixed(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self {
            yaw: DegreeRange::new(yaw, yaw),
            pitch: DegreeRange::new(pitch, pitch),
            roll: DegreeRange::new(roll, roll),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.yaw.is_valid() && self.pitch.is_valid() && self.roll.is_valid()
    }
}

/// Independent uniform angles; translation is left at zero for [`auto_frame`].
pub fn sample_pose(ranges: &PoseRanges, rng: &mut Rng) -> Pose {
    let yaw = ranges.yaw.sample(rng);
    let pitch = ranges.pitch.sample(rng);
    let roll = ranges.roll.sample(rng);
    Pose::from_degrees(yaw, pitch, roll)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub focal_length: f64,
    pub principal_point: [f64; 2],
    pub image_width: u32,
    pub image_height: u32,
    pub near_plane: f64,
}

impl Camera {
    /// Camera for a `width x height` frame: principal point at the image
    /// center and a focal length of twice the width (about 28 degrees FOV).
    pub fn for_frame(width: u32, height: u32) -> Self {
        Self {
            focal_length: 2.0 * width as f64,
            principal_point: [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0],
            image_width: width,
            image_height: height,
            near_plane: 0.01,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.focal_length > 0.0 && self.near_plane > 0.0 && self.image_width > 0 && self.image_height > 0
    }
}

/// Pinhole projection of a camera-frame point to pixel coordinates.
pub fn project_point(camera: &Camera, p: &Vector3<f64>) -> Result<[f64; 2], SceneError> {
    if p.z >= -camera.near_plane {
        return Err(SceneError::BehindCamera { z: p.z });
    }
    Ok(project_unchecked(camera, p))
}

/// Pixel offset from the principal point (x right, y down). Scales exactly with the focal length.
pub fn pixel_offset(camera: &Camera, p: &Vector3<f64>) -> Result<[f64; 2], SceneError> {
    if p.z >= -camera.near_plane {
        return Err(SceneError::BehindCamera { z: p.z });
    }
    Ok(offset_unchecked(camera, p))
}

fn offset_unchecked(camera: &Camera, p: &Vector3<f64>) -> [f64; 2] {
    let depth = -p.z;
    [
        camera.focal_length * (p.x / depth),
        -(camera.focal_length * (p.y / depth)),
    ]
}

pub(crate) fn project_unchecked(camera: &Camera, p: &Vector3<f64>) -> [f64; 2] {
    let [dx, dy] = offset_unchecked(camera, p);
    let [cx, cy] = camera.principal_point;
    [cx + dx, cy + dy]
}

pub const DEFAULT_FILL: f64 = 0.7;

/// Bounding sphere of a point set: center of the axis-aligned box, radius to the farthest point.
pub fn bounding_sphere(points: &[Vector3<f64>]) -> (Vector3<f64>, f64) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let center = (lo + hi) / 2.0;
    let radius = points.iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
    (center, radius)
}

/// Translation placing the rotated mesh's bounding sphere on the optical axis
/// so that its silhouette spans `fill * min(width, height)` pixels.
pub fn auto_frame(
    mesh: &FaceMesh,
    rotation: &Matrix3<f64>,
    camera: &Camera,
    fill: f64,
) -> Result<Vector3<f64>, SceneError> {
    if !(fill > 0.0 && fill <= 1.0) {
        return Err(SceneError::BadParameter(format!(
            "fill must be in (0, 1], got {fill}"
        )));
    }
    let (center, radius) = bounding_sphere(&mesh.positions);
    if !(radius > 0.0) {
        return Err(SceneError::DegenerateMesh);
    }
    let diameter_px = fill * camera.image_width.min(camera.image_height) as f64;
    // A sphere at distance d subtends 2 f r / sqrt(d^2 - r^2) pixels on axis.
    let k = diameter_px / (2.0 * camera.focal_length);
    let distance = radius * (1.0 + 1.0 / (k * k)).sqrt();
    if distance - radius <= camera.near_plane {
        return Err(SceneError::BadParameter(format!(
            "framing at distance {distance} crosses the near plane"
        )));
    }
    Ok(Vector3::new(0.0, 0.0, -distance) - rotation * center)
}

const SH_C0: f64 = 0.282095;
const SH_C1: f64 = 0.488603;
const SH_C2: f64 = 1.092548;
const SH_C20: f64 = 0.315392;
const SH_C22: f64 = 0.546274;

/// Clamped-cosine convolution factors divided by pi (pi, 2pi/3, pi/4 over pi).
const BAND_FACTOR_OVER_PI: [f64; 9] = [1.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 0.25, 0.25, 0.25, 0.25, 0.25];

/// Real spherical harmonics for bands 0..=2, in the order
/// `Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22`.
pub fn sh_basis(n: &Vector3<f64>) -> Result<[f64; 9], SceneError> {
    if (n.norm() - 1.0).abs() > 1e-6 {
        return Err(SceneError::NotUnit([n.x, n.y, n.z]));
    }
    Ok(sh_basis_unchecked(n))
}

pub(crate) fn sh_basis_unchecked(n: &Vector3<f64>) -> [f64; 9] {
    let (x, y, z) = (n.x, n.y, n.z);
    [
        SH_C0,
        SH_C1 * y,
        SH_C1 * z,
        SH_C1 * x,
        SH_C2 * x * y,
        SH_C2 * y * z,
        SH_C20 * (3.0 * z * z - 1.0),
        SH_C2 * x * z,
        SH_C22 * (x * x - y * y),
    ]
}

/// 27 spherical-harmonics lighting coefficients, 9 per color channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Illumination {
    pub coeffs: [[f64; 9]; 3],
}

impl Illumination {
    /// Ambient light that reproduces the albedo for every normal.
    pub fn dc_identity() -> Self {
        let mut coeffs = [[0.0; 9]; 3];
        for c in &mut coeffs {
            c[0] = 1.0 / SH_C0;
        }
        Self { coeffs }
    }

    pub fn from_flat(values: &[f64]) -> Result<Self, SceneError> {
        if values.len() != 27 {
            return Err(SceneError::BadRecord {
                index: 0,
                reason: format!("expected 27 coefficients, got {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SceneError::BadRecord {
                index: 0,
                reason: "non-finite coefficient".into(),
            });
        }
        let mut coeffs = [[0.0; 9]; 3];
        for (c, chunk) in coeffs.iter_mut().zip(values.chunks_exact(9)) {
            c.copy_from_slice(chunk);
        }
        Ok(Self { coeffs })
    }

    /// Channel-major flattening: all red coefficients first.
    pub fn to_flat(&self) -> Vec<f64> {
        self.coeffs.iter().flatten().copied().collect()
    }

    /// Irradiance divided by pi, per channel, before clamping.
    pub fn radiance_factor(&self, n: &Vector3<f64>) -> [f64; 3] {
        let y = sh_basis_unchecked(n);
        self.coeffs.map(|c| {
            c.iter()
                .zip(&y)
                .zip(&BAND_FACTOR_OVER_PI)
                .map(|((l, y), a)| a * l * y)
                .sum()
        })
    }
}

/// Lambertian shading under SH illumination, clamped to `[0, 1]`.
pub fn shade(albedo: [f64; 3], illum: &Illumination, n: &Vector3<f64>) -> [f64; 3] {
    let e = illum.radiance_factor(n);
    [0, 1, 2].map(|c| (albedo[c] * e[c]).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationPrior {
    samples: Vec<Illumination>,
}

#[derive(Serialize, Deserialize)]
struct PriorFile {
    samples: Vec<Vec<f64>>,
}

impl IlluminationPrior {
    pub fn new(samples: Vec<Illumination>) -> Result<Self, SceneError> {
        if samples.is_empty() {
            return Err(SceneError::EmptyPrior);
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Illumination] {
        &self.samples
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let file: PriorFile = serde_json::from_str(text).map_err(|e| SceneError::BadRecord {
            index: 0,
            reason: e.to_string(),
        })?;
        let samples = file
            .samples
            .iter()
            .enumerate()
            .map(|(index, row)| {
                Illumination::from_flat(row).map_err(|e| match e {
                    SceneError::BadRecord { reason, .. } => SceneError::BadRecord { index, reason },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(samples)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&PriorFile {
            samples: self.samples.iter().map(Illumination::to_flat).collect(),
        })
        .expect("prior serializes")
    }
}

pub fn load_illumination_prior(path: impl AsRef<Path>) -> Result<IlluminationPrior, SceneError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => SceneError::MissingFile(path.display().to_string()),
        _ => SceneError::Io(e),
    })?;
    IlluminationPrior::from_json(&text)
}

/// Uniformly picks one stored sample.
pub fn sample_illumination(prior: &IlluminationPrior, rng: &mut Rng) -> Illumination {
    prior.samples[rng.random_range(0..prior.samples.len())]
}

/// Fabricated prior for tests and demos: a bright ambient term with modest
/// directional components, all producing nonnegative irradiance on the sphere.
pub fn synthetic_prior(count: usize, rng: &mut Rng) -> IlluminationPrior {
    let samples = (0..count.max(1))
        .map(|_| {
            let ambient = rng.random_range(0.8..1.3) / SH_C0;
            let tint = [0, 1, 2].map(|_| rng.random_range(0.9..1.1));
            let dir: [f64; 3] = [0, 1, 2].map(|_| rng.random_range(-0.6..0.6));
            let quad: [f64; 5] = [0, 1, 2, 3, 4].map(|_| rng.random_range(-0.15..0.15));
            let mut coeffs = [[0.0; 9]; 3];
            for (c, t) in coeffs.iter_mut().zip(tint) {
                c[0] = ambient * t;
                c[1..4].copy_from_slice(&dir);
                c[4..9].copy_from_slice(&quad);
            }
            Illumination { coeffs }
        })
        .collect();
    IlluminationPrior { samples }
}
