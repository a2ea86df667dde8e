//! Dataset specs, bulk generation and manifests.

mod augment;
mod manifest;

pub use augment::{
    augment_mirror, augment_rotate, rotate_about, rotate_point, rotation_copies, sample_rotation_angle,
    RotatedSample, MAX_ROTATION_DEG, ROTATED_COPIES,
};
pub use manifest::{parse_manifest, read_manifest, write_manifest, Manifest, ManifestRecord, PoseRecord};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::RgbImage;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Map;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    sample_expression, sample_identity, synthesize_instance, ExpressionCoefficients, FaceMesh,
    IdentityCoefficients, ModelError, MorphableModel,
};
use crate::render::{composite_background, face_box, project_landmarks, rasterize, RenderError};
use crate::scene::{
    auto_frame, load_illumination_prior, sample_illumination, sample_pose, Camera, DegreeRange,
    IlluminationPrior, PoseRanges, SceneError, DEFAULT_FILL,
};
use crate::seed::{identity_seed, image_seed, rng_from};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("bad landmark pairing: {0}")]
    BadPairing(String),
    #[error("not found: {0}")]
    MissingFile(String),
    #[error("no PNG backgrounds in {0}")]
    NoBackgrounds(String),
    #[error("background {path}: {source}")]
    Background { path: String, source: image::ImageError },
    #[error("writing {path}: {source}")]
    ImageWrite { path: String, source: image::ImageError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Declarative description of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub num_identities: u64,
    pub samples_per_identity: u64,
    #[serde(default)]
    pub pose_ranges: PoseRanges,
    #[serde(default = "default_true")]
    pub expression_enabled: bool,
    pub illumination_prior_path: PathBuf,
    pub background_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_frame")]
    pub width: u32,
    #[serde(default = "default_frame")]
    pub height: u32,
    #[serde(default = "default_fill")]
    pub fill: f64,
}

fn default_true() -> bool {
    true
}

fn default_frame() -> u32 {
    128
}

fn default_fill() -> f64 {
    DEFAULT_FILL
}

/// Named dataset sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 200 identities x 10 samples.
    RecognitionDesk,
    /// 400 identities x 5 samples.
    LandmarksDesk,
    /// 20,000 identities x 100 samples (1M images).
    RecognitionPaper,
    /// 10,000 identities x 5 samples (50K images).
    LandmarksPaper,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::RecognitionDesk,
        Preset::LandmarksDesk,
        Preset::RecognitionPaper,
        Preset::LandmarksPaper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::RecognitionDesk => "recognition-desk",
            Preset::LandmarksDesk => "landmarks-desk",
            Preset::RecognitionPaper => "recognition-paper",
            Preset::LandmarksPaper => "landmarks-paper",
        }
    }

    /// `(identities, samples per identity)`.
    pub fn size(self) -> (u64, u64) {
        match self {
            Preset::RecognitionDesk => (200, 10),
            Preset::LandmarksDesk => (400, 5),
            Preset::RecognitionPaper => (20_000, 100),
            Preset::LandmarksPaper => (10_000, 5),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = DatagenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| DatagenError::BadParameter(format!("unknown preset {s:?}")))
    }
}

impl DatasetSpec {
    pub fn from_preset(
        preset: Preset,
        illumination_prior_path: impl Into<PathBuf>,
        background_dir: impl Into<PathBuf>,
    ) -> Self {
        let (n, m) = preset.size();
        Self {
            num_identities: n,
            samples_per_identity: m,
            pose_ranges: PoseRanges::default(),
            expression_enabled: true,
            illumination_prior_path: illumination_prior_path.into(),
            background_dir: background_dir.into(),
            seed: 0,
            width: default_frame(),
            height: default_frame(),
            fill: DEFAULT_FILL,
        }
    }

    pub fn total_images(&self) -> u64 {
        self.num_identities * self.samples_per_identity
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.num_identities == 0 || self.samples_per_identity == 0 {
            return Err(DatagenError::BadParameter(format!(
                "need at least one identity and one sample, got {} x {}",
                self.num_identities, self.samples_per_identity
            )));
        }
        if !self.pose_ranges.is_valid() {
            return Err(DatagenError::BadParameter(format!(
                "invalid pose ranges {:?}",
                self.pose_ranges
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(DatagenError::BadParameter("frame must be non-empty".into()));
        }
        if !(self.fill > 0.0 && self.fill <= 1.0) {
            return Err(DatagenError::BadParameter(format!(
                "fill must be in (0, 1], got {}",
                self.fill
            )));
        }
        Ok(())
    }

    pub fn camera(&self) -> Camera {
        Camera::for_frame(self.width, self.height)
    }

    /// Short content hash of the spec, stored in every record.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&canonical)[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Yaw restricted to a frontal band; dataset size unchanged.
pub const FRONTAL_YAW: DegreeRange = DegreeRange::new(-35.0, 35.0);

pub fn frontal_bias_spec(spec: &DatasetSpec) -> DatasetSpec {
    let mut out = spec.clone();
    out.pose_ranges.yaw = FRONTAL_YAW;
    out
}

/// Half the identities, twice the samples each: same image count.
pub fn half_identity_spec(spec: &DatasetSpec) -> Result<DatasetSpec, DatagenError> {
    if spec.num_identities < 2 {
        return Err(DatagenError::BadParameter(format!(
            "cannot halve {} identities",
            spec.num_identities
        )));
    }
    let mut out = spec.clone();
    out.num_identities = spec.num_identities / 2;
    out.samples_per_identity = spec.samples_per_identity * 2;
    Ok(out)
}

/// Identity coefficients as drawn during generation.
pub fn identity_coefficients(model: &MorphableModel, identity_seed: u64) -> IdentityCoefficients {
    sample_identity(model, &mut rng_from(identity_seed))
}

/// Background textures: every `*.png` in a directory, sorted by file name.
pub struct Backgrounds {
    pub names: Vec<String>,
    pub images: Vec<RgbImage>,
}

pub fn load_backgrounds(dir: impl AsRef<Path>) -> Result<Backgrounds, DatagenError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(DatagenError::MissingFile(dir.display().to_string()));
    }
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(DatagenError::NoBackgrounds(dir.display().to_string()));
    }
    let images = names
        .iter()
        .map(|n| {
            let path = dir.join(n);
            image::open(&path)
                .map(|i| i.to_rgb8())
                .map_err(|source| DatagenError::Background {
                    path: path.display().to_string(),
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(i) = images.iter().position(|im| im.width() == 0 || im.height() == 0) {
        return Err(DatagenError::BadParameter(format!(
            "background {} is empty",
            names[i]
        )));
    }
    Ok(Backgrounds { names, images })
}

/// Everything sampled for one image.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub mesh: FaceMesh,
    pub pose: crate::scene::Pose,
    pub illumination: crate::scene::Illumination,
    pub background: usize,
}

/// Draws the scene for `(identity_id, sample_idx)` from its own seeded streams.
pub fn sample_scene(
    spec: &DatasetSpec,
    model: &MorphableModel,
    prior: &IlluminationPrior,
    background_count: usize,
    identity_id: u64,
    sample_idx: u64,
) -> Result<SceneSample, DatagenError> {
    let identity = identity_coefficients(model, identity_seed(spec.seed, identity_id));
    let mut rng = rng_from(image_seed(spec.seed, identity_id, sample_idx));
    let expression = if spec.expression_enabled {
        sample_expression(model, &mut rng)
    } else {
        ExpressionCoefficients::zeros(model)
    };
    let pose = sample_pose(&spec.pose_ranges, &mut rng);
    let illumination = sample_illumination(prior, &mut rng);
    let background = rng.random_range(0..background_count);
    let mesh = synthesize_instance(model, &identity, &expression)?;
    let t = auto_frame(&mesh, &pose.rotation(), &spec.camera(), spec.fill)?;
    Ok(SceneSample {
        mesh,
        pose: pose.with_translation(t),
        illumination,
        background,
    })
}

pub fn image_file_name(identity_id: u64, sample_idx: u64) -> String {
    format!("images/{identity_id:06}_{sample_idx:04}.png")
}

struct Job<'a> {
    spec: &'a DatasetSpec,
    spec_hash: String,
    model: &'a MorphableModel,
    prior: IlluminationPrior,
    backgrounds: Backgrounds,
    out_dir: &'a Path,
}

/// Renders one record and writes its PNG under `out_dir`.
fn generate_record(job: &Job<'_>, identity_id: u64, sample_idx: u64) -> Result<ManifestRecord, DatagenError> {
    let Job {
        spec,
        spec_hash,
        model,
        prior,
        backgrounds,
        out_dir,
    } = job;
    let scene = sample_scene(
        spec,
        model,
        prior,
        backgrounds.images.len(),
        identity_id,
        sample_idx,
    )?;
    let camera = spec.camera();
    let fb = rasterize(&scene.mesh, &scene.pose, &camera, &scene.illumination);
    let landmarks = project_landmarks(model, &scene.mesh, &scene.pose, &camera, &fb);
    let xy: Vec<[f64; 2]> = landmarks.iter().map(|l| l.xy).collect();
    let image = composite_background(&fb, &backgrounds.images[scene.background])?;

    let rel = image_file_name(identity_id, sample_idx);
    let path = out_dir.join(&rel);
    image
        .save_with_format(&path, image::ImageFormat::Png)
        .map_err(|source| DatagenError::ImageWrite {
            path: path.display().to_string(),
            source,
        })?;

    Ok(ManifestRecord {
        image_path: rel,
        identity_id,
        sample_idx,
        pose: PoseRecord::from(&scene.pose),
        illumination: scene.illumination.to_flat(),
        face_box: face_box(&xy),
        landmarks: xy,
        visible: landmarks.iter().map(|l| l.visible).collect(),
        background_id: backgrounds.names[scene.background].clone(),
        spec_hash: spec_hash.clone(),
        identity_seed: identity_seed(spec.seed, identity_id),
        image_seed: image_seed(spec.seed, identity_id, sample_idx),
        extra: Map::new(),
    })
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Generates all `N x M` images into `out_dir/images/` and writes
/// `out_dir/manifest.jsonl`.
///
/// `jobs` bounds the worker threads (`None` uses the global pool). Output
/// bytes do not depend on it.
pub fn generate_dataset(
    spec: &DatasetSpec,
    model: &MorphableModel,
    out_dir: impl AsRef<Path>,
    jobs: Option<usize>,
) -> Result<Manifest, DatagenError> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let job = Job {
        spec,
        spec_hash: spec.hash(),
        model,
        prior: load_illumination_prior(&spec.illumination_prior_path)?,
        backgrounds: load_backgrounds(&spec.background_dir)?,
        out_dir,
    };
    fs::create_dir_all(out_dir.join("images"))?;

    let keys: Vec<(u64, u64)> = (0..spec.num_identities)
        .flat_map(|i| (0..spec.samples_per_identity).map(move |s| (i, s)))
        .collect();
    let run = || {
        keys.par_iter()
            .map(|&(i, s)| generate_record(&job, i, s))
            .collect::<Result<Vec<_>, _>>()
    };
    let records = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| DatagenError::BadParameter(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    write_manifest(&records, out_dir.join(MANIFEST_FILE))?;
    Ok(Manifest { records })
}
