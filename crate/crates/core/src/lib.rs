//! Synthetic face image generation from a statistical 3D morphable model.
//!
//! The crate is organised along the generation pipeline:
//!
//! - [`model`]: the PCA face model, its `MFM1` file format, Gaussian sampling
//!   of identity/expression coefficients and mesh synthesis.
//! - [`scene`]: head pose, pinhole camera, spherical-harmonics Lambertian
//!   shading and the empirical illumination prior.
//! - [`render`]: a deterministic software rasterizer with z-buffer, background
//!   compositing, landmark projection and face boxes.
//! - [`datagen`]: declarative dataset specs, bulk generation, manifests,
//!   dataset-bias variants and 2D augmentation.
//! - [`eval`]: face verification metrics (cosine scores, ROC, TAR@FAR,
//!   10-fold accuracy) and normalized landmark error.
//!
//! Everything random is driven by explicitly seeded streams, so a dataset is a
//! pure function of its spec, the model and the input files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod eval;
pub mod model;
pub mod render;
pub mod scene;
pub mod seed;

pub use datagen::{DatasetSpec, Manifest, ManifestRecord, Preset};
pub use eval::{Embedding, LandmarkPrediction, RocPoint, ScoredPair};
pub use model::{ExpressionCoefficients, FaceMesh, IdentityCoefficients, MorphableModel};
pub use render::{Annotation, FaceBox, Framebuffer, ProjectedLandmark};
pub use scene::{Camera, Illumination, IlluminationPrior, Pose, PoseRanges};

/// Random stream used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;
