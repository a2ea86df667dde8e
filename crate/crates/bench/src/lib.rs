//! Shared fixtures for the criterion benchmarks.

use morphgen_core::model::{
    make_toy_model, sample_expression, sample_identity, synthesize_instance, FaceMesh, MorphableModel,
};
use morphgen_core::scene::{auto_frame, Camera, Illumination, Pose, DEFAULT_FILL};
use morphgen_core::seed::rng_from;

/// A posed toy face ready for rasterization.
pub struct BenchScene {
    pub model: MorphableModel,
    pub mesh: FaceMesh,
    pub pose: Pose,
    pub camera: Camera,
    pub illumination: Illumination,
}

pub fn toy_scene(rings: usize, frame: u32) -> BenchScene {
    let model = make_toy_model(rings, 20, 20, 10, 1).expect("toy model");
    let mut rng = rng_from(5);
    let id = sample_identity(&model, &mut rng);
    let ex = sample_expression(&model, &mut rng);
    let mesh = synthesize_instance(&model, &id, &ex).expect("coefficients match");
    let camera = Camera::for_frame(frame, frame);
    let pose = Pose::from_degrees(25.0, -10.0, 5.0);
    let t = auto_frame(&mesh, &pose.rotation(), &camera, DEFAULT_FILL).expect("frameable");
    BenchScene {
        model,
        mesh,
        pose: pose.with_translation(t),
        camera,
        illumination: Illumination::dc_identity(),
    }
}
