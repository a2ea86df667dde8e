//! Randomized render trials shared by the rendering tests and the acceptance run.

use morphgen_core::model::{
    sample_expression, sample_identity, synthesize_instance, FaceMesh, MorphableModel,
};
use morphgen_core::render::{project_landmarks, rasterize};
use morphgen_core::scene::{auto_frame, sample_pose, Camera, Illumination, Pose, PoseRanges};
use morphgen_core::Rng;
use nalgebra::Vector3;
use rand::Rng as _;

use super::oracle::{edge_distance, intersect, pixel_ray, project, screen_area};

/// Pixels closer than this to a projected edge depend on sub-pixel snapping.
pub const EDGE_MARGIN_PX: f64 = 0.01;
/// Relative depth gap below which two surfaces count as tied.
pub const DEPTH_TIE: f64 = 1e-3;

#[derive(Debug, Default, Clone, Copy)]
pub struct ZTrial {
    pub compared: usize,
    pub excluded: usize,
    pub mismatches: usize,
}

fn random_triangle(rng: &mut Rng, camera: &Camera) -> [Vector3<f64>; 3] {
    loop {
        let depth = rng.random_range(3.0..12.0);
        let center = Vector3::new(
            rng.random_range(-0.2..0.2) * depth,
            rng.random_range(-0.2..0.2) * depth,
            -depth,
        );
        let mut tri = [0; 3].map(|_| {
            center
                + Vector3::new(
                    rng.random_range(-0.2..0.2) * depth,
                    rng.random_range(-0.2..0.2) * depth,
                    rng.random_range(-0.3..0.3) * depth,
                )
        });
        let screen = tri.map(|p| project(camera, &p));
        let area = screen_area(&screen);
        if area.abs() < 4.0 {
            continue;
        }
        if area > 0.0 {
            tri.swap(1, 2);
        }
        return tri;
    }
}

/// Two random front-facing triangles, one red and one blue, rendered in
/// camera space and compared pixel by pixel with a ray-cast nearest-hit oracle.
pub fn zbuffer_trial(rng: &mut Rng) -> ZTrial {
    let camera = Camera::for_frame(48, 48);
    let tris = [random_triangle(rng, &camera), random_triangle(rng, &camera)];
    let colors = [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
    let mesh = FaceMesh::from_parts(
        tris.iter().flatten().copied().collect(),
        (0..6).map(|i| colors[i / 3]).collect(),
        vec![[0, 1, 2], [3, 4, 5]],
    );
    let fb = rasterize(&mesh, &Pose::frontal(), &camera, &Illumination::dc_identity());
    let screens = tris.map(|t| t.map(|p| project(&camera, &p)));

    let mut out = ZTrial::default();
    for y in 0..camera.image_height {
        for x in 0..camera.image_width {
            let q = [x as f64, y as f64];
            let dir = pixel_ray(&camera, x, y);
            let hits: Vec<Option<f64>> = tris.iter().map(|t| intersect(&dir, t).map(|h| h.0)).collect();
            let near_edge = screens.iter().any(|s| edge_distance(q, s) < EDGE_MARGIN_PX);
            let tied = match (hits[0], hits[1]) {
                (Some(a), Some(b)) => (a - b).abs() < DEPTH_TIE * a.max(b),
                _ => false,
            };
            if near_edge || tied {
                out.excluded += 1;
                continue;
            }
            let expected = match (hits[0], hits[1]) {
                (None, None) => None,
                (Some(_), None) => Some(0),
                (None, Some(_)) => Some(1),
                (Some(a), Some(b)) => Some(if a <= b { 0 } else { 1 }),
            };
            let i = fb.index(x, y);
            let got = fb.coverage[i].then(|| if fb.color[i][0] > 0.5 { 0 } else { 1 });
            out.compared += 1;
            if got != expected {
                out.mismatches += 1;
            }
        }
    }
    out
}

pub fn random_face(model: &MorphableModel, rng: &mut Rng) -> FaceMesh {
    let id = sample_identity(model, rng);
    let ex = sample_expression(model, rng);
    synthesize_instance(model, &id, &ex).unwrap()
}

pub fn framed_pose(mesh: &FaceMesh, camera: &Camera, rng: &mut Rng) -> Pose {
    let pose = sample_pose(&PoseRanges::default(), rng);
    let t = auto_frame(mesh, &pose.rotation(), camera, 0.7).unwrap();
    pose.with_translation(t)
}

/// Marker vertex weight at or above which a pixel "shows" the marker color.
pub const MARKER_DOMINANT: f64 = 0.5;

/// Ray-cast visibility oracle: the vertex is unoccluded by any front-facing
/// triangle and every triangle around it faces the camera (not on a silhouette).
pub fn interior_visible(mesh: &FaceMesh, pose: &Pose, camera: &Camera, vertex: u32) -> bool {
    let cam: Vec<Vector3<f64>> = mesh.positions.iter().map(|p| pose.transform(p)).collect();
    let target = cam[vertex as usize];
    if target.z >= -camera.near_plane {
        return false;
    }
    let front = |t: &[u32; 3]| {
        let tri = t.map(|i| cam[i as usize]);
        tri.iter().all(|p| p.z < -camera.near_plane) && screen_area(&tri.map(|p| project(camera, &p))) < 0.0
    };
    let dir = target / -target.z;
    for t in &mesh.triangles {
        if t.contains(&vertex) {
            if !front(t) {
                return false;
            }
        } else if front(t) {
            if let Some((depth, _, _)) = intersect(&dir, &t.map(|i| cam[i as usize])) {
                if depth < -target.z * (1.0 - 1e-9) {
                    return false;
                }
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy)]
pub struct MarkerTrial {
    /// Landmark flagged visible by the renderer.
    pub flagged: bool,
    /// Pixel distance from the projected landmark to the nearest pixel dominated by the marker.
    pub distance: f64,
}

/// Picks a random landmark that the ray-cast oracle sees away from any
/// silhouette, colors its vertex white and everything else black, and renders
/// under DC light. `None` when the scene has no such landmark.
pub fn marker_trial(model: &MorphableModel, rng: &mut Rng) -> Option<MarkerTrial> {
    let camera = Camera::for_frame(128, 128);
    let mut mesh = random_face(model, rng);
    let pose = framed_pose(&mesh, &camera, rng);
    let candidates: Vec<usize> = (0..model.landmark_count())
        .filter(|&k| interior_visible(&mesh, &pose, &camera, model.landmark_indices[k]))
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let pick = candidates[rng.random_range(0..candidates.len())];
    let vertex = model.landmark_indices[pick] as usize;
    for (i, c) in mesh.colors.iter_mut().enumerate() {
        *c = if i == vertex { [1.0; 3] } else { [0.0; 3] };
    }
    let fb = rasterize(&mesh, &pose, &camera, &Illumination::dc_identity());
    let lm = project_landmarks(model, &mesh, &pose, &camera, &fb)[pick];
    let [lx, ly] = lm.xy;
    let mut distance = f64::INFINITY;
    for y in 0..fb.height {
        for x in 0..fb.width {
            let i = fb.index(x, y);
            if fb.coverage[i] && fb.color[i][0] >= MARKER_DOMINANT {
                distance = distance.min((x as f64 - lx).hypot(y as f64 - ly));
            }
        }
    }
    Some(MarkerTrial {
        flagged: lm.visible,
        distance,
    })
}

/// Renders a constant-albedo face under DC-identity light; returns
/// `(covered pixels, pixels differing from the 8-bit albedo)`.
pub fn dc_albedo_trial(model: &MorphableModel, rng: &mut Rng) -> (usize, usize) {
    let camera = Camera::for_frame(96, 96);
    let mut mesh = random_face(model, rng);
    let albedo: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    mesh.colors.iter_mut().for_each(|c| *c = albedo);
    let pose = framed_pose(&mesh, &camera, rng);
    let fb = rasterize(&mesh, &pose, &camera, &Illumination::dc_identity());
    let expected = albedo.map(|v| (v * 255.0).round() as u8);
    let covered = fb.covered_count();
    let wrong = (0..fb.height)
        .flat_map(|y| (0..fb.width).map(move |x| (x, y)))
        .filter(|&(x, y)| fb.coverage[fb.index(x, y)] && fb.pixel_rgb8(x, y) != expected)
        .count();
    (covered, wrong)
}
