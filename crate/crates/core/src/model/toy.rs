//! Procedural stand-in for a licensed face model.
//!
//! The mean shape is a UV sphere squashed into a face-like ellipsoid whose
//! `+z` pole carries a small nose bump. Bases are seeded Gaussian matrices
//! orthonormalized column by column.

use nalgebra::Vector3;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{ModelError, MorphableModel};
use crate::seed::rng_from;
use crate::Rng;

pub const TOY_LANDMARK_COUNT: usize = 21;

const SCALE: [f64; 3] = [1.0, 1.3, 0.8];
const NOSE_TIP: f64 = 0.25;
const NOSE_RING: f64 = 0.08;
const SKIN: [f64; 3] = [0.80, 0.60, 0.50];

/// Unit UV sphere with poles on the z axis.
///
/// Vertex 0 is the `+z` pole, followed by `rings - 1` latitude rings of
/// `rings` vertices each and finally the `-z` pole. Triangles wind
/// counter-clockwise seen from outside; there are `2 * rings * (rings - 1)`.
pub(crate) fn uv_sphere(rings: usize) -> (Vec<Vector3<f64>>, Vec<[u32; 3]>) {
    let segments = rings;
    let mut positions = vec![Vector3::z()];
    for k in 1..rings {
        let theta = std::f64::consts::PI * k as f64 / rings as f64;
        for j in 0..segments {
            let phi = std::f64::consts::TAU * j as f64 / segments as f64;
            positions.push(Vector3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ));
        }
    }
    let south = positions.len() as u32;
    positions.push(-Vector3::z());

    let ring = |k: usize, j: usize| (1 + (k - 1) * segments + j % segments) as u32;
    let mut triangles = Vec::with_capacity(2 * rings * (rings - 1));
    for j in 0..segments {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for k in 1..rings - 1 {
        for j in 0..segments {
            let (u0, u1) = (ring(k, j), ring(k, j + 1));
            let (l0, l1) = (ring(k + 1, j), ring(k + 1, j + 1));
            triangles.push([u0, l0, l1]);
            triangles.push([u0, l1, u1]);
        }
    }
    for j in 0..segments {
        triangles.push([ring(rings - 1, j), south, ring(rings - 1, j + 1)]);
    }
    (positions, triangles)
}

/// Column-wise modified Gram-Schmidt on a seeded Gaussian `dims x k` matrix.
fn orthonormal_basis(rng: &mut Rng, dims: usize, k: usize) -> Vec<f32> {
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k);
    while columns.len() < k {
        let mut v: Vec<f64> = (0..dims).map(|_| rng.sample(StandardNormal)).collect();
        for q in &columns {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        columns.push(v);
    }
    columns
        .into_iter()
        .flat_map(|c| c.into_iter().map(|x| x as f32))
        .collect()
}

/// Descending sigmas, log-uniform in `[0.5, 5.0]`.
fn sigmas(rng: &mut Rng, k: usize) -> Vec<f32> {
    let (lo, hi) = (0.5f64.ln(), 5.0f64.ln());
    let mut s: Vec<f32> = (0..k).map(|_| rng.random_range(lo..=hi).exp() as f32).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Greedy farthest-point selection starting from vertex 0; ties go to the lower index.
fn farthest_points(points: &[Vector3<f64>], count: usize) -> Vec<u32> {
    let mut chosen = vec![0u32];
    let mut dist: Vec<f64> = points.iter().map(|p| (p - points[0]).norm()).collect();
    while chosen.len() < count.min(points.len()) {
        let (next, _) =
            dist.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |best, (i, &d)| {
                    if d > best.1 {
                        (i, d)
                    } else {
                        best
                    }
                },
            );
        chosen.push(next as u32);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min((p - points[next]).norm());
        }
    }
    chosen
}

/// Builds a deterministic toy model.
///
/// `v_rings` controls the tessellation (at least 4). Models with fewer than
/// 21 vertices get one landmark per vertex.
pub fn make_toy_model(
    v_rings: usize,
    shape_components: usize,
    color_components: usize,
    expr_components: usize,
    seed: u64,
) -> Result<MorphableModel, ModelError> {
    if v_rings < 4 {
        return Err(ModelError::BadParameter(format!(
            "rings must be at least 4, got {v_rings}"
        )));
    }
    let (sphere, triangles) = uv_sphere(v_rings);
    let dims = 3 * sphere.len();
    for (name, k) in [
        ("ks", shape_components),
        ("kc", color_components),
        ("ke", expr_components),
    ] {
        if k == 0 || k > dims {
            return Err(ModelError::BadParameter(format!(
                "{name} must be in [1, {dims}], got {k}"
            )));
        }
    }

    let positions: Vec<Vector3<f64>> = sphere
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut q = p.component_mul(&Vector3::from(SCALE));
            if i == 0 {
                q.z += NOSE_TIP;
            } else if (1..=v_rings).contains(&i) {
                q.z += NOSE_RING;
            }
            q
        })
        .collect();

    let mut rng = rng_from(seed);
    let shape_basis = orthonormal_basis(&mut rng, dims, shape_components);
    let shape_sigma = sigmas(&mut rng, shape_components);
    let color_basis = orthonormal_basis(&mut rng, dims, color_components);
    let color_sigma = sigmas(&mut rng, color_components);
    let expr_basis = orthonormal_basis(&mut rng, dims, expr_components);
    let expr_sigma = sigmas(&mut rng, expr_components);
    let mean_color = (0..sphere.len())
        .flat_map(|_| SKIN)
        .map(|c| (c + rng.random_range(-0.03..=0.03)) as f32)
        .collect::<Vec<_>>();

    let mean_shape = positions
        .iter()
        .flat_map(|p| [p.x as f32, p.y as f32, p.z as f32])
        .collect();
    let landmark_indices = farthest_points(&positions, TOY_LANDMARK_COUNT);

    let model = MorphableModel {
        mean_shape,
        shape_basis,
        shape_sigma,
        mean_color,
        color_basis,
        color_sigma,
        expr_basis,
        expr_sigma,
        triangles,
        landmark_indices,
    };
    model.validate()?;
    Ok(model)
}
