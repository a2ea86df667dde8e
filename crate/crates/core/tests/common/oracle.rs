//! Brute-force references used by the rendering tests.

use morphgen_core::scene::Camera;
use nalgebra::Vector3;

/// Ray through the center of pixel `(x, y)` for a camera at the origin looking down `-z`.
pub fn pixel_ray(camera: &Camera, x: u32, y: u32) -> Vector3<f64> {
    let [cx, cy] = camera.principal_point;
    Vector3::new(
        (x as f64 - cx) / camera.focal_length,
        -(y as f64 - cy) / camera.focal_length,
        -1.0,
    )
}

/// Moller-Trumbore ray/triangle intersection from the origin. Returns the
/// ray parameter (equal to depth for rays with `dir.z = -1`) and the
/// barycentrics `(u, v)` of vertices `b` and `c`.
pub fn intersect(dir: &Vector3<f64>, tri: &[Vector3<f64>; 3]) -> Option<(f64, f64, f64)> {
    let [a, b, c] = tri;
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let s = -a;
    let u = s.dot(&p) / det;
    let q = s.cross(&e1);
    let v = dir.dot(&q) / det;
    let t = e2.dot(&q) / det;
    (u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 0.0).then_some((t, u, v))
}

/// Projected pixel position (no principal-point rounding games).
pub fn project(camera: &Camera, p: &Vector3<f64>) -> [f64; 2] {
    let [cx, cy] = camera.principal_point;
    [
        cx + camera.focal_length * p.x / -p.z,
        cy - camera.focal_length * p.y / -p.z,
    ]
}

/// Smallest distance in pixels from `q` to the edges of a projected triangle.
pub fn edge_distance(q: [f64; 2], tri: &[[f64; 2]; 3]) -> f64 {
    (0..3)
        .map(|i| {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            ((q[0] - a[0]) * dy - (q[1] - a[1]) * dx).abs() / dx.hypot(dy)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Signed screen area (y down); negative means counter-clockwise for the viewer.
pub fn screen_area(tri: &[[f64; 2]; 3]) -> f64 {
    let [a, b, c] = tri;
    ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) / 2.0
}
