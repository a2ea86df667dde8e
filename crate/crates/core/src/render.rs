//! Software rasterizer, background compositing and landmark annotation.
//!
//! Triangles are snapped to a 1/256 pixel grid and filled with exact integer
//! half-space tests under the top-left rule, so triangles sharing an edge
//! never double-cover or drop a pixel. Pixel centers are at integer
//! coordinates. Attributes use perspective-correct barycentrics and the
//! z-buffer keeps the fragment closest to the camera (first drawn wins ties).

use image::{Rgb, RgbImage};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FaceMesh, MorphableModel};
use crate::scene::{project_unchecked, shade, Camera, Illumination, Pose};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("background texture is empty")]
    EmptyTexture,
}

const SUBPIXEL_BITS: u32 = 8;
const SUBPIXEL: f64 = (1 << SUBPIXEL_BITS) as f64;
/// Snapped coordinates beyond this many pixels are rejected so that edge
/// products fit in `i64`.
const GUARD_BAND_PX: f64 = (1 << 20) as f64;

/// Depth tolerance for landmark visibility, in model units.
pub const VISIBILITY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Framebuffer {
    pub width: u32,
    pub height: u32,
    /// Linear RGB in `[0, 1]`.
    pub color: Vec<[f64; 3]>,
    /// Distance along the camera axis (`-z`); `+inf` where uncovered.
    pub depth: Vec<f64>,
    pub coverage: Vec<bool>,
    /// Index into the mesh's triangle list of the visible fragment; [`NO_TRIANGLE`] where uncovered.
    pub triangle: Vec<u32>,
}

pub const NO_TRIANGLE: u32 = u32::MAX;

impl Framebuffer {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            color: vec![[0.0; 3]; n],
            depth: vec![f64::INFINITY; n],
            coverage: vec![false; n],
            triangle: vec![NO_TRIANGLE; n],
        }
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn covered_count(&self) -> usize {
        self.coverage.iter().filter(|c| **c).count()
    }

    pub fn pixel_rgb8(&self, x: u32, y: u32) -> [u8; 3] {
        to_rgb8(self.color[self.index(x, y)])
    }

    /// 8-bit face render; uncovered pixels are black.
    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |x, y| Rgb(self.pixel_rgb8(x, y)))
    }
}

pub fn to_rgb8(c: [f64; 3]) -> [u8; 3] {
    c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}

#[derive(Clone, Copy)]
struct ScreenVertex {
    /// Snapped fixed-point coordinates.
    x: i64,
    y: i64,
    /// Distance along the view axis, > 0.
    depth: f64,
    index: usize,
}

fn snap(v: f64) -> i64 {
    (v * SUBPIXEL).round() as i64
}

/// `(b - a) x (p - a)` in fixed point; positive on the inner side of a
/// clockwise-on-screen (y-down) triangle.
fn edge(a: &ScreenVertex, b: &ScreenVertex, px: i64, py: i64) -> i64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

/// Top edge (horizontal, pointing right) or left edge (pointing up).
fn is_top_left(a: &ScreenVertex, b: &ScreenVertex) -> bool {
    (a.y == b.y && b.x > a.x) || b.y < a.y
}

fn inside(w: i64, top_left: bool) -> bool {
    w > 0 || (w == 0 && top_left)
}

/// Rasterizes a posed mesh with per-pixel SH Lambertian shading.
///
/// Triangles with a vertex at or behind the near plane are dropped, as are
/// triangles wound clockwise as seen by the viewer (back faces).
pub fn rasterize(mesh: &FaceMesh, pose: &Pose, camera: &Camera, illum: &Illumination) -> Framebuffer {
    let rotation = pose.rotation();
    let cam_positions: Vec<Vector3<f64>> = mesh
        .positions
        .iter()
        .map(|p| rotation * p + pose.translation)
        .collect();
    let cam_normals: Vec<Vector3<f64>> = mesh.normals.iter().map(|n| rotation * n).collect();

    let mut fb = Framebuffer::new(camera.image_width, camera.image_height);
    let (w, h) = (camera.image_width as i64, camera.image_height as i64);

    let screen: Vec<Option<ScreenVertex>> = cam_positions
        .iter()
        .enumerate()
        .map(|(index, p)| {
            if p.z >= -camera.near_plane {
                return None;
            }
            let [u, v] = project_unchecked(camera, p);
            if !(u.abs() < GUARD_BAND_PX && v.abs() < GUARD_BAND_PX) {
                return None;
            }
            Some(ScreenVertex {
                x: snap(u),
                y: snap(v),
                depth: -p.z,
                index,
            })
        })
        .collect();

    for (ti, tri) in mesh.triangles.iter().enumerate() {
        let [Some(a), Some(b), Some(c)] = tri.map(|i| screen[i as usize]) else {
            continue;
        };
        // Viewer-CCW triangles have negative signed area in y-down coordinates;
        // reorder them to the clockwise form the edge tests expect.
        let area = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        if area >= 0 {
            continue;
        }
        let v = [a, c, b];
        let area = -area;

        let min_x = v.iter().map(|p| p.x).min().unwrap();
        let max_x = v.iter().map(|p| p.x).max().unwrap();
        let min_y = v.iter().map(|p| p.y).min().unwrap();
        let max_y = v.iter().map(|p| p.y).max().unwrap();
        let sub = 1i64 << SUBPIXEL_BITS;
        let x0 = (min_x.div_euclid(sub) + i64::from(min_x.rem_euclid(sub) != 0)).max(0);
        let x1 = max_x.div_euclid(sub).min(w - 1);
        let y0 = (min_y.div_euclid(sub) + i64::from(min_y.rem_euclid(sub) != 0)).max(0);
        let y1 = max_y.div_euclid(sub).min(h - 1);
        if x0 > x1 || y0 > y1 {
            continue;
        }

        let tl = [
            is_top_left(&v[1], &v[2]),
            is_top_left(&v[2], &v[0]),
            is_top_left(&v[0], &v[1]),
        ];
        let inv_depth = v.map(|p| 1.0 / p.depth);

        for py in y0..=y1 {
            for px in x0..=x1 {
                let (sx, sy) = (px * sub, py * sub);
                let e = [
                    edge(&v[1], &v[2], sx, sy),
                    edge(&v[2], &v[0], sx, sy),
                    edge(&v[0], &v[1], sx, sy),
                ];
                if !(0..3).all(|k| inside(e[k], tl[k])) {
                    continue;
                }
                let lambda = e.map(|x| x as f64 / area as f64);
                let recip: f64 = (0..3).map(|k| lambda[k] * inv_depth[k]).sum();
                let depth = 1.0 / recip;
                let idx = fb.index(px as u32, py as u32);
                if !(depth < fb.depth[idx]) {
                    continue;
                }
                let weights = [0, 1, 2].map(|k| lambda[k] * inv_depth[k] * depth);
                let mut albedo = [0.0; 3];
                let mut normal = Vector3::zeros();
                for k in 0..3 {
                    let vi = v[k].index;
                    for (ch, a) in albedo.iter_mut().enumerate() {
                        *a += weights[k] * mesh.colors[vi][ch];
                    }
                    normal += weights[k] * cam_normals[vi];
                }
                let len = normal.norm();
                let normal = if len > 0.0 { normal / len } else { Vector3::z() };
                fb.depth[idx] = depth;
                fb.coverage[idx] = true;
                fb.triangle[idx] = ti as u32;
                fb.color[idx] = shade(albedo, illum, &normal);
            }
        }
    }
    fb
}

/// Scales `texture` to cover a `width x height` frame (nearest neighbour) and
/// crops the center.
pub fn cover_crop(texture: &RgbImage, width: u32, height: u32) -> Result<RgbImage, RenderError> {
    let (tw, th) = texture.dimensions();
    if tw == 0 || th == 0 {
        return Err(RenderError::EmptyTexture);
    }
    let scale = (width as f64 / tw as f64).max(height as f64 / th as f64);
    let off_x = (tw as f64 * scale - width as f64) / 2.0;
    let off_y = (th as f64 * scale - height as f64) / 2.0;
    let src = |dst: u32, off: f64, limit: u32| -> u32 {
        (((dst as f64 + 0.5 + off) / scale).floor() as i64).clamp(0, limit as i64 - 1) as u32
    };
    Ok(RgbImage::from_fn(width, height, |x, y| {
        *texture.get_pixel(src(x, off_x, tw), src(y, off_y, th))
    }))
}

/// Hard-mask composite: covered pixels keep the face, the rest show the
/// cover-cropped texture.
pub fn composite_background(fb: &Framebuffer, texture: &RgbImage) -> Result<RgbImage, RenderError> {
    let mut out = cover_crop(texture, fb.width, fb.height)?;
    for y in 0..fb.height {
        for x in 0..fb.width {
            if fb.coverage[fb.index(x, y)] {
                out.put_pixel(x, y, Rgb(fb.pixel_rgb8(x, y)));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedLandmark {
    pub xy: [f64; 2],
    pub visible: bool,
}

/// Projects every model landmark; none are dropped.
///
/// A landmark is visible when it lies in front of the camera and inside the
/// frame, its nearest pixel is covered, and there either the drawn triangle is
/// incident to the landmark vertex or the landmark is no more than
/// [`VISIBILITY_TOLERANCE`] behind the z-buffer.
pub fn project_landmarks(
    model: &MorphableModel,
    mesh: &FaceMesh,
    pose: &Pose,
    camera: &Camera,
    fb: &Framebuffer,
) -> Vec<ProjectedLandmark> {
    let rotation = pose.rotation();
    model
        .landmark_indices
        .iter()
        .map(|&i| {
            let p = rotation * mesh.positions[i as usize] + pose.translation;
            let xy = project_unchecked(camera, &p);
            let visible = p.z < -camera.near_plane && depth_test(mesh, fb, i, xy, -p.z);
            ProjectedLandmark { xy, visible }
        })
        .collect()
}

fn depth_test(mesh: &FaceMesh, fb: &Framebuffer, vertex: u32, xy: [f64; 2], depth: f64) -> bool {
    let (cx, cy) = (xy[0].round(), xy[1].round());
    if !(cx >= 0.0 && cy >= 0.0 && cx < fb.width as f64 && cy < fb.height as f64) {
        return false;
    }
    let idx = fb.index(cx as u32, cy as u32);
    if fb.triangle[idx] == NO_TRIANGLE {
        return false;
    }
    mesh.triangles[fb.triangle[idx] as usize].contains(&vertex)
        || depth <= fb.depth[idx] + VISIBILITY_TOLERANCE
}

/// Axis-aligned face box in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl FaceBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn is_valid(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite())
            && self.x0 <= self.x1
            && self.y0 <= self.y1
    }

    pub fn diagonal(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl Serialize for FaceBox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for FaceBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        <[f64; 4]>::deserialize(d).map(Self::from_array)
    }
}

/// Margin used when all landmarks coincide.
pub const DEGENERATE_BOX_MARGIN: f64 = 1.0;

/// Tight landmark bounds grown by 5% of their diagonal on every side.
///
/// Panics on an empty landmark set.
pub fn face_box(landmarks: &[[f64; 2]]) -> FaceBox {
    assert!(!landmarks.is_empty(), "face_box needs at least one landmark");
    let mut b = FaceBox::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for [x, y] in landmarks {
        b.x0 = b.x0.min(*x);
        b.y0 = b.y0.min(*y);
        b.x1 = b.x1.max(*x);
        b.y1 = b.y1.max(*y);
    }
    let diag = b.diagonal();
    let margin = if diag > 0.0 {
        0.05 * diag
    } else {
        DEGENERATE_BOX_MARGIN
    };
    FaceBox::new(b.x0 - margin, b.y0 - margin, b.x1 + margin, b.y1 + margin)
}

/// Per-image ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub landmarks: Vec<ProjectedLandmark>,
    pub face_box: FaceBox,
    pub pose: Pose,
    pub illumination: Illumination,
    pub identity_id: u64,
    pub background_id: String,
}
