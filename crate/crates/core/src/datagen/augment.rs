//! 2D augmentation baseline applied to already-rendered images.

use image::{Rgb, RgbImage};
use rand::Rng as _;

use super::DatagenError;
use crate::render::FaceBox;
use crate::Rng;

/// Maximum absolute rotation in degrees.
pub const MAX_ROTATION_DEG: f64 = 30.0;
/// Rotated copies produced per source image.
pub const ROTATED_COPIES: usize = 2;

/// Horizontal flip. `flip_pairs[i]` names the landmark that becomes index
/// `i` after mirroring and must be an involution (left/right swap).
pub fn augment_mirror(
    image: &RgbImage,
    landmarks: &[[f64; 2]],
    flip_pairs: &[usize],
) -> Result<(RgbImage, Vec<[f64; 2]>), DatagenError> {
    let n = landmarks.len();
    if flip_pairs.len() != n {
        return Err(DatagenError::BadPairing(format!(
            "{} pairs for {n} landmarks",
            flip_pairs.len()
        )));
    }
    for (i, &j) in flip_pairs.iter().enumerate() {
        if j >= n || flip_pairs[j] != i {
            return Err(DatagenError::BadPairing(format!(
                "pairing is not an involution at index {i}"
            )));
        }
    }
    let width = image.width();
    let mirrored = image::imageops::flip_horizontal(image);
    let lms = flip_pairs
        .iter()
        .map(|&j| [(width as f64 - 1.0) - landmarks[j][0], landmarks[j][1]])
        .collect();
    Ok((mirrored, lms))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotatedSample {
    pub image: RgbImage,
    pub landmarks: Vec<[f64; 2]>,
    pub angle_deg: f64,
}

/// Rigid rotation of a pixel coordinate about `center`. Positive angles turn
/// clockwise on screen (image y grows downward).
pub fn rotate_point(p: [f64; 2], center: [f64; 2], angle_deg: f64) -> [f64; 2] {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
    [center[0] + c * dx - s * dy, center[1] + s * dx + c * dy]
}

/// Rotates the image (bilinear, black outside the source frame) and the
/// landmarks by the same rigid transform.
pub fn rotate_about(
    image: &RgbImage,
    landmarks: &[[f64; 2]],
    center: [f64; 2],
    angle_deg: f64,
) -> (RgbImage, Vec<[f64; 2]>) {
    let (w, h) = image.dimensions();
    let (max_x, max_y) = (w as f64 - 1.0, h as f64 - 1.0);
    const EDGE_EPS: f64 = 1e-9;
    let out = RgbImage::from_fn(w, h, |x, y| {
        let [sx, sy] = rotate_point([x as f64, y as f64], center, -angle_deg);
        if !(sx >= -EDGE_EPS && sy >= -EDGE_EPS && sx <= max_x + EDGE_EPS && sy <= max_y + EDGE_EPS) {
            return Rgb([0, 0, 0]);
        }
        let (sx, sy) = (sx.clamp(0.0, max_x), sy.clamp(0.0, max_y));
        let (x0, y0) = (sx.floor() as u32, sy.floor() as u32);
        let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let p = |x: u32, y: u32, c: usize| image.get_pixel(x, y)[c] as f64;
        Rgb([0, 1, 2].map(|c| {
            let top = p(x0, y0, c) * (1.0 - fx) + p(x1, y0, c) * fx;
            let bottom = p(x0, y1, c) * (1.0 - fx) + p(x1, y1, c) * fx;
            (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8
        }))
    });
    let lms = landmarks
        .iter()
        .map(|&p| rotate_point(p, center, angle_deg))
        .collect();
    (out, lms)
}

/// Uniform angle in `[-30, 30]` degrees.
pub fn sample_rotation_angle(rng: &mut Rng) -> f64 {
    rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG)
}

/// Random rotation about the face-box center.
pub fn augment_rotate(
    image: &RgbImage,
    landmarks: &[[f64; 2]],
    face_box: &FaceBox,
    rng: &mut Rng,
) -> RotatedSample {
    let angle_deg = sample_rotation_angle(rng);
    let (image, landmarks) = rotate_about(image, landmarks, face_box.center(), angle_deg);
    RotatedSample {
        image,
        landmarks,
        angle_deg,
    }
}

/// The full rotation baseline: [`ROTATED_COPIES`] independent rotations of one image.
pub fn rotation_copies(
    image: &RgbImage,
    landmarks: &[[f64; 2]],
    face_box: &FaceBox,
    rng: &mut Rng,
) -> Vec<RotatedSample> {
    (0..ROTATED_COPIES)
        .map(|_| augment_rotate(image, landmarks, face_box, rng))
        .collect()
}
