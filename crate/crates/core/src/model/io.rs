//! `MFM1` model files.
//!
//! Layout: the 4-byte magic, a little-endian `u32` byte length followed by a
//! UTF-8 JSON header `{V, T, Ks, Kc, Ke, L}`, then the payload:
//! `mean_shape, shape_basis, shape_sigma, mean_color, color_basis,
//! color_sigma, expr_basis, expr_sigma` as little-endian `f32` (bases
//! column-major) and `triangles, landmark_indices` as little-endian `u32`.

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, MorphableModel};

pub const MAGIC: &[u8; 4] = b"MFM1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelHeader {
    #[serde(rename = "V")]
    pub vertices: u32,
    #[serde(rename = "T")]
    pub triangles: u32,
    #[serde(rename = "Ks")]
    pub shape_components: u32,
    #[serde(rename = "Kc")]
    pub color_components: u32,
    #[serde(rename = "Ke")]
    pub expr_components: u32,
    #[serde(rename = "L")]
    pub landmarks: u32,
}

impl ModelHeader {
    fn payload_words(&self) -> u64 {
        let dims = 3 * self.vertices as u64;
        let block = |k: u32| dims * k as u64 + k as u64;
        2 * dims
            + block(self.shape_components)
            + block(self.color_components)
            + block(self.expr_components)
            + 3 * self.triangles as u64
            + self.landmarks as u64
    }
}

/// Serializes a model into `MFM1` bytes.
pub fn encode_model(model: &MorphableModel) -> Vec<u8> {
    let header = serde_json::to_vec(&model.header()).expect("header serializes");
    let mut out = Vec::with_capacity(8 + header.len() + 4 * model.header().payload_words() as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for block in [
        &model.mean_shape,
        &model.shape_basis,
        &model.shape_sigma,
        &model.mean_color,
        &model.color_basis,
        &model.color_sigma,
        &model.expr_basis,
        &model.expr_sigma,
    ] {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for tri in &model.triangles {
        for i in tri {
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    for i in &model.landmark_indices {
        out.extend_from_slice(&i.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl Cursor<'_> {
    fn words(&mut self, n: usize) -> impl Iterator<Item = [u8; 4]> + '_ {
        let (head, rest) = self.bytes.split_at(4 * n);
        self.bytes = rest;
        head.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]])
    }

    fn f32s(&mut self, n: usize) -> Vec<f32> {
        self.words(n).map(f32::from_le_bytes).collect()
    }

    fn u32s(&mut self, n: usize) -> Vec<u32> {
        self.words(n).map(u32::from_le_bytes).collect()
    }
}

/// Parses `MFM1` bytes and validates the model.
pub fn decode_model(bytes: &[u8]) -> Result<MorphableModel, ModelError> {
    if bytes.len() < 4 {
        return Err(ModelError::DimensionMismatch(format!(
            "file is only {} bytes long",
            bytes.len()
        )));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(ModelError::BadMagic(magic));
    }
    if bytes.len() < 8 {
        return Err(ModelError::DimensionMismatch("truncated header length".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_bytes = bytes
        .get(8..8 + header_len)
        .ok_or_else(|| ModelError::DimensionMismatch("truncated header".into()))?;
    let header: ModelHeader = serde_json::from_slice(header_bytes)
        .map_err(|e| ModelError::DimensionMismatch(format!("unreadable header: {e}")))?;

    let payload = &bytes[8 + header_len..];
    let expected = header.payload_words() * 4;
    if payload.len() as u64 != expected {
        return Err(ModelError::DimensionMismatch(format!(
            "header {header:?} implies {expected} payload bytes, file holds {}",
            payload.len()
        )));
    }

    let dims = 3 * header.vertices as usize;
    let (ks, kc, ke) = (
        header.shape_components as usize,
        header.color_components as usize,
        header.expr_components as usize,
    );
    let mut cur = Cursor { bytes: payload };
    let mean_shape = cur.f32s(dims);
    let shape_basis = cur.f32s(dims * ks);
    let shape_sigma = cur.f32s(ks);
    let mean_color = cur.f32s(dims);
    let color_basis = cur.f32s(dims * kc);
    let color_sigma = cur.f32s(kc);
    let expr_basis = cur.f32s(dims * ke);
    let expr_sigma = cur.f32s(ke);
    let triangles = cur
        .u32s(3 * header.triangles as usize)
        .chunks_exact(3)
        .map(|t| [t[0], t[1], t[2]])
        .collect();
    let landmark_indices = cur.u32s(header.landmarks as usize);

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

pub fn load_model(path: impl AsRef<Path>) -> Result<MorphableModel, ModelError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => ModelError::MissingFile(path.display().to_string()),
        _ => ModelError::Io(e),
    })?;
    decode_model(&bytes)
}

pub fn save_model(model: &MorphableModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    model.validate()?;
    fs::write(path, encode_model(model))?;
    Ok(())
}
