//! Line-oriented JSON manifests: one record per generated image.

use std::fs;
use std::io::{BufWriter, ErrorKind, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::DatagenError;
use crate::render::FaceBox;
use crate::scene::{Illumination, Pose};

/// Pose as stored in manifests: angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub translation: [f64; 3],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let [yaw, pitch, roll] = p.degrees();
        Self {
            yaw,
            pitch,
            roll,
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl PoseRecord {
    pub fn to_pose(&self) -> Pose {
        Pose::from_degrees(self.yaw, self.pitch, self.roll).with_translation(self.translation.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Relative to the manifest's directory.
    pub image_path: String,
    pub identity_id: u64,
    pub sample_idx: u64,
    pub pose: PoseRecord,
    /// 27 SH coefficients, channel-major.
    pub illumination: Vec<f64>,
    pub landmarks: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
    pub face_box: FaceBox,
    pub background_id: String,
    pub spec_hash: String,
    /// Seed of the stream the identity's shape and color were drawn from.
    pub identity_seed: u64,
    pub image_seed: u64,
    /// Keys written by other tools, carried through untouched.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ManifestRecord {
    pub fn illumination(&self) -> Option<Illumination> {
        Illumination::from_flat(&self.illumination).ok()
    }

    fn check(&self) -> Result<(), String> {
        if self.illumination.len() != 27 {
            return Err(format!(
                "illumination has {} values, expected 27",
                self.illumination.len()
            ));
        }
        if self.landmarks.len() != self.visible.len() {
            return Err(format!(
                "{} landmarks but {} visibility flags",
                self.landmarks.len(),
                self.visible.len()
            ));
        }
        if !self.face_box.is_valid() {
            return Err(format!("invalid face box {:?}", self.face_box));
        }
        Ok(())
    }
}

/// Records ordered by `(identity_id, sample_idx)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, DatagenError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |reason: String| DatagenError::BadRecord { line: i + 1, reason };
            let record: ManifestRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            record.check().map_err(bad)?;
            Ok(record)
        })
        .collect()
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>, DatagenError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => DatagenError::MissingFile(path.display().to_string()),
        _ => DatagenError::Io(e),
    })?;
    parse_manifest(&text)
}

pub fn write_manifest(records: &[ManifestRecord], path: impl AsRef<Path>) -> Result<(), DatagenError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: u64) -> ManifestRecord {
        ManifestRecord {
            image_path: format!("images/{i:06}_0000.png"),
            identity_id: i,
            sample_idx: 0,
            pose: PoseRecord {
                yaw: 12.5,
                pitch: -3.0,
                roll: 0.1,
                translation: [0.0, 0.1, -9.0],
            },
            illumination: (0..27).map(|k| k as f64 * 0.1).collect(),
            landmarks: vec![[1.5, 2.25], [100.0, -3.0]],
            visible: vec![true, false],
            face_box: FaceBox::new(0.0, -5.0, 101.0, 3.0),
            background_id: "bg.png".into(),
            spec_hash: "abc".into(),
            identity_seed: u64::MAX - 3,
            image_seed: 42,
            extra: Map::new(),
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut records = vec![record(0), record(1)];
        records[1].extra.insert("note".into(), Value::from("kept"));
        write_manifest(&records, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), records);
    }

    #[test]
    fn unknown_keys_survive() {
        let mut line = serde_json::to_value(record(3)).unwrap();
        line["annotator"] = Value::from("x");
        let parsed = parse_manifest(&line.to_string()).unwrap();
        assert_eq!(parsed[0].extra["annotator"], "x");
        let again = serde_json::to_value(&parsed[0]).unwrap();
        assert_eq!(again, line);
    }

    #[test]
    fn truncated_line_reports_its_number() {
        let good = serde_json::to_string(&record(0)).unwrap();
        let text = format!("{good}\n{}\n", &good[..good.len() / 2]);
        assert!(matches!(
            parse_manifest(&text),
            Err(DatagenError::BadRecord { line: 2, .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        fs::write(&path, "").unwrap();
        assert!(read_manifest(&path).unwrap().is_empty());
    }
}
