#![allow(dead_code)]

pub mod oracle;
pub mod scenes;

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use morphgen_core::datagen::DatasetSpec;
use morphgen_core::model::{make_toy_model, MorphableModel};
use morphgen_core::scene::synthetic_prior;
use morphgen_core::seed::rng_from;
use nalgebra::Vector3;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub prior: PathBuf,
    pub backgrounds: PathBuf,
    pub model: MorphableModel,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let prior = dir.path().join("prior.json");
        std::fs::write(&prior, synthetic_prior(16, &mut rng_from(3)).to_json()).unwrap();
        let backgrounds = dir.path().join("bg");
        std::fs::create_dir(&backgrounds).unwrap();
        for (i, size) in [(40u32, 30u32), (200, 150), (64, 256)].into_iter().enumerate() {
            let img = RgbImage::from_fn(size.0, size.1, |x, y| {
                Rgb([(x * 3 + i as u32 * 50) as u8, (y * 5) as u8, ((x ^ y) * 7) as u8])
            });
            img.save(backgrounds.join(format!("bg{i}.png"))).unwrap();
        }
        let model = make_toy_model(12, 6, 6, 3, 11).unwrap();
        Self {
            dir,
            prior,
            backgrounds,
            model,
        }
    }

    pub fn spec(&self, n: u64, m: u64) -> DatasetSpec {
        DatasetSpec {
            num_identities: n,
            samples_per_identity: m,
            pose_ranges: Default::default(),
            expression_enabled: true,
            illumination_prior_path: self.prior.clone(),
            background_dir: self.backgrounds.clone(),
            seed: 5,
            width: 64,
            height: 64,
            fill: 0.7,
        }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// UV sphere of unit radius, triangles counter-clockwise seen from outside.
pub fn unit_sphere(rings: usize) -> (Vec<Vector3<f64>>, Vec<[u32; 3]>) {
    let seg = 2 * rings;
    let mut pos = vec![Vector3::z()];
    for i in 1..rings {
        let theta = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..seg {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / seg as f64;
            pos.push(Vector3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ));
        }
    }
    pos.push(-Vector3::z());
    let ring = |i: usize, j: usize| (1 + (i - 1) * seg + j % seg) as u32;
    let south = pos.len() as u32 - 1;
    let mut tris = Vec::new();
    for j in 0..seg {
        tris.push([0, ring(1, j), ring(1, j + 1)]);
        tris.push([south, ring(rings - 1, j + 1), ring(rings - 1, j)]);
    }
    for i in 1..rings - 1 {
        for j in 0..seg {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            tris.push([a, c, d]);
            tris.push([a, d, b]);
        }
    }
    (pos, tris)
}

pub fn read_bytes(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}
