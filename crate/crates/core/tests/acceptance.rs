//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::scenes::{dc_albedo_trial, marker_trial, zbuffer_trial};
use common::{read_bytes, Fixture};
use image::{Rgb, RgbImage};
use morphgen_core::datagen::{
    augment_mirror, frontal_bias_spec, generate_dataset, half_identity_spec, rotate_about, rotate_point,
    sample_rotation_angle, DatasetSpec, Preset, MANIFEST_FILE,
};
use morphgen_core::eval::{
    build_verification_pairs, detection_accuracy, landmark_error, roc, tar_at_far, verification_report,
    FoldedPair, RocPoint, ScoredPair,
};
use morphgen_core::model::{make_toy_model, MorphableModel};
use morphgen_core::render::{rasterize, FaceBox};
use morphgen_core::scene::{sh_basis, Camera, Illumination};
use morphgen_core::seed::rng_from;
use morphgen_core::{ManifestRecord, Rng};
use nalgebra::Vector3;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const DESK_BUDGET: Duration = Duration::from_secs(120);
const CHI2_BINS: usize = 12;
const CHI2_MIN_P: f64 = 0.01;

/// Toy model at the command-line defaults.
fn toy_model() -> MorphableModel {
    make_toy_model(16, 10, 10, 5, 0).unwrap()
}

fn desk_spec(fx: &Fixture) -> DatasetSpec {
    let mut spec = DatasetSpec::from_preset(Preset::RecognitionDesk, &fx.prior, &fx.backgrounds);
    spec.seed = 2024;
    spec
}

fn chi2_uniform_p(values: impl Iterator<Item = f64>, lo: f64, hi: f64) -> f64 {
    let mut counts = [0u64; CHI2_BINS];
    let mut n = 0u64;
    for v in values {
        let k = ((v - lo) / (hi - lo) * CHI2_BINS as f64).floor() as usize;
        counts[k.min(CHI2_BINS - 1)] += 1;
        n += 1;
    }
    let expected = n as f64 / CHI2_BINS as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    1.0 - ChiSquared::new((CHI2_BINS - 1) as f64).unwrap().cdf(stat)
}

fn generator_fidelity(fx: &Fixture, model: &MorphableModel, desk: &mut Vec<ManifestRecord>) -> Outcome {
    let spec = desk_spec(fx);
    check!(
        spec.width == 128 && spec.height == 128,
        "preset frame {}x{}",
        spec.width,
        spec.height
    );
    let start = Instant::now();
    let m = generate_dataset(&spec, model, fx.out("desk"), Some(1)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check!(m.len() == 2000, "{} records", m.len());
    let mut ps = Vec::new();
    for (name, lo, hi, get) in [
        (
            "yaw",
            -90.0,
            90.0,
            (|r: &ManifestRecord| r.pose.yaw) as fn(&ManifestRecord) -> f64,
        ),
        ("pitch", -30.0, 30.0, |r| r.pose.pitch),
        ("roll", -15.0, 15.0, |r| r.pose.roll),
    ] {
        check!(
            m.records.iter().all(|r| (lo..=hi).contains(&get(r))),
            "{name} outside [{lo}, {hi}]"
        );
        let p = chi2_uniform_p(m.records.iter().map(get), lo, hi);
        check!(p > CHI2_MIN_P, "{name} chi2 p = {p:.4}");
        ps.push(format!("{name} p={p:.3}"));
    }
    check!(elapsed < DESK_BUDGET, "took {elapsed:?}");
    *desk = m.records;
    Ok(format!(
        "2000 records in {:.1}s, {}",
        elapsed.as_secs_f64(),
        ps.join(", ")
    ))
}

fn bias_constructions(fx: &Fixture, model: &MorphableModel) -> Outcome {
    let base = desk_spec(fx);
    let frontal = generate_dataset(&frontal_bias_spec(&base), model, fx.out("frontal"), Some(1))
        .map_err(|e| e.to_string())?;
    let max_yaw = frontal
        .records
        .iter()
        .map(|r| r.pose.yaw.abs())
        .fold(0.0, f64::max);
    check!(frontal.len() == 2000, "frontal: {} records", frontal.len());
    check!(max_yaw <= 35.0, "frontal: max |yaw| {max_yaw}");

    let half = half_identity_spec(&base).map_err(|e| e.to_string())?;
    let half = generate_dataset(&half, model, fx.out("half"), Some(1)).map_err(|e| e.to_string())?;
    let ids: std::collections::BTreeSet<u64> = half.records.iter().map(|r| r.identity_id).collect();
    check!(
        ids.len() == 100 && half.len() == 2000,
        "half: {} identities, {} records",
        ids.len(),
        half.len()
    );
    Ok(format!("frontal max |yaw| {max_yaw:.2}, half-identity 100 x 20"))
}

/// Every distinct score as a threshold, counted directly.
fn brute_force_roc(pairs: &[ScoredPair]) -> Vec<RocPoint> {
    let pos = pairs.iter().filter(|p| p.same).count() as f64;
    let neg = pairs.len() as f64 - pos;
    let mut thresholds: Vec<f64> = pairs.iter().map(|p| p.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds
        .into_iter()
        .map(|t| RocPoint {
            threshold: t,
            far: pairs.iter().filter(|p| !p.same && p.score >= t).count() as f64 / neg,
            tar: pairs.iter().filter(|p| p.same && p.score >= t).count() as f64 / pos,
        })
        .collect()
}

/// Linear interpolation between the highest point at FAR <= target (origin
/// included) and the lowest point past it.
fn brute_force_tar(curve: &[RocPoint], far: f64) -> f64 {
    let below = curve
        .iter()
        .filter(|p| p.far <= far)
        .map(|p| (p.far, p.tar))
        .fold((0.0, 0.0), |a, b| if (b.0, b.1) > a { b } else { a });
    let above = curve.iter().filter(|p| p.far > far).map(|p| (p.far, p.tar)).fold(
        None,
        |a: Option<(f64, f64)>, b| match a {
            Some(a) if a <= b => Some(a),
            _ => Some(b),
        },
    );
    match above {
        None => below.1,
        Some((f, t)) => below.1 + (far - below.0) / (f - below.0) * (t - below.1),
    }
}

fn metric_oracle() -> Outcome {
    let mut rng = rng_from(31);
    let pairs: Vec<ScoredPair> = (0..1000)
        .map(|_| {
            let same = rng.random_bool(0.5);
            // Coarse scores force many ties.
            let score = (rng.random_range(0..200) as f64 + if same { 40.0 } else { 0.0 }) / 100.0;
            ScoredPair::new(score, same)
        })
        .collect();
    let curve = roc(&pairs).map_err(|e| e.to_string())?;
    check!(
        curve == brute_force_roc(&pairs),
        "ROC differs from the brute-force oracle"
    );
    let mut fars: Vec<f64> = (1..100).map(|k| k as f64 / 100.0).collect();
    fars.extend(curve.iter().map(|p| p.far).filter(|f| *f > 0.0 && *f < 1.0));
    for &f in &fars {
        let (got, want) = (tar_at_far(&curve, f).unwrap(), brute_force_tar(&curve, f));
        check!(got == want, "TAR@{f}: {got} vs oracle {want}");
    }

    let example = [(0.9, true), (0.8, false), (0.7, true), (0.6, false)].map(|(s, y)| ScoredPair::new(s, y));
    let tar = tar_at_far(&roc(&example).unwrap(), 0.1).unwrap();
    check!(tar == 0.5, "4-pair example TAR@0.1 = {tar}");
    Ok(format!(
        "{} ROC points and {} TAR@FAR queries exact, 4-pair TAR@0.1 = 0.5",
        curve.len(),
        fars.len()
    ))
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn protocol_sanity(desk: &[ManifestRecord]) -> Outcome {
    check!(!desk.is_empty(), "desk manifest unavailable");
    const DIM: usize = 200;
    const PER_CLASS: usize = 300;
    let labels: Vec<u64> = desk.iter().map(|r| r.identity_id).collect();
    let mut rng = rng_from(4);
    let pairs = build_verification_pairs(&labels, 10, PER_CLASS, &mut rng).map_err(|e| e.to_string())?;

    let noise = Normal::new(0.0, 0.05).unwrap();
    let one_hot: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| {
            (0..DIM)
                .map(|k| (k as u64 == l % DIM as u64) as u8 as f64 + noise.sample(&mut rng))
                .collect()
        })
        .collect();
    let random: Vec<Vec<f64>> = labels
        .iter()
        .map(|_| unit((0..DIM).map(|_| StandardNormal.sample(&mut rng)).collect()))
        .collect();

    let evaluate = |emb: &[Vec<f64>]| {
        let scored: Vec<FoldedPair> = pairs
            .iter()
            .map(|p| FoldedPair {
                score: morphgen_core::eval::cosine_similarity(&emb[p.a], &emb[p.b]).unwrap(),
                same: p.same,
                fold: p.fold,
            })
            .collect();
        let r = verification_report(&scored, &[0.1]).unwrap();
        (r.accuracy_mean, r.tar_at_far[0].1)
    };
    let (acc, tar) = evaluate(&one_hot);
    check!(
        acc >= 0.99 && tar >= 0.99,
        "one-hot: accuracy {acc}, TAR@0.1 {tar}"
    );
    let (racc, rtar) = evaluate(&random);
    check!((racc - 0.5).abs() <= 0.04, "random: accuracy {racc}");
    check!((rtar - 0.1).abs() <= 0.03, "random: TAR@0.1 {rtar}");
    Ok(format!(
        "one-hot acc {acc:.4} TAR {tar:.4}; random acc {racc:.4} TAR {rtar:.4} ({} pairs)",
        pairs.len()
    ))
}

fn landmark_exactness() -> Outcome {
    let b = FaceBox::new(10.0, 20.0, 70.0, 100.0);
    check!(b.diagonal() == 100.0, "diagonal {}", b.diagonal());
    let gt: Vec<[f64; 2]> = (0..21)
        .map(|k| [15.0 + 2.5 * k as f64, 30.0 + 3.0 * k as f64])
        .collect();
    let e0 = landmark_error(&gt, &gt, &b).unwrap();
    check!(e0 == 0.0, "pred = gt error {e0}");
    for t in [0.03, 0.05] {
        check!(
            detection_accuracy(&[e0], t).unwrap() == 1.0,
            "pred = gt not detected at {t}"
        );
    }
    let shifted: Vec<[f64; 2]> = gt.iter().map(|p| [p[0] + 3.0, p[1] + 4.0]).collect();
    let e = landmark_error(&shifted, &gt, &b).unwrap();
    check!(e == 0.05, "(3,4) offset error {e}");
    let (at5, at3) = (
        detection_accuracy(&[e], 0.05).unwrap(),
        detection_accuracy(&[e], 0.03).unwrap(),
    );
    check!(at5 == 1.0 && at3 == 0.0, "accuracy {at5} at 5%, {at3} at 3%");
    Ok("error 0 and 0.05 exactly; 0.05 counts as detected at 5%".into())
}

fn rendering_invariants(fx: &Fixture, model: &MorphableModel) -> Outcome {
    let spec = fx.spec(3, 2);
    let (a, b) = (fx.out("repeat-a"), fx.out("repeat-b"));
    let ma = generate_dataset(&spec, model, &a, Some(1)).map_err(|e| e.to_string())?;
    generate_dataset(&spec, model, &b, Some(1)).map_err(|e| e.to_string())?;
    check!(
        read_bytes(a.join(MANIFEST_FILE)) == read_bytes(b.join(MANIFEST_FILE)),
        "manifests differ"
    );
    for r in &ma.records {
        check!(
            read_bytes(a.join(&r.image_path)) == read_bytes(b.join(&r.image_path)),
            "{} differs",
            r.image_path
        );
    }
    let mesh = common::scenes::random_face(model, &mut rng_from(8));
    let cam = Camera::for_frame(128, 128);
    let pose = common::scenes::framed_pose(&mesh, &cam, &mut rng_from(9));
    let light = Illumination::dc_identity();
    check!(
        rasterize(&mesh, &pose, &cam, &light) == rasterize(&mesh, &pose, &cam, &light),
        "framebuffers differ"
    );

    let mut rng = rng_from(1000);
    let (mut compared, mut mismatches) = (0, 0);
    for _ in 0..1000 {
        let t = zbuffer_trial(&mut rng);
        compared += t.compared;
        mismatches += t.mismatches;
    }
    check!(
        mismatches == 0,
        "z-buffer: {mismatches} mismatches over {compared} pixels"
    );

    let marker_model = make_toy_model(12, 6, 6, 3, 2).unwrap();
    let mut rng = rng_from(77);
    let (mut scenes, mut flagged, mut worst) = (0, 0, 0.0f64);
    while scenes < 100 {
        if let Some(t) = marker_trial(&marker_model, &mut rng) {
            scenes += 1;
            flagged += t.flagged as usize;
            worst = worst.max(t.distance);
        }
    }
    check!(worst <= 1.0, "marker up to {worst:.3} px from its landmark");

    let mut rng = rng_from(5);
    for _ in 0..50 {
        let (covered, wrong) = dc_albedo_trial(model, &mut rng);
        check!(
            covered > 0 && wrong == 0,
            "DC albedo: {wrong} of {covered} pixels off"
        );
    }
    Ok(format!(
        "repeat runs identical; z-buffer 0 mismatches over {compared} pixels; marker max {worst:.3} px \
         ({flagged}/100 flagged visible); DC albedo exact on 50 meshes"
    ))
}

fn sh_orthonormality() -> Outcome {
    let mut rng = rng_from(123);
    let n = 100_000;
    let mut gram = [[0.0f64; 9]; 9];
    for _ in 0..n {
        let v: Vector3<f64> = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
        let y = sh_basis(&v.normalize()).map_err(|e| e.to_string())?;
        for i in 0..9 {
            for j in 0..9 {
                gram[i][j] += y[i] * y[j];
            }
        }
    }
    let scale = 4.0 * std::f64::consts::PI / n as f64;
    let mut worst = 0.0f64;
    for (i, row) in gram.iter().enumerate() {
        for (j, g) in row.iter().enumerate() {
            worst = worst.max((g * scale - (i == j) as u8 as f64).abs());
        }
    }
    check!(worst <= 0.02, "max Gram deviation {worst:.4}");
    Ok(format!("max Gram deviation {worst:.4}"))
}

fn augmentation() -> Outcome {
    let mut rng = rng_from(6);
    let img = RgbImage::from_fn(37, 29, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
    let lms: Vec<[f64; 2]> = (0..6)
        .map(|_| [rng.random_range(0.0..36.0), rng.random_range(0.0..28.0)])
        .collect();
    let pairs = [1, 0, 3, 2, 4, 5];
    let (once, l1) = augment_mirror(&img, &lms, &pairs).map_err(|e| e.to_string())?;
    let (twice, l2) = augment_mirror(&once, &l1, &pairs).map_err(|e| e.to_string())?;
    check!(twice == img, "mirrored twice: image changed");
    let drift = lms
        .iter()
        .zip(&l2)
        .map(|(p, q)| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()))
        .fold(0.0, f64::max);
    check!(drift <= 1e-12, "mirrored twice: landmarks moved {drift:e}");
    // Coordinates on a 1/256 grid survive the round trip bit for bit.
    let grid: Vec<[f64; 2]> = lms
        .iter()
        .map(|p| p.map(|v| (v * 256.0).round() / 256.0))
        .collect();
    let (g1, gl1) = augment_mirror(&img, &grid, &pairs).map_err(|e| e.to_string())?;
    let (_, gl2) = augment_mirror(&g1, &gl1, &pairs).map_err(|e| e.to_string())?;
    check!(gl2 == grid, "mirrored twice: grid landmarks changed");

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let angle = sample_rotation_angle(&mut rng);
        let center = [rng.random_range(0.0..36.0), rng.random_range(0.0..28.0)];
        let (_, rotated) = rotate_about(&img, &lms, center, angle);
        for (p, q) in lms.iter().zip(&rotated) {
            let back = rotate_point(*q, center, -angle);
            worst = worst.max((back[0] - p[0]).hypot(back[1] - p[1]));
        }
    }
    check!(worst <= 1e-6, "unrotate error {worst:e}");

    let mut rng: Rng = rng_from(7);
    let angles: Vec<f64> = (0..10_000).map(|_| sample_rotation_angle(&mut rng)).collect();
    let lo = angles.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = angles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    check!(lo >= -30.0 && hi <= 30.0, "angles outside [-30, 30]: {lo}..{hi}");
    check!(
        lo < -27.0 && hi > 27.0,
        "angles do not reach the ends: {lo}..{hi}"
    );
    Ok(format!("mirror involution exact on pixels (landmark drift {drift:.0e}), unrotate error {worst:.1e}, angles {lo:.2}..{hi:.2}"))
}

fn report(number: usize, name: &str, run: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match outcome {
        Ok(detail) => {
            println!("criterion {number}: PASS {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("criterion {number}: FAIL {name}: {detail}");
            false
        }
    }
}

fn main() {
    let fx = Fixture::new();
    let model = toy_model();
    let mut desk = Vec::new();
    let results = [
        report(1, "generator protocol fidelity", || {
            generator_fidelity(&fx, &model, &mut desk)
        }),
        report(2, "bias constructions", || bias_constructions(&fx, &model)),
        report(3, "metric oracle equivalence", metric_oracle),
        report(4, "protocol sanity", || protocol_sanity(&desk)),
        report(5, "landmark metric exactness", landmark_exactness),
        report(6, "rendering invariants", || rendering_invariants(&fx, &model)),
        report(7, "SH numerics", sh_orthonormality),
        report(8, "augmentation", augmentation),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
