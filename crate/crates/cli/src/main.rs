//! `morphgen`: synthetic face datasets and the metrics to score models on them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use morphgen_core::datagen::{
    frontal_bias_spec, generate_dataset, half_identity_spec, read_manifest, DatasetSpec, Preset,
    MANIFEST_FILE,
};
use morphgen_core::eval::{
    bias_report, compare_reports, join_predictions, landmark_report, read_embeddings, read_pairs,
    read_predictions, score_pairs, verification_report, BiasReport, ScoreMode, DEFAULT_BETA,
};
use morphgen_core::model::{load_model, make_toy_model, save_model};
use morphgen_core::scene::synthetic_prior;
use morphgen_core::seed::rng_from;

const SEED_ENV: &str = "MORPHGEN_SEED";

#[derive(Parser)]
#[command(
    name = "morphgen",
    version,
    about = "Synthetic face datasets from a morphable model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a procedural toy morphable model (MFM1 format).
    MakeToyModel(MakeToyModel),
    /// Write a synthetic spherical-harmonics illumination prior (JSON).
    MakePrior(MakePrior),
    /// Render a dataset and its manifest.
    Generate(Generate),
    /// Score verification pairs from an embedding file.
    EvalVerification(EvalVerification),
    /// Score landmark predictions against a manifest.
    EvalLandmarks(EvalLandmarks),
    /// Summarize (or compare) dataset parameter distributions.
    BiasReport(BiasReportArgs),
}

#[derive(Args)]
struct SeedArg {
    /// RNG seed (default 0); MORPHGEN_SEED overrides it when set.
    #[arg(long)]
    seed: Option<u64>,
}

impl SeedArg {
    fn resolve(&self) -> Result<Option<u64>> {
        match std::env::var(SEED_ENV) {
            Ok(v) => Ok(Some(v.trim().parse().with_context(|| {
                format!("{SEED_ENV}={v:?} is not an unsigned integer")
            })?)),
            Err(_) => Ok(self.seed),
        }
    }
}

#[derive(Args)]
struct Output {
    /// Also write the JSON report to this file.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Print a readable table instead of JSON.
    #[arg(long)]
    human: bool,
}

impl Output {
    fn emit<T: Serialize>(&self, report: &T, human: impl FnOnce() -> String) -> Result<()> {
        let json = serde_json::to_string_pretty(report)? + "\n";
        if let Some(path) = &self.output {
            std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
        }
        if self.human {
            print!("{}", human());
        } else {
            print!("{json}");
        }
        Ok(())
    }
}

#[derive(Args)]
struct MakeToyModel {
    #[arg(long, default_value_t = 16)]
    rings: usize,
    #[arg(long, default_value_t = 10)]
    ks: usize,
    #[arg(long, default_value_t = 10)]
    kc: usize,
    #[arg(long, default_value_t = 5)]
    ke: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct MakePrior {
    #[arg(long, default_value_t = 64)]
    count: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct Generate {
    /// Named dataset size.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    preset: Option<Preset>,
    /// Dataset spec as JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    /// Illumination prior (JSON); overrides the spec file.
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Directory of PNG backgrounds; overrides the spec file.
    #[arg(long)]
    backgrounds: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    /// Restrict yaw to [-35, 35] degrees.
    #[arg(long)]
    frontal_bias: bool,
    /// Half the identities with twice the samples each.
    #[arg(long)]
    half_identities: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct EvalVerification {
    /// JSON lines `{id, template_id?, vector}`.
    #[arg(long)]
    embeddings: PathBuf,
    /// JSON lines `{a, b, same, fold}`.
    #[arg(long)]
    pairs: PathBuf,
    /// Pair endpoints name templates; score with softmax averaging.
    #[arg(long)]
    template: bool,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// FAR values to report TAR at.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    far: Vec<f64>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct EvalLandmarks {
    /// JSON lines `{image_path, predicted}`.
    #[arg(long)]
    predictions: PathBuf,
    /// Manifest with ground truth, or the dataset directory holding it.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.03,0.05")]
    thresholds: Vec<f64>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct BiasReportArgs {
    /// Manifest, or the dataset directory holding it.
    #[arg(long)]
    manifest: PathBuf,
    /// Second manifest to compare against.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

fn make_toy(a: &MakeToyModel) -> Result<()> {
    let seed = a.seed.resolve()?.unwrap_or(0);
    let model = make_toy_model(a.rings, a.ks, a.kc, a.ke, seed)?;
    save_model(&model, &a.output).with_context(|| format!("writing {}", a.output.display()))?;
    println!("{}", serde_json::to_string(&model.header())?);
    Ok(())
}

fn make_prior(a: &MakePrior) -> Result<()> {
    if a.count == 0 {
        bail!("--count must be at least 1");
    }
    let seed = a.seed.resolve()?.unwrap_or(0);
    let prior = synthetic_prior(a.count, &mut rng_from(seed));
    std::fs::write(&a.output, prior.to_json() + "\n")
        .with_context(|| format!("writing {}", a.output.display()))?;
    println!("{{\"samples\":{}}}", prior.samples().len());
    Ok(())
}

fn generate(a: &Generate) -> Result<()> {
    let mut spec = match (&a.preset, &a.spec) {
        (Some(p), _) => {
            let (Some(prior), Some(bg)) = (&a.prior, &a.backgrounds) else {
                bail!("--preset needs --prior and --backgrounds");
            };
            DatasetSpec::from_preset(*p, prior, bg)
        }
        (None, Some(path)) => {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut s: DatasetSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if let Some(p) = &a.prior {
                s.illumination_prior_path = p.clone();
            }
            if let Some(b) = &a.backgrounds {
                s.background_dir = b.clone();
            }
            s
        }
        (None, None) => bail!("one of --preset or --spec is required"),
    };
    if let Some(seed) = a.seed.resolve()? {
        spec.seed = seed;
    }
    if a.frontal_bias {
        spec = frontal_bias_spec(&spec);
    }
    if a.half_identities {
        spec = half_identity_spec(&spec)?;
    }
    if a.jobs == Some(0) {
        bail!("--jobs must be at least 1");
    }
    let model = load_model(&a.model)?;
    let manifest = generate_dataset(&spec, &model, &a.output, a.jobs)?;
    println!(
        "{}",
        serde_json::json!({
            "records": manifest.len(),
            "identities": spec.num_identities,
            "samples_per_identity": spec.samples_per_identity,
            "spec_hash": spec.hash(),
            "manifest": a.output.join(MANIFEST_FILE),
        })
    );
    Ok(())
}

fn eval_verification(a: &EvalVerification) -> Result<()> {
    let embeddings =
        read_embeddings(&a.embeddings).with_context(|| format!("reading {}", a.embeddings.display()))?;
    let pairs = read_pairs(&a.pairs).with_context(|| format!("reading {}", a.pairs.display()))?;
    let mode = if a.template {
        ScoreMode::Template { beta: a.beta }
    } else {
        ScoreMode::Image
    };
    let scored = score_pairs(&embeddings, &pairs, mode)?;
    let report = verification_report(&scored, &a.far)?;
    a.out.emit(&report, || {
        let mut s = String::new();
        let _ = writeln!(s, "pairs     {}", report.pairs);
        let _ = writeln!(
            s,
            "accuracy  {:.4} +- {:.4} ({} folds)",
            report.accuracy_mean, report.accuracy_sd, report.folds
        );
        for (far, tar) in &report.tar_at_far {
            let _ = writeln!(s, "TAR@FAR={far}  {tar:.4}");
        }
        s
    })
}

fn eval_landmarks(a: &EvalLandmarks) -> Result<()> {
    let manifest = read_manifest(manifest_path(&a.manifest))?;
    let predictions =
        read_predictions(&a.predictions).with_context(|| format!("reading {}", a.predictions.display()))?;
    let joined = join_predictions(&predictions, &manifest)?;
    let report = landmark_report(&joined, &a.thresholds)?;
    a.out.emit(&report, || {
        let mut s = String::new();
        let _ = writeln!(s, "images      {}", report.images);
        let _ = writeln!(s, "mean error  {:.5}", report.mean_error);
        for (t, acc) in &report.accuracy {
            let _ = writeln!(s, "acc@{:<6}  {:.2}%", format!("{}%", t * 100.0), acc * 100.0);
        }
        s
    })
}

fn histogram_rows(s: &mut String, name: &str, edges: &[[f64; 2]], values: &[String]) {
    let _ = writeln!(s, "{name}");
    for (e, v) in edges.iter().zip(values) {
        let _ = writeln!(s, "  [{:>5}, {:>5})  {v}", e[0], e[1]);
    }
}

fn human_report(r: &BiasReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "images      {}", r.images);
    let _ = writeln!(s, "identities  {}", r.identity_count);
    let _ = writeln!(s, "max |yaw|   {:.3}", r.yaw_abs_max);
    let _ = writeln!(s, "|yaw| > 35  {:.4}", r.yaw_outside_frontal);
    let edges = r.yaw.bin_edges();
    for (name, h) in [("yaw", &r.yaw), ("pitch", &r.pitch), ("roll", &r.roll)] {
        let counts: Vec<String> = h.counts.iter().map(|c| c.to_string()).collect();
        histogram_rows(&mut s, name, &edges, &counts);
    }
    let _ = writeln!(s, "backgrounds");
    for (b, n) in &r.background_usage {
        let _ = writeln!(s, "  {b}  {n}");
    }
    s
}

fn bias(a: &BiasReportArgs) -> Result<()> {
    let first = bias_report(&read_manifest(manifest_path(&a.manifest))?)?;
    match &a.compare {
        None => a.out.emit(&first, || human_report(&first)),
        Some(other) => {
            let second = bias_report(&read_manifest(manifest_path(other))?)?;
            let cmp = compare_reports(&first, &second);
            a.out.emit(&cmp, || {
                let mut s = String::new();
                let _ = writeln!(
                    s,
                    "identities  {} vs {}",
                    cmp.identity_count[0], cmp.identity_count[1]
                );
                for (name, d) in [("yaw", &cmp.yaw), ("pitch", &cmp.pitch), ("roll", &cmp.roll)] {
                    let v: Vec<String> = d.iter().map(|x| format!("{x:.4}")).collect();
                    histogram_rows(&mut s, &format!("{name} |freq diff|"), &cmp.bin_edges, &v);
                }
                s
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::MakeToyModel(a) => make_toy(&a),
        Command::MakePrior(a) => make_prior(&a),
        Command::Generate(a) => generate(&a),
        Command::EvalVerification(a) => eval_verification(&a),
        Command::EvalLandmarks(a) => eval_landmarks(&a),
        Command::BiasReport(a) => bias(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
