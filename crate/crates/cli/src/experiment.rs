//! `experiment`: the four paper-style drivers plus extractor pretraining,
//! each producing a report JSON and its artifacts under the output
//! directory.

use std::path::Path;

use clap::{Args, Subcommand};
use pclab_core::experiments::{
    build_class_dataset, build_clustering_dataset, build_fps_vs_uniform_dataset, load_gan_state,
    metric_spectrum_experiment, no_generator_train, pretrain_feature_extractor,
    procedural_meshes, save_cloud_set, save_gan_state, stream_rng, train_classifier,
    train_gan_with, GanState, TrainConfig,
};
use pclab_core::geometry::density::kde_density;
use pclab_core::geometry::io::save_ply_density;
use pclab_core::geometry::procedural::ShapeClass;
use pclab_core::geometry::sampling::sample_mesh_uniform;
use pclab_core::geometry::PointCloud;
use pclab_core::metrics::MetricReport;
use pclab_core::networks::{ExtractorVariant, NetKind, NetworkSpec};
use pclab_core::{Error, Result};

use crate::config::Resolved;
use crate::eval::load_extractors;

/// Offset separating test-mesh seeds from train-mesh seeds.
const TEST_SEED_OFFSET: u64 = 100_000;

#[derive(Args)]
pub struct ExperimentArgs {
    #[command(subcommand)]
    kind: ExperimentKind,
}

#[derive(Subcommand)]
enum ExperimentKind {
    /// Real-vs-fake classification of sampling artifacts.
    Table1(Table1Args),
    /// Metric spectrum: score degraded copies of a reference set.
    Table2(Table2Args),
    /// Discriminator gradients move learnable clouds directly.
    Nogen(NogenArgs),
    /// WGAN-gp training of a generator against one discriminator.
    Gan(GanArgs),
    /// Pretrain the three feature extractors.
    Pretrain(PretrainArgs),
}

fn parse_net(s: &str) -> std::result::Result<NetKind, String> {
    NetKind::parse(s).ok_or_else(|| format!("unknown network '{}'", s))
}

fn parse_class(s: &str) -> std::result::Result<ShapeClass, String> {
    ShapeClass::parse(s).ok_or_else(|| format!("unknown shape class '{}'", s))
}

#[derive(Args)]
pub struct Table1Args {
    /// Discriminator under test.
    #[arg(long, value_parser = parse_net)]
    disc: NetKind,
    /// Artifact dataset: clustering or fps.
    #[arg(long, value_parser = ["clustering", "fps"])]
    dataset: String,
    /// Training meshes (clouds come in real/fake pairs per mesh).
    #[arg(long, default_value_t = 100)]
    meshes: usize,
    /// Held-out test meshes.
    #[arg(long, default_value_t = 100)]
    test_meshes: usize,
    #[arg(long, value_parser = parse_class, default_value = "chair")]
    class: ShapeClass,
}

#[derive(Args)]
pub struct Table2Args {
    /// Directory with the pretrained extractor weights.
    #[arg(long)]
    weights: std::path::PathBuf,
    /// Meshes in the reference set.
    #[arg(long, default_value_t = 30)]
    meshes: usize,
    #[arg(long, value_parser = parse_class, default_value = "chair")]
    class: ShapeClass,
}

#[derive(Args)]
pub struct NogenArgs {
    #[arg(long, value_parser = parse_net)]
    disc: NetKind,
    /// Learnable clouds on the fake side.
    #[arg(long, default_value_t = 100)]
    clouds: usize,
    /// Real shapes to train against.
    #[arg(long, default_value_t = 100)]
    shapes: usize,
    #[arg(long, value_parser = parse_class, default_value = "chair")]
    class: ShapeClass,
}

#[derive(Args)]
pub struct GanArgs {
    /// Generator: fc-generator or deform-generator.
    #[arg(long, value_parser = parse_net)]
    gen: NetKind,
    #[arg(long, value_parser = parse_net)]
    disc: NetKind,
    #[arg(long, default_value_t = 100)]
    shapes: usize,
    #[arg(long, value_parser = parse_class, default_value = "chair")]
    class: ShapeClass,
    /// Continue from the latest checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
pub struct PretrainArgs {
    /// Training shapes per class (seven classes).
    #[arg(long, default_value_t = 30)]
    per_class: usize,
}

pub fn run(args: &ExperimentArgs, resolved: &Resolved) -> Result<()> {
    match &args.kind {
        ExperimentKind::Table1(a) => run_table1(a, resolved),
        ExperimentKind::Table2(a) => run_table2(a, resolved),
        ExperimentKind::Nogen(a) => run_nogen(a, resolved),
        ExperimentKind::Gan(a) => run_gan(a, resolved),
        ExperimentKind::Pretrain(a) => run_pretrain(a, resolved),
    }
}

fn disc_spec(kind: NetKind, resolved: &Resolved, points: usize) -> Result<NetworkSpec> {
    if !kind.is_discriminator() {
        return Err(Error::invalid(format!(
            "{} is not a discriminator",
            kind.name()
        )));
    }
    Ok(NetworkSpec::new(kind)
        .with_width(resolved.width)
        .with_points(points)
        .with_knn(resolved.knn))
}

/// Uniform `points`-point clouds from `count` procedural meshes; the mesh
/// seeds and the sampling stream both derive from the master seed.
fn real_clouds(
    class: ShapeClass,
    count: usize,
    points: usize,
    seed: u64,
) -> Result<Vec<PointCloud>> {
    let meshes = procedural_meshes(class, count, seed)?;
    let mut rng = stream_rng(seed, "data");
    meshes
        .iter()
        .map(|m| sample_mesh_uniform(m, points, &mut rng))
        .collect()
}

fn run_table1(args: &Table1Args, resolved: &Resolved) -> Result<()> {
    let points = resolved.points;
    let spec = disc_spec(args.disc, resolved, points)?;
    let train_meshes = procedural_meshes(args.class, args.meshes, resolved.seed)?;
    let test_meshes =
        procedural_meshes(args.class, args.test_meshes, resolved.seed + TEST_SEED_OFFSET)?;
    let mut rng = stream_rng(resolved.seed, "dataset");
    let (train, test) = match args.dataset.as_str() {
        "clustering" => build_clustering_dataset(&train_meshes, &test_meshes, points, &mut rng)?,
        "fps" => build_fps_vs_uniform_dataset(&train_meshes, &test_meshes, points, &mut rng)?,
        other => return Err(Error::invalid(format!("unknown dataset '{}'", other))),
    };
    let mut report = train_classifier(&spec, &train, &test, &resolved.train)?;
    let out = &resolved.out_dir;
    std::fs::create_dir_all(out)?;
    report.artifacts.push("report.json".to_string());
    report.save_json(&out.join("report.json"))?;
    resolved.write_snapshot(
        "experiment table1",
        serde_json::json!({
            "disc": args.disc.name(),
            "dataset": args.dataset,
            "meshes": args.meshes,
            "test_meshes": args.test_meshes,
            "class": args.class.name(),
            "points": points,
        }),
    )?;
    println!(
        "train_accuracy={} test_accuracy={}",
        report.train_accuracy.unwrap_or(f64::NAN),
        report.test_accuracy.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn run_table2(args: &Table2Args, resolved: &Resolved) -> Result<()> {
    let points = resolved.points;
    let extractors = load_extractors(&args.weights)?;
    let meshes = procedural_meshes(args.class, args.meshes, resolved.seed)?;
    let mut rng = stream_rng(resolved.seed, "spectrum");
    let rows = metric_spectrum_experiment(&meshes, points, &extractors.as_refs(), &mut rng)?;

    let out = &resolved.out_dir;
    std::fs::create_dir_all(out)?;
    let mut csv = format!("condition,{}\n", MetricReport::CSV_HEADER);
    let mut json_rows = Vec::new();
    for row in &rows {
        csv.push_str(&format!("{},{}\n", row.name, row.report.csv_row()));
        json_rows.push(serde_json::json!({
            "condition": row.name,
            "metrics": row.report,
        }));
    }
    std::fs::write(out.join("spectrum.csv"), &csv)?;
    std::fs::write(
        out.join("spectrum.json"),
        serde_json::to_string_pretty(&serde_json::Value::Array(json_rows))?,
    )?;
    resolved.write_snapshot(
        "experiment table2",
        serde_json::json!({
            "weights": args.weights,
            "meshes": args.meshes,
            "class": args.class.name(),
            "points": points,
        }),
    )?;
    print!("{}", csv);
    Ok(())
}

/// Snapshot artifacts: the clouds as XYZ plus one density-colored PLY of
/// the first cloud, so drift is visible at a glance.
fn write_cloud_snapshot(dir: &Path, epoch: usize, clouds: &[PointCloud]) -> Result<Vec<String>> {
    let sub = dir.join(format!("ep{:05}", epoch));
    let mut names = save_cloud_set(clouds, &sub)?
        .into_iter()
        .map(|n| format!("ep{:05}/{}", epoch, n))
        .collect::<Vec<_>>();
    let field = kde_density(&clouds[0], 0.1)?;
    let ply = dir.join(format!("ep{:05}.ply", epoch));
    save_ply_density(&clouds[0], &field, &ply)?;
    names.push(format!("ep{:05}.ply", epoch));
    Ok(names)
}

fn run_nogen(args: &NogenArgs, resolved: &Resolved) -> Result<()> {
    let points = resolved.points;
    let spec = disc_spec(args.disc, resolved, points)?;
    let reals = real_clouds(args.class, args.shapes, points, resolved.seed)?;
    let mut output = no_generator_train(&spec, &reals, args.clouds, &resolved.train)?;

    let out = &resolved.out_dir;
    let snap_dir = out.join("snapshots");
    std::fs::create_dir_all(&snap_dir)?;
    for (epoch, clouds) in &output.snapshots {
        let names = write_cloud_snapshot(&snap_dir, *epoch, clouds)?;
        output
            .report
            .artifacts
            .extend(names.into_iter().map(|n| format!("snapshots/{}", n)));
    }
    output.log.save(&out.join("log.csv"))?;
    output.report.artifacts.push("log.csv".to_string());
    output.report.artifacts.push("report.json".to_string());
    output.report.save_json(&out.join("report.json"))?;
    resolved.write_snapshot(
        "experiment nogen",
        serde_json::json!({
            "disc": args.disc.name(),
            "clouds": args.clouds,
            "shapes": args.shapes,
            "class": args.class.name(),
            "points": points,
        }),
    )?;
    println!(
        "final_wasserstein={}",
        output.log.rows().last().map(|r| r.wasserstein).unwrap_or(f64::NAN)
    );
    Ok(())
}

/// Everything except the epoch count must match for a resume to make
/// sense; a longer run may continue a shorter one.
fn check_resume_config(saved: &TrainConfig, current: &TrainConfig) -> Result<()> {
    let mut saved = saved.clone();
    saved.epochs = current.epochs;
    if saved != *current {
        return Err(Error::invalid(
            "checkpoint config differs from the resolved config (only --epochs may change on resume)"
                .to_string(),
        ));
    }
    Ok(())
}

fn run_gan(args: &GanArgs, resolved: &Resolved) -> Result<()> {
    let points = resolved.points;
    if !args.gen.is_generator() {
        return Err(Error::invalid(format!(
            "{} is not a generator",
            args.gen.name()
        )));
    }
    let gen_spec = NetworkSpec::new(args.gen)
        .with_width(resolved.width)
        .with_points(points)
        .with_latent(resolved.train.latent_dim);
    let spec = disc_spec(args.disc, resolved, points)?;
    let reals = real_clouds(args.class, args.shapes, points, resolved.seed)?;

    let out = &resolved.out_dir;
    let ckpt_dir = out.join("checkpoints");
    let resume: Option<GanState> = if args.resume {
        let (saved_config, state) = load_gan_state(&ckpt_dir)?;
        check_resume_config(&saved_config, &resolved.train)?;
        Some(state)
    } else {
        None
    };

    let config = resolved.train.clone();
    let output = train_gan_with(&gen_spec, &spec, &reals, &config, resume, |view| {
        save_gan_state(&ckpt_dir, &config, view)
    })?;

    let mut report = output.report;
    output.gen_blob.save(&out.join("gen.wt"))?;
    output.disc_blob.save(&out.join("disc.wt"))?;
    output.log.save(&out.join("log.csv"))?;
    let sample_names = save_cloud_set(&output.samples, &out.join("samples"))?;
    report.artifacts.extend(["gen.wt", "disc.wt", "log.csv", "report.json"].map(String::from));
    report
        .artifacts
        .extend(sample_names.into_iter().map(|n| format!("samples/{}", n)));
    report.save_json(&out.join("report.json"))?;
    resolved.write_snapshot(
        "experiment gan",
        serde_json::json!({
            "gen": args.gen.name(),
            "disc": args.disc.name(),
            "shapes": args.shapes,
            "class": args.class.name(),
            "points": points,
            "resume": args.resume,
        }),
    )?;
    println!(
        "final_wasserstein={}",
        output.log.rows().last().map(|r| r.wasserstein).unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn run_pretrain(args: &PretrainArgs, resolved: &Resolved) -> Result<()> {
    let points = resolved.points;
    if args.per_class == 0 {
        return Err(Error::invalid("pretrain: per-class must be positive".to_string()));
    }
    let data = build_class_dataset(args.per_class, points, resolved.seed)?;
    let out = &resolved.out_dir;
    std::fs::create_dir_all(out)?;
    for variant in [
        ExtractorVariant::Max,
        ExtractorVariant::Mix,
        ExtractorVariant::Dgcnn,
    ] {
        let kind = NetKind::FeatureExtractor(variant);
        let spec = NetworkSpec::new(kind)
            .with_width(resolved.width)
            .with_points(points)
            .with_knn(resolved.knn);
        let (blob, mut report) = pretrain_feature_extractor(&spec, &data, &resolved.train)?;
        let weight_name = format!("{}.wt", kind.name());
        let report_name = format!("{}-report.json", kind.name());
        blob.save(&out.join(&weight_name))?;
        report.artifacts.push(weight_name.clone());
        report.artifacts.push(report_name.clone());
        report.save_json(&out.join(&report_name))?;
        println!(
            "{}: train_accuracy={} test_accuracy={}",
            kind.name(),
            report.train_accuracy.unwrap_or(f64::NAN),
            report.test_accuracy.unwrap_or(f64::NAN)
        );
    }
    resolved.write_snapshot(
        "pretrain",
        serde_json::json!({
            "per_class": args.per_class,
            "points": points,
        }),
    )?;
    Ok(())
}
