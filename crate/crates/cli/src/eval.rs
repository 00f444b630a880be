//! `eval`: score a generated cloud directory against a reference directory
//! with the seven-column metric row. Needs the three pretrained feature
//! extractors on disk.

use std::path::{Path, PathBuf};

use clap::Args;
use pclab_core::metrics::{evaluate_sets, Extractor, Extractors, MetricReport};
use pclab_core::networks::{ExtractorVariant, NetKind, WeightBlob};
use pclab_core::{Error, Result};

use crate::config::{load_dir_named, Resolved};

#[derive(Args)]
pub struct EvalArgs {
    /// Directory of generated .xyz clouds.
    #[arg(long)]
    pub gen_dir: PathBuf,
    /// Directory of reference .xyz clouds.
    #[arg(long)]
    pub ref_dir: PathBuf,
    /// Directory holding extractor-max.wt, extractor-mix.wt,
    /// extractor-dgcnn.wt.
    #[arg(long)]
    pub weights: PathBuf,
}

/// The three extractor blobs, loaded and kind-checked. Owns the blobs so
/// `Extractors` can borrow them.
pub struct LoadedExtractors {
    pub max: WeightBlob,
    pub mix: WeightBlob,
    pub dgcnn: WeightBlob,
}

impl LoadedExtractors {
    pub fn as_refs(&self) -> Extractors<'_> {
        Extractors {
            max: Extractor {
                spec: &self.max.spec,
                weights: &self.max,
            },
            mix: Extractor {
                spec: &self.mix.spec,
                weights: &self.mix,
            },
            dgcnn: Extractor {
                spec: &self.dgcnn.spec,
                weights: &self.dgcnn,
            },
        }
    }
}

pub fn load_extractors(dir: &Path) -> Result<LoadedExtractors> {
    let load = |variant: ExtractorVariant| -> Result<WeightBlob> {
        let file = format!("{}.wt", NetKind::FeatureExtractor(variant).name());
        let path = dir.join(&file);
        if !path.is_file() {
            return Err(Error::invalid(format!(
                "missing extractor weights {}: run `pclab experiment pretrain --out {}` first",
                path.display(),
                dir.display()
            )));
        }
        let blob = WeightBlob::load_any(&path)?;
        if blob.spec.kind != NetKind::FeatureExtractor(variant) {
            return Err(Error::WeightMismatch(format!(
                "{} holds {}, expected {}",
                path.display(),
                blob.spec.kind.name(),
                NetKind::FeatureExtractor(variant).name()
            )));
        }
        Ok(blob)
    };
    Ok(LoadedExtractors {
        max: load(ExtractorVariant::Max)?,
        mix: load(ExtractorVariant::Mix)?,
        dgcnn: load(ExtractorVariant::Dgcnn)?,
    })
}

/// Writes the report as a one-row CSV plus JSON.
pub fn write_report(report: &MetricReport, out: &Path, stem: &str) -> Result<()> {
    std::fs::write(
        out.join(format!("{}.csv", stem)),
        format!("{}\n{}\n", MetricReport::CSV_HEADER, report.csv_row()),
    )?;
    std::fs::write(
        out.join(format!("{}.json", stem)),
        serde_json::to_string_pretty(report)?,
    )?;
    Ok(())
}

pub fn run(args: &EvalArgs, resolved: &Resolved) -> Result<()> {
    let extractors = load_extractors(&args.weights)?;
    let gen = load_dir_named(&args.gen_dir)?;
    let reference = load_dir_named(&args.ref_dir)?;

    let want = reference[0].1.len();
    let mut mismatched = Vec::new();
    for (dir, set) in [("ref", &reference), ("gen", &gen)] {
        for (name, cloud) in set {
            if cloud.len() != want {
                mismatched.push(format!("{}/{} has {} points", dir, name, cloud.len()));
            }
        }
    }
    if !mismatched.is_empty() {
        return Err(Error::invalid(format!(
            "point count mismatch, expected {} everywhere: {}",
            want,
            mismatched.join("; ")
        )));
    }

    let gen_clouds: Vec<_> = gen.into_iter().map(|(_, c)| c).collect();
    let ref_clouds: Vec<_> = reference.into_iter().map(|(_, c)| c).collect();
    let report = evaluate_sets(&gen_clouds, &ref_clouds, &extractors.as_refs())?;

    let out = &resolved.out_dir;
    std::fs::create_dir_all(out)?;
    write_report(&report, out, "report")?;
    resolved.write_snapshot(
        "eval",
        serde_json::json!({
            "gen_dir": args.gen_dir,
            "ref_dir": args.ref_dir,
            "weights": args.weights,
        }),
    )?;
    println!("{}", MetricReport::CSV_HEADER);
    println!("{}", report.csv_row());
    Ok(())
}
