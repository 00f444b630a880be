use serde::{Deserialize, Serialize};

use crate::geometry::PointCloud;
use crate::metrics::distance::{chamfer, emd_approx, emd_exact};
use crate::metrics::frechet::{feature_stats, frechet};
use crate::networks::{ExtractorVariant, NetKind, NetworkSpec, WeightBlob};
use crate::{Error, Result};

/// Auction slack used for set-level EMD on clouds above the exact limit.
pub const SET_EMD_EPSILON: f64 = 1e-3;
/// Clouds up to this size use the exact solver inside set metrics.
const SET_EXACT_LIMIT: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistKind {
    Chamfer,
    Emd,
}

/// Cloud-to-cloud distance used by the set metrics. EMD switches to the
/// auction above 128 points to keep large evaluations tractable.
pub fn cloud_set_distance(kind: DistKind, a: &PointCloud, b: &PointCloud) -> Result<f64> {
    match kind {
        DistKind::Chamfer => chamfer(a, b),
        DistKind::Emd => {
            if a.len() <= SET_EXACT_LIMIT && b.len() <= SET_EXACT_LIMIT {
                emd_exact(a, b)
            } else {
                emd_approx(a, b, SET_EMD_EPSILON)
            }
        }
    }
}

/// Minimum matching distance: mean over reference clouds of the closest
/// generated cloud. Lower is better fidelity.
pub fn mmd(gen: &[PointCloud], reference: &[PointCloud], kind: DistKind) -> Result<f64> {
    if gen.is_empty() || reference.is_empty() {
        return Err(Error::EmptyInput("mmd"));
    }
    let mut acc = 0.0;
    for r in reference {
        let mut best = f64::INFINITY;
        for g in gen {
            best = best.min(cloud_set_distance(kind, g, r)?);
        }
        acc += best;
    }
    Ok(acc / reference.len() as f64)
}

/// Coverage: match every generated cloud to its nearest reference (ties to
/// the lower index); percentage of distinct references hit.
pub fn coverage(gen: &[PointCloud], reference: &[PointCloud], kind: DistKind) -> Result<f64> {
    if gen.is_empty() || reference.is_empty() {
        return Err(Error::EmptyInput("coverage"));
    }
    let mut hit = vec![false; reference.len()];
    for g in gen {
        let mut best = f64::INFINITY;
        let mut best_j = 0usize;
        for (j, r) in reference.iter().enumerate() {
            let d = cloud_set_distance(kind, g, r)?;
            if d < best {
                best = d;
                best_j = j;
            }
        }
        hit[best_j] = true;
    }
    let count = hit.iter().filter(|h| **h).count();
    Ok(count as f64 / reference.len() as f64 * 100.0)
}

/// One pretrained feature extractor.
pub struct Extractor<'a> {
    pub spec: &'a NetworkSpec,
    pub weights: &'a WeightBlob,
}

/// The three extractors behind the Fréchet columns.
pub struct Extractors<'a> {
    pub max: Extractor<'a>,
    pub mix: Extractor<'a>,
    pub dgcnn: Extractor<'a>,
}

impl Extractors<'_> {
    fn validate(&self) -> Result<()> {
        let want = [
            (self.max.spec, ExtractorVariant::Max),
            (self.mix.spec, ExtractorVariant::Mix),
            (self.dgcnn.spec, ExtractorVariant::Dgcnn),
        ];
        for (spec, variant) in want {
            if spec.kind != NetKind::FeatureExtractor(variant) {
                return Err(Error::invalid(format!(
                    "extractor slot expects {}, got {}",
                    NetKind::FeatureExtractor(variant).name(),
                    spec.kind.name()
                )));
            }
        }
        Ok(())
    }
}

/// Seven-column evaluation row (Fréchet distances, MMD, coverage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fpd_mix: f64,
    pub fpd_max: f64,
    pub fgd: f64,
    pub mmd_emd: f64,
    pub mmd_cd: f64,
    pub cov_emd: f64,
    pub cov_cd: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "FPD-Mix,FPD-Max,FGD,MMD-E,MMD-C,COV-E,COV-C";

    pub fn csv_row(&self) -> String {
        // RFC-style shortest round-trip formatting keeps the export lossless.
        format!(
            "{},{},{},{},{},{},{}",
            self.fpd_mix, self.fpd_max, self.fgd, self.mmd_emd, self.mmd_cd, self.cov_emd,
            self.cov_cd
        )
    }

    pub fn from_csv_row(row: &str) -> Result<MetricReport> {
        let vals: Vec<f64> = row
            .trim()
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad metric value '{}': {}", s, e)))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 7 {
            return Err(Error::Parse(format!(
                "metric row needs 7 columns, got {}",
                vals.len()
            )));
        }
        Ok(MetricReport {
            fpd_mix: vals[0],
            fpd_max: vals[1],
            fgd: vals[2],
            mmd_emd: vals[3],
            mmd_cd: vals[4],
            cov_emd: vals[5],
            cov_cd: vals[6],
        })
    }
}

/// Full evaluation of a generated set against a reference set.
pub fn evaluate_sets(
    gen: &[PointCloud],
    reference: &[PointCloud],
    extractors: &Extractors,
) -> Result<MetricReport> {
    if gen.is_empty() || reference.is_empty() {
        return Err(Error::EmptyInput("evaluate_sets"));
    }
    extractors.validate()?;
    let fpd = |e: &Extractor| -> Result<f64> {
        let sg = feature_stats(gen, e.spec, e.weights)?;
        let sr = feature_stats(reference, e.spec, e.weights)?;
        frechet(&sg, &sr)
    };
    Ok(MetricReport {
        fpd_mix: fpd(&extractors.mix)?,
        fpd_max: fpd(&extractors.max)?,
        fgd: fpd(&extractors.dgcnn)?,
        mmd_emd: mmd(gen, reference, DistKind::Emd)?,
        mmd_cd: mmd(gen, reference, DistKind::Chamfer)?,
        cov_emd: coverage(gen, reference, DistKind::Emd)?,
        cov_cd: coverage(gen, reference, DistKind::Chamfer)?,
    })
}
