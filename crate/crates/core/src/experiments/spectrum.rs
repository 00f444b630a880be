//! Metric-spectrum experiment: build degraded copies of a uniform
//! reference set and score each copy with every metric. A metric earns its
//! keep by flagging the artifact rows while staying quiet on the clean
//! re-sample.

use rand::Rng;

use crate::geometry::sampling::{
    sample_biased_cluster, sample_fps_random_start, sample_mesh_uniform, DEFAULT_CLUSTER_RADIUS,
};
use crate::geometry::{PointCloud, TriangleMesh};
use crate::metrics::{evaluate_sets, Extractors, MetricReport};
use crate::{Error, Result};

use super::datasets::FPS_OVERSAMPLE;

#[derive(Debug, Clone)]
pub struct SpectrumRow {
    pub name: String,
    pub report: MetricReport,
}

/// Rows, in order: the reference against itself, a fresh uniform re-sample,
/// farthest-point sampling, and biased (clustered) sampling.
pub fn metric_spectrum_experiment(
    meshes: &[TriangleMesh],
    n: usize,
    extractors: &Extractors,
    rng: &mut impl Rng,
) -> Result<Vec<SpectrumRow>> {
    if meshes.is_empty() {
        return Err(Error::EmptyInput("metric_spectrum_experiment: meshes"));
    }
    if n < 2 {
        return Err(Error::invalid(
            "metric_spectrum_experiment: need at least 2 points".to_string(),
        ));
    }
    let mut reference = Vec::with_capacity(meshes.len());
    let mut resample = Vec::with_capacity(meshes.len());
    let mut fps = Vec::with_capacity(meshes.len());
    let mut biased = Vec::with_capacity(meshes.len());
    for mesh in meshes {
        reference.push(sample_mesh_uniform(mesh, n, rng)?);
        resample.push(sample_mesh_uniform(mesh, n, rng)?);
        let dense = sample_mesh_uniform(mesh, n * FPS_OVERSAMPLE, rng)?;
        fps.push(sample_fps_random_start(&dense, n, rng)?);
        biased.push(sample_biased_cluster(
            mesh,
            n - n / 2,
            n / 2,
            DEFAULT_CLUSTER_RADIUS,
            rng,
        )?);
    }
    let copies: [(&str, &Vec<PointCloud>); 4] = [
        ("reference", &reference),
        ("resample", &resample),
        ("fps", &fps),
        ("biased", &biased),
    ];
    let mut rows = Vec::with_capacity(copies.len());
    for (name, clouds) in copies {
        rows.push(SpectrumRow {
            name: name.to_string(),
            report: evaluate_sets(clouds, &reference, extractors)?,
        });
    }
    Ok(rows)
}
