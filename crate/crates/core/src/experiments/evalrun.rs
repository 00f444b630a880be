//! Binds sample directories to the set-level metrics: save or load a
//! directory of XYZ clouds and score it against a reference set.

use std::path::Path;

use crate::geometry::io::{load_xyz, save_xyz};
use crate::geometry::PointCloud;
use crate::metrics::{evaluate_sets, Extractors, MetricReport};
use crate::{Error, Result};

/// Writes `clouds` as zero-padded `cloud_0000.xyz` files under `dir`,
/// creating it if needed; returns the file names written.
pub fn save_cloud_set(clouds: &[PointCloud], dir: &Path) -> Result<Vec<String>> {
    if clouds.is_empty() {
        return Err(Error::EmptyInput("save_cloud_set"));
    }
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(clouds.len());
    for (i, cloud) in clouds.iter().enumerate() {
        let name = format!("cloud_{:04}.xyz", i);
        save_xyz(cloud, &dir.join(&name))?;
        names.push(name);
    }
    Ok(names)
}

/// Loads every `.xyz` file under `dir`, sorted by file name so the set
/// order never depends on directory enumeration order.
pub fn load_cloud_dir(dir: &Path) -> Result<Vec<PointCloud>> {
    let mut paths: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "xyz").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput("load_cloud_dir: no .xyz files"));
    }
    paths.iter().map(|p| load_xyz(p)).collect()
}

/// Scores the samples under `samples_dir` against `reference`.
pub fn evaluate_run(
    samples_dir: &Path,
    reference: &[PointCloud],
    extractors: &Extractors,
) -> Result<MetricReport> {
    let samples = load_cloud_dir(samples_dir)?;
    evaluate_sets(&samples, reference, extractors)
}
