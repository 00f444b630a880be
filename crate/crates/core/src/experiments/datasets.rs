//! Procedural dataset builders for the classification and pretraining
//! experiments. Label convention: 0 = real (uniform surface samples),
//! 1 = fake (sampling artifact); the multi-class set labels by shape class
//! index. Meshes come out of the generators already centered with a unit
//! bounding-box diagonal, so no per-cloud renormalization happens here.

use rand::Rng;

use crate::geometry::procedural::{gen_procedural_mesh, ProceduralSpec, ShapeClass};
use crate::geometry::sampling::{
    sample_biased_cluster, sample_fps_random_start, sample_mesh_uniform, DEFAULT_CLUSTER_RADIUS,
};
use crate::geometry::{LabeledCloudSet, Split, TriangleMesh};
use crate::{Error, Result};

/// FPS fakes are drawn from a dense uniform pre-sample of this multiple
/// of the target point count.
pub const FPS_OVERSAMPLE: usize = 8;

/// `count` meshes of one class, seeded `first_seed..first_seed + count`.
/// Disjoint seed ranges give disjoint train/test mesh sets.
pub fn procedural_meshes(
    class: ShapeClass,
    count: usize,
    first_seed: u64,
) -> Result<Vec<TriangleMesh>> {
    (0..count)
        .map(|i| gen_procedural_mesh(&ProceduralSpec::new(class, first_seed + i as u64)))
        .collect()
}

fn check_inputs(train: &[TriangleMesh], test: &[TriangleMesh], n: usize) -> Result<()> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyInput("dataset builder: mesh set"));
    }
    if n < 2 {
        return Err(Error::invalid(format!(
            "dataset builder: need at least 2 points per cloud, got {}",
            n
        )));
    }
    Ok(())
}

fn clustering_split(
    meshes: &[TriangleMesh],
    split: Split,
    n: usize,
    rng: &mut impl Rng,
) -> Result<LabeledCloudSet> {
    let mut clouds = Vec::with_capacity(meshes.len() * 2);
    let mut labels = Vec::with_capacity(meshes.len() * 2);
    for mesh in meshes {
        clouds.push(sample_mesh_uniform(mesh, n, rng)?);
        labels.push(0);
        clouds.push(sample_biased_cluster(
            mesh,
            n - n / 2,
            n / 2,
            DEFAULT_CLUSTER_RADIUS,
            rng,
        )?);
        labels.push(1);
    }
    LabeledCloudSet::new(clouds, labels, split)
}

/// Real = uniform n-point samples, fake = half uniform plus half crammed
/// into a small surface ball, mimicking a generator that crowds points.
pub fn build_clustering_dataset(
    train_meshes: &[TriangleMesh],
    test_meshes: &[TriangleMesh],
    n: usize,
    rng: &mut impl Rng,
) -> Result<(LabeledCloudSet, LabeledCloudSet)> {
    check_inputs(train_meshes, test_meshes, n)?;
    let train = clustering_split(train_meshes, Split::Train, n, rng)?;
    let test = clustering_split(test_meshes, Split::Test, n, rng)?;
    Ok((train, test))
}

/// Real = uniform n-point samples, fake = farthest-point selection of n
/// points from a dense uniform pre-sample of the same mesh. Same geometry
/// in both classes; only the point arrangement differs.
fn fps_split(
    meshes: &[TriangleMesh],
    split: Split,
    n: usize,
    rng: &mut impl Rng,
) -> Result<LabeledCloudSet> {
    let mut clouds = Vec::with_capacity(meshes.len() * 2);
    let mut labels = Vec::with_capacity(meshes.len() * 2);
    for mesh in meshes {
        clouds.push(sample_mesh_uniform(mesh, n, rng)?);
        labels.push(0);
        let dense = sample_mesh_uniform(mesh, n * FPS_OVERSAMPLE, rng)?;
        clouds.push(sample_fps_random_start(&dense, n, rng)?);
        labels.push(1);
    }
    LabeledCloudSet::new(clouds, labels, split)
}

pub fn build_fps_vs_uniform_dataset(
    train_meshes: &[TriangleMesh],
    test_meshes: &[TriangleMesh],
    n: usize,
    rng: &mut impl Rng,
) -> Result<(LabeledCloudSet, LabeledCloudSet)> {
    check_inputs(train_meshes, test_meshes, n)?;
    let train = fps_split(train_meshes, Split::Train, n, rng)?;
    let test = fps_split(test_meshes, Split::Test, n, rng)?;
    Ok((train, test))
}

/// Multi-class clouds for feature-extractor pretraining: every shape class,
/// `per_class` meshes each, split 80/20 into train/test per class.
#[derive(Debug, Clone)]
pub struct ClassDataset {
    pub train: LabeledCloudSet,
    pub test: LabeledCloudSet,
    pub class_count: usize,
}

pub fn build_class_dataset(per_class: usize, n_points: usize, seed: u64) -> Result<ClassDataset> {
    if per_class < 2 {
        return Err(Error::invalid(format!(
            "class dataset: need at least 2 meshes per class, got {}",
            per_class
        )));
    }
    if n_points < 2 {
        return Err(Error::invalid(
            "class dataset: need at least 2 points per cloud".to_string(),
        ));
    }
    let mut sample_rng = super::stream_rng(seed, "class-sample");
    let train_count = (per_class * 4) / 5;
    let train_count = train_count.max(1).min(per_class - 1);
    let mut train_clouds = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_clouds = Vec::new();
    let mut test_labels = Vec::new();
    for (label, class) in ShapeClass::ALL.iter().enumerate() {
        let mut seed_rng = super::stream_rng(seed, class.name());
        for i in 0..per_class {
            let mesh_seed: u64 = seed_rng.gen();
            let mesh = gen_procedural_mesh(&ProceduralSpec::new(*class, mesh_seed))?;
            let cloud = sample_mesh_uniform(&mesh, n_points, &mut sample_rng)?;
            if i < train_count {
                train_clouds.push(cloud);
                train_labels.push(label as u32);
            } else {
                test_clouds.push(cloud);
                test_labels.push(label as u32);
            }
        }
    }
    Ok(ClassDataset {
        train: LabeledCloudSet::new(train_clouds, train_labels, Split::Train)?,
        test: LabeledCloudSet::new(test_clouds, test_labels, Split::Test)?,
        class_count: ShapeClass::ALL.len(),
    })
}
