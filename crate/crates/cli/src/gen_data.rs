//! `gen-data`: procedural meshes plus sampled clouds plus a manifest. The
//! sampler stream is independent of mesh construction, so the same seed
//! reproduces the directory byte for byte.

use clap::Args;
use pclab_core::experiments::{procedural_meshes, stream_rng, ChaCha20Rng};
use pclab_core::geometry::io::{save_obj, save_xyz};
use pclab_core::geometry::procedural::ShapeClass;
use pclab_core::geometry::sampling::{
    sample_biased_cluster, sample_fps_random_start, sample_mesh_uniform, DEFAULT_CLUSTER_RADIUS,
};
use pclab_core::geometry::{PointCloud, TriangleMesh};
use pclab_core::{Error, Result};
use serde::Serialize;

use crate::config::{Resolved, SamplerArg};

/// Dense pre-sample factor for the FPS sampler.
const FPS_OVERSAMPLE: usize = 8;

#[derive(Args)]
pub struct GenDataArgs {
    /// Comma-separated shape classes (box, sphere, cylinder, cone, capsule,
    /// chair, table).
    #[arg(long, default_value = "chair")]
    pub classes: String,
    /// Meshes (and clouds) per class.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = SamplerArg::Uniform)]
    pub sampler: SamplerArg,
}

#[derive(Serialize)]
struct Manifest {
    classes: Vec<String>,
    count: usize,
    points: usize,
    sampler: String,
    seed: u64,
    meshes: Vec<String>,
    clouds: Vec<String>,
}

pub fn parse_classes(list: &str) -> Result<Vec<ShapeClass>> {
    let classes: Vec<ShapeClass> = list
        .split(',')
        .map(|s| {
            let t = s.trim();
            ShapeClass::parse(t)
                .ok_or_else(|| Error::invalid(format!("unknown shape class '{}'", t)))
        })
        .collect::<Result<_>>()?;
    if classes.is_empty() {
        return Err(Error::EmptyInput("gen-data: class list"));
    }
    Ok(classes)
}

/// One cloud from `mesh` with the requested sampling pattern.
pub fn sample_with(
    sampler: SamplerArg,
    mesh: &TriangleMesh,
    points: usize,
    rng: &mut ChaCha20Rng,
) -> Result<PointCloud> {
    match sampler {
        SamplerArg::Uniform => sample_mesh_uniform(mesh, points, rng),
        SamplerArg::Biased => sample_biased_cluster(
            mesh,
            points - points / 2,
            points / 2,
            DEFAULT_CLUSTER_RADIUS,
            rng,
        ),
        SamplerArg::Fps => {
            let dense = sample_mesh_uniform(mesh, points * FPS_OVERSAMPLE, rng)?;
            sample_fps_random_start(&dense, points, rng)
        }
    }
}

pub fn run(args: &GenDataArgs, resolved: &Resolved) -> Result<()> {
    let classes = parse_classes(&args.classes)?;
    let points = resolved.points;
    if args.count == 0 {
        return Err(Error::invalid("gen-data: count must be positive".to_string()));
    }
    let out = &resolved.out_dir;
    std::fs::create_dir_all(out.join("meshes"))?;
    std::fs::create_dir_all(out.join("clouds"))?;

    let mut rng = stream_rng(resolved.seed, "gen-data");
    let mut manifest = Manifest {
        classes: classes.iter().map(|c| c.name().to_string()).collect(),
        count: args.count,
        points,
        sampler: args.sampler.name().to_string(),
        seed: resolved.seed,
        meshes: Vec::new(),
        clouds: Vec::new(),
    };
    for class in &classes {
        let meshes = procedural_meshes(*class, args.count, resolved.seed)?;
        for (i, mesh) in meshes.iter().enumerate() {
            let mesh_name = format!("meshes/{}_{:04}.obj", class.name(), i);
            save_obj(mesh, &out.join(&mesh_name))?;
            let cloud = sample_with(args.sampler, mesh, points, &mut rng)?;
            let cloud_name = format!("clouds/{}_{:04}.xyz", class.name(), i);
            save_xyz(&cloud, &out.join(&cloud_name))?;
            manifest.meshes.push(mesh_name);
            manifest.clouds.push(cloud_name);
        }
    }
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    resolved.write_snapshot(
        "gen-data",
        serde_json::json!({
            "classes": manifest.classes,
            "count": args.count,
            "points": points,
            "sampler": args.sampler.name(),
        }),
    )?;
    println!(
        "wrote {} meshes and {} clouds under {}",
        manifest.meshes.len(),
        manifest.clouds.len(),
        out.display()
    );
    Ok(())
}
