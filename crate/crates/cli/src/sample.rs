//! `sample`: point clouds from a user-provided mesh file.

use std::path::PathBuf;

use clap::Args;
use pclab_core::experiments::stream_rng;
use pclab_core::geometry::io::{load_obj, load_off, save_xyz};
use pclab_core::geometry::TriangleMesh;
use pclab_core::{Error, Result};

use crate::config::{Resolved, SamplerArg};
use crate::gen_data::sample_with;

#[derive(Args)]
pub struct SampleArgs {
    /// Mesh file; format picked by extension (.obj or .off).
    pub mesh: PathBuf,
    /// Clouds to draw.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = SamplerArg::Uniform)]
    pub sampler: SamplerArg,
}

fn load_mesh(path: &PathBuf) -> Result<TriangleMesh> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => load_obj(path),
        Some("off") => load_off(path),
        other => Err(Error::invalid(format!(
            "unsupported mesh extension {:?} for {}, expected .obj or .off",
            other.unwrap_or(""),
            path.display()
        ))),
    }
}

pub fn run(args: &SampleArgs, resolved: &Resolved) -> Result<()> {
    if args.count == 0 {
        return Err(Error::invalid("sample: count must be positive".to_string()));
    }
    let points = resolved.points;
    let mesh = load_mesh(&args.mesh)?;
    let out = &resolved.out_dir;
    std::fs::create_dir_all(out)?;
    let mut rng = stream_rng(resolved.seed, "sample");
    for i in 0..args.count {
        let cloud = sample_with(args.sampler, &mesh, points, &mut rng)?;
        save_xyz(&cloud, &out.join(format!("sample_{:04}.xyz", i)))?;
    }
    resolved.write_snapshot(
        "sample",
        serde_json::json!({
            "mesh": args.mesh,
            "points": points,
            "count": args.count,
            "sampler": args.sampler.name(),
        }),
    )?;
    println!("wrote {} clouds under {}", args.count, out.display());
    Ok(())
}
