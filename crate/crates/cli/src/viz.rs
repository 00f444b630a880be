//! `viz`: density-colored PLY export. Local density comes from the fixed-
//! bandwidth count kernel; the ramp runs dark blue (sparse) to light
//! yellow (dense).

use std::path::PathBuf;

use clap::Args;
use pclab_core::geometry::density::kde_density;
use pclab_core::geometry::io::{load_xyz, save_ply_density};
use pclab_core::Result;

use crate::config::Resolved;

#[derive(Args)]
pub struct VizArgs {
    /// XYZ cloud to color.
    pub cloud: PathBuf,
    /// Density kernel radius.
    #[arg(long, default_value_t = 0.1)]
    pub bandwidth: f64,
}

pub fn run(args: &VizArgs, resolved: &Resolved) -> Result<()> {
    let cloud = load_xyz(&args.cloud)?;
    let field = kde_density(&cloud, args.bandwidth)?;
    let stem = args
        .cloud
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cloud".to_string());
    let out = &resolved.out_dir;
    std::fs::create_dir_all(out)?;
    let ply = out.join(format!("{}.ply", stem));
    save_ply_density(&cloud, &field, &ply)?;
    resolved.write_snapshot(
        "viz",
        serde_json::json!({
            "cloud": args.cloud,
            "bandwidth": args.bandwidth,
        }),
    )?;
    println!("wrote {}", ply.display());
    Ok(())
}
