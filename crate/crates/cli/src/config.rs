//! Config resolution and the resolved-config snapshot. Flags win over the
//! config file, which wins over profile defaults; the snapshot records the
//! merged result so the run is reproducible from its output directory.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use pclab_core::experiments::{GpMode, ScaleProfile, TrainConfig};
use pclab_core::{Error, Result};
use serde::Deserialize;

use crate::CommonArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Uniform,
    Biased,
    Fps,
}

impl SamplerArg {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerArg::Uniform => "uniform",
            SamplerArg::Biased => "biased",
            SamplerArg::Fps => "fps",
        }
    }
}

/// Optional overrides loaded from `--config`; unknown keys are rejected so
/// typos fail loudly instead of silently using defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    profile: Option<String>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    cloud_lr: Option<f64>,
    lambda_gp: Option<f64>,
    n_critic: Option<usize>,
    latent_dim: Option<usize>,
    snapshot_every: Option<usize>,
    sample_count: Option<usize>,
    gp_mode: Option<String>,
    points: Option<usize>,
    width: Option<f64>,
    knn: Option<usize>,
}

/// The merged settings every command starts from.
pub struct Resolved {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub train: TrainConfig,
    /// Default cloud size for commands that do not pin their own.
    pub points: usize,
    pub width: f64,
    pub knn: usize,
}

fn parse_profile(s: &str) -> Result<ScaleProfile> {
    match s {
        "desk" => Ok(ScaleProfile::Desk),
        "paper" => Ok(ScaleProfile::Paper),
        other => Err(Error::invalid(format!(
            "unknown profile '{}', expected desk or paper",
            other
        ))),
    }
}

impl Resolved {
    pub fn from_args(args: &CommonArgs) -> Result<Resolved> {
        let file: FileConfig = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Parse(format!("config file {}: {}", path.display(), e)))?
            }
            None => FileConfig::default(),
        };

        if args.strict_seed && args.seed.is_none() && file.seed.is_none() {
            return Err(Error::invalid(
                "--strict-seed requires an explicit --seed or a seed in the config file"
                    .to_string(),
            ));
        }
        let seed = args.seed.or(file.seed).unwrap_or(0);

        let profile = match (args.profile, &file.profile) {
            (Some(ProfileArg::Paper), _) => ScaleProfile::Paper,
            (Some(ProfileArg::Desk), _) => ScaleProfile::Desk,
            (None, Some(s)) => parse_profile(s)?,
            (None, None) => ScaleProfile::Desk,
        };
        let mut train = match profile {
            ScaleProfile::Desk => TrainConfig::desk(seed),
            ScaleProfile::Paper => TrainConfig::paper(seed),
        };

        if let Some(v) = file.epochs {
            train.epochs = v;
        }
        if let Some(v) = file.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = file.lr {
            train.lr = v;
        }
        if let Some(v) = file.cloud_lr {
            train.cloud_lr = v;
        }
        if let Some(v) = file.lambda_gp {
            train.lambda_gp = v;
        }
        if let Some(v) = file.n_critic {
            train.n_critic = v;
        }
        if let Some(v) = file.latent_dim {
            train.latent_dim = v;
        }
        if let Some(v) = file.snapshot_every {
            train.snapshot_every = v;
        }
        if let Some(v) = file.sample_count {
            train.sample_count = v;
        }
        if let Some(mode) = &file.gp_mode {
            train.gp_mode = match mode.as_str() {
                "gradient-penalty" => GpMode::GradientPenalty,
                "weight-clip" => GpMode::WeightClip,
                other => {
                    return Err(Error::invalid(format!(
                        "unknown gp_mode '{}', expected gradient-penalty or weight-clip",
                        other
                    )))
                }
            };
        }

        if let Some(v) = args.epochs {
            train.epochs = v;
        }
        if let Some(v) = args.batch {
            train.batch_size = v;
        }
        if let Some(v) = args.lr {
            train.lr = v;
        }
        if let Some(v) = args.cloud_lr {
            train.cloud_lr = v;
        }
        if let Some(v) = args.n_critic {
            train.n_critic = v;
        }
        if let Some(v) = args.snapshot_every {
            train.snapshot_every = v;
        }
        if let Some(v) = args.sample_count {
            train.sample_count = v;
        }
        if let Some(v) = args.latent {
            train.latent_dim = v;
        }
        train.validate()?;

        let (points, width, knn) = match profile {
            ScaleProfile::Desk => (512, 0.25, 8),
            ScaleProfile::Paper => (2048, 1.0, 20),
        };
        let points = args.points.or(file.points).unwrap_or(points);
        let width = args.width.or(file.width).unwrap_or(width);
        let knn = args.knn.or(file.knn).unwrap_or(knn);
        if width <= 0.0 || !width.is_finite() {
            return Err(Error::invalid(format!("width must be positive, got {}", width)));
        }

        let out_dir = match &args.out {
            Some(p) => p.clone(),
            None => std::env::var_os("PCLAB_OUT")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("pclab-out")),
        };

        Ok(Resolved {
            out_dir,
            seed,
            train,
            points,
            width,
            knn,
        })
    }

    /// Writes `resolved_config.json` into the output directory; `extra`
    /// carries the command-specific parameters.
    pub fn write_snapshot(&self, command: &str, extra: serde_json::Value) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)?;
        let snapshot = serde_json::json!({
            "command": command,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "train": self.train,
            "points": self.points,
            "width": self.width,
            "knn": self.knn,
            "params": extra,
        });
        let path = self.out_dir.join("resolved_config.json");
        std::fs::write(&path, serde_json::to_string_pretty(&snapshot)?)?;
        Ok(path)
    }
}

/// Directory listing of `.xyz` files, sorted by name, loaded individually
/// so errors can name the offending file.
pub fn load_dir_named(dir: &Path) -> Result<Vec<(String, pclab_core::geometry::PointCloud)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "xyz").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!(
            "no .xyz files under {}",
            dir.display()
        )));
    }
    paths
        .into_iter()
        .map(|p| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            pclab_core::geometry::io::load_xyz(&p)
                .map(|c| (name.clone(), c))
                .map_err(|e| Error::Parse(format!("{}: {}", name, e)))
        })
        .collect()
}
