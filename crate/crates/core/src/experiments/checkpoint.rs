//! Mid-run state capture: exact RNG positions plus a JSON envelope tying
//! together config, optimizer state, and the weight files of a run.
//! Weights themselves stay in the binary weight format; the checkpoint
//! stores their file names.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::gan::{GanState, GanStateView, RunLog};
use super::{Adam, TrainConfig};
use crate::networks::WeightBlob;
use crate::{Error, Result};

/// A ChaCha20 stream is fully determined by its seed and word position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSnapshot {
    pub seed: [u8; 32],
    pub word_pos: u128,
}

pub fn snapshot_rng(rng: &ChaCha20Rng) -> RngSnapshot {
    RngSnapshot {
        seed: rng.get_seed(),
        word_pos: rng.get_word_pos(),
    }
}

pub fn load_rng(s: &RngSnapshot) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::from_seed(s.seed);
    rng.set_word_pos(s.word_pos);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainCheckpoint {
    pub epoch: usize,
    pub config: TrainConfig,
    pub opt_d: Adam,
    pub opt_g: Adam,
    pub train_rng: RngSnapshot,
    /// File names relative to the checkpoint's directory.
    pub gen_weights: String,
    pub disc_weights: String,
    pub log: String,
}

impl TrainCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainCheckpoint> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Writes weights, the training log, and the checkpoint envelope into
/// `dir`, overwriting `checkpoint.json` so the latest snapshot wins.
pub fn save_gan_state(dir: &Path, config: &TrainConfig, view: &GanStateView) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let gen_name = format!("gen_ep{:05}.wt", view.epoch);
    let disc_name = format!("disc_ep{:05}.wt", view.epoch);
    let log_name = format!("log_ep{:05}.csv", view.epoch);
    view.gen_blob.save(&dir.join(&gen_name))?;
    view.disc_blob.save(&dir.join(&disc_name))?;
    view.log.save(&dir.join(&log_name))?;
    let ckpt = TrainCheckpoint {
        epoch: view.epoch,
        config: config.clone(),
        opt_d: view.opt_d.clone(),
        opt_g: view.opt_g.clone(),
        train_rng: snapshot_rng(view.train_rng),
        gen_weights: gen_name,
        disc_weights: disc_name,
        log: log_name,
    };
    ckpt.save(&dir.join(CHECKPOINT_FILE))
}

/// Restores a run from the latest checkpoint in `dir`.
pub fn load_gan_state(dir: &Path) -> Result<(TrainConfig, GanState)> {
    let path = dir.join(CHECKPOINT_FILE);
    if !path.is_file() {
        return Err(Error::invalid(format!(
            "no {} under {}",
            CHECKPOINT_FILE,
            dir.display()
        )));
    }
    let ckpt = TrainCheckpoint::load(&path)?;
    let state = GanState {
        epoch: ckpt.epoch,
        gen_blob: WeightBlob::load_any(&dir.join(&ckpt.gen_weights))?,
        disc_blob: WeightBlob::load_any(&dir.join(&ckpt.disc_weights))?,
        opt_g: ckpt.opt_g,
        opt_d: ckpt.opt_d,
        train_rng: load_rng(&ckpt.train_rng),
        log: RunLog::load(&dir.join(&ckpt.log))?,
    };
    Ok((ckpt.config, state))
}
