//! WGAN training with gradient penalty. The discriminator takes `n_critic`
//! updates per generator update; the logged Wasserstein estimate comes from
//! a fixed probe batch re-scored after each generator iteration, so it can
//! be recomputed exactly from a checkpoint.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::{Adam, ExperimentReport, GpMode, TrainConfig};
use crate::autodiff::{gradient_penalty_with, Tape, TensorId};
use crate::geometry::PointCloud;
use crate::networks::{
    apply_bn_updates, cloud_leaf, discriminator_score, generate, score_cloud, sphere_template,
    ForwardCtx, NetKind, NetworkSpec, WeightBlob, BN_MOMENTUM,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iteration: u64,
    pub wasserstein: f64,
    pub d_loss: f64,
    pub g_loss: f64,
}

/// Append-only per-iteration training log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    rows: Vec<LogRow>,
    pub checkpoints: Vec<String>,
}

impl RunLog {
    pub const CSV_HEADER: &'static str = "iteration,wasserstein,d_loss,g_loss";

    pub fn new() -> Self {
        RunLog::default()
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn append(&mut self, row: LogRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.iteration <= last.iteration {
                return Err(Error::invalid(format!(
                    "log iterations must increase: {} after {}",
                    row.iteration, last.iteration
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.iteration, r.wasserstein, r.d_loss, r.g_loss
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<RunLog> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == Self::CSV_HEADER => {}
            other => {
                return Err(Error::Parse(format!(
                    "run log header mismatch: {:?}",
                    other
                )))
            }
        }
        let mut log = RunLog::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse(format!(
                    "run log line {}: expected 4 fields, got {}",
                    i + 2,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("run log line {}: {}", i + 2, e)))
            };
            log.append(LogRow {
                iteration: fields[0]
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| Error::Parse(format!("run log line {}: {}", i + 2, e)))?,
                wasserstein: parse(fields[1])?,
                d_loss: parse(fields[2])?,
                g_loss: parse(fields[3])?,
            })?;
        }
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunLog> {
        RunLog::from_csv(&std::fs::read_to_string(path)?)
    }
}

pub struct GanOutput {
    pub report: ExperimentReport,
    pub log: RunLog,
    pub gen_blob: WeightBlob,
    pub disc_blob: WeightBlob,
    pub samples: Vec<PointCloud>,
    /// (epoch, generator, discriminator) weights, every `snapshot_every`
    /// epochs; the final state lives in the top-level blobs.
    pub snapshots: Vec<(usize, WeightBlob, WeightBlob)>,
}

/// Everything a run needs to continue exactly where it stopped. Captured
/// only at epoch boundaries, so the implied step counters follow from
/// `epoch` alone.
#[derive(Debug, Clone)]
pub struct GanState {
    /// Completed epochs.
    pub epoch: usize,
    pub gen_blob: WeightBlob,
    pub disc_blob: WeightBlob,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub train_rng: ChaCha20Rng,
    pub log: RunLog,
}

/// Borrowed view of the mid-run state, handed to the snapshot callback.
pub struct GanStateView<'a> {
    pub epoch: usize,
    pub gen_blob: &'a WeightBlob,
    pub disc_blob: &'a WeightBlob,
    pub opt_g: &'a Adam,
    pub opt_d: &'a Adam,
    pub train_rng: &'a ChaCha20Rng,
    pub log: &'a RunLog,
}

impl GanStateView<'_> {
    pub fn to_owned(&self) -> GanState {
        GanState {
            epoch: self.epoch,
            gen_blob: self.gen_blob.clone(),
            disc_blob: self.disc_blob.clone(),
            opt_g: self.opt_g.clone(),
            opt_d: self.opt_d.clone(),
            train_rng: self.train_rng.clone(),
            log: self.log.clone(),
        }
    }
}

/// Mean eval-mode real score minus mean eval-mode fake score.
pub fn wasserstein_estimate(
    disc_spec: &NetworkSpec,
    disc_blob: &WeightBlob,
    reals: &[PointCloud],
    fakes: &[PointCloud],
) -> Result<f64> {
    if reals.is_empty() || fakes.is_empty() {
        return Err(Error::EmptyInput("wasserstein_estimate"));
    }
    let mean = |set: &[PointCloud]| -> Result<f64> {
        let mut sum = 0.0;
        for c in set {
            sum += score_cloud(disc_spec, disc_blob, c)?;
        }
        Ok(sum / set.len() as f64)
    };
    Ok(mean(reals)? - mean(fakes)?)
}

fn draw_z(tape: &mut Tape, latent: usize, rng: &mut impl Rng) -> Result<TensorId> {
    let z: Vec<f64> = (0..latent).map(|_| rng.sample(StandardNormal)).collect();
    tape.leaf(1, latent, z)
}

/// `count` clouds from the generator in eval mode. Deform templates draw
/// from the same rng, so a cloned rng reproduces the exact sample set.
pub fn generate_samples(
    gen_spec: &NetworkSpec,
    gen_blob: &WeightBlob,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<PointCloud>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut tape = Tape::new();
        let placed = gen_blob.place(&mut tape)?;
        let z = draw_z(&mut tape, gen_spec.latent_dim, rng)?;
        let template = match gen_spec.kind {
            NetKind::DeformGenerator => Some(sphere_template(gen_spec.points, rng)?),
            _ => None,
        };
        let mut ctx = ForwardCtx::new(&mut tape, gen_blob, &placed, false);
        let cloud = generate(
            &mut ctx,
            gen_spec,
            z,
            template.as_ref().map(|t| t.points.as_slice()),
        )?;
        let vals = ctx.tape.value(cloud).to_vec();
        out.push(PointCloud::new(
            vals.chunks(3).map(|p| [p[0], p[1], p[2]]).collect(),
        ));
    }
    Ok(out)
}

/// One training-mode generator forward per fake; batch-norm statistics fold
/// back into the generator blob.
fn training_fakes(
    gen_spec: &NetworkSpec,
    gen_blob: &mut WeightBlob,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<PointCloud>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut tape = Tape::new();
        let placed = gen_blob.place(&mut tape)?;
        let z = draw_z(&mut tape, gen_spec.latent_dim, rng)?;
        let template = match gen_spec.kind {
            NetKind::DeformGenerator => Some(sphere_template(gen_spec.points, rng)?),
            _ => None,
        };
        let updates;
        let vals;
        {
            let mut ctx = ForwardCtx::new(&mut tape, &*gen_blob, &placed, true);
            let cloud = generate(
                &mut ctx,
                gen_spec,
                z,
                template.as_ref().map(|t| t.points.as_slice()),
            )?;
            vals = ctx.tape.value(cloud).to_vec();
            updates = std::mem::take(&mut ctx.bn_updates);
        }
        apply_bn_updates(gen_blob, &updates, BN_MOMENTUM)?;
        out.push(PointCloud::new(
            vals.chunks(3).map(|p| [p[0], p[1], p[2]]).collect(),
        ));
    }
    Ok(out)
}

/// One discriminator update on a real/fake batch; returns the loss value.
pub(super) fn disc_step(
    disc_spec: &NetworkSpec,
    disc_blob: &mut WeightBlob,
    opt: &mut Adam,
    reals: &[&PointCloud],
    fakes: &[PointCloud],
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut tape = Tape::new();
    let placed = disc_blob.place(&mut tape)?;
    let wrt = disc_blob.trainable_ids(&placed);
    let (loss, updates) = {
        let blob_ref: &WeightBlob = &*disc_blob;
        let mut real_ids = Vec::with_capacity(reals.len());
        for r in reals {
            real_ids.push(cloud_leaf(&mut tape, r)?);
        }
        let mut fake_ids = Vec::with_capacity(fakes.len());
        for f in fakes {
            fake_ids.push(cloud_leaf(&mut tape, f)?);
        }
        let mut ctx = ForwardCtx::new(&mut tape, blob_ref, &placed, true);
        let mut real_sum: Option<TensorId> = None;
        for &id in &real_ids {
            let s = discriminator_score(&mut ctx, disc_spec, id)?;
            real_sum = Some(match real_sum {
                None => s,
                Some(t) => ctx.tape.add(t, s)?,
            });
        }
        let mut fake_sum: Option<TensorId> = None;
        for &id in &fake_ids {
            let s = discriminator_score(&mut ctx, disc_spec, id)?;
            fake_sum = Some(match fake_sum {
                None => s,
                Some(t) => ctx.tape.add(t, s)?,
            });
        }
        let updates = std::mem::take(&mut ctx.bn_updates);
        drop(ctx);
        let mean_real = tape.scale(real_sum.expect("non-empty batch"), 1.0 / reals.len() as f64)?;
        let mean_fake = tape.scale(fake_sum.expect("non-empty batch"), 1.0 / fakes.len() as f64)?;
        let gap = tape.sub(mean_fake, mean_real)?;
        let loss = match config.gp_mode {
            GpMode::GradientPenalty => {
                let pen = gradient_penalty_with(&mut tape, &real_ids, &fake_ids, rng, |t, x| {
                    // Interpolate statistics stay out of the running buffers.
                    let mut c = ForwardCtx::new(t, blob_ref, &placed, true);
                    discriminator_score(&mut c, disc_spec, x)
                })?;
                let weighted = tape.scale(pen, config.lambda_gp)?;
                tape.add(gap, weighted)?
            }
            GpMode::WeightClip => gap,
        };
        (loss, updates)
    };
    let loss_val = tape.scalar_value(loss);
    if !loss_val.is_finite() {
        return Err(Error::Numerical(format!(
            "discriminator loss went non-finite at step {}",
            opt.step_count() + 1
        )));
    }
    let grads = tape.backward(loss, &wrt, false)?;
    let gvecs: Vec<Vec<f64>> = grads.into_iter().map(|t| t.data).collect();
    opt.step_weights(disc_blob, &gvecs)?;
    apply_bn_updates(disc_blob, &updates, BN_MOMENTUM)?;
    if config.gp_mode == GpMode::WeightClip {
        for t in disc_blob.tensors.iter_mut().filter(|t| t.trainable) {
            for v in &mut t.data {
                *v = v.clamp(-config.clip, config.clip);
            }
        }
    }
    Ok(loss_val)
}

/// One generator update: fakes built and scored on a single tape so the
/// gradient flows through the frozen discriminator into the generator.
fn gen_step(
    gen_spec: &NetworkSpec,
    disc_spec: &NetworkSpec,
    gen_blob: &mut WeightBlob,
    disc_blob: &WeightBlob,
    opt: &mut Adam,
    batch: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut tape = Tape::new();
    let gen_placed = gen_blob.place(&mut tape)?;
    let disc_placed = disc_blob.place(&mut tape)?;
    let wrt = gen_blob.trainable_ids(&gen_placed);
    let (loss, gen_updates) = {
        let mut clouds = Vec::with_capacity(batch);
        let gen_updates;
        {
            let mut gctx = ForwardCtx::new(&mut tape, &*gen_blob, &gen_placed, true);
            for _ in 0..batch {
                let z = draw_z(gctx.tape, gen_spec.latent_dim, rng)?;
                let template = match gen_spec.kind {
                    NetKind::DeformGenerator => Some(sphere_template(gen_spec.points, rng)?),
                    _ => None,
                };
                clouds.push(generate(
                    &mut gctx,
                    gen_spec,
                    z,
                    template.as_ref().map(|t| t.points.as_slice()),
                )?);
            }
            gen_updates = std::mem::take(&mut gctx.bn_updates);
        }
        let mut dctx = ForwardCtx::new(&mut tape, disc_blob, &disc_placed, true);
        let mut sum: Option<TensorId> = None;
        for &c in &clouds {
            let s = discriminator_score(&mut dctx, disc_spec, c)?;
            sum = Some(match sum {
                None => s,
                Some(t) => dctx.tape.add(t, s)?,
            });
        }
        drop(dctx);
        let loss = tape.scale(sum.expect("non-empty batch"), -1.0 / batch as f64)?;
        (loss, gen_updates)
    };
    let loss_val = tape.scalar_value(loss);
    if !loss_val.is_finite() {
        return Err(Error::Numerical(
            "generator loss went non-finite".to_string(),
        ));
    }
    let grads = tape.backward(loss, &wrt, false)?;
    let gvecs: Vec<Vec<f64>> = grads.into_iter().map(|t| t.data).collect();
    opt.step_weights(gen_blob, &gvecs)?;
    apply_bn_updates(gen_blob, &gen_updates, BN_MOMENTUM)?;
    Ok(loss_val)
}

pub fn train_gan(
    gen_spec: &NetworkSpec,
    disc_spec: &NetworkSpec,
    reals: &[PointCloud],
    config: &TrainConfig,
) -> Result<GanOutput> {
    train_gan_with(gen_spec, disc_spec, reals, config, None, |_| Ok(()))
}

/// Full trainer: optionally continues from a captured state, and calls
/// `on_snapshot` at every `snapshot_every`-th epoch boundary with enough
/// state to restart the run bit-for-bit.
pub fn train_gan_with(
    gen_spec: &NetworkSpec,
    disc_spec: &NetworkSpec,
    reals: &[PointCloud],
    config: &TrainConfig,
    resume: Option<GanState>,
    mut on_snapshot: impl FnMut(&GanStateView) -> Result<()>,
) -> Result<GanOutput> {
    config.validate()?;
    if !gen_spec.kind.is_generator() {
        return Err(Error::invalid(format!(
            "{} is not a generator",
            gen_spec.kind.name()
        )));
    }
    if !disc_spec.kind.is_discriminator() {
        return Err(Error::invalid(format!(
            "{} is not a discriminator",
            disc_spec.kind.name()
        )));
    }
    if gen_spec.latent_dim != config.latent_dim {
        return Err(Error::invalid(format!(
            "generator latent dim {} but config says {}",
            gen_spec.latent_dim, config.latent_dim
        )));
    }
    if reals.is_empty() {
        return Err(Error::EmptyInput("train_gan: real set"));
    }
    if reals.len() < config.batch_size {
        return Err(Error::invalid(format!(
            "batch size {} exceeds real set of {}",
            config.batch_size,
            reals.len()
        )));
    }
    for (i, r) in reals.iter().enumerate() {
        if r.len() != gen_spec.points {
            return Err(Error::invalid(format!(
                "real cloud {} has {} points, generator emits {}",
                i,
                r.len(),
                gen_spec.points
            )));
        }
    }

    let start_epoch;
    let (mut gen_blob, mut disc_blob, mut opt_g, mut opt_d, mut train_rng, mut log) = match resume
    {
        Some(state) => {
            if state.epoch > config.epochs {
                return Err(Error::invalid(format!(
                    "resume epoch {} beyond configured {}",
                    state.epoch, config.epochs
                )));
            }
            if state.gen_blob.spec.fingerprint() != gen_spec.fingerprint()
                || state.disc_blob.spec.fingerprint() != disc_spec.fingerprint()
            {
                return Err(Error::invalid(
                    "resume state was trained with different network specs".to_string(),
                ));
            }
            start_epoch = state.epoch;
            (
                state.gen_blob,
                state.disc_blob,
                state.opt_g,
                state.opt_d,
                state.train_rng,
                state.log,
            )
        }
        None => {
            start_epoch = 0;
            (
                WeightBlob::init(gen_spec, &mut config.stream("gen-init"))?,
                WeightBlob::init(disc_spec, &mut config.stream("disc-init"))?,
                Adam::new(config.lr, config.beta1, config.beta2),
                Adam::new(config.lr, config.beta1, config.beta2),
                config.stream("train"),
                RunLog::new(),
            )
        }
    };
    let probe_reals: Vec<PointCloud> = reals[..config.batch_size].to_vec();
    let mut snapshots = Vec::new();
    // Epoch boundaries pin the counters: every chunk is one disc step and
    // every n_critic-th disc step is one generator step.
    let chunks_per_epoch = (reals.len() / config.batch_size) as u64;
    let mut disc_steps: u64 = start_epoch as u64 * chunks_per_epoch;
    let mut gen_iter: u64 = disc_steps / config.n_critic as u64;
    let mut last_d = f64::NAN;

    for epoch in start_epoch..config.epochs {
        let mut order: Vec<usize> = (0..reals.len()).collect();
        order.shuffle(&mut train_rng);
        for chunk in order.chunks_exact(config.batch_size) {
            disc_steps += 1;
            let real_batch: Vec<&PointCloud> = chunk.iter().map(|&i| &reals[i]).collect();
            let fakes = training_fakes(
                gen_spec,
                &mut gen_blob,
                config.batch_size,
                &mut train_rng,
            )?;
            last_d = disc_step(
                disc_spec,
                &mut disc_blob,
                &mut opt_d,
                &real_batch,
                &fakes,
                config,
                &mut train_rng,
            )?;
            if disc_steps % config.n_critic as u64 == 0 {
                gen_iter += 1;
                let g_loss = gen_step(
                    gen_spec,
                    disc_spec,
                    &mut gen_blob,
                    &disc_blob,
                    &mut opt_g,
                    config.batch_size,
                    &mut train_rng,
                )?;
                let probe_fakes = generate_samples(
                    gen_spec,
                    &gen_blob,
                    probe_reals.len(),
                    &mut config.stream("probe"),
                )?;
                let w = wasserstein_estimate(disc_spec, &disc_blob, &probe_reals, &probe_fakes)?;
                log.append(LogRow {
                    iteration: gen_iter,
                    wasserstein: w,
                    d_loss: last_d,
                    g_loss,
                })?;
            }
        }
        if config.snapshot_every > 0 && (epoch + 1) % config.snapshot_every == 0 {
            on_snapshot(&GanStateView {
                epoch: epoch + 1,
                gen_blob: &gen_blob,
                disc_blob: &disc_blob,
                opt_g: &opt_g,
                opt_d: &opt_d,
                train_rng: &train_rng,
                log: &log,
            })?;
            snapshots.push((epoch + 1, gen_blob.clone(), disc_blob.clone()));
        }
    }
    let _ = last_d;

    let samples = generate_samples(
        gen_spec,
        &gen_blob,
        config.sample_count,
        &mut config.stream("samples"),
    )?;
    let report = ExperimentReport::new(
        &format!("gan/{}-vs-{}", gen_spec.kind.name(), disc_spec.kind.name()),
        config,
    );
    Ok(GanOutput {
        report,
        log,
        gen_blob,
        disc_blob,
        samples,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sampling::sample_sphere;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tiny_setup() -> (NetworkSpec, NetworkSpec, Vec<PointCloud>, TrainConfig) {
        let gen_spec = NetworkSpec::new(NetKind::FcGenerator)
            .with_width(0.125)
            .with_points(16)
            .with_latent(8);
        let disc_spec = NetworkSpec::new(NetKind::PointNetMax)
            .with_width(0.125)
            .with_points(16);
        let mut rng = ChaCha20Rng::seed_from_u64(40);
        let reals: Vec<PointCloud> = (0..8)
            .map(|_| {
                let c = sample_sphere(16, &mut rng).unwrap();
                PointCloud::new(c.points.iter().map(|p| [p[0] * 0.4, p[1] * 0.4, p[2] * 0.4]).collect())
            })
            .collect();
        let mut config = TrainConfig::desk(77).with_epochs(2).with_batch(4);
        config.latent_dim = 8;
        config.n_critic = 2;
        config.sample_count = 5;
        config.snapshot_every = 1;
        (gen_spec, disc_spec, reals, config)
    }

    #[test]
    fn smoke_run_is_deterministic_and_on_schedule() {
        let (gen_spec, disc_spec, reals, config) = tiny_setup();
        let out = train_gan(&gen_spec, &disc_spec, &reals, &config).unwrap();
        // 2 epochs x 2 disc steps, one gen step per n_critic = 2.
        assert_eq!(out.log.rows().len(), 2);
        assert_eq!(out.log.rows()[0].iteration, 1);
        assert_eq!(out.log.rows()[1].iteration, 2);
        for row in out.log.rows() {
            assert!(row.wasserstein.is_finite());
            assert!(row.d_loss.is_finite());
            assert!(row.g_loss.is_finite());
        }
        assert_eq!(out.samples.len(), 5);
        assert_eq!(
            out.snapshots.iter().map(|(e, _, _)| *e).collect::<Vec<_>>(),
            vec![1, 2]
        );
        for s in &out.samples {
            assert_eq!(s.len(), 16);
            for p in &s.points {
                for c in p {
                    assert!(c.abs() < 0.5);
                }
            }
        }
        let again = train_gan(&gen_spec, &disc_spec, &reals, &config).unwrap();
        assert_eq!(out.log.to_csv(), again.log.to_csv());
        assert_eq!(out.samples[0].points, again.samples[0].points);
    }

    #[test]
    fn logged_estimate_recomputable_from_checkpoint() {
        let (gen_spec, disc_spec, reals, config) = tiny_setup();
        let out = train_gan(&gen_spec, &disc_spec, &reals, &config).unwrap();
        let probe_reals = &reals[..config.batch_size];
        let probe_fakes = generate_samples(
            &gen_spec,
            &out.gen_blob,
            probe_reals.len(),
            &mut config.stream("probe"),
        )
        .unwrap();
        let w =
            wasserstein_estimate(&disc_spec, &out.disc_blob, probe_reals, &probe_fakes).unwrap();
        let logged = out.log.rows().last().unwrap().wasserstein;
        assert_eq!(w.to_bits(), logged.to_bits());
    }

    #[test]
    fn interrupted_run_resumes_bit_for_bit() {
        let (gen_spec, disc_spec, reals, config) = tiny_setup();
        let full = train_gan(&gen_spec, &disc_spec, &reals, &config).unwrap();

        let mut captured: Option<GanState> = None;
        let short = config.clone().with_epochs(1);
        train_gan_with(&gen_spec, &disc_spec, &reals, &short, None, |view| {
            captured = Some(view.to_owned());
            Ok(())
        })
        .unwrap();
        let state = captured.expect("snapshot at epoch 1");
        assert_eq!(state.epoch, 1);

        let resumed =
            train_gan_with(&gen_spec, &disc_spec, &reals, &config, Some(state), |_| Ok(()))
                .unwrap();
        assert_eq!(full.log.to_csv(), resumed.log.to_csv());
        for (a, b) in full.gen_blob.tensors.iter().zip(&resumed.gen_blob.tensors) {
            assert_eq!(a.data, b.data, "generator tensor {} diverged", a.name);
        }
        for (a, b) in full.disc_blob.tensors.iter().zip(&resumed.disc_blob.tensors) {
            assert_eq!(a.data, b.data, "discriminator tensor {} diverged", a.name);
        }
        assert_eq!(full.samples[0].points, resumed.samples[0].points);

        let stale = GanState {
            epoch: config.epochs + 1,
            ..resumed_state(&resumed, &config)
        };
        assert!(
            train_gan_with(&gen_spec, &disc_spec, &reals, &config, Some(stale), |_| Ok(()))
                .is_err()
        );
    }

    fn resumed_state(out: &GanOutput, config: &TrainConfig) -> GanState {
        GanState {
            epoch: 0,
            gen_blob: out.gen_blob.clone(),
            disc_blob: out.disc_blob.clone(),
            opt_g: Adam::new(config.lr, config.beta1, config.beta2),
            opt_d: Adam::new(config.lr, config.beta1, config.beta2),
            train_rng: config.stream("train"),
            log: RunLog::new(),
        }
    }

    #[test]
    fn weight_clip_mode_bounds_disc_weights() {
        let (gen_spec, disc_spec, reals, mut config) = tiny_setup();
        config.gp_mode = GpMode::WeightClip;
        config.epochs = 1;
        let out = train_gan(&gen_spec, &disc_spec, &reals, &config).unwrap();
        for t in out.disc_blob.tensors.iter().filter(|t| t.trainable) {
            for v in &t.data {
                assert!(v.abs() <= config.clip + 1e-15);
            }
        }
    }

    #[test]
    fn csv_round_trip_and_monotonicity() {
        let mut log = RunLog::new();
        log.append(LogRow {
            iteration: 1,
            wasserstein: 0.125,
            d_loss: -0.5,
            g_loss: 0.25,
        })
        .unwrap();
        log.append(LogRow {
            iteration: 2,
            wasserstein: 0.1,
            d_loss: -0.43,
            g_loss: 0.21,
        })
        .unwrap();
        let back = RunLog::from_csv(&log.to_csv()).unwrap();
        assert_eq!(log.rows(), back.rows());
        assert!(log
            .append(LogRow {
                iteration: 2,
                wasserstein: 0.0,
                d_loss: 0.0,
                g_loss: 0.0
            })
            .is_err());
        assert!(RunLog::from_csv("bogus\n1,2,3,4\n").is_err());
    }

    #[test]
    fn config_mismatches_rejected() {
        let (gen_spec, disc_spec, reals, mut config) = tiny_setup();
        config.latent_dim = 64;
        assert!(train_gan(&gen_spec, &disc_spec, &reals, &config).is_err());
        let (gen_spec, disc_spec, _, config) = tiny_setup();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let wrong: Vec<PointCloud> = (0..8).map(|_| sample_sphere(24, &mut rng).unwrap()).collect();
        assert!(train_gan(&gen_spec, &disc_spec, &wrong, &config).is_err());
        let (gen_spec, _, reals, config) = tiny_setup();
        assert!(train_gan(&gen_spec, &gen_spec, &reals, &config).is_err());
    }
}
