//! Generator-free adversarial training: a fixed set of learnable point
//! clouds plays the fake side, and discriminator gradients move the
//! coordinates directly. What survives in the clouds shows which points
//! the discriminator actually guides.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::gan::{disc_step, wasserstein_estimate, LogRow, RunLog};
use super::{Adam, ExperimentReport, TrainConfig};
use crate::autodiff::Tape;
use crate::geometry::PointCloud;
use crate::networks::{discriminator_score, ForwardCtx, NetworkSpec, WeightBlob};
use crate::{Error, Result};

/// Standard deviation of the initial coordinate noise.
pub const INIT_STD: f64 = 0.1;

pub struct NoGenOutput {
    pub report: ExperimentReport,
    pub log: RunLog,
    pub disc_blob: WeightBlob,
    pub clouds: Vec<PointCloud>,
    /// (epoch, cloud states): the initial state, every `snapshot_every`-th
    /// epoch, and the final state.
    pub snapshots: Vec<(usize, Vec<PointCloud>)>,
}

fn to_clouds(flat: &[Vec<f64>]) -> Vec<PointCloud> {
    flat.iter()
        .map(|c| PointCloud::new(c.chunks(3).map(|p| [p[0], p[1], p[2]]).collect()))
        .collect()
}

/// One coordinate update over a batch of learnable clouds against the
/// frozen discriminator; returns the loss (-mean score).
fn cloud_step(
    disc_spec: &NetworkSpec,
    disc_blob: &WeightBlob,
    opt: &mut Adam,
    clouds: &mut [Vec<f64>],
    chunk: &[usize],
    points: usize,
) -> Result<f64> {
    let mut tape = Tape::new();
    let placed = disc_blob.place(&mut tape)?;
    let mut leaves = Vec::with_capacity(chunk.len());
    for &i in chunk {
        leaves.push(tape.leaf(points, 3, clouds[i].clone())?);
    }
    let loss = {
        let mut ctx = ForwardCtx::new(&mut tape, disc_blob, &placed, true);
        let mut sum = None;
        for &leaf in &leaves {
            let s = discriminator_score(&mut ctx, disc_spec, leaf)?;
            sum = Some(match sum {
                None => s,
                Some(t) => ctx.tape.add(t, s)?,
            });
        }
        drop(ctx);
        tape.scale(sum.expect("non-empty chunk"), -1.0 / chunk.len() as f64)?
    };
    let loss_val = tape.scalar_value(loss);
    if !loss_val.is_finite() {
        return Err(Error::Numerical(
            "cloud update loss went non-finite".to_string(),
        ));
    }
    let grads = tape.backward(loss, &leaves, false)?;
    opt.begin_step();
    for (&i, g) in chunk.iter().zip(&grads) {
        opt.update(&format!("cloud.{}", i), &mut clouds[i], &g.data)?;
    }
    Ok(loss_val)
}

pub fn no_generator_train(
    disc_spec: &NetworkSpec,
    reals: &[PointCloud],
    m: usize,
    config: &TrainConfig,
) -> Result<NoGenOutput> {
    config.validate()?;
    if !disc_spec.kind.is_discriminator() {
        return Err(Error::invalid(format!(
            "{} is not a discriminator",
            disc_spec.kind.name()
        )));
    }
    if reals.is_empty() {
        return Err(Error::EmptyInput("no_generator_train: real set"));
    }
    let points = reals[0].len();
    if reals.iter().any(|r| r.len() != points) {
        return Err(Error::invalid(
            "no_generator_train: real clouds must share a point count".to_string(),
        ));
    }
    if m < config.batch_size || reals.len() < config.batch_size {
        return Err(Error::invalid(format!(
            "batch size {} exceeds cloud count {} or real count {}",
            config.batch_size,
            m,
            reals.len()
        )));
    }

    let mut cloud_rng = config.stream("clouds");
    let mut clouds: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            (0..points * 3)
                .map(|_| cloud_rng.sample::<f64, _>(StandardNormal) * INIT_STD)
                .collect()
        })
        .collect();

    let mut disc_blob = WeightBlob::init(disc_spec, &mut config.stream("disc-init"))?;
    let mut opt_d = Adam::new(config.lr, config.beta1, config.beta2);
    let mut opt_c = Adam::new(config.cloud_lr, config.beta1, config.beta2);
    let mut train_rng = config.stream("train");
    let probe_reals: Vec<PointCloud> = reals[..config.batch_size].to_vec();
    let probe_idx: Vec<usize> = (0..config.batch_size).collect();

    let mut log = RunLog::new();
    let mut snapshots = vec![(0usize, to_clouds(&clouds))];
    let mut disc_steps: u64 = 0;
    let mut cloud_iter: u64 = 0;
    let mut last_d = f64::NAN;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut train_rng);
        for chunk in order.chunks_exact(config.batch_size) {
            disc_steps += 1;
            let real_batch: Vec<&PointCloud> = (0..config.batch_size)
                .map(|_| &reals[train_rng.gen_range(0..reals.len())])
                .collect();
            let fakes: Vec<PointCloud> = to_clouds(
                &chunk.iter().map(|&i| clouds[i].clone()).collect::<Vec<_>>(),
            );
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
                cloud_iter += 1;
                let g_loss =
                    cloud_step(disc_spec, &disc_blob, &mut opt_c, &mut clouds, chunk, points)?;
                let probe_fakes: Vec<PointCloud> = to_clouds(
                    &probe_idx
                        .iter()
                        .map(|&i| clouds[i].clone())
                        .collect::<Vec<_>>(),
                );
                let w = wasserstein_estimate(disc_spec, &disc_blob, &probe_reals, &probe_fakes)?;
                log.append(LogRow {
                    iteration: cloud_iter,
                    wasserstein: w,
                    d_loss: last_d,
                    g_loss,
                })?;
            }
        }
        if config.snapshot_every > 0 && (epoch + 1) % config.snapshot_every == 0 {
            snapshots.push((epoch + 1, to_clouds(&clouds)));
        }
    }
    let _ = last_d;
    if snapshots.last().map(|(e, _)| *e) != Some(config.epochs) {
        snapshots.push((config.epochs, to_clouds(&clouds)));
    }

    let report = ExperimentReport::new(&format!("nogen/{}", disc_spec.kind.name()), config);
    Ok(NoGenOutput {
        report,
        log,
        disc_blob,
        clouds: to_clouds(&clouds),
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sampling::sample_sphere;
    use crate::networks::{cloud_leaf, NetKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tiny_reals(count: usize, points: usize, seed: u64) -> Vec<PointCloud> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let c = sample_sphere(points, &mut rng).unwrap();
                PointCloud::new(
                    c.points
                        .iter()
                        .map(|p| [p[0] * 0.4, p[1] * 0.4, p[2] * 0.4])
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn initial_clouds_have_the_advertised_spread() {
        let reals = tiny_reals(4, 32, 1);
        let spec = NetworkSpec::new(NetKind::PointNetMix)
            .with_width(0.125)
            .with_points(32);
        let mut config = TrainConfig::desk(3).with_epochs(1).with_batch(2);
        config.n_critic = 2;
        config.snapshot_every = 0;
        let out = no_generator_train(&spec, &reals, 4, &config).unwrap();
        let initial = &out.snapshots[0].1;
        let coords: Vec<f64> = initial
            .iter()
            .flat_map(|c| c.points.iter().flatten().copied())
            .collect();
        let n = coords.len() as f64;
        let mean = coords.iter().sum::<f64>() / n;
        let std =
            (coords.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(
            (std - INIT_STD).abs() / INIT_STD < 0.1,
            "sample std {} too far from {}",
            std,
            INIT_STD
        );
    }

    #[test]
    fn smoke_run_moves_clouds_deterministically() {
        let reals = tiny_reals(4, 16, 2);
        let spec = NetworkSpec::new(NetKind::PointNetMix)
            .with_width(0.125)
            .with_points(16);
        let mut config = TrainConfig::desk(8).with_epochs(4).with_batch(2);
        config.n_critic = 2;
        config.snapshot_every = 2;
        config.cloud_lr = 1e-2;
        let out = no_generator_train(&spec, &reals, 4, &config).unwrap();
        // 4 epochs x 2 chunks, cloud step every 2nd disc step.
        assert_eq!(out.log.rows().len(), 4);
        // Initial, epoch 2, epoch 4.
        assert_eq!(
            out.snapshots.iter().map(|(e, _)| *e).collect::<Vec<_>>(),
            vec![0, 2, 4]
        );
        let initial = &out.snapshots[0].1;
        let moved = out
            .clouds
            .iter()
            .zip(initial)
            .any(|(a, b)| a.points != b.points);
        assert!(moved, "cloud coordinates never changed");
        let again = no_generator_train(&spec, &reals, 4, &config).unwrap();
        assert_eq!(out.log.to_csv(), again.log.to_csv());
        assert_eq!(out.clouds[0].points, again.clouds[0].points);
    }

    #[test]
    fn max_pool_routes_gradients_to_argmax_contributors() {
        let spec = NetworkSpec::new(NetKind::PointNetMax)
            .with_width(0.125)
            .with_points(12);
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let blob = WeightBlob::init(&spec, &mut rng).unwrap();
        let cloud = tiny_reals(1, 12, 22).remove(0);

        let mut tape = Tape::new();
        let placed = blob.place(&mut tape).unwrap();
        let x = cloud_leaf(&mut tape, &cloud).unwrap();
        let mut ctx = ForwardCtx::new(&mut tape, &blob, &placed, true);
        let s = discriminator_score(&mut ctx, &spec, x).unwrap();
        drop(ctx);
        let grads = tape.backward(s, &[x], false).unwrap();
        let mut grad_rows = std::collections::BTreeSet::new();
        for (i, row) in grads[0].data.chunks(3).enumerate() {
            if row.iter().any(|g| *g != 0.0) {
                grad_rows.insert(i);
            }
        }

        // Plain-loop replay of the encoder to find each channel's argmax row.
        let lrelu = |v: f64| if v >= 0.0 { v } else { 0.2 * v };
        let mut feats: Vec<Vec<f64>> = cloud.points.iter().map(|p| p.to_vec()).collect();
        for layer in 0..3 {
            let w = blob.get(&format!("enc.{}.w", layer)).unwrap();
            let b = blob.get(&format!("enc.{}.b", layer)).unwrap();
            feats = feats
                .iter()
                .map(|f| {
                    (0..w.cols)
                        .map(|j| {
                            let mut acc = b.data[j];
                            for (i, fi) in f.iter().enumerate() {
                                acc += fi * w.data[i * w.cols + j];
                            }
                            lrelu(acc)
                        })
                        .collect()
                })
                .collect();
        }
        let channels = feats[0].len();
        let mut winners = std::collections::BTreeSet::new();
        for c in 0..channels {
            let mut best = 0;
            for r in 1..feats.len() {
                if feats[r][c] > feats[best][c] {
                    best = r;
                }
            }
            winners.insert(best);
        }
        assert_eq!(grad_rows, winners);
    }

    #[test]
    fn bad_inputs_rejected() {
        let reals = tiny_reals(4, 16, 5);
        let gen = NetworkSpec::new(NetKind::FcGenerator);
        let config = TrainConfig::desk(0).with_epochs(1).with_batch(2);
        assert!(no_generator_train(&gen, &reals, 4, &config).is_err());
        let disc = NetworkSpec::new(NetKind::PointNetMax)
            .with_points(16);
        assert!(no_generator_train(&disc, &reals, 1, &config).is_err());
        let mut mixed = reals.clone();
        mixed.push(tiny_reals(1, 8, 6).remove(0));
        assert!(no_generator_train(&disc, &mixed, 4, &config).is_err());
    }
}
