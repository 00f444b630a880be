//! Supervised drivers: real-vs-fake classification with each discriminator
//! architecture, and multi-class shape pretraining for the feature
//! extractors. Both stop early once training accuracy saturates, bounded
//! by the configured epoch count.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;

use super::{Adam, ClassDataset, ExperimentReport, TrainConfig};
use crate::autodiff::{Tape, TensorId};
use crate::geometry::LabeledCloudSet;
use crate::networks::{
    apply_bn_updates, cloud_leaf, discriminator_logit, extractor_logits, score_cloud, ForwardCtx,
    NetKind, NetworkSpec, WeightBlob, BN_MOMENTUM,
};
use crate::{Error, Result};

const CONVERGED_ACC: f64 = 0.995;
/// Consecutive saturated epochs before stopping.
const SATURATED_EPOCHS: usize = 3;

/// ln(1 + exp(x)) without overflow: max(x, 0) + ln(1 + exp(-|x|)).
fn softplus(tape: &mut Tape, x: TensorId) -> Result<TensorId> {
    let pos = tape.leaky_relu(x, 0.0)?;
    let absx = tape.leaky_relu(x, -1.0)?;
    let neg = tape.scale(absx, -1.0)?;
    let e = tape.exp(neg)?;
    let shifted = tape.add_scalar(e, 1.0)?;
    let tail = tape.ln(shifted)?;
    tape.add(pos, tail)
}

/// Binary cross-entropy of sigmoid(logit) against label y: softplus(logit) - y*logit.
fn bce_with_logit(tape: &mut Tape, logit: TensorId, y: f64) -> Result<TensorId> {
    let sp = softplus(tape, logit)?;
    if y == 0.0 {
        return Ok(sp);
    }
    let lin = tape.scale(logit, -y)?;
    tape.add(sp, lin)
}

/// Cross-entropy of a 1 x k logit row against a class index, computed as
/// log-sum-exp(logits) - logits[label] with the max subtracted first.
fn ce_with_logits(tape: &mut Tape, logits: TensorId, label: usize, k: usize) -> Result<TensorId> {
    if label >= k {
        return Err(Error::invalid(format!(
            "class label {} out of range for {} classes",
            label, k
        )));
    }
    let col = tape.transpose(logits)?;
    let m = tape.max_rows(col)?;
    let wide = tape.broadcast_row(m, k)?;
    let centered = tape.sub(col, wide)?;
    let e = tape.exp(centered)?;
    let s = tape.sum_rows(e)?;
    let ls = tape.ln(s)?;
    let lse = tape.add(m, ls)?;
    let mut onehot = vec![0.0; k];
    onehot[label] = 1.0;
    let sel = tape.leaf(k, 1, onehot)?;
    let picked = tape.matmul(logits, sel)?;
    tape.sub(lse, picked)
}

fn epoch_batches(count: usize, batch: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(rng);
    idx.chunks(batch.max(1)).map(|c| c.to_vec()).collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn binary_accuracy(spec: &NetworkSpec, blob: &WeightBlob, set: &LabeledCloudSet) -> Result<f64> {
    let mut hits = 0usize;
    for (cloud, &label) in set.clouds.iter().zip(&set.labels) {
        let s = score_cloud(spec, blob, cloud)?;
        if (s >= 0.5) == (label == 1) {
            hits += 1;
        }
    }
    Ok(hits as f64 / set.clouds.len() as f64)
}

fn predict_class(spec: &NetworkSpec, blob: &WeightBlob, cloud: &crate::geometry::PointCloud) -> Result<usize> {
    let mut tape = Tape::new();
    let placed = blob.place(&mut tape)?;
    let x = cloud_leaf(&mut tape, cloud)?;
    let mut ctx = ForwardCtx::new(&mut tape, blob, &placed, false);
    let logits = extractor_logits(&mut ctx, spec, x)?;
    let vals = ctx.tape.value(logits).to_vec();
    Ok(argmax(&vals))
}

fn class_accuracy(spec: &NetworkSpec, blob: &WeightBlob, set: &LabeledCloudSet) -> Result<f64> {
    let mut hits = 0usize;
    for (cloud, &label) in set.clouds.iter().zip(&set.labels) {
        if predict_class(spec, blob, cloud)? == label as usize {
            hits += 1;
        }
    }
    Ok(hits as f64 / set.clouds.len() as f64)
}

/// One optimization step over a batch: forward every sample, average the
/// per-sample losses, backprop, Adam-update the blob, fold in batch-norm
/// statistics. `loss_of` maps (ctx, sample index) to a scalar loss node and
/// reports whether the training-mode prediction was correct.
fn run_epochs<F>(
    blob: &mut WeightBlob,
    opt: &mut Adam,
    count: usize,
    config: &TrainConfig,
    mut loss_of: F,
) -> Result<()>
where
    F: FnMut(&mut ForwardCtx, usize) -> Result<(TensorId, bool)>,
{
    let mut shuffle_rng = config.stream("train");
    let mut iteration: u64 = 0;
    let mut saturated = 0usize;
    for _epoch in 0..config.epochs {
        let mut hits = 0usize;
        for batch in epoch_batches(count, config.batch_size, &mut shuffle_rng) {
            iteration += 1;
            let mut tape = Tape::new();
            let placed = blob.place(&mut tape)?;
            let wrt = blob.trainable_ids(&placed);
            let mut ctx = ForwardCtx::new(&mut tape, blob, &placed, true);
            let mut total: Option<TensorId> = None;
            for &i in &batch {
                let (li, hit) = loss_of(&mut ctx, i)?;
                if hit {
                    hits += 1;
                }
                total = Some(match total {
                    None => li,
                    Some(t) => ctx.tape.add(t, li)?,
                });
            }
            let sum = total.expect("non-empty batch");
            let loss = ctx.tape.scale(sum, 1.0 / batch.len() as f64)?;
            let loss_val = ctx.tape.scalar_value(loss);
            let updates = std::mem::take(&mut ctx.bn_updates);
            drop(ctx);
            if !loss_val.is_finite() {
                return Err(Error::Numerical(format!(
                    "training diverged at iteration {}",
                    iteration
                )));
            }
            let grads = tape.backward(loss, &wrt, false)?;
            let gvecs: Vec<Vec<f64>> = grads.into_iter().map(|t| t.data).collect();
            opt.step_weights(blob, &gvecs)?;
            apply_bn_updates(blob, &updates, BN_MOMENTUM)?;
        }
        let acc = hits as f64 / count as f64;
        if acc >= CONVERGED_ACC {
            saturated += 1;
            if saturated >= SATURATED_EPOCHS {
                break;
            }
        } else {
            saturated = 0;
        }
    }
    Ok(())
}

/// Binary real-vs-fake training of one discriminator; reports train and
/// test accuracy.
pub fn train_classifier(
    spec: &NetworkSpec,
    train: &LabeledCloudSet,
    test: &LabeledCloudSet,
    config: &TrainConfig,
) -> Result<ExperimentReport> {
    config.validate()?;
    if !spec.kind.is_discriminator() {
        return Err(Error::invalid(format!(
            "{} is not a discriminator",
            spec.kind.name()
        )));
    }
    if train.clouds.is_empty() || test.clouds.is_empty() {
        return Err(Error::EmptyInput("train_classifier: cloud set"));
    }
    if train.labels.iter().chain(&test.labels).any(|&l| l > 1) {
        return Err(Error::invalid(
            "train_classifier: labels must be 0 (real) or 1 (fake)".to_string(),
        ));
    }
    let mut init_rng = config.stream("init");
    let mut blob = WeightBlob::init(spec, &mut init_rng)?;
    let mut opt = Adam::new(config.lr, config.beta1, config.beta2);
    run_epochs(&mut blob, &mut opt, train.clouds.len(), config, |ctx, i| {
        let x = cloud_leaf(ctx.tape, &train.clouds[i])?;
        let logit = discriminator_logit(ctx, spec, x)?;
        let hit = (ctx.tape.scalar_value(logit) >= 0.0) == (train.labels[i] == 1);
        let loss = bce_with_logit(ctx.tape, logit, train.labels[i] as f64)?;
        Ok((loss, hit))
    })?;
    let mut report = ExperimentReport::new(&format!("classifier/{}", spec.kind.name()), config);
    report.train_accuracy = Some(binary_accuracy(spec, &blob, train)?);
    report.test_accuracy = Some(binary_accuracy(spec, &blob, test)?);
    Ok(report)
}

/// Multi-class shape classification; the trained blob doubles as the
/// feature extractor (the classifier head is simply unused downstream).
pub fn pretrain_feature_extractor(
    spec: &NetworkSpec,
    data: &ClassDataset,
    config: &TrainConfig,
) -> Result<(WeightBlob, ExperimentReport)> {
    config.validate()?;
    match spec.kind {
        NetKind::FeatureExtractor(_) => {}
        _ => {
            return Err(Error::invalid(format!(
                "{} is not a feature extractor",
                spec.kind.name()
            )))
        }
    }
    if spec.class_count != data.class_count {
        return Err(Error::invalid(format!(
            "spec expects {} classes, dataset has {}",
            spec.class_count, data.class_count
        )));
    }
    let train = &data.train;
    let mut init_rng = config.stream("init");
    let mut blob = WeightBlob::init(spec, &mut init_rng)?;
    let mut opt = Adam::new(config.lr, config.beta1, config.beta2);
    let k = spec.class_count;
    run_epochs(&mut blob, &mut opt, train.clouds.len(), config, |ctx, i| {
        let x = cloud_leaf(ctx.tape, &train.clouds[i])?;
        let logits = extractor_logits(ctx, spec, x)?;
        let hit = argmax(ctx.tape.value(logits)) == train.labels[i] as usize;
        let loss = ce_with_logits(ctx.tape, logits, train.labels[i] as usize, k)?;
        Ok((loss, hit))
    })?;
    let mut report = ExperimentReport::new(&format!("pretrain/{}", spec.kind.name()), config);
    report.train_accuracy = Some(class_accuracy(spec, &blob, train)?);
    report.test_accuracy = Some(class_accuracy(spec, &blob, &data.test)?);
    Ok((blob, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::datasets::{
        build_class_dataset, build_clustering_dataset, procedural_meshes,
    };
    use crate::geometry::procedural::ShapeClass;
    use rand::SeedableRng;

    #[test]
    fn bce_matches_log_loss_and_stays_finite() {
        for (logit, y) in [(1.3, 1.0), (-0.4, 0.0), (0.0, 1.0), (2.5, 0.0)] {
            let mut tape = Tape::new();
            let l = tape.scalar(logit).unwrap();
            let loss = bce_with_logit(&mut tape, l, y).unwrap();
            let sig = 1.0 / (1.0 + (-logit as f64).exp());
            let direct = -(y * sig.ln() + (1.0 - y) * (1.0 - sig).ln());
            assert!((tape.scalar_value(loss) - direct).abs() < 1e-12);
        }
        for (logit, y) in [(800.0, 0.0), (-800.0, 1.0)] {
            let mut tape = Tape::new();
            let l = tape.scalar(logit).unwrap();
            let loss = bce_with_logit(&mut tape, l, y).unwrap();
            let v = tape.scalar_value(loss);
            assert!(v.is_finite());
            assert!((v - 800.0).abs() < 1e-9, "loss {}", v);
        }
    }

    #[test]
    fn ce_matches_softmax_log_loss() {
        let mut tape = Tape::new();
        let logits = tape.leaf(1, 3, vec![0.2, -1.0, 0.7]).unwrap();
        let loss = ce_with_logits(&mut tape, logits, 2, 3).unwrap();
        let z: f64 = [0.2f64, -1.0, 0.7].iter().map(|v| v.exp()).sum();
        let direct = -((0.7f64).exp() / z).ln();
        assert!((tape.scalar_value(loss) - direct).abs() < 1e-12);
        let mut tape = Tape::new();
        let logits = tape.leaf(1, 3, vec![0.0; 3]).unwrap();
        assert!(ce_with_logits(&mut tape, logits, 3, 3).is_err());
    }

    #[test]
    fn mix_classifier_learns_clustered_fakes() {
        let train_m = procedural_meshes(ShapeClass::ChairComposite, 24, 0).unwrap();
        let test_m = procedural_meshes(ShapeClass::ChairComposite, 8, 50).unwrap();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let (train, test) = build_clustering_dataset(&train_m, &test_m, 64, &mut rng).unwrap();
        let spec = crate::networks::NetworkSpec::new(NetKind::PointNetMix)
            .with_width(0.125)
            .with_points(64);
        let config = TrainConfig::desk(11).with_epochs(80).with_batch(4).with_lr(3e-3);
        let report = train_classifier(&spec, &train, &test, &config).unwrap();
        assert!(
            report.test_accuracy.unwrap() >= 0.85,
            "test accuracy {} (train {})",
            report.test_accuracy.unwrap(),
            report.train_accuracy.unwrap()
        );
        let again = train_classifier(&spec, &train, &test, &config).unwrap();
        assert_eq!(report.train_accuracy, again.train_accuracy);
        assert_eq!(report.test_accuracy, again.test_accuracy);
    }

    #[test]
    fn pretraining_is_deterministic_and_fits_train_set() {
        let data = build_class_dataset(4, 48, 7).unwrap();
        let spec = crate::networks::NetworkSpec::new(NetKind::FeatureExtractor(
            crate::networks::ExtractorVariant::Max,
        ))
        .with_width(0.125)
        .with_points(48);
        let config = TrainConfig::desk(5).with_epochs(60).with_batch(7).with_lr(1e-2);
        let (blob, report) = pretrain_feature_extractor(&spec, &data, &config).unwrap();
        assert!(
            report.train_accuracy.unwrap() >= 0.8,
            "train accuracy {}",
            report.train_accuracy.unwrap()
        );
        let (blob2, _) = pretrain_feature_extractor(&spec, &data, &config).unwrap();
        for (a, b) in blob.tensors.iter().zip(&blob2.tensors) {
            assert_eq!(a.data, b.data, "tensor {} differs between retrains", a.name);
        }
    }

    #[test]
    fn wrong_specs_rejected() {
        let data = build_class_dataset(2, 32, 1).unwrap();
        let gen_spec = crate::networks::NetworkSpec::new(NetKind::FcGenerator);
        let config = TrainConfig::desk(0).with_epochs(1);
        assert!(pretrain_feature_extractor(&gen_spec, &data, &config).is_err());
        assert!(
            train_classifier(&gen_spec, &data.train, &data.test, &config).is_err(),
            "generator must not classify"
        );
        let disc = crate::networks::NetworkSpec::new(NetKind::PointNetMax)
            .with_points(32);
        // Multi-class labels are invalid for the binary driver.
        assert!(train_classifier(&disc, &data.train, &data.test, &config).is_err());
    }
}
