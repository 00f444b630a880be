//! Network zoo for point-cloud discrimination and generation.
//!
//! All forwards are expressed on the autodiff [`Tape`], one sample at a time
//! (a cloud is an N x 3 leaf). Batched training places the weights once per
//! tape and sums per-sample losses so a single backward accumulates over the
//! batch. Batch norm therefore normalizes over the rows of each sample
//! (points, or edges for the graph convolutions), never across samples;
//! running buffers collected during training drive evaluation mode.
//!
//! Discriminators share a shape: per-point encoder, permutation-invariant
//! pooling, fully connected head, final sigmoid. Classifier variants reuse
//! the encoders with a linear class head on the pooled feature.

mod attention;
mod dgcnn;
mod generator;
mod pointnet;
mod spec;
mod weights;

pub use attention::{attention_block, AttentionMaps, AttentionVariant};
pub use dgcnn::knn_indices;
pub use generator::sphere_template;
pub use spec::{
    ExtractorVariant, InitKind, NetKind, NetworkSpec, ParamSpec, PoolMode, LEAKY_SLOPE,
};
pub use weights::{NamedTensor, PlacedWeights, WeightBlob};

use crate::autodiff::{Tape, TensorId};
use crate::geometry::PointCloud;
use crate::{Error, Result};

/// Momentum for running batch-norm buffers: new = m*old + (1-m)*batch.
pub const BN_MOMENTUM: f64 = 0.9;

/// Batch statistics observed by one batch-norm layer during a forward pass.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    /// Layer prefix, e.g. "edge.0.bn".
    pub prefix: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Mutable state threaded through a forward pass.
pub struct ForwardCtx<'t, 'w> {
    pub tape: &'t mut Tape,
    pub placed: &'w PlacedWeights,
    pub blob: &'w WeightBlob,
    pub training: bool,
    /// Batch-norm statistics collected in training mode, in layer order.
    pub bn_updates: Vec<BnUpdate>,
}

impl<'t, 'w> ForwardCtx<'t, 'w> {
    pub fn new(
        tape: &'t mut Tape,
        blob: &'w WeightBlob,
        placed: &'w PlacedWeights,
        training: bool,
    ) -> Self {
        ForwardCtx {
            tape,
            placed,
            blob,
            training,
            bn_updates: Vec::new(),
        }
    }

    fn id(&self, name: &str) -> Result<TensorId> {
        self.placed.id(name)
    }

    /// x * W + b for the layer at `prefix` ("enc.0" looks up enc.0.w, enc.0.b).
    pub fn linear(&mut self, prefix: &str, x: TensorId) -> Result<TensorId> {
        let w = self.id(&format!("{}.w", prefix))?;
        let b = self.id(&format!("{}.b", prefix))?;
        let y = self.tape.matmul(x, w)?;
        let (rows, _) = self.tape.shape(y);
        let bw = self.tape.broadcast_row(b, rows)?;
        self.tape.add(y, bw)
    }

    pub fn linear_no_bias(&mut self, prefix: &str, x: TensorId) -> Result<TensorId> {
        let w = self.id(&format!("{}.w", prefix))?;
        self.tape.matmul(x, w)
    }

    pub fn lrelu(&mut self, x: TensorId) -> Result<TensorId> {
        self.tape.leaky_relu(x, LEAKY_SLOPE)
    }

    /// Chain of `layers` linear layers under `prefix`, leaky activations
    /// between them; `activate_last` controls the final activation.
    pub fn mlp(
        &mut self,
        prefix: &str,
        layers: usize,
        x: TensorId,
        activate_last: bool,
    ) -> Result<TensorId> {
        let mut h = x;
        for i in 0..layers {
            h = self.linear(&format!("{}.{}", prefix, i), h)?;
            if i + 1 < layers || activate_last {
                h = self.lrelu(h)?;
            }
        }
        Ok(h)
    }

    /// Batch norm over the rows of the current sample. Training mode uses
    /// batch statistics and records them for running-buffer updates;
    /// evaluation mode reads the stored running buffers.
    pub fn batch_norm(&mut self, prefix: &str, x: TensorId) -> Result<TensorId> {
        let gamma = self.id(&format!("{}.gamma", prefix))?;
        let beta = self.id(&format!("{}.beta", prefix))?;
        if self.training {
            let out = self.tape.batch_norm_train(x, gamma, beta)?;
            self.bn_updates.push(BnUpdate {
                prefix: prefix.to_string(),
                mean: out.batch_mean,
                var: out.batch_var,
            });
            Ok(out.y)
        } else {
            let mean = self.blob.get(&format!("{}.mean", prefix))?.data.clone();
            let var = self.blob.get(&format!("{}.var", prefix))?.data.clone();
            self.tape.batch_norm_eval(x, gamma, beta, &mean, &var)
        }
    }
}

/// Fold collected batch statistics into the blob's running buffers.
pub fn apply_bn_updates(blob: &mut WeightBlob, updates: &[BnUpdate], momentum: f64) -> Result<()> {
    for u in updates {
        let mean = blob.get_mut(&format!("{}.mean", u.prefix))?;
        for (r, b) in mean.data.iter_mut().zip(&u.mean) {
            *r = momentum * *r + (1.0 - momentum) * b;
        }
        let var = blob.get_mut(&format!("{}.var", u.prefix))?;
        for (r, b) in var.data.iter_mut().zip(&u.var) {
            *r = momentum * *r + (1.0 - momentum) * b;
        }
    }
    Ok(())
}

/// Place a cloud on the tape as an N x 3 leaf.
pub fn cloud_leaf(tape: &mut Tape, cloud: &PointCloud) -> Result<TensorId> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("cloud_leaf"));
    }
    let mut data = Vec::with_capacity(cloud.len() * 3);
    for p in cloud.iter() {
        data.extend_from_slice(p);
    }
    tape.leaf(cloud.len(), 3, data)
}

/// Permutation-invariant pooling over point rows; Mix is [max, avg].
pub fn pool(tape: &mut Tape, mode: PoolMode, f: TensorId) -> Result<TensorId> {
    match mode {
        PoolMode::Max => tape.max_rows(f),
        PoolMode::Avg => tape.mean_rows(f),
        PoolMode::Mix => {
            let m = tape.max_rows(f)?;
            let a = tape.mean_rows(f)?;
            tape.concat_cols(m, a)
        }
    }
}

/// Pooled global feature (1 x feature_dim) for any kind with an encoder.
pub fn global_feature(ctx: &mut ForwardCtx, spec: &NetworkSpec, x: TensorId) -> Result<TensorId> {
    match spec.kind {
        NetKind::PointNetMax
        | NetKind::PointNetAvg
        | NetKind::PointNetMix
        | NetKind::FeatureExtractor(ExtractorVariant::Max)
        | NetKind::FeatureExtractor(ExtractorVariant::Mix) => {
            let f = pointnet::encode(ctx, x)?;
            pool(ctx.tape, spec.pooling()?, f)
        }
        NetKind::AttentionMax | NetKind::AttentionMix => {
            let f = attention::encode(ctx, x, AttentionVariant::Bottleneck)?;
            pool(ctx.tape, spec.pooling()?, f)
        }
        NetKind::PuganAttention => {
            let f = attention::encode(ctx, x, AttentionVariant::EarlyFusion)?;
            pool(ctx.tape, PoolMode::Max, f)
        }
        NetKind::Dgcnn | NetKind::FeatureExtractor(ExtractorVariant::Dgcnn) => {
            dgcnn::global_feature(ctx, spec, x)
        }
        NetKind::FcGenerator | NetKind::DeformGenerator => Err(Error::invalid(format!(
            "{} has no global feature",
            spec.kind.name()
        ))),
    }
}

/// Pre-sigmoid discriminator output (1 x 1).
pub fn discriminator_logit(
    ctx: &mut ForwardCtx,
    spec: &NetworkSpec,
    x: TensorId,
) -> Result<TensorId> {
    if !spec.kind.is_discriminator() {
        return Err(Error::invalid(format!(
            "{} is not a discriminator",
            spec.kind.name()
        )));
    }
    let g = global_feature(ctx, spec, x)?;
    let head_layers = if spec.kind == NetKind::Dgcnn { 3 } else { 2 };
    ctx.mlp("head", head_layers, g, false)
}

/// Discriminator score in (0, 1).
pub fn discriminator_score(
    ctx: &mut ForwardCtx,
    spec: &NetworkSpec,
    x: TensorId,
) -> Result<TensorId> {
    let logit = discriminator_logit(ctx, spec, x)?;
    ctx.tape.sigmoid(logit)
}

/// Class logits (1 x class_count) for the feature-extractor kinds.
pub fn extractor_logits(ctx: &mut ForwardCtx, spec: &NetworkSpec, x: TensorId) -> Result<TensorId> {
    match spec.kind {
        NetKind::FeatureExtractor(_) => {}
        _ => {
            return Err(Error::invalid(format!(
                "{} is not a feature extractor",
                spec.kind.name()
            )))
        }
    }
    let g = global_feature(ctx, spec, x)?;
    ctx.mlp("cls", 1, g, false)
}

/// Generate an N x 3 cloud from a latent row (1 x latent_dim). The deform
/// generator additionally needs a template of surface points to displace.
pub fn generate(
    ctx: &mut ForwardCtx,
    spec: &NetworkSpec,
    z: TensorId,
    template: Option<&[[f64; 3]]>,
) -> Result<TensorId> {
    match spec.kind {
        NetKind::FcGenerator => generator::fc_generate(ctx, spec, z),
        NetKind::DeformGenerator => {
            let t = template.ok_or_else(|| {
                Error::invalid("deform generator needs a template".to_string())
            })?;
            generator::deform_generate(ctx, spec, z, t)
        }
        _ => Err(Error::invalid(format!(
            "{} is not a generator",
            spec.kind.name()
        ))),
    }
}

/// Evaluate the pooled global feature of one cloud with stored weights.
pub fn extract_global_feature(
    spec: &NetworkSpec,
    blob: &WeightBlob,
    cloud: &PointCloud,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let placed = blob.place(&mut tape)?;
    let x = cloud_leaf(&mut tape, cloud)?;
    let mut ctx = ForwardCtx::new(&mut tape, blob, &placed, false);
    let g = global_feature(&mut ctx, spec, x)?;
    Ok(tape.value(g).to_vec())
}

/// Evaluate the discriminator score of one cloud with stored weights.
pub fn score_cloud(spec: &NetworkSpec, blob: &WeightBlob, cloud: &PointCloud) -> Result<f64> {
    let mut tape = Tape::new();
    let placed = blob.place(&mut tape)?;
    let x = cloud_leaf(&mut tape, cloud)?;
    let mut ctx = ForwardCtx::new(&mut tape, blob, &placed, false);
    let s = discriminator_score(&mut ctx, spec, x)?;
    Ok(tape.scalar_value(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn cloud(seed: u64, n: usize) -> PointCloud {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5])
                .collect(),
        )
    }

    fn permuted(c: &PointCloud, seed: u64) -> PointCloud {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut pts = c.points.clone();
        pts.shuffle(&mut rng);
        PointCloud::new(pts)
    }

    fn tiny_disc_specs() -> Vec<NetworkSpec> {
        vec![
            NetworkSpec::new(NetKind::PointNetMax).with_width(0.125),
            NetworkSpec::new(NetKind::PointNetAvg).with_width(0.125),
            NetworkSpec::new(NetKind::PointNetMix).with_width(0.125),
            NetworkSpec::new(NetKind::AttentionMax).with_width(0.125),
            NetworkSpec::new(NetKind::AttentionMix).with_width(0.125),
            NetworkSpec::new(NetKind::PuganAttention).with_width(0.125),
            NetworkSpec::new(NetKind::Dgcnn).with_width(0.125).with_knn(4),
        ]
    }

    #[test]
    fn mix_pooling_concatenates_max_then_avg() {
        let mut tape = Tape::new();
        let f = tape.leaf(2, 2, vec![1.0, 5.0, 3.0, 2.0]).unwrap();
        let p = pool(&mut tape, PoolMode::Mix, f).unwrap();
        assert_eq!(tape.value(p), &[3.0, 5.0, 2.0, 3.5]);
    }

    #[test]
    fn every_discriminator_scores_in_unit_interval() {
        for spec in tiny_disc_specs() {
            let mut rng = ChaCha20Rng::seed_from_u64(42);
            let blob = WeightBlob::init(&spec, &mut rng).unwrap();
            let c = cloud(7, 24);
            let s = score_cloud(&spec, &blob, &c).unwrap();
            assert!(s > 0.0 && s < 1.0, "{}: {}", spec.kind.name(), s);
        }
    }

    #[test]
    fn scores_are_permutation_invariant() {
        for spec in tiny_disc_specs() {
            let mut rng = ChaCha20Rng::seed_from_u64(1);
            let blob = WeightBlob::init(&spec, &mut rng).unwrap();
            let c = cloud(3, 20);
            let p = permuted(&c, 99);
            let s0 = score_cloud(&spec, &blob, &c).unwrap();
            let s1 = score_cloud(&spec, &blob, &p).unwrap();
            assert!(
                (s0 - s1).abs() <= 1e-12,
                "{}: {} vs {}",
                spec.kind.name(),
                s0,
                s1
            );
        }
    }

    #[test]
    fn features_are_permutation_invariant() {
        for spec in [
            NetworkSpec::new(NetKind::FeatureExtractor(ExtractorVariant::Max)).with_width(0.125),
            NetworkSpec::new(NetKind::FeatureExtractor(ExtractorVariant::Mix)).with_width(0.125),
            NetworkSpec::new(NetKind::FeatureExtractor(ExtractorVariant::Dgcnn))
                .with_width(0.125)
                .with_knn(4),
        ] {
            let mut rng = ChaCha20Rng::seed_from_u64(5);
            let blob = WeightBlob::init(&spec, &mut rng).unwrap();
            let c = cloud(11, 18);
            let p = permuted(&c, 4);
            let f0 = extract_global_feature(&spec, &blob, &c).unwrap();
            let f1 = extract_global_feature(&spec, &blob, &p).unwrap();
            assert_eq!(f0.len(), spec.feature_dim().unwrap());
            for (a, b) in f0.iter().zip(&f1) {
                assert!((a - b).abs() <= 1e-12, "{}", spec.kind.name());
            }
        }
    }

    #[test]
    fn max_pooling_ignores_duplicated_points_avg_does_not() {
        let base = cloud(13, 16);
        let mut dup_pts = base.points.clone();
        for _ in 0..16 {
            dup_pts.push(base.points[0]);
        }
        let dup = PointCloud::new(dup_pts);
        let max_spec = NetworkSpec::new(NetKind::PointNetMax).with_width(0.125);
        let avg_spec = NetworkSpec::new(NetKind::PointNetAvg).with_width(0.125);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let max_blob = WeightBlob::init(&max_spec, &mut rng).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let avg_blob = WeightBlob::init(&avg_spec, &mut rng).unwrap();
        // Duplicating an existing point cannot change any per-point max.
        let m0 = extract_global_feature(&max_spec, &max_blob, &base).unwrap();
        let m1 = extract_global_feature(&max_spec, &max_blob, &dup).unwrap();
        assert_eq!(m0, m1);
        let a0 = extract_global_feature(&avg_spec, &avg_blob, &base).unwrap();
        let a1 = extract_global_feature(&avg_spec, &avg_blob, &dup).unwrap();
        let diff: f64 = a0.iter().zip(&a1).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-9, "avg pooling should feel density changes");
    }

    #[test]
    fn bn_running_buffers_move_toward_batch_stats() {
        let spec = NetworkSpec::new(NetKind::Dgcnn).with_width(0.125).with_knn(3);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut blob = WeightBlob::init(&spec, &mut rng).unwrap();
        let c = cloud(21, 12);
        let mut tape = Tape::new();
        let placed = blob.place(&mut tape).unwrap();
        let x = cloud_leaf(&mut tape, &c).unwrap();
        let mut ctx = ForwardCtx::new(&mut tape, &blob, &placed, true);
        let _ = discriminator_score(&mut ctx, &spec, x).unwrap();
        let updates = std::mem::take(&mut ctx.bn_updates);
        assert_eq!(updates.len(), 5);
        let before = blob.get("edge.0.bn.mean").unwrap().data.clone();
        apply_bn_updates(&mut blob, &updates, BN_MOMENTUM).unwrap();
        let after = blob.get("edge.0.bn.mean").unwrap().data.clone();
        for ((b, a), u) in before.iter().zip(&after).zip(&updates[0].mean) {
            let expect = BN_MOMENTUM * b + (1.0 - BN_MOMENTUM) * u;
            assert!((a - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn generators_emit_centered_unit_box_points() {
        use rand::Rng;
        for kind in [NetKind::FcGenerator, NetKind::DeformGenerator] {
            let spec = NetworkSpec::new(kind)
                .with_width(0.125)
                .with_points(32)
                .with_latent(16);
            let mut rng = ChaCha20Rng::seed_from_u64(31);
            let blob = WeightBlob::init(&spec, &mut rng).unwrap();
            let mut tape = Tape::new();
            let placed = blob.place(&mut tape).unwrap();
            let z: Vec<f64> = (0..16).map(|_| rng.gen::<f64>() - 0.5).collect();
            let zid = tape.leaf(1, 16, z).unwrap();
            let template = sphere_template(32, &mut rng).unwrap();
            let mut ctx = ForwardCtx::new(&mut tape, &blob, &placed, true);
            let out = generate(&mut ctx, &spec, zid, Some(&template.points)).unwrap();
            assert_eq!(tape.shape(out), (32, 3));
            for v in tape.value(out) {
                assert!(*v > -0.5 && *v < 0.5, "{}: {}", kind.name(), v);
            }
        }
    }
}
