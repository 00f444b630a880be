use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Negative slope shared by every leaky activation in the crate.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoolMode {
    Max,
    Avg,
    /// Concatenation of max and average pooling; doubles the feature dim.
    Mix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExtractorVariant {
    Max,
    Mix,
    Dgcnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetKind {
    PointNetMax,
    PointNetAvg,
    PointNetMix,
    AttentionMax,
    AttentionMix,
    PuganAttention,
    Dgcnn,
    FcGenerator,
    DeformGenerator,
    /// Multi-class shape classifier whose pooled feature feeds the Fréchet
    /// metrics; the classifier head is dropped after pretraining.
    FeatureExtractor(ExtractorVariant),
}

impl NetKind {
    pub fn name(&self) -> &'static str {
        match self {
            NetKind::PointNetMax => "pointnet-max",
            NetKind::PointNetAvg => "pointnet-avg",
            NetKind::PointNetMix => "pointnet-mix",
            NetKind::AttentionMax => "attention-max",
            NetKind::AttentionMix => "attention-mix",
            NetKind::PuganAttention => "pugan-attention",
            NetKind::Dgcnn => "dgcnn",
            NetKind::FcGenerator => "fc-generator",
            NetKind::DeformGenerator => "deform-generator",
            NetKind::FeatureExtractor(ExtractorVariant::Max) => "extractor-max",
            NetKind::FeatureExtractor(ExtractorVariant::Mix) => "extractor-mix",
            NetKind::FeatureExtractor(ExtractorVariant::Dgcnn) => "extractor-dgcnn",
        }
    }

    pub fn parse(s: &str) -> Option<NetKind> {
        [
            NetKind::PointNetMax,
            NetKind::PointNetAvg,
            NetKind::PointNetMix,
            NetKind::AttentionMax,
            NetKind::AttentionMix,
            NetKind::PuganAttention,
            NetKind::Dgcnn,
            NetKind::FcGenerator,
            NetKind::DeformGenerator,
            NetKind::FeatureExtractor(ExtractorVariant::Max),
            NetKind::FeatureExtractor(ExtractorVariant::Mix),
            NetKind::FeatureExtractor(ExtractorVariant::Dgcnn),
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    pub fn is_discriminator(&self) -> bool {
        matches!(
            self,
            NetKind::PointNetMax
                | NetKind::PointNetAvg
                | NetKind::PointNetMix
                | NetKind::AttentionMax
                | NetKind::AttentionMix
                | NetKind::PuganAttention
                | NetKind::Dgcnn
        )
    }

    pub fn is_generator(&self) -> bool {
        matches!(self, NetKind::FcGenerator | NetKind::DeformGenerator)
    }
}

/// Declarative architecture description. Width multiplier 1 reproduces the
/// reference layer widths verbatim; smaller multipliers shrink hidden widths
/// only (never the 3-D input, scalar outputs, latent dim, or class count).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: NetKind,
    pub width_mult: f64,
    pub latent_dim: usize,
    pub points: usize,
    pub knn_k: usize,
    pub class_count: usize,
}

impl NetworkSpec {
    pub fn new(kind: NetKind) -> Self {
        NetworkSpec {
            kind,
            width_mult: 1.0,
            latent_dim: 512,
            points: 2048,
            knn_k: 20,
            class_count: 7,
        }
    }

    pub fn with_width(mut self, m: f64) -> Self {
        self.width_mult = m;
        self
    }

    pub fn with_points(mut self, n: usize) -> Self {
        self.points = n;
        self
    }

    pub fn with_latent(mut self, d: usize) -> Self {
        self.latent_dim = d;
        self
    }

    pub fn with_knn(mut self, k: usize) -> Self {
        self.knn_k = k;
        self
    }

    pub fn with_classes(mut self, c: usize) -> Self {
        self.class_count = c;
        self
    }

    /// Scale a base width by the multiplier, requiring an integer result.
    pub fn scaled(&self, base: usize) -> Result<usize> {
        if !(self.width_mult > 0.0) {
            return Err(Error::invalid(format!(
                "width multiplier must be > 0, got {}",
                self.width_mult
            )));
        }
        let v = base as f64 * self.width_mult;
        let r = v.round();
        if (v - r).abs() > 1e-9 || r < 1.0 {
            return Err(Error::invalid(format!(
                "width multiplier {} does not scale width {} to an integer",
                self.width_mult, base
            )));
        }
        Ok(r as usize)
    }

    fn pool_mode(&self) -> Option<PoolMode> {
        match self.kind {
            NetKind::PointNetMax | NetKind::AttentionMax | NetKind::PuganAttention => {
                Some(PoolMode::Max)
            }
            NetKind::PointNetAvg => Some(PoolMode::Avg),
            NetKind::PointNetMix | NetKind::AttentionMix => Some(PoolMode::Mix),
            NetKind::FeatureExtractor(ExtractorVariant::Max) => Some(PoolMode::Max),
            NetKind::FeatureExtractor(ExtractorVariant::Mix) => Some(PoolMode::Mix),
            _ => None,
        }
    }

    /// Pooling mode of the encoder, if the kind has one.
    pub fn pooling(&self) -> Result<PoolMode> {
        self.pool_mode()
            .ok_or_else(|| Error::invalid(format!("{} has no pooling stage", self.kind.name())))
    }

    /// Dimension of the pooled global feature.
    pub fn feature_dim(&self) -> Result<usize> {
        let d = match self.kind {
            NetKind::PointNetMax | NetKind::PointNetAvg => self.scaled(1024)?,
            NetKind::PointNetMix => 2 * self.scaled(1024)?,
            NetKind::AttentionMax | NetKind::PuganAttention => self.scaled(1024)?,
            NetKind::AttentionMix => 2 * self.scaled(1024)?,
            // Global feature concatenates max and average pools, matching the
            // doubled input of the reference head.
            NetKind::Dgcnn => 2 * self.scaled(1024)?,
            NetKind::FeatureExtractor(ExtractorVariant::Max) => self.scaled(1024)?,
            NetKind::FeatureExtractor(ExtractorVariant::Mix) => 2 * self.scaled(1024)?,
            NetKind::FeatureExtractor(ExtractorVariant::Dgcnn) => 2 * self.scaled(1024)?,
            _ => {
                return Err(Error::invalid(format!(
                    "{} has no global feature",
                    self.kind.name()
                )))
            }
        };
        Ok(d)
    }

    /// Per-point encoder layer widths for the PointNet family.
    pub fn pointnet_encoder_dims(&self) -> Result<Vec<usize>> {
        Ok(vec![3, self.scaled(64)?, self.scaled(128)?, self.scaled(1024)?])
    }

    /// EdgeConv (input, output) pairs; inputs double the previous width
    /// because edges concatenate the point and neighbor-difference features.
    pub fn edge_conv_dims(&self) -> Result<Vec<(usize, usize)>> {
        let d64 = self.scaled(64)?;
        let d128 = self.scaled(128)?;
        let d256 = self.scaled(256)?;
        let d1024 = self.scaled(1024)?;
        Ok(vec![
            (6, d64),
            (2 * d64, d64),
            (2 * d64, d128),
            (2 * d128, d256),
            (2 * d256, d1024),
        ])
    }

    /// Parameter layout in creation/serialization order.
    pub fn layout(&self) -> Result<Vec<ParamSpec>> {
        let mut out = Vec::new();
        match self.kind {
            NetKind::PointNetMax | NetKind::PointNetAvg | NetKind::PointNetMix => {
                mlp_params(&mut out, "enc", &self.pointnet_encoder_dims()?);
                let pool_d = self.feature_dim()?;
                mlp_params(&mut out, "head", &[pool_d, self.scaled(512)?, 1]);
            }
            NetKind::AttentionMax | NetKind::AttentionMix => {
                let d32 = self.scaled(32)?;
                let d64 = self.scaled(64)?;
                mlp_params(&mut out, "enc", &[3, d32, d64]);
                attention_params(&mut out, d64, d32, d64);
                mlp_params(&mut out, "post", &[d64, self.scaled(256)?, self.scaled(1024)?]);
                let pool_d = self.feature_dim()?;
                mlp_params(&mut out, "head", &[pool_d, self.scaled(512)?, 1]);
            }
            NetKind::PuganAttention => {
                let d32 = self.scaled(32)?;
                let d64 = self.scaled(64)?;
                // Early fusion doubles the per-point width; the value map keeps
                // the fused width so the residual adds cleanly.
                let fused = 2 * d64;
                mlp_params(&mut out, "enc", &[3, d32, d64]);
                attention_params(&mut out, fused, d32, fused);
                mlp_params(&mut out, "post", &[fused, self.scaled(256)?, self.scaled(1024)?]);
                mlp_params(&mut out, "head", &[self.scaled(1024)?, self.scaled(512)?, 1]);
            }
            NetKind::Dgcnn => {
                for (i, (din, dout)) in self.edge_conv_dims()?.into_iter().enumerate() {
                    edge_conv_params(&mut out, i, din, dout);
                }
                let gf = self.feature_dim()?;
                mlp_params(&mut out, "head", &[gf, self.scaled(512)?, self.scaled(256)?, 1]);
            }
            NetKind::FcGenerator => {
                let h = self.scaled(512)?;
                let wide = self.scaled(2048)?;
                mlp_params(
                    &mut out,
                    "fc",
                    &[self.latent_dim, h, h, h, wide, self.points * 3],
                );
            }
            NetKind::DeformGenerator => {
                let h = self.scaled(512)?;
                let dims1 = [3 + self.latent_dim, h, h, h, h];
                mlp_params(&mut out, "mlp1", &dims1);
                bn_params(&mut out, "mlp1.3.bn", h);
                mlp_params(&mut out, "mlp2", &[h, self.scaled(64)?, 3]);
            }
            NetKind::FeatureExtractor(ExtractorVariant::Max)
            | NetKind::FeatureExtractor(ExtractorVariant::Mix) => {
                mlp_params(&mut out, "enc", &self.pointnet_encoder_dims()?);
                let pool_d = self.feature_dim()?;
                mlp_params(&mut out, "cls", &[pool_d, self.class_count]);
            }
            NetKind::FeatureExtractor(ExtractorVariant::Dgcnn) => {
                for (i, (din, dout)) in self.edge_conv_dims()?.into_iter().enumerate() {
                    edge_conv_params(&mut out, i, din, dout);
                }
                let gf = self.feature_dim()?;
                mlp_params(&mut out, "cls", &[gf, self.class_count]);
            }
        }
        Ok(out)
    }

    /// Hex digest identifying this spec; embedded in weight files.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        let out = h.finalize();
        out.iter().map(|b| format!("{:02x}", b)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Uniform in ±sqrt(3 / fan_in).
    FanInUniform,
    Zero,
    One,
}

/// One named parameter tensor in a network's layout.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub trainable: bool,
    pub init: InitKind,
}

fn weight(name: String, rows: usize, cols: usize) -> ParamSpec {
    ParamSpec {
        name,
        rows,
        cols,
        trainable: true,
        init: InitKind::FanInUniform,
    }
}

fn row_param(name: String, cols: usize, trainable: bool, init: InitKind) -> ParamSpec {
    ParamSpec {
        name,
        rows: 1,
        cols,
        trainable,
        init,
    }
}

fn mlp_params(out: &mut Vec<ParamSpec>, prefix: &str, dims: &[usize]) {
    for i in 0..dims.len() - 1 {
        out.push(weight(format!("{}.{}.w", prefix, i), dims[i], dims[i + 1]));
        out.push(row_param(
            format!("{}.{}.b", prefix, i),
            dims[i + 1],
            true,
            InitKind::Zero,
        ));
    }
}

fn attention_params(out: &mut Vec<ParamSpec>, d_in: usize, d_qk: usize, d_v: usize) {
    for (name, cols) in [("g", d_qk), ("h", d_qk), ("k", d_v)] {
        out.push(weight(format!("attn.{}.w", name), d_in, cols));
        out.push(row_param(
            format!("attn.{}.b", name),
            cols,
            true,
            InitKind::Zero,
        ));
    }
    // The balance scalar starts at 0 so the block begins as the identity.
    out.push(ParamSpec {
        name: "attn.omega".into(),
        rows: 1,
        cols: 1,
        trainable: true,
        init: InitKind::Zero,
    });
}

fn edge_conv_params(out: &mut Vec<ParamSpec>, i: usize, din: usize, dout: usize) {
    // No bias: batch norm supplies the shift.
    out.push(weight(format!("edge.{}.w", i), din, dout));
    bn_params(out, &format!("edge.{}.bn", i), dout);
}

fn bn_params(out: &mut Vec<ParamSpec>, prefix: &str, d: usize) {
    out.push(row_param(format!("{}.gamma", prefix), d, true, InitKind::One));
    out.push(row_param(format!("{}.beta", prefix), d, true, InitKind::Zero));
    out.push(row_param(format!("{}.mean", prefix), d, false, InitKind::Zero));
    out.push(row_param(format!("{}.var", prefix), d, false, InitKind::One));
}
