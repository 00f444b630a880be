use rand::Rng;

use crate::autodiff::TensorId;
use crate::geometry::{sampling, PointCloud};
use crate::networks::{ForwardCtx, NetworkSpec};
use crate::Result;

/// Uniform unit-sphere template for the deform generator.
pub fn sphere_template(n: usize, rng: &mut impl Rng) -> Result<PointCloud> {
    sampling::sample_sphere(n, rng)
}

/// Fully connected generator: latent row -> all coordinates at once, squashed
/// into the centered unit box via sigmoid - 0.5.
pub fn fc_generate(ctx: &mut ForwardCtx, spec: &NetworkSpec, z: TensorId) -> Result<TensorId> {
    let flat = ctx.mlp("fc", 5, z, false)?;
    let s = ctx.tape.sigmoid(flat)?;
    let shifted = ctx.tape.add_scalar(s, -0.5)?;
    ctx.tape.reshape(shifted, spec.points, 3)
}

/// Deformation generator: each template point is concatenated with the
/// latent code and displaced independently. Batch norm sits on the last
/// layer of the first MLP; the final coordinates go through sigmoid - 0.5.
pub fn deform_generate(
    ctx: &mut ForwardCtx,
    spec: &NetworkSpec,
    z: TensorId,
    template: &[[f64; 3]],
) -> Result<TensorId> {
    let n = template.len();
    let mut flat = Vec::with_capacity(n * 3);
    for p in template {
        flat.extend_from_slice(p);
    }
    let t = ctx.tape.leaf(n, 3, flat)?;
    let (zr, zc) = ctx.tape.shape(z);
    if zr != 1 || zc != spec.latent_dim {
        return Err(crate::Error::invalid(format!(
            "deform: latent must be 1x{}, got {}x{}",
            spec.latent_dim, zr, zc
        )));
    }
    let z_wide = ctx.tape.broadcast_row(z, n)?;
    let mut h = ctx.tape.concat_cols(t, z_wide)?;
    for i in 0..4 {
        h = ctx.linear(&format!("mlp1.{}", i), h)?;
        if i == 3 {
            h = ctx.batch_norm("mlp1.3.bn", h)?;
        }
        h = ctx.lrelu(h)?;
    }
    let h = ctx.mlp("mlp2", 2, h, false)?;
    let s = ctx.tape.sigmoid(h)?;
    ctx.tape.add_scalar(s, -0.5)
}
