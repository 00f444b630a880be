use crate::autodiff::TensorId;
use crate::networks::ForwardCtx;
use crate::Result;

/// Shared per-point encoder: three fully connected layers applied to every
/// point row independently, leaky activations throughout.
pub fn encode(ctx: &mut ForwardCtx, x: TensorId) -> Result<TensorId> {
    ctx.mlp("enc", 3, x, true)
}
