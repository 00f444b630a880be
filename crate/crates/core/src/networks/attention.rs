use crate::autodiff::{Tape, TensorId};
use crate::networks::ForwardCtx;
use crate::{Error, Result};

/// Flavor of the self-attention unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionVariant {
    /// Full-dimension maps; weights are applied transposed (each output sums
    /// contributions over source points) and there is no balance scalar.
    FullDim,
    /// Bottlenecked query/key maps with a learnable balance scalar on the
    /// residual branch. The default for the attention discriminators.
    Bottleneck,
    /// Bottleneck form on features fused with their tiled global max, which
    /// doubles the per-point width before the attention unit.
    EarlyFusion,
}

/// Tape ids for one attention unit's projection maps.
pub struct AttentionMaps {
    pub g_w: TensorId,
    pub g_b: TensorId,
    pub h_w: TensorId,
    pub h_b: TensorId,
    pub k_w: TensorId,
    pub k_b: TensorId,
    /// Balance scalar; required for the bottleneck forms.
    pub omega: Option<TensorId>,
}

fn proj(tape: &mut Tape, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
    let y = tape.matmul(x, w)?;
    let (rows, _) = tape.shape(y);
    let bw = tape.broadcast_row(b, rows)?;
    let y = tape.add(y, bw)?;
    tape.leaky_relu(y, super::LEAKY_SLOPE)
}

/// Self-attention over point rows: residual plus attention-weighted values.
///
/// All variants build the score matrix S = G * H^T over the (possibly fused)
/// input rows and normalize each row with softmax. `FullDim` then applies the
/// transposed weights, summing over sources: out = F + W^T * K. The
/// bottleneck forms scale the value mix by the balance scalar:
/// out = F + omega * (W * K), which is the identity map at omega = 0.
pub fn attention_block(
    tape: &mut Tape,
    f: TensorId,
    maps: &AttentionMaps,
    variant: AttentionVariant,
) -> Result<TensorId> {
    let f_in = match variant {
        AttentionVariant::EarlyFusion => {
            let (n, _) = tape.shape(f);
            let top = tape.max_rows(f)?;
            let tiled = tape.broadcast_row(top, n)?;
            tape.concat_cols(f, tiled)?
        }
        _ => f,
    };
    let g = proj(tape, f_in, maps.g_w, maps.g_b)?;
    let h = proj(tape, f_in, maps.h_w, maps.h_b)?;
    let k = proj(tape, f_in, maps.k_w, maps.k_b)?;
    let ht = tape.transpose(h)?;
    let s = tape.matmul(g, ht)?;
    let w = tape.softmax_rows(s)?;
    match variant {
        AttentionVariant::FullDim => {
            let wt = tape.transpose(w)?;
            let mixed = tape.matmul(wt, k)?;
            tape.add(f_in, mixed)
        }
        AttentionVariant::Bottleneck | AttentionVariant::EarlyFusion => {
            let omega = maps
                .omega
                .ok_or_else(|| Error::invalid("attention balance scalar missing".to_string()))?;
            let mixed = tape.matmul(w, k)?;
            let (n, d) = tape.shape(mixed);
            let om = tape.broadcast_scalar(omega, n, d)?;
            let scaled = tape.mul(om, mixed)?;
            tape.add(f_in, scaled)
        }
    }
}

/// Attention encoder: per-point MLP, attention unit, widening MLP. Returns
/// per-point features ready for pooling.
pub fn encode(ctx: &mut ForwardCtx, x: TensorId, variant: AttentionVariant) -> Result<TensorId> {
    let f = ctx.mlp("enc", 2, x, true)?;
    let maps = AttentionMaps {
        g_w: ctx.placed.id("attn.g.w")?,
        g_b: ctx.placed.id("attn.g.b")?,
        h_w: ctx.placed.id("attn.h.w")?,
        h_b: ctx.placed.id("attn.h.b")?,
        k_w: ctx.placed.id("attn.k.w")?,
        k_b: ctx.placed.id("attn.k.b")?,
        omega: Some(ctx.placed.id("attn.omega")?),
    };
    let attended = attention_block(ctx.tape, f, &maps, variant)?;
    ctx.mlp("post", 2, attended, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn leaf(tape: &mut Tape, rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> TensorId {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen::<f64>() - 0.5).collect();
        tape.leaf(rows, cols, data).unwrap()
    }

    fn maps_for(
        tape: &mut Tape,
        d_in: usize,
        d_qk: usize,
        d_v: usize,
        omega: Option<f64>,
        rng: &mut ChaCha20Rng,
    ) -> AttentionMaps {
        AttentionMaps {
            g_w: leaf(tape, d_in, d_qk, rng),
            g_b: leaf(tape, 1, d_qk, rng),
            h_w: leaf(tape, d_in, d_qk, rng),
            h_b: leaf(tape, 1, d_qk, rng),
            k_w: leaf(tape, d_in, d_v, rng),
            k_b: leaf(tape, 1, d_v, rng),
            omega: omega.map(|v| tape.leaf(1, 1, vec![v]).unwrap()),
        }
    }

    #[test]
    fn zero_balance_scalar_is_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let f = leaf(&mut tape, 5, 4, &mut rng);
        let maps = maps_for(&mut tape, 4, 2, 4, Some(0.0), &mut rng);
        let out = attention_block(&mut tape, f, &maps, AttentionVariant::Bottleneck).unwrap();
        assert_eq!(tape.value(out), tape.value(f));
    }

    #[test]
    fn single_point_attention_weight_is_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut tape = Tape::new();
        let f = leaf(&mut tape, 1, 4, &mut rng);
        let maps = maps_for(&mut tape, 4, 2, 4, Some(1.0), &mut rng);
        let out = attention_block(&mut tape, f, &maps, AttentionVariant::Bottleneck).unwrap();
        // With one point the softmax row is [1], so out = f + k(f).
        let lrelu = |v: f64| if v > 0.0 { v } else { 0.2 * v };
        let fv = tape.value(f).to_vec();
        let kw = tape.value(maps.k_w).to_vec();
        let kb = tape.value(maps.k_b).to_vec();
        for j in 0..4 {
            let mut acc = kb[j];
            for r in 0..4 {
                acc += fv[r] * kw[r * 4 + j];
            }
            let expect = fv[j] + lrelu(acc);
            assert!((tape.value(out)[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn bottleneck_matches_dense_reference() {
        // Four points, full re-computation with plain loops.
        let n = 4;
        let d = 3;
        let dqk = 2;
        let omega = 0.7;
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let f = leaf(&mut tape, n, d, &mut rng);
        let maps = maps_for(&mut tape, d, dqk, d, Some(omega), &mut rng);
        let out = attention_block(&mut tape, f, &maps, AttentionVariant::Bottleneck).unwrap();

        let lrelu = |v: f64| if v > 0.0 { v } else { 0.2 * v };
        let fv = tape.value(f).to_vec();
        let project = |w: &[f64], b: &[f64], cols: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| {
                    (0..cols)
                        .map(|j| {
                            let mut acc = b[j];
                            for r in 0..d {
                                acc += fv[i * d + r] * w[r * cols + j];
                            }
                            lrelu(acc)
                        })
                        .collect()
                })
                .collect()
        };
        let g = project(tape.value(maps.g_w), tape.value(maps.g_b), dqk);
        let h = project(tape.value(maps.h_w), tape.value(maps.h_b), dqk);
        let k = project(tape.value(maps.k_w), tape.value(maps.k_b), d);
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| (0..dqk).map(|c| g[i][c] * h[j][c]).sum())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            for c in 0..d {
                let mix: f64 = (0..n).map(|j| exps[j] / z * k[j][c]).sum();
                let expect = fv[i * d + c] + omega * mix;
                let got = tape.value(out)[i * d + c];
                assert!((got - expect).abs() < 1e-12, "({}, {})", i, c);
            }
        }
    }

    #[test]
    fn full_dim_applies_transposed_weights() {
        let n = 3;
        let d = 2;
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut tape = Tape::new();
        let f = leaf(&mut tape, n, d, &mut rng);
        let maps = maps_for(&mut tape, d, d, d, None, &mut rng);
        let out = attention_block(&mut tape, f, &maps, AttentionVariant::FullDim).unwrap();

        let lrelu = |v: f64| if v > 0.0 { v } else { 0.2 * v };
        let fv = tape.value(f).to_vec();
        let project = |w: &[f64], b: &[f64]| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| {
                    (0..d)
                        .map(|j| {
                            let mut acc = b[j];
                            for r in 0..d {
                                acc += fv[i * d + r] * w[r * d + j];
                            }
                            lrelu(acc)
                        })
                        .collect()
                })
                .collect()
        };
        let g = project(tape.value(maps.g_w), tape.value(maps.g_b));
        let h = project(tape.value(maps.h_w), tape.value(maps.h_b));
        let k = project(tape.value(maps.k_w), tape.value(maps.k_b));
        // W normalized per row, applied transposed: out_i = f_i + sum_j W_ji k_j.
        let mut w = vec![vec![0.0; n]; n];
        for (i, row) in w.iter_mut().enumerate() {
            let scores: Vec<f64> = (0..n)
                .map(|j| (0..d).map(|c| g[i][c] * h[j][c]).sum())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = exps[j] / z;
            }
        }
        for i in 0..n {
            for c in 0..d {
                let mix: f64 = (0..n).map(|j| w[j][i] * k[j][c]).sum();
                let expect = fv[i * d + c] + mix;
                let got = tape.value(out)[i * d + c];
                assert!((got - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn early_fusion_doubles_width_and_tiles_max() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut tape = Tape::new();
        let f = leaf(&mut tape, 4, 3, &mut rng);
        let maps = maps_for(&mut tape, 6, 2, 6, Some(0.0), &mut rng);
        let out = attention_block(&mut tape, f, &maps, AttentionVariant::EarlyFusion).unwrap();
        assert_eq!(tape.shape(out), (4, 6));
        // At omega = 0 the output is exactly the fused features.
        let fv = tape.value(f).to_vec();
        let mut maxes = [f64::NEG_INFINITY; 3];
        for i in 0..4 {
            for c in 0..3 {
                maxes[c] = maxes[c].max(fv[i * 3 + c]);
            }
        }
        let ov = tape.value(out);
        for i in 0..4 {
            for c in 0..3 {
                assert_eq!(ov[i * 6 + c], fv[i * 3 + c]);
                assert_eq!(ov[i * 6 + 3 + c], maxes[c]);
            }
        }
    }
}
