use crate::autodiff::TensorId;
use crate::networks::{ForwardCtx, NetworkSpec};
use crate::{Error, Result};

/// k nearest neighbors of every row in feature space, excluding the row
/// itself. `values` is row-major n x d. Returns a flat n*k neighbor list;
/// distance ties break toward the lower index, so the graph is a pure
/// function of the feature values.
pub fn knn_indices(values: &[f64], n: usize, d: usize, k: usize) -> Result<Vec<usize>> {
    if n < 2 || k == 0 || k > n - 1 {
        return Err(Error::invalid(format!(
            "knn: need 1 <= k <= n-1, got k={} n={}",
            k, n
        )));
    }
    if values.len() != n * d {
        return Err(Error::invalid(format!(
            "knn: {} values for {}x{}",
            values.len(),
            n,
            d
        )));
    }
    let mut out = Vec::with_capacity(n * k);
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        dists.clear();
        let xi = &values[i * d..(i + 1) * d];
        for j in 0..n {
            if j == i {
                continue;
            }
            let xj = &values[j * d..(j + 1) * d];
            let mut acc = 0.0;
            for (a, b) in xi.iter().zip(xj) {
                let t = a - b;
                acc += t * t;
            }
            dists.push((acc, j));
        }
        dists.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(dists[..k].iter().map(|&(_, j)| j));
    }
    Ok(out)
}

/// One graph convolution: for every point, build edge features
/// [x_i, x_j - x_i] over its k feature-space neighbors, apply a linear map,
/// batch norm, leaky activation, then max over the k edges.
fn edge_conv(ctx: &mut ForwardCtx, layer: usize, x: TensorId, k: usize) -> Result<TensorId> {
    let (n, d) = ctx.tape.shape(x);
    let nbr = knn_indices(ctx.tape.value(x), n, d, k)?;
    let mut centers = Vec::with_capacity(n * k);
    for i in 0..n {
        for _ in 0..k {
            centers.push(i);
        }
    }
    let xc = ctx.tape.gather_rows(x, centers)?;
    let xn = ctx.tape.gather_rows(x, nbr)?;
    let diff = ctx.tape.sub(xn, xc)?;
    let e = ctx.tape.concat_cols(xc, diff)?;
    let y = ctx.linear_no_bias(&format!("edge.{}", layer), e)?;
    let y = ctx.batch_norm(&format!("edge.{}.bn", layer), y)?;
    let y = ctx.lrelu(y)?;
    ctx.tape.segment_max_rows(y, k)
}

/// Full graph encoder: five edge convolutions with the neighbor graph
/// rebuilt in feature space before each, then a global feature that
/// concatenates max and average pooling (1 x 2*1024*mult).
pub fn global_feature(ctx: &mut ForwardCtx, spec: &NetworkSpec, x: TensorId) -> Result<TensorId> {
    let (n, _) = ctx.tape.shape(x);
    if spec.knn_k + 1 > n {
        return Err(Error::invalid(format!(
            "dgcnn: k={} needs at least {} points, got {}",
            spec.knn_k,
            spec.knn_k + 1,
            n
        )));
    }
    let layers = spec.edge_conv_dims()?.len();
    let mut h = x;
    for i in 0..layers {
        h = edge_conv(ctx, i, h, spec.knn_k)?;
    }
    let m = ctx.tape.max_rows(h)?;
    let a = ctx.tape.mean_rows(h)?;
    ctx.tape.concat_cols(m, a)
}
