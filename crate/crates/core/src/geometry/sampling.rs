//! Sampling procedures: uniform surface sampling, farthest point sampling,
//! biased cluster sampling, and unit-sphere sampling.

use rand::Rng;
use rand_distr::StandardNormal;

use super::vec3::{add, dist2, scale, sub};
use super::{PointCloud, TriangleMesh};
use crate::{Error, Result};

/// Ball radius used for cluster sampling and density estimation.
pub const DEFAULT_CLUSTER_RADIUS: f64 = 0.1;

/// Cumulative face areas for area-weighted triangle selection.
struct AreaTable {
    cumulative: Vec<f64>,
    total: f64,
}

impl AreaTable {
    fn build(mesh: &TriangleMesh) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(mesh.faces.len());
        let mut total = 0.0;
        for f in 0..mesh.faces.len() {
            total += mesh.face_area(f);
            cumulative.push(total);
        }
        if !(total > 0.0) {
            return Err(Error::ZeroAreaMesh);
        }
        Ok(AreaTable { cumulative, total })
    }

    fn pick(&self, rng: &mut impl Rng) -> usize {
        let x = rng.gen::<f64>() * self.total;
        // Zero-area faces have zero-width intervals and are never picked.
        let idx = self.cumulative.partition_point(|&c| c <= x);
        idx.min(self.cumulative.len() - 1)
    }
}

fn sample_in_triangle(tri: [[f64; 3]; 3], rng: &mut impl Rng) -> [f64; 3] {
    let [a, b, c] = tri;
    let mut r0: f64 = rng.gen();
    let mut r1: f64 = rng.gen();
    // Fold the unit square onto the barycentric triangle.
    if r0 + r1 > 1.0 {
        r0 = 1.0 - r0;
        r1 = 1.0 - r1;
    }
    add(a, add(scale(sub(b, a), r0), scale(sub(c, a), r1)))
}

/// Draws `n` points uniformly over the mesh surface: faces chosen with
/// probability proportional to area, positions uniform within each face.
pub fn sample_mesh_uniform(mesh: &TriangleMesh, n: usize, rng: &mut impl Rng) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::EmptyInput("sample_mesh_uniform: n = 0"));
    }
    mesh.validate()?;
    let table = AreaTable::build(mesh)?;
    let points = (0..n)
        .map(|_| sample_in_triangle(mesh.triangle(table.pick(rng)), rng))
        .collect();
    Ok(PointCloud::new(points))
}

/// Greedy farthest point sampling starting at `start`: each step selects the
/// point with the greatest distance to the already-selected set, lowest index
/// winning ties. Returns indices in selection order.
pub fn sample_fps_indices(cloud: &PointCloud, k: usize, start: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "sample_fps: k = {} out of range for cloud of {} points",
            k, n
        )));
    }
    if start >= n {
        return Err(Error::invalid(format!(
            "sample_fps: start index {} out of range for cloud of {} points",
            start, n
        )));
    }
    let mut selected = Vec::with_capacity(k);
    selected.push(start);
    // Squared min-distance to the selected set; squared distances preserve order.
    let mut mind: Vec<f64> = cloud
        .points
        .iter()
        .map(|&p| dist2(p, cloud.points[start]))
        .collect();
    for _ in 1..k {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in mind.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        selected.push(best);
        let q = cloud.points[best];
        for (i, m) in mind.iter_mut().enumerate() {
            let d = dist2(cloud.points[i], q);
            if d < *m {
                *m = d;
            }
        }
    }
    Ok(selected)
}

/// [`sample_fps_indices`] with the selected points materialized as a cloud.
pub fn sample_fps(cloud: &PointCloud, k: usize, start: usize) -> Result<PointCloud> {
    let idx = sample_fps_indices(cloud, k, start)?;
    Ok(PointCloud::new(idx.into_iter().map(|i| cloud.points[i]).collect()))
}

/// Farthest point sampling from a uniformly chosen start index.
pub fn sample_fps_random_start(cloud: &PointCloud, k: usize, rng: &mut impl Rng) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("sample_fps"));
    }
    let start = rng.gen_range(0..cloud.len());
    sample_fps(cloud, k, start)
}

/// Uniform surface sample plus a dense cluster: `n_uniform` points uniform over
/// the surface, then `n_cluster` surface points within `radius` of a uniformly
/// chosen surface anchor. Cluster points come from rejection sampling, so all
/// output points lie exactly on the surface.
pub fn sample_biased_cluster(
    mesh: &TriangleMesh,
    n_uniform: usize,
    n_cluster: usize,
    radius: f64,
    rng: &mut impl Rng,
) -> Result<PointCloud> {
    if radius <= 0.0 {
        return Err(Error::invalid("sample_biased_cluster: radius must be > 0"));
    }
    mesh.validate()?;
    let table = AreaTable::build(mesh)?;
    let anchor = sample_in_triangle(mesh.triangle(table.pick(rng)), rng);
    let mut points = Vec::with_capacity(n_uniform + n_cluster);
    for _ in 0..n_uniform {
        points.push(sample_in_triangle(mesh.triangle(table.pick(rng)), rng));
    }
    let r2 = radius * radius;
    // The anchor lies on the surface, so the ball always contains surface area;
    // the attempt cap only guards against pathological meshes.
    let max_attempts = 10_000 + 100_000 * n_cluster;
    let mut attempts = 0usize;
    let mut accepted = 0usize;
    while accepted < n_cluster {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Numerical(format!(
                "sample_biased_cluster: rejection sampling stalled after {} attempts \
                 (radius {} may be far below feature size)",
                attempts, radius
            )));
        }
        let p = sample_in_triangle(mesh.triangle(table.pick(rng)), rng);
        if dist2(p, anchor) <= r2 {
            points.push(p);
            accepted += 1;
        }
    }
    Ok(PointCloud::new(points))
}

/// `n` points uniform on the unit sphere, via normalized 3-D Gaussian draws.
pub fn sample_sphere(n: usize, rng: &mut impl Rng) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::EmptyInput("sample_sphere: n = 0"));
    }
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let v = [
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ];
        let len = super::vec3::norm(v);
        if len < 1e-12 {
            continue;
        }
        points.push(scale(v, 1.0 / len));
    }
    Ok(PointCloud::new(points))
}
