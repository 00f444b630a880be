//! Point-cloud and mesh primitives: normalization, sampling procedures,
//! density estimation, and procedural shape generation.

pub mod density;
pub mod io;
pub mod procedural;
pub mod sampling;
pub mod vec3;

use crate::{Error, Result};
use vec3::{dist, sub};

/// An unordered set of 3-D points stored in arbitrary order.
///
/// Point order carries no meaning; every consumer in this crate is
/// permutation-invariant (and tested for it).
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for p in &self.points {
            for a in 0..3 {
                c[a] += p[a];
            }
        }
        let n = self.points.len().max(1) as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, [f64; 3]> {
        self.points.iter()
    }
}

/// Triangle mesh used as a sampling domain. Faces index into `vertices`.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriangleMesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() {
            return Err(Error::InvalidMesh("no vertices".into()));
        }
        for v in &self.vertices {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidMesh("non-finite vertex".into()));
            }
        }
        for f in &self.faces {
            if f.iter().any(|&i| i >= self.vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "face index out of range: {:?} with {} vertices",
                    f,
                    self.vertices.len()
                )));
            }
        }
        Ok(())
    }

    pub fn triangle(&self, face: usize) -> [[f64; 3]; 3] {
        let [i, j, k] = self.faces[face];
        [self.vertices[i], self.vertices[j], self.vertices[k]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        vec3::norm(vec3::cross(sub(b, a), sub(c, a))) * 0.5
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Number of connected components under shared-vertex adjacency.
    pub fn connected_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for f in &self.faces {
            let r = find(&mut parent, f[0]);
            for &v in &f[1..] {
                let rv = find(&mut parent, v);
                parent[rv] = r;
            }
        }
        let mut used: Vec<usize> = self
            .faces
            .iter()
            .flatten()
            .map(|&v| find(&mut parent, v))
            .collect();
        used.sort_unstable();
        used.dedup();
        used.len()
    }
}

/// Per-point neighbor counts for a cloud, at a fixed ball radius.
///
/// Invariant: every value >= 1 because a point always counts itself.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: Vec<u32>,
    pub bandwidth: f64,
}

/// Which split of an experiment dataset a `LabeledCloudSet` represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Clouds paired with integer class labels, e.g. real-vs-fake (0/1).
#[derive(Debug, Clone)]
pub struct LabeledCloudSet {
    pub clouds: Vec<PointCloud>,
    pub labels: Vec<u32>,
    pub split: Split,
}

impl LabeledCloudSet {
    pub fn new(clouds: Vec<PointCloud>, labels: Vec<u32>, split: Split) -> Result<Self> {
        if clouds.len() != labels.len() {
            return Err(Error::invalid(format!(
                "clouds ({}) and labels ({}) differ in length",
                clouds.len(),
                labels.len()
            )));
        }
        Ok(LabeledCloudSet {
            clouds,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }
}

/// Translates the centroid to the origin and scales so the axis-aligned
/// bounding-box diagonal has length 1.
///
/// Errors with "degenerate cloud" when all points coincide (zero diagonal).
pub fn normalize_cloud(cloud: &PointCloud) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("normalize_cloud"));
    }
    for p in &cloud.points {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("normalize_cloud: non-finite coordinate"));
        }
    }
    let c = cloud.centroid();
    let (lo, hi) = cloud.bounding_box();
    let diag = dist(lo, hi);
    if diag == 0.0 {
        return Err(Error::DegenerateCloud(
            "all points coincide, bounding-box diagonal is zero",
        ));
    }
    let s = 1.0 / diag;
    let points = cloud
        .points
        .iter()
        .map(|p| [(p[0] - c[0]) * s, (p[1] - c[1]) * s, (p[2] - c[2]) * s])
        .collect();
    Ok(PointCloud::new(points))
}

/// Coefficient of variation (population std / mean) of a density field.
/// Scalar summary of how non-uniform a sampling is.
pub fn density_cv(field: &DensityField) -> Result<f64> {
    if field.values.is_empty() {
        return Err(Error::EmptyInput("density_cv"));
    }
    let n = field.values.len() as f64;
    let mean = field.values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = field
        .values
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(var.sqrt() / mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_cube_corners() {
        // Corners of the cube [0,2]^3: diagonal 2*sqrt(3), centroid (1,1,1).
        let mut pts = Vec::new();
        for x in [0.0, 2.0] {
            for y in [0.0, 2.0] {
                for z in [0.0, 2.0] {
                    pts.push([x, y, z]);
                }
            }
        }
        let out = normalize_cloud(&PointCloud::new(pts)).unwrap();
        let s = 1.0 / (2.0 * 3.0_f64.sqrt());
        for p in &out.points {
            for a in 0..3 {
                assert!((p[a].abs() - s).abs() < 1e-12);
            }
        }
        let c = out.centroid();
        assert!(vec3::norm(c) < 1e-9);
        let (lo, hi) = out.bounding_box();
        assert!((dist(lo, hi) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalize_is_idempotent() {
        let cloud = PointCloud::new(vec![[0.3, -0.1, 0.2], [-0.2, 0.4, 0.0], [0.1, 0.0, -0.5]]);
        let once = normalize_cloud(&cloud).unwrap();
        let twice = normalize_cloud(&once).unwrap();
        for (p, q) in once.points.iter().zip(&twice.points) {
            for a in 0..3 {
                assert!((p[a] - q[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_covariant_under_scale_translation() {
        let cloud = PointCloud::new(vec![[0.0, 1.0, 2.0], [3.0, -1.0, 0.5], [1.0, 1.0, 1.0]]);
        let transformed = PointCloud::new(
            cloud
                .points
                .iter()
                .map(|p| [p[0] * 2.5 + 7.0, p[1] * 2.5 - 3.0, p[2] * 2.5 + 0.1])
                .collect(),
        );
        let a = normalize_cloud(&cloud).unwrap();
        let b = normalize_cloud(&transformed).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            for ax in 0..3 {
                assert!((p[ax] - q[ax]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalize_rejects_degenerate() {
        let cloud = PointCloud::new(vec![[1.0, 2.0, 3.0]; 5]);
        let err = normalize_cloud(&cloud).unwrap_err();
        assert!(err.to_string().contains("degenerate cloud"));
    }

    #[test]
    fn normalize_commutes_with_permutation() {
        let cloud = PointCloud::new(vec![[0.1, 0.2, 0.3], [2.0, -1.0, 0.0], [-0.5, 0.5, 1.5]]);
        let permuted = PointCloud::new(vec![
            cloud.points[2],
            cloud.points[0],
            cloud.points[1],
        ]);
        let a = normalize_cloud(&cloud).unwrap();
        let b = normalize_cloud(&permuted).unwrap();
        assert_eq!(a.points[0], b.points[1]);
        assert_eq!(a.points[1], b.points[2]);
        assert_eq!(a.points[2], b.points[0]);
    }

    #[test]
    fn density_cv_examples() {
        let constant = DensityField {
            values: vec![4; 10],
            bandwidth: 0.1,
        };
        assert_eq!(density_cv(&constant).unwrap(), 0.0);

        let two = DensityField {
            values: vec![1, 3],
            bandwidth: 0.1,
        };
        assert!((density_cv(&two).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn component_count_splits_disjoint_parts() {
        // Two triangles sharing no vertices.
        let mesh = TriangleMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [5.0, 0.0, 0.0],
                [6.0, 0.0, 0.0],
                [5.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        assert_eq!(mesh.connected_components(), 2);
    }
}
