//! Ball-neighborhood density estimation.

use std::collections::HashMap;

use super::vec3::dist2;
use super::{DensityField, PointCloud};
use crate::{Error, Result};

/// Below this size the all-pairs scan is faster than building a grid.
const GRID_THRESHOLD: usize = 1024;

/// Per-point density: the number of cloud points (including the point itself)
/// within `bandwidth` of each point.
pub fn kde_density(cloud: &PointCloud, bandwidth: f64) -> Result<DensityField> {
    if !(bandwidth > 0.0) {
        return Err(Error::invalid(format!(
            "kde_density: bandwidth must be > 0, got {}",
            bandwidth
        )));
    }
    let n = cloud.len();
    let values = if n <= GRID_THRESHOLD {
        count_brute(&cloud.points, bandwidth)
    } else {
        count_grid(&cloud.points, bandwidth)
    };
    Ok(DensityField { values, bandwidth })
}

fn count_brute(points: &[[f64; 3]], r: f64) -> Vec<u32> {
    let r2 = r * r;
    let mut values = vec![0u32; points.len()];
    for i in 0..points.len() {
        for j in i..points.len() {
            if dist2(points[i], points[j]) <= r2 {
                values[i] += 1;
                if j != i {
                    values[j] += 1;
                }
            }
        }
    }
    values
}

/// Hash-grid count with cell edge = radius; only the 27 surrounding cells can
/// contain points within range. Distances are computed identically to the
/// brute-force path, so results match it exactly.
fn count_grid(points: &[[f64; 3]], r: f64) -> Vec<u32> {
    let r2 = r * r;
    let inv = 1.0 / r;
    let key = |p: &[f64; 3]| -> (i64, i64, i64) {
        (
            (p[0] * inv).floor() as i64,
            (p[1] * inv).floor() as i64,
            (p[2] * inv).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let mut values = vec![0u32; points.len()];
    for (i, p) in points.iter().enumerate() {
        let (cx, cy, cz) = key(p);
        let mut count = 0u32;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(cell) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &j in cell {
                            if dist2(*p, points[j]) <= r2 {
                                count += 1;
                            }
                        }
                    }
                }
            }
        }
        values[i] = count;
    }
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn brute_oracle(points: &[[f64; 3]], r: f64) -> Vec<u32> {
        // Independent O(N^2) count, written directly from the definition.
        points
            .iter()
            .map(|p| {
                points
                    .iter()
                    .filter(|q| {
                        let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
                        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() <= r
                    })
                    .count() as u32
            })
            .collect()
    }

    #[test]
    fn tight_triplet_counts_three() {
        let cloud = PointCloud::new(vec![
            [0.0, 0.0, 0.0],
            [0.03, 0.0, 0.0],
            [0.0, 0.04, 0.0],
        ]);
        let f = kde_density(&cloud, 0.1).unwrap();
        assert_eq!(f.values, vec![3, 3, 3]);
    }

    #[test]
    fn distant_pair_counts_one_each() {
        let cloud = PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0]]);
        let f = kde_density(&cloud, 0.1).unwrap();
        assert_eq!(f.values, vec![1, 1]);
    }

    #[test]
    fn matches_brute_oracle_small() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let points: Vec<[f64; 3]> = (0..512)
            .map(|_| [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5])
            .collect();
        let cloud = PointCloud::new(points.clone());
        let f = kde_density(&cloud, 0.1).unwrap();
        assert_eq!(f.values, brute_oracle(&points, 0.1));
    }

    #[test]
    fn grid_path_matches_brute_oracle() {
        // Above the grid threshold so the hash-grid path is exercised.
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let points: Vec<[f64; 3]> = (0..2000)
            .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let cloud = PointCloud::new(points.clone());
        let f = kde_density(&cloud, 0.1).unwrap();
        assert_eq!(f.values, brute_oracle(&points, 0.1));
    }

    #[test]
    fn commutes_with_permutation() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let points: Vec<[f64; 3]> = (0..100)
            .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let forward = kde_density(&PointCloud::new(points.clone()), 0.1).unwrap();
        let reversed: Vec<[f64; 3]> = points.iter().rev().copied().collect();
        let backward = kde_density(&PointCloud::new(reversed), 0.1).unwrap();
        let n = points.len();
        for i in 0..n {
            assert_eq!(forward.values[i], backward.values[n - 1 - i]);
        }
    }

    #[test]
    fn boundary_distance_is_inclusive() {
        let cloud = PointCloud::new(vec![[0.0; 3], [0.1, 0.0, 0.0]]);
        let f = kde_density(&cloud, 0.1).unwrap();
        assert_eq!(f.values, vec![2, 2]);
    }

    #[test]
    fn rejects_nonpositive_bandwidth() {
        let cloud = PointCloud::new(vec![[0.0; 3]]);
        assert!(kde_density(&cloud, 0.0).is_err());
        assert!(kde_density(&cloud, -1.0).is_err());
    }
}
