use crate::geometry::{vec3, PointCloud};
use crate::{Error, Result};

/// Largest cloud the exact assignment solver accepts.
pub const EMD_EXACT_CAP: usize = 1024;

/// Chamfer distance: squared nearest-neighbor distances averaged per cloud,
/// summed over both directions. Symmetric; zero iff the clouds share the
/// same support.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("chamfer"));
    }
    Ok(directed_mean_sq(a, b) + directed_mean_sq(b, a))
}

fn directed_mean_sq(from: &PointCloud, to: &PointCloud) -> f64 {
    let mut acc = 0.0;
    for p in from.iter() {
        let mut best = f64::INFINITY;
        for q in to.iter() {
            let d = vec3::dist2(*p, *q);
            if d < best {
                best = d;
            }
        }
        acc += best;
    }
    acc / from.len() as f64
}

fn pairwise_dists(a: &PointCloud, b: &PointCloud) -> Vec<f64> {
    let n = a.len();
    let mut cost = vec![0.0; n * n];
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            cost[i * n + j] = vec3::dist(*p, *q);
        }
    }
    cost
}

fn check_sizes(a: &PointCloud, b: &PointCloud) -> Result<usize> {
    if a.is_empty() {
        return Err(Error::EmptyInput("emd"));
    }
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "emd needs equal sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.len())
}

/// Exact Earth Mover's distance: mean point distance under the optimal
/// bijection, solved by the O(n^3) assignment algorithm with potentials.
pub fn emd_exact(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let n = check_sizes(a, b)?;
    if n > EMD_EXACT_CAP {
        return Err(Error::invalid(format!(
            "emd_exact caps at {} points, got {}; use emd_approx",
            EMD_EXACT_CAP, n
        )));
    }
    let cost = pairwise_dists(a, b);
    let assign = solve_assignment(&cost, n);
    let total: f64 = (0..n).map(|i| cost[i * n + assign[i]]).sum();
    Ok(total / n as f64)
}

/// Shortest-augmenting-path assignment (Jonker-Volgenant style) on a dense
/// n x n cost matrix. Returns the column assigned to each row.
fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-indexed arrays; p[j] is the row matched to column j, 0 when free.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Approximate Earth Mover's distance by an auction with epsilon scaling.
///
/// Returns the mean cost of a feasible bijection, so the result is always
/// >= the exact distance. The final auction slack is `epsilon * d_max`
/// (d_max = largest pairwise distance), which bounds the mean-cost excess by
/// `epsilon * d_max`. Deterministic for fixed inputs.
pub fn emd_approx(a: &PointCloud, b: &PointCloud, epsilon: f64) -> Result<f64> {
    let n = check_sizes(a, b)?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!("epsilon must be > 0, got {}", epsilon)));
    }
    let cost = pairwise_dists(a, b);
    let d_max = cost.iter().cloned().fold(0.0, f64::max);
    if d_max == 0.0 {
        return Ok(0.0);
    }
    let assign = auction_assignment(&cost, n, epsilon * d_max, d_max)?;
    let total: f64 = (0..n).map(|i| cost[i * n + assign[i]]).sum();
    Ok(total / n as f64)
}

/// Forward auction for min-cost assignment (benefits = -cost), with epsilon
/// scaling from d_max/2 down to `eps_final` by factors of 5. Total assignment
/// cost exceeds the optimum by at most n * eps_final.
fn auction_assignment(cost: &[f64], n: usize, eps_final: f64, d_max: f64) -> Result<Vec<usize>> {
    let mut price = vec![0.0; n];
    let mut owner: Vec<Option<usize>> = vec![None; n]; // object -> person
    let mut item: Vec<Option<usize>> = vec![None; n]; // person -> object
    let mut eps = (d_max / 2.0).max(eps_final);
    let bid_cap: u64 = 10_000_000;
    let mut bids: u64 = 0;
    loop {
        for o in owner.iter_mut() {
            *o = None;
        }
        for it in item.iter_mut() {
            *it = None;
        }
        let mut free: std::collections::VecDeque<usize> = (0..n).collect();
        while let Some(i) = free.pop_front() {
            bids += 1;
            if bids > bid_cap {
                return Err(Error::Numerical(format!(
                    "auction did not converge within {} bids",
                    bid_cap
                )));
            }
            // Best and second-best net benefit for person i.
            let row = &cost[i * n..(i + 1) * n];
            let mut best_j = 0usize;
            let mut best = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            for (j, c) in row.iter().enumerate() {
                let net = -c - price[j];
                if net > best {
                    second = best;
                    best = net;
                    best_j = j;
                } else if net > second {
                    second = net;
                }
            }
            let raise = if second.is_finite() { best - second } else { 0.0 };
            price[best_j] += raise + eps;
            if let Some(prev) = owner[best_j] {
                item[prev] = None;
                free.push_back(prev);
            }
            owner[best_j] = Some(i);
            item[i] = Some(best_j);
        }
        if eps <= eps_final {
            break;
        }
        eps = (eps / 5.0).max(eps_final);
    }
    Ok(item.into_iter().map(|o| o.expect("auction complete")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_cloud(rng: &mut ChaCha20Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
                .collect(),
        )
    }

    #[test]
    fn chamfer_identical_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a = random_cloud(&mut rng, 32);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_unit_offset_pair() {
        let a = PointCloud::new(vec![[0.0, 0.0, 0.0]]);
        let b = PointCloud::new(vec![[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&a, &b).unwrap(), 2.0);
    }

    #[test]
    fn chamfer_symmetric_and_rigid_invariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let a = random_cloud(&mut rng, 24);
        let b = random_cloud(&mut rng, 40);
        let ab = chamfer(&a, &b).unwrap();
        let ba = chamfer(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-15);
        // Shared translation.
        let t = [0.3, -1.2, 0.7];
        let shift = |c: &PointCloud| {
            PointCloud::new(
                c.iter()
                    .map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]])
                    .collect(),
            )
        };
        let shifted = chamfer(&shift(&a), &shift(&b)).unwrap();
        assert!((ab - shifted).abs() < 1e-9);
    }

    #[test]
    fn emd_exact_two_point_example() {
        let a = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let b = PointCloud::new(vec![[0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        assert!((emd_exact(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn emd_exact_matches_permutation_enumeration() {
        // Brute force over all 6! = 720 bijections on 20 random pairs.
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_cloud(&mut rng, 6);
            let b = random_cloud(&mut rng, 6);
            let got = emd_exact(&a, &b).unwrap();
            let mut perm: Vec<usize> = (0..6).collect();
            let mut best = f64::INFINITY;
            permute(&mut perm, 0, &mut |p| {
                let total: f64 = p
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| crate::geometry::vec3::dist(a.points[i], b.points[j]))
                    .sum();
                best = best.min(total / 6.0);
            });
            assert!((got - best).abs() < 1e-9, "{} vs {}", got, best);
        }
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn emd_exact_rejects_mismatched_sizes_and_large_inputs() {
        let a = PointCloud::new(vec![[0.0; 3]; 4]);
        let b = PointCloud::new(vec![[0.0; 3]; 5]);
        assert!(emd_exact(&a, &b).is_err());
        let big = PointCloud::new(vec![[0.0; 3]; EMD_EXACT_CAP + 1]);
        let err = emd_exact(&big, &big).unwrap_err();
        assert!(err.to_string().contains("emd_approx"));
    }

    #[test]
    fn emd_approx_identical_clouds_is_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a = random_cloud(&mut rng, 48);
        assert_eq!(emd_approx(&a, &a, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn emd_approx_upper_bounds_exact_and_is_tight() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = random_cloud(&mut rng, 64);
            let b = random_cloud(&mut rng, 64);
            let exact = emd_exact(&a, &b).unwrap();
            let approx = emd_approx(&a, &b, 1e-4).unwrap();
            assert!(approx >= exact - 1e-12, "{} < {}", approx, exact);
            assert!(approx <= exact * 1.01 + 1e-12, "{} vs {}", approx, exact);
        }
    }

    #[test]
    fn emd_approx_translation_monotonicity() {
        // Triangle inequality: shifting B by t moves the distance by <= |t|.
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let a = random_cloud(&mut rng, 32);
        let b = random_cloud(&mut rng, 32);
        let base = emd_approx(&a, &b, 1e-5).unwrap();
        let t = 0.25;
        let shifted = PointCloud::new(b.iter().map(|p| [p[0] + t, p[1], p[2]]).collect());
        let moved = emd_approx(&a, &shifted, 1e-5).unwrap();
        assert!(moved <= base + t + 1e-3);
        assert!(moved + t + 1e-3 >= base);
    }

    #[test]
    fn emd_approx_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let a = random_cloud(&mut rng, 40);
        let b = random_cloud(&mut rng, 40);
        let x = emd_approx(&a, &b, 1e-3).unwrap();
        let y = emd_approx(&a, &b, 1e-3).unwrap();
        assert_eq!(x.to_bits(), y.to_bits());
    }
}
