use crate::geometry::PointCloud;
use crate::metrics::eigen::symmetric_eigen;
use crate::networks::{extract_global_feature, NetKind, NetworkSpec, WeightBlob};
use crate::{Error, Result};

/// Ridge added to every covariance diagonal.
const COV_RIDGE: f64 = 1e-6;

/// Mean and covariance of a feature sample.
#[derive(Debug, Clone)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    /// Row-major d x d, symmetric.
    pub covariance: Vec<f64>,
    pub count: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Largest symmetry violation |S_ij - S_ji|.
    pub fn asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i + 1..d {
                worst = worst.max((self.covariance[i * d + j] - self.covariance[j * d + i]).abs());
            }
        }
        worst
    }
}

/// Gaussian statistics of pooled extractor features over a cloud set:
/// unbiased covariance (divisor n-1) plus a 1e-6 ridge on the diagonal.
pub fn feature_stats(
    clouds: &[PointCloud],
    spec: &NetworkSpec,
    weights: &WeightBlob,
) -> Result<GaussianStats> {
    if clouds.len() < 2 {
        return Err(Error::invalid(format!(
            "feature_stats needs at least 2 clouds, got {}",
            clouds.len()
        )));
    }
    if !matches!(spec.kind, NetKind::FeatureExtractor(_)) {
        return Err(Error::invalid(format!(
            "feature_stats needs a feature extractor, got {}",
            spec.kind.name()
        )));
    }
    let features: Vec<Vec<f64>> = clouds
        .iter()
        .map(|c| extract_global_feature(spec, weights, c))
        .collect::<Result<_>>()?;
    stats_of_features(&features)
}

/// Statistics of pre-computed feature rows (all the same length).
pub fn stats_of_features(features: &[Vec<f64>]) -> Result<GaussianStats> {
    let n = features.len();
    if n < 2 {
        return Err(Error::invalid("need at least 2 feature rows".to_string()));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::invalid("feature rows differ in length".to_string()));
    }
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; d * d];
    for f in features {
        for i in 0..d {
            let di = f[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (f[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    for i in 0..d {
        cov[i * d + i] += COV_RIDGE;
    }
    Ok(GaussianStats {
        mean,
        covariance: cov,
        count: n,
    })
}

fn mat_mul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

/// Symmetric PSD square root via eigendecomposition, clamping negative
/// eigenvalues to 0.
fn sqrt_psd(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let (eig, v) = symmetric_eigen(a, d)?;
    let roots: Vec<f64> = eig.iter().map(|e| e.max(0.0).sqrt()).collect();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for (k, r) in roots.iter().enumerate() {
                acc += v[i * d + k] * r * v[j * d + k];
            }
            out[i * d + j] = acc;
        }
    }
    Ok(out)
}

/// Fréchet distance between two Gaussians:
/// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 sqrt(sqrt(S1) S2 sqrt(S1))).
pub fn frechet(s1: &GaussianStats, s2: &GaussianStats) -> Result<f64> {
    let d = s1.dim();
    if s2.dim() != d {
        return Err(Error::invalid(format!(
            "frechet dimension mismatch: {} vs {}",
            d,
            s2.dim()
        )));
    }
    let mean_term: f64 = s1
        .mean
        .iter()
        .zip(&s2.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let root1 = sqrt_psd(&s1.covariance, d)?;
    let inner = mat_mul(&mat_mul(&root1, &s2.covariance, d), &root1, d);
    let (eig, _) = symmetric_eigen(&inner, d)?;
    let tr_cross: f64 = eig.iter().map(|e| e.max(0.0).sqrt()).sum();
    let tr1: f64 = (0..d).map(|i| s1.covariance[i * d + i]).sum();
    let tr2: f64 = (0..d).map(|i| s2.covariance[i * d + i]).sum();
    Ok((mean_term + tr1 + tr2 - 2.0 * tr_cross).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn gauss1(mu: f64, var: f64) -> GaussianStats {
        GaussianStats {
            mean: vec![mu],
            covariance: vec![var],
            count: 10,
        }
    }

    #[test]
    fn one_dimensional_closed_forms() {
        // Equal variances, unit mean gap.
        assert!((frechet(&gauss1(0.0, 1.0), &gauss1(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        // Equal means, variances 4 and 1: (2 - 1)^2 = 1.
        assert!((frechet(&gauss1(0.0, 4.0), &gauss1(0.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_distance_zero_and_symmetry() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for d in [2usize, 6, 12] {
            let make = |rng: &mut ChaCha20Rng| {
                let b: Vec<f64> = (0..d * d).map(|_| rng.gen::<f64>() - 0.5).collect();
                let mut cov = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        let mut acc = if i == j { 0.05 } else { 0.0 };
                        for k in 0..d {
                            acc += b[i * d + k] * b[j * d + k];
                        }
                        cov[i * d + j] = acc;
                    }
                }
                GaussianStats {
                    mean: (0..d).map(|_| rng.gen::<f64>()).collect(),
                    covariance: cov,
                    count: 50,
                }
            };
            let s1 = make(&mut rng);
            let s2 = make(&mut rng);
            assert!(frechet(&s1, &s1).unwrap() < 1e-8);
            let ab = frechet(&s1, &s2).unwrap();
            let ba = frechet(&s2, &s1).unwrap();
            assert!((ab - ba).abs() < 1e-8, "{} vs {}", ab, ba);
            assert!(ab >= 0.0);
        }
    }

    #[test]
    fn commuting_covariances_match_closed_form() {
        // Diagonal covariances: distance = sum_i (sqrt(a_i) - sqrt(b_i))^2.
        let s1 = GaussianStats {
            mean: vec![0.0, 0.0],
            covariance: vec![4.0, 0.0, 0.0, 9.0],
            count: 5,
        };
        let s2 = GaussianStats {
            mean: vec![0.0, 0.0],
            covariance: vec![1.0, 0.0, 0.0, 1.0],
            count: 5,
        };
        let want = (2.0f64 - 1.0).powi(2) + (3.0f64 - 1.0).powi(2);
        assert!((frechet(&s1, &s2).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn stats_match_moment_formula_oracle() {
        // Independent single-pass oracle: Sigma = E[x x^T] - mu mu^T scaled
        // to the unbiased divisor, plus the ridge.
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let n = 100;
        let d = 8;
        let feats: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let got = stats_of_features(&feats).unwrap();
        let mut mu = vec![0.0; d];
        let mut xx = vec![0.0; d * d];
        for f in &feats {
            for i in 0..d {
                mu[i] += f[i] / n as f64;
                for j in 0..d {
                    xx[i * d + j] += f[i] * f[j];
                }
            }
        }
        for i in 0..d {
            assert!((got.mean[i] - mu[i]).abs() < 1e-12);
            for j in 0..d {
                let raw = xx[i * d + j] - n as f64 * mu[i] * mu[j];
                let mut want = raw / (n - 1) as f64;
                if i == j {
                    want += 1e-6;
                }
                assert!((got.covariance[i * d + j] - want).abs() < 1e-10);
            }
        }
        assert!(got.asymmetry() == 0.0);
    }

    #[test]
    fn identical_rows_leave_only_the_ridge() {
        let feats = vec![vec![1.0, -2.0, 3.0]; 5];
        let s = stats_of_features(&feats).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1e-6 } else { 0.0 };
                assert_eq!(s.covariance[i * 3 + j], want);
            }
        }
    }

    #[test]
    fn extractor_feature_stats_have_matching_dim() {
        use crate::networks::ExtractorVariant;
        let spec = NetworkSpec::new(NetKind::FeatureExtractor(ExtractorVariant::Max))
            .with_width(0.125);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let blob = WeightBlob::init(&spec, &mut rng).unwrap();
        let clouds: Vec<PointCloud> = (0..3)
            .map(|_| {
                PointCloud::new(
                    (0..16)
                        .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
                        .collect(),
                )
            })
            .collect();
        let s = feature_stats(&clouds, &spec, &blob).unwrap();
        assert_eq!(s.dim(), 128);
        assert_eq!(s.count, 3);
        // A discriminator kind is rejected.
        let bad = NetworkSpec::new(NetKind::PointNetMax).with_width(0.125);
        let bad_blob = WeightBlob::init(&bad, &mut rng).unwrap();
        assert!(feature_stats(&clouds, &bad, &bad_blob).is_err());
    }
}
