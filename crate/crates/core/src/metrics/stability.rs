use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Spread of a metric re-evaluated several times at one checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointStability {
    pub mean: f64,
    /// Population standard deviation (divisor n).
    pub std: f64,
    /// std / |mean|; `None` when the mean is zero.
    pub relative_std: Option<f64>,
}

/// Stability of a metric across checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub checkpoints: Vec<CheckpointStability>,
    /// |m1 - m2| / |m1| between the first two checkpoints; `None` when there
    /// is a single checkpoint or the first mean is zero.
    pub relative_mean_diff: Option<f64>,
}

impl StabilityReport {
    pub const CSV_HEADER: &'static str = "checkpoint,mean,std,relative_std,relative_mean_diff";

    /// One row per checkpoint; undefined relative quantities export as
    /// "undefined", the mean-diff column only on the first row.
    pub fn to_csv(&self) -> String {
        let fmt_opt = |v: Option<f64>| match v {
            Some(x) => x.to_string(),
            None => "undefined".to_string(),
        };
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (i, c) in self.checkpoints.iter().enumerate() {
            let diff = if i == 0 {
                fmt_opt(self.relative_mean_diff)
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                c.mean,
                c.std,
                fmt_opt(c.relative_std),
                diff
            ));
        }
        out
    }
}

/// Stability analysis over per-checkpoint lists of repeated metric values.
pub fn fpd_stability(samples: &[Vec<f64>]) -> Result<StabilityReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("fpd_stability"));
    }
    let mut checkpoints = Vec::with_capacity(samples.len());
    for (i, vals) in samples.iter().enumerate() {
        if vals.len() < 2 {
            return Err(Error::invalid(format!(
                "checkpoint {} has {} values, need at least 2",
                i,
                vals.len()
            )));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "checkpoint {} contains non-finite values",
                i
            )));
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let relative_std = if mean == 0.0 { None } else { Some(std / mean.abs()) };
        checkpoints.push(CheckpointStability {
            mean,
            std,
            relative_std,
        });
    }
    let relative_mean_diff = if checkpoints.len() >= 2 && checkpoints[0].mean != 0.0 {
        Some((checkpoints[0].mean - checkpoints[1].mean).abs() / checkpoints[0].mean.abs())
    } else {
        None
    };
    Ok(StabilityReport {
        checkpoints,
        relative_mean_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_and_relative_std() {
        // Two values m +/- s have population std exactly s.
        let m = 3.814;
        let s = 0.2642;
        let rep = fpd_stability(&[vec![m + s, m - s]]).unwrap();
        let c = &rep.checkpoints[0];
        assert!((c.mean - m).abs() < 1e-12);
        assert!((c.std - s).abs() < 1e-12);
        let rel = c.relative_std.unwrap() * 100.0;
        assert!((rel - 6.93).abs() < 0.01, "{}", rel);
    }

    #[test]
    fn constant_list_has_zero_spread() {
        let rep = fpd_stability(&[vec![2.5, 2.5, 2.5, 2.5]]).unwrap();
        let c = &rep.checkpoints[0];
        assert_eq!(c.std, 0.0);
        assert_eq!(c.relative_std, Some(0.0));
    }

    #[test]
    fn relative_mean_diff_uses_first_mean() {
        let rep = fpd_stability(&[vec![0.4, 0.2], vec![0.25, 0.25]]).unwrap();
        // Means 0.3 and 0.25; diff 0.05 / 0.3.
        let d = rep.relative_mean_diff.unwrap();
        assert!((d - 0.05 / 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_flags_relative_quantities_undefined() {
        let rep = fpd_stability(&[vec![1.0, -1.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(rep.checkpoints[0].relative_std, None);
        assert_eq!(rep.relative_mean_diff, None);
        let csv = rep.to_csv();
        assert!(csv.contains("undefined"));
    }

    #[test]
    fn singleton_checkpoint_rejected() {
        assert!(fpd_stability(&[vec![1.0]]).is_err());
    }
}
