//! Evaluation metrics for generated point-cloud sets.
//!
//! Cloud-to-cloud distances (Chamfer, Earth Mover's), set-level fidelity and
//! diversity (MMD, coverage), and Gaussian feature distances (Fréchet) over
//! pretrained extractor features. Conventions fixed here: Chamfer uses
//! squared distances and per-cloud means in both directions; EMD is the mean
//! unsquared distance under the optimal bijection; MMD averages over the
//! reference set; coverage matches generated clouds to their nearest
//! reference.

mod distance;
mod eigen;
mod frechet;
mod sets;
mod stability;

pub use distance::{chamfer, emd_approx, emd_exact, EMD_EXACT_CAP};
pub use eigen::symmetric_eigen;
pub use frechet::{feature_stats, frechet, GaussianStats};
pub use sets::{
    cloud_set_distance, coverage, evaluate_sets, mmd, DistKind, Extractor, Extractors,
    MetricReport, SET_EMD_EPSILON,
};
pub use stability::{fpd_stability, CheckpointStability, StabilityReport};
