//! Equivariant downwash predictor: features, network, data, training and
//! the staged collection curriculum.

pub mod curriculum;
pub mod dataset;
pub mod features;
pub mod mlp;
pub mod train;

use nalgebra::{Rotation3, Vector3};

pub use curriculum::{default_stages, docking_stages, run_curriculum, CurriculumOutcome, Stage, SweepEnvironment};
pub use dataset::{estimate_bias, make_label, read_dataset, write_dataset, TrainingSample};
pub use features::{feature_map, from_canonical, to_canonical, Features, RelativeState9};
pub use mlp::{MlpModel, F_MAX, LAYER_SIZES};
pub use train::{train, TrainHyper, Trained};

/// Predicted disturbance acceleration in inertial axes.
///
/// The network sees only the invariant features and answers in the frame
/// where the horizontal offset lies on the leader's first axis; the answer
/// is rotated back by `φ` and clamped to the model's `f_max`.
pub fn predict(model: &MlpModel, x: &RelativeState9, leader_attitude: &Rotation3<f64>) -> Vector3<f64> {
    let feats = feature_map(x, leader_attitude);
    let out = model.forward(&feats.h);
    let g = Vector3::new(out[0], out[1], out[2]);
    let f = from_canonical(&g, feats.phi, leader_attitude);
    let n = f.norm();
    if n > model.f_max {
        f * (model.f_max / n)
    } else {
        f
    }
}
