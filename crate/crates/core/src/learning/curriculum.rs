//! Staged data collection from far to near separations.
//!
//! Stage `k` is flown with the model trained on stages `0..k` deployed, so
//! the follower can hold station where the unmodelled downwash would
//! otherwise push it around. After each stage the model is retrained
//! (warm-started) on everything collected so far.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::dataset::TrainingSample;
use crate::learning::mlp::MlpModel;
use crate::learning::train::{train_from, TrainHyper};

/// Band of vertical separations (follower below leader), m.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub near: f64,
    pub far: f64,
    /// Simulated flight time spent collecting in this band, s.
    pub duration: f64,
}

impl Stage {
    pub fn new(far: f64, near: f64, duration: f64) -> Self {
        Self { near, far, duration }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.near + self.far)
    }

    pub fn contains(&self, dz: f64) -> bool {
        (self.near..=self.far).contains(&dz)
    }
}

/// Five bands from 1.8 m down to 0.5 m, 60 s each.
pub fn default_stages() -> Vec<Stage> {
    vec![
        Stage::new(1.8, 1.5, 60.0),
        Stage::new(1.5, 1.2, 60.0),
        Stage::new(1.2, 0.9, 60.0),
        Stage::new(0.9, 0.6, 60.0),
        Stage::new(0.6, 0.5, 60.0),
    ]
}

/// The five default bands shortened to 50 s each, followed by a 50 s band
/// from 0.5 m down to 0.3 m that covers the docking depth. Same total.
pub fn docking_stages() -> Vec<Stage> {
    let mut stages: Vec<Stage> = default_stages()
        .into_iter()
        .map(|s| Stage { duration: 50.0, ..s })
        .collect();
    stages.push(Stage::new(0.5, 0.3, 50.0));
    stages
}

pub fn validate_stages(stages: &[Stage]) -> Result<()> {
    if stages.is_empty() {
        return Err(Error::invalid("curriculum needs at least one stage"));
    }
    for (k, s) in stages.iter().enumerate() {
        if !(s.near > 0.0 && s.far > s.near && s.duration > 0.0) {
            return Err(Error::invalid(format!("stage {k}: need 0 < near < far and duration > 0")));
        }
        if k > 0 && s.far > stages[k - 1].far {
            return Err(Error::invalid("stages must be ordered from far to near"));
        }
    }
    Ok(())
}

/// Something that can fly a stage and return labelled samples.
pub trait SweepEnvironment {
    fn collect(&mut self, stage_index: usize, stage: &Stage, model: Option<&MlpModel>) -> Result<Vec<TrainingSample>>;
}

#[derive(Clone, Debug)]
pub struct CurriculumOutcome {
    pub model: MlpModel,
    /// Model after each stage's retraining.
    pub stage_models: Vec<MlpModel>,
    pub samples: Vec<TrainingSample>,
    /// Validation indices into `samples` for the final training run.
    pub val_indices: Vec<usize>,
    pub collected_duration: f64,
}

pub fn run_curriculum(
    env: &mut dyn SweepEnvironment,
    stages: &[Stage],
    hyper: &TrainHyper,
) -> Result<CurriculumOutcome> {
    validate_stages(stages)?;
    hyper.validate()?;
    let mut samples: Vec<TrainingSample> = Vec::new();
    let mut stage_models: Vec<MlpModel> = Vec::new();
    let mut val_indices = Vec::new();
    for (k, stage) in stages.iter().enumerate() {
        let batch = env.collect(k, stage, stage_models.last())?;
        if batch.is_empty() {
            return Err(Error::invalid(format!("stage {k} produced no samples")));
        }
        samples.extend(batch);
        let trained = train_from(stage_models.last(), &samples, hyper)?;
        val_indices = trained.val_indices;
        stage_models.push(trained.model);
    }
    Ok(CurriculumOutcome {
        model: stage_models.last().cloned().expect("at least one stage"),
        stage_models,
        samples,
        val_indices,
        collected_duration: stages.iter().map(|s| s.duration).sum(),
    })
}
