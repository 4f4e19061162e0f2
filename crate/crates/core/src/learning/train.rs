//! Mini-batch Adam training on residual labels.
//!
//! Samples are mapped to (features, label in the canonical frame), so the
//! network only ever learns the SO(2)-reduced function. The leader attitude
//! is taken as identity for stored samples (the simulated leader holds zero
//! yaw).

use nalgebra::{DMatrix, Rotation3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::dataset::TrainingSample;
use crate::learning::features::{feature_map, to_canonical};
use crate::learning::mlp::{flatten, Adam, MlpModel, TrainingMeta, LAYER_SIZES};
use crate::learning::predict;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Tail fraction of each stage's samples held out for validation.
    pub val_fraction: f64,
    /// Return the parameters with the lowest validation loss.
    pub keep_best: bool,
    /// Axis gate radius given to freshly initialised networks, m.
    pub axis_radius: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch: 256,
            learning_rate: 1e-3,
            seed: 0,
            val_fraction: 0.2,
            keep_best: true,
            axis_radius: 0.05,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.axis_radius >= 0.0 && self.axis_radius.is_finite()) {
            return Err(Error::invalid("axis radius must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid("validation fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: MlpModel,
    /// Mean training loss per epoch.
    pub train_curve: Vec<f64>,
    /// Validation loss per epoch (empty without a validation split).
    pub val_curve: Vec<f64>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Contiguous time-block split: within each stage (in order of appearance)
/// the last `frac` of the samples go to validation.
pub fn split_blocks(samples: &[TrainingSample], frac: f64) -> (Vec<usize>, Vec<usize>) {
    let mut stages: Vec<usize> = Vec::new();
    for s in samples {
        if !stages.contains(&s.stage) {
            stages.push(s.stage);
        }
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for stage in stages {
        let idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].stage == stage).collect();
        let n_val = (idx.len() as f64 * frac).floor() as usize;
        let cut = idx.len() - n_val;
        train.extend_from_slice(&idx[..cut]);
        val.extend_from_slice(&idx[cut..]);
    }
    (train, val)
}

/// Feature and target matrices (columns are samples).
pub fn design_matrices(samples: &[TrainingSample], indices: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
    let att = Rotation3::identity();
    let mut x = DMatrix::zeros(6, indices.len());
    let mut y = DMatrix::zeros(3, indices.len());
    for (c, &i) in indices.iter().enumerate() {
        let s = &samples[i];
        let f = feature_map(&s.x, &att);
        let target = to_canonical(&s.label, f.phi, &att);
        for r in 0..6 {
            x[(r, c)] = f.h[r];
        }
        for r in 0..3 {
            y[(r, c)] = target[r];
        }
    }
    (x, y)
}

/// Root-mean-square per-component prediction error.
pub fn rmse(model: &MlpModel, samples: &[TrainingSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let att = Rotation3::identity();
    let sq: f64 = samples
        .iter()
        .map(|s| (predict(model, &s.x, &att) - s.label).norm_squared())
        .sum();
    (sq / (3 * samples.len()) as f64).sqrt()
}

pub fn train(samples: &[TrainingSample], hyper: &TrainHyper) -> Result<Trained> {
    train_from(None, samples, hyper)
}

/// Trains from `init` (warm start) or from a fresh seeded network.
pub fn train_from(init: Option<&MlpModel>, samples: &[TrainingSample], hyper: &TrainHyper) -> Result<Trained> {
    hyper.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("training needs at least one sample"));
    }
    if let Some(bad) = samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("training sample {bad}")));
    }
    let (train_idx, val_idx) = split_blocks(samples, hyper.val_fraction);
    let (train_idx, val_idx) = if train_idx.is_empty() {
        (val_idx, Vec::new())
    } else {
        (train_idx, val_idx)
    };
    let (x_train, y_train) = design_matrices(samples, &train_idx);
    let (x_val, y_val) = design_matrices(samples, &val_idx);

    let mut model = match init {
        Some(m) => m.clone(),
        None => {
            let mut m = MlpModel::new(&LAYER_SIZES, hyper.seed);
            m.axis_radius = hyper.axis_radius;
            m
        }
    };
    let mut params = model.params();
    let mut adam = Adam::new(params.len(), hyper.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..train_idx.len()).collect();
    let mut train_curve = Vec::with_capacity(hyper.epochs);
    let mut val_curve = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;

    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hyper.batch) {
            let xb = DMatrix::from_fn(6, chunk.len(), |r, c| x_train[(r, chunk[c])]);
            let yb = DMatrix::from_fn(3, chunk.len(), |r, c| y_train[(r, chunk[c])]);
            let (loss, grads) = model.loss_and_grad(&xb, &yb);
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut params, &flatten(&grads));
            model.set_params(&params);
        }
        train_curve.push(epoch_loss / order.len() as f64);
        if !val_idx.is_empty() {
            let v = model.loss(&x_val, &y_val);
            val_curve.push(v);
            if hyper.keep_best && best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, params.clone()));
            }
        }
    }
    if let Some((_, p)) = &best {
        model.set_params(p);
    }
    if !model.is_finite() {
        return Err(Error::NonFinite("network weights after training".into()));
    }
    let prev_epochs = init.map(|m| m.meta.epochs).unwrap_or(0);
    model.meta = TrainingMeta {
        epochs: prev_epochs + hyper.epochs,
        seed: hyper.seed,
        samples: samples.len(),
        train_loss: *train_curve.last().unwrap_or(&0.0),
        val_loss: match &best {
            Some((v, _)) => Some(*v),
            None => val_curve.last().copied(),
        },
    };
    Ok(Trained {
        model,
        train_curve,
        val_curve,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}
