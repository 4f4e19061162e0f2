//! Residual labels and the on-disk sample format.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::ControlInput;
use crate::error::{Error, Result};
use crate::learning::features::RelativeState9;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub x: RelativeState9,
    /// Estimated disturbance acceleration, inertial axes, m/s².
    pub label: Vector3<f64>,
    pub stage: usize,
    pub t: f64,
}

impl TrainingSample {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.label.iter().all(|v| v.is_finite()) && self.t.is_finite()
    }
}

/// Observed minus commanded acceleration, less the calibrated bias.
pub fn make_label(a_obs: &Vector3<f64>, u_cmd: &ControlInput, bias: &Vector3<f64>) -> Vector3<f64> {
    a_obs - u_cmd.accel - bias
}

/// Mean residual over a disturbance-free calibration segment.
pub fn estimate_bias(residuals: &[Vector3<f64>]) -> Result<Vector3<f64>> {
    if residuals.is_empty() {
        return Err(Error::invalid("bias calibration needs at least one residual"));
    }
    let sum: Vector3<f64> = residuals.iter().sum();
    Ok(sum / residuals.len() as f64)
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    dp_n: f64,
    dp_e: f64,
    dp_d: f64,
    va_n: f64,
    va_e: f64,
    va_d: f64,
    vb_n: f64,
    vb_e: f64,
    vb_d: f64,
    f_n: f64,
    f_e: f64,
    f_d: f64,
    stage: usize,
    t: f64,
}

impl From<&TrainingSample> for Row {
    fn from(s: &TrainingSample) -> Self {
        let [dp_n, dp_e, dp_d, va_n, va_e, va_d, vb_n, vb_e, vb_d] = s.x.to_array();
        Row {
            dp_n,
            dp_e,
            dp_d,
            va_n,
            va_e,
            va_d,
            vb_n,
            vb_e,
            vb_d,
            f_n: s.label.x,
            f_e: s.label.y,
            f_d: s.label.z,
            stage: s.stage,
            t: s.t,
        }
    }
}

impl From<Row> for TrainingSample {
    fn from(r: Row) -> Self {
        TrainingSample {
            x: RelativeState9::from_array(&[
                r.dp_n, r.dp_e, r.dp_d, r.va_n, r.va_e, r.va_d, r.vb_n, r.vb_e, r.vb_d,
            ]),
            label: Vector3::new(r.f_n, r.f_e, r.f_d),
            stage: r.stage,
            t: r.t,
        }
    }
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &[TrainingSample]) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if samples.is_empty() {
        w.write_record([
            "dp_n", "dp_e", "dp_d", "va_n", "va_e", "va_d", "vb_n", "vb_e", "vb_d", "f_n", "f_e",
            "f_d", "stage", "t",
        ])
        .map_err(csv_err)?;
    }
    for s in samples {
        w.serialize(Row::from(s)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<TrainingSample>> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for row in r.deserialize::<Row>() {
        let s = TrainingSample::from(row.map_err(csv_err)?);
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("{} row {}", path.display(), out.len() + 1)));
        }
        out.push(s);
    }
    Ok(out)
}
