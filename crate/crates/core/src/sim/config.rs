//! Scenario configuration, read from JSON. Every field has a default, so a
//! file only needs the values it changes.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::{LqrWeights, ObserverNoise, A_MAX};
use crate::docking::{CouplingParams, GripperParams};
use crate::dynamics::{ATTITUDE_TAU, MAX_DT};
use crate::error::{Error, Result};
use crate::field::FieldParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum LeaderMode {
    /// Fixed to a stand; never moves.
    RigidMount,
    /// Free flight, holding its start position.
    Hover,
    /// Free flight north at a constant speed (m/s).
    ConstantVelocity { speed: f64 },
}

/// What the follower subtracts from its acceleration command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compensation {
    None,
    /// Learned model prediction.
    Model,
    /// The true disturbance, recomputed every physics step.
    Oracle,
    /// The turbulence-free field at the control tick; the best any
    /// learned mean model can do.
    MeanField,
    /// Kalman disturbance-observer estimate.
    Observer,
}

/// Uniform perturbation of the follower's start state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StartJitter {
    /// Half-width per axis, m.
    pub position: f64,
    /// Half-width per axis, m/s.
    pub velocity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub mass: f64,
    pub leader_mass: f64,
    /// Longest-diagonal span, m.
    pub body_length: f64,
    pub field: FieldParams,
    /// Disable to remove the downwash entirely.
    pub downwash: bool,
    pub lqr: LqrWeights,
    pub leader_lqr: LqrWeights,
    pub a_max: f64,
    pub attitude_tau: f64,
    pub observer: ObserverNoise,
    pub compensation: Compensation,
    /// Cable length `d_p`, m.
    pub cable_length: f64,
    pub platform_damping: f64,
    /// Cable attach point in the leader body frame, m.
    pub anchor_offset: [f64; 3],
    pub gripper: GripperParams,
    /// When false the follower only tracks; no dock is attempted.
    pub gripper_enabled: bool,
    /// Proximity threshold `D`, m; telemetry flags separations below it.
    pub proximity: f64,
    /// Approach horizon `t_h`, s.
    pub horizon: f64,
    /// Abort if not docked this long after the horizon ends, s.
    pub abort_margin: f64,
    /// Formation hold after the horizon when not docking, s.
    pub hold_duration: f64,
    /// Simulated time after a dock or miss, s.
    pub post_time: f64,
    /// Wind-down descent after a miss: depth (m) and duration (s).
    pub wind_down_depth: f64,
    pub wind_down_time: f64,
    pub leader: LeaderMode,
    /// Leader start position (NED), m.
    pub leader_position: [f64; 3],
    /// Follower start relative to its docking goal, m.
    pub start_offset: [f64; 3],
    pub start_velocity: [f64; 3],
    pub jitter: StartJitter,
    /// Constant acceleration bias on the follower, m/s².
    pub accel_bias: [f64; 3],
    pub coupling: CouplingParams,
    /// Learned model file; the CLI loads it when compensation is `model`.
    pub model: Option<PathBuf>,
    pub seed: u64,
    /// Index of this run within a sweep; selects the random streams.
    pub run_index: u64,
    /// Fixed run length, s. Default: until the mission ends.
    pub duration: Option<f64>,
    pub physics_rate: f64,
    pub control_rate: f64,
    /// Length of the summary window before the dock or abort time, s.
    pub metrics_window: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mass: 0.7,
            leader_mass: 0.7,
            body_length: 0.27,
            field: FieldParams::default(),
            downwash: true,
            lqr: LqrWeights::uniform(400.0, 200.0, 1.0),
            leader_lqr: LqrWeights::default(),
            a_max: A_MAX,
            attitude_tau: ATTITUDE_TAU,
            observer: ObserverNoise::default(),
            compensation: Compensation::Model,
            cable_length: 0.36,
            platform_damping: 0.05,
            anchor_offset: [0.0; 3],
            gripper: GripperParams::default(),
            gripper_enabled: true,
            proximity: 0.54,
            horizon: 4.0,
            abort_margin: 2.0,
            hold_duration: 5.0,
            post_time: 4.0,
            wind_down_depth: 1.0,
            wind_down_time: 2.0,
            leader: LeaderMode::Hover,
            leader_position: [0.0, 0.0, -2.5],
            start_offset: [-1.0, 0.0, 1.0],
            start_velocity: [0.0; 3],
            jitter: StartJitter::default(),
            accel_bias: [0.0; 3],
            coupling: CouplingParams::default(),
            model: None,
            seed: 1,
            run_index: 0,
            duration: None,
            physics_rate: 500.0,
            control_rate: 50.0,
            metrics_window: 0.5,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

fn finite3(name: &str, v: &[f64; 3]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("config {name}")))
    }
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Json {
            path: PathBuf::from("<inline>"),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Physics steps per control tick.
    pub fn substeps(&self) -> usize {
        (self.physics_rate / self.control_rate).round() as usize
    }

    pub fn physics_dt(&self) -> f64 {
        1.0 / self.physics_rate
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn validate(&self) -> Result<()> {
        positive("mass", self.mass)?;
        positive("leader_mass", self.leader_mass)?;
        positive("body_length", self.body_length)?;
        positive("cable_length", self.cable_length)?;
        positive("proximity", self.proximity)?;
        positive("horizon", self.horizon)?;
        positive("a_max", self.a_max)?;
        positive("physics_rate", self.physics_rate)?;
        positive("control_rate", self.control_rate)?;
        positive("metrics_window", self.metrics_window)?;
        positive("wind_down_time", self.wind_down_time)?;
        for (name, v) in [
            ("abort_margin", self.abort_margin),
            ("hold_duration", self.hold_duration),
            ("post_time", self.post_time),
            ("wind_down_depth", self.wind_down_depth),
            ("attitude_tau", self.attitude_tau),
            ("platform_damping", self.platform_damping),
            ("jitter.position", self.jitter.position),
            ("jitter.velocity", self.jitter.velocity),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if let Some(d) = self.duration {
            positive("duration", d)?;
        }
        let ratio = self.physics_rate / self.control_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::invalid("physics rate must be an integer multiple of the control rate"));
        }
        if self.physics_dt() > MAX_DT {
            return Err(Error::invalid(format!("physics rate must be at least {} Hz", 1.0 / MAX_DT)));
        }
        finite3("leader_position", &self.leader_position)?;
        finite3("start_offset", &self.start_offset)?;
        finite3("start_velocity", &self.start_velocity)?;
        finite3("accel_bias", &self.accel_bias)?;
        finite3("anchor_offset", &self.anchor_offset)?;
        if let LeaderMode::ConstantVelocity { speed } = self.leader {
            if !speed.is_finite() {
                return Err(Error::NonFinite("leader speed".into()));
            }
        }
        if !(self.coupling.ramp >= 0.0 && self.coupling.comm_latency >= 0.0) {
            return Err(Error::invalid("coupling ramp and latency must be >= 0"));
        }
        self.field.validate()?;
        self.lqr.validate()?;
        self.leader_lqr.validate()?;
        self.gripper.validate()?;
        Ok(())
    }

    pub fn leader_velocity(&self) -> Vector3<f64> {
        match self.leader {
            LeaderMode::ConstantVelocity { speed } => Vector3::new(speed, 0.0, 0.0),
            _ => Vector3::zeros(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.substeps(), 10);
        let back = ScenarioConfig::from_json_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ScenarioConfig::from_json_str(
            r#"{"cable_length": 0.64, "leader": {"type": "constant_velocity", "speed": 0.25}, "compensation": "none"}"#,
        )
        .unwrap();
        assert_eq!(cfg.cable_length, 0.64);
        assert_eq!(cfg.leader_velocity(), Vector3::new(0.25, 0.0, 0.0));
        assert_eq!(cfg.compensation, Compensation::None);
        assert_eq!(cfg.horizon, 4.0);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            r#"{"cable_length": -1}"#,
            r#"{"physics_rate": 500, "control_rate": 30}"#,
            r#"{"physics_rate": 50, "control_rate": 50}"#,
            r#"{"horizon": 0}"#,
            r#"{"gripper": {"aperture": 0}}"#,
        ] {
            assert!(ScenarioConfig::from_json_str(text).is_err(), "{text}");
        }
        assert!(matches!(
            ScenarioConfig::from_json_str("{not json"),
            Err(Error::Json { .. })
        ));
    }
}
