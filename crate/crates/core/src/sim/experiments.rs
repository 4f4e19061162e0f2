//! The three flight experiments: docking onto a rigidly mounted leader at
//! several cable lengths, repeated docking under a hovering leader, and
//! formation tracking behind a leader in forward flight.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::LqrWeights;
use crate::error::{Error, Result};
use crate::learning::MlpModel;
use crate::sim::config::{Compensation, LeaderMode, ScenarioConfig, StartJitter};
use crate::sim::engine::{run_scenario, RunResult, RunSummary, SimLog};

/// Cable lengths of the static study, m.
pub const STATIC_OFFSETS: [f64; 6] = [0.36, 0.47, 0.64, 0.87, 1.11, 1.35];

/// Leader forward speed in the moving-leader experiment, m/s.
pub const MOVING_SPEED: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Static,
    Hover,
    Moving,
}

impl Experiment {
    /// Scenario defaults for this experiment.
    pub fn preset(self) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        match self {
            Experiment::Static => {
                cfg.leader = LeaderMode::RigidMount;
                cfg.leader_position = [0.0, 0.0, -2.5];
            }
            Experiment::Hover => {
                cfg.leader = LeaderMode::Hover;
                cfg.jitter = StartJitter {
                    position: 0.3,
                    velocity: 0.1,
                };
            }
            Experiment::Moving => {
                cfg.leader = LeaderMode::ConstantVelocity { speed: MOVING_SPEED };
                cfg.horizon = 6.0;
                cfg.hold_duration = 5.0;
                cfg.gripper_enabled = false;
                cfg.start_offset = [-1.0, 0.0, 0.3];
                cfg.lqr = LqrWeights::uniform(100.0, 200.0, 1.0);
            }
        }
        cfg
    }

    /// Preset with the keys of a JSON object laid over it.
    pub fn config_from_json(self, text: &str) -> Result<ScenarioConfig> {
        overlay_config(&self.preset(), text)
    }
}

/// `base` with the keys of a JSON object laid over it.
pub fn overlay_config(base: &ScenarioConfig, text: &str) -> Result<ScenarioConfig> {
    let parse_err = |e| Error::Json {
        path: "<config>".into(),
        source: e,
    };
    let mut value = serde_json::to_value(base).map_err(parse_err)?;
    let overlay: serde_json::Value = serde_json::from_str(text).map_err(parse_err)?;
    merge(&mut value, overlay);
    let cfg: ScenarioConfig = serde_json::from_value(value).map_err(parse_err)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Recursive object merge; non-object values replace.
fn merge(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn need_model(model: Option<&MlpModel>) -> Result<&MlpModel> {
    model.ok_or_else(|| Error::invalid("this experiment needs a trained model"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticRow {
    pub offset: f64,
    pub without: RunSummary,
    pub with: RunSummary,
}

/// One docking attempt per offset with and without compensation.
pub fn exp_static_offsets(cfg: &ScenarioConfig, offsets: &[f64], model: Option<&MlpModel>) -> Result<Vec<StaticRow>> {
    let model = need_model(model)?;
    if offsets.is_empty() {
        return Err(Error::invalid("need at least one offset"));
    }
    offsets
        .par_iter()
        .map(|&offset| {
            let mut c = cfg.clone();
            c.leader = LeaderMode::RigidMount;
            c.cable_length = offset;
            c.compensation = Compensation::None;
            let (_, without) = run_scenario(&c, None)?;
            c.compensation = Compensation::Model;
            let (_, with) = run_scenario(&c, Some(model))?;
            Ok(StaticRow { offset, without, with })
        })
        .collect()
}

pub const STATIC_COLUMNS: [&str; 9] = [
    "offset_m",
    "without_error_down_m",
    "without_error_3d_m",
    "without_predicted_force",
    "without_result",
    "with_error_down_m",
    "with_error_3d_m",
    "with_predicted_force",
    "with_result",
];

fn result_label(r: RunResult) -> &'static str {
    match r {
        RunResult::Dock => "Dock",
        RunResult::Miss => "Miss",
        RunResult::NoAttempt => "None",
    }
}

fn summary_cells(s: &RunSummary) -> [String; 4] {
    [
        s.error_down.to_string(),
        s.error_3d.to_string(),
        s.predicted_force.map_or_else(|| "NA".to_string(), |f| f.to_string()),
        result_label(s.result).to_string(),
    ]
}

pub fn static_table(rows: &[StaticRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut line = vec![r.offset.to_string()];
            line.extend(summary_cells(&r.without));
            line.extend(summary_cells(&r.with));
            line
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoverReport {
    pub compensation: Compensation,
    pub docks: usize,
    pub runs: Vec<RunSummary>,
}

/// `n` docking attempts under a hovering leader; run `i` uses random
/// stream `i`, so the result does not depend on scheduling.
pub fn exp_hover_docking(cfg: &ScenarioConfig, n: usize, model: Option<&MlpModel>) -> Result<(HoverReport, Vec<SimLog>)> {
    if n == 0 {
        return Err(Error::invalid("need at least one run"));
    }
    if cfg.compensation == Compensation::Model {
        need_model(model)?;
    }
    let out: Vec<(SimLog, RunSummary)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.leader = LeaderMode::Hover;
            c.run_index = i;
            run_scenario(&c, model)
        })
        .collect::<Result<_>>()?;
    let (logs, runs): (Vec<SimLog>, Vec<RunSummary>) = out.into_iter().unzip();
    let docks = runs.iter().filter(|s| s.result == RunResult::Dock).count();
    Ok((
        HoverReport {
            compensation: cfg.compensation,
            docks,
            runs,
        },
        logs,
    ))
}

pub const HOVER_COLUMNS: [&str; 7] = [
    "run",
    "result",
    "error_down_m",
    "error_3d_m",
    "predicted_force",
    "contact_time_s",
    "dock_time_s",
];

pub fn hover_table(report: &HoverReport) -> Vec<Vec<String>> {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    report
        .runs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            vec![
                i.to_string(),
                result_label(s.result).to_string(),
                s.error_down.to_string(),
                s.error_3d.to_string(),
                opt(s.predicted_force),
                opt(s.contact_time),
                opt(s.dock_time),
            ]
        })
        .collect()
}

/// Windows of the moving-leader mission, s.
pub const ENTRY_WINDOW: (f64, f64) = (4.0, 6.0);
pub const HOLD_WINDOW: (f64, f64) = (6.0, 11.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingStats {
    pub compensation: Compensation,
    /// Mean |altitude error| while entering the downwash.
    pub entry_alt_error: f64,
    /// Mean |altitude error| and 3D error during the formation hold.
    pub hold_alt_error: f64,
    pub hold_error_3d: f64,
    pub summary: RunSummary,
}

fn window_mean(log: &SimLog, (a, b): (f64, f64), f: impl Fn(&crate::sim::engine::LogRow) -> f64) -> f64 {
    let vals: Vec<f64> = log.rows.iter().filter(|r| r.t >= a - 1e-9 && r.t <= b + 1e-9).map(f).collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

pub fn tracking_stats(log: &SimLog, summary: RunSummary, compensation: Compensation) -> TrackingStats {
    TrackingStats {
        compensation,
        entry_alt_error: window_mean(log, ENTRY_WINDOW, |r| r.error().z.abs()),
        hold_alt_error: window_mean(log, HOLD_WINDOW, |r| r.error().z.abs()),
        hold_error_3d: window_mean(log, HOLD_WINDOW, |r| r.error().norm()),
        summary,
    }
}

/// Variants flown in the moving-leader experiment.
pub const MOVING_VARIANTS: [Compensation; 3] = [Compensation::Model, Compensation::None, Compensation::Observer];

/// Tracking behind a leader in forward flight, once per variant.
pub fn exp_moving_leader(cfg: &ScenarioConfig, model: Option<&MlpModel>) -> Result<Vec<(TrackingStats, SimLog)>> {
    let model = need_model(model)?;
    if !matches!(cfg.leader, LeaderMode::ConstantVelocity { .. }) {
        return Err(Error::invalid("moving-leader experiment needs a constant-velocity leader"));
    }
    MOVING_VARIANTS
        .par_iter()
        .map(|&comp| {
            let mut c = cfg.clone();
            c.compensation = comp;
            let (log, summary) = run_scenario(&c, Some(model))?;
            Ok((tracking_stats(&log, summary, comp), log))
        })
        .collect()
}

pub const MOVING_COLUMNS: [&str; 4] = ["compensation", "entry_alt_error_m", "hold_alt_error_m", "hold_error_3d_m"];

pub fn moving_table(stats: &[TrackingStats]) -> Vec<Vec<String>> {
    stats
        .iter()
        .map(|s| {
            let name = serde_json::to_value(s.compensation)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            vec![
                name,
                s.entry_alt_error.to_string(),
                s.hold_alt_error.to_string(),
                s.hold_error_3d.to_string(),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_keeps_preset_values() {
        let cfg = Experiment::Moving
            .config_from_json(r#"{"seed": 7, "field": {"turb_std_frac": 0.0}}"#)
            .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.field.turb_std_frac, 0.0);
        assert_eq!(cfg.field.w0, ScenarioConfig::default().field.w0);
        assert_eq!(cfg.horizon, 6.0);
        assert!(!cfg.gripper_enabled);
    }

    #[test]
    fn experiments_need_a_model() {
        let cfg = Experiment::Static.preset();
        assert!(exp_static_offsets(&cfg, &STATIC_OFFSETS, None).is_err());
        assert!(exp_moving_leader(&Experiment::Moving.preset(), None).is_err());
        assert!(exp_hover_docking(&Experiment::Hover.preset(), 0, None).is_err());
    }

    #[test]
    fn hover_without_model_is_order_independent() {
        let mut cfg = Experiment::Hover.preset();
        cfg.compensation = Compensation::None;
        let (a, _) = exp_hover_docking(&cfg, 3, None).unwrap();
        let mut single = cfg.clone();
        single.run_index = 2;
        let (_, s) = run_scenario(&single, None).unwrap();
        assert_eq!(a.runs[2], s);
        assert_eq!(a.runs.len(), 3);
    }
}
