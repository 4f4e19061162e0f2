//! Rotary-gate gripper with contact-sensing latency and a finite close time.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperParams {
    /// Gate aperture `ε_g`, m.
    pub aperture: f64,
    /// Tip-touch radius that registers a contact, m.
    pub contact_radius: f64,
    /// Delay between touch and the close command, s.
    pub latency: f64,
    /// Servo time from open to closed, s.
    pub servo_time: f64,
    /// Gripper tip relative to the follower's centre (inertial axes), m.
    pub tip_offset: Vector3<f64>,
}

impl Default for GripperParams {
    fn default() -> Self {
        Self {
            aperture: 0.1,
            contact_radius: 0.02,
            latency: 0.015,
            servo_time: 0.06,
            tip_offset: Vector3::zeros(),
        }
    }
}

impl GripperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.aperture > 0.0 && self.contact_radius > 0.0) {
            return Err(Error::invalid("gripper aperture and contact radius must be positive"));
        }
        if !(self.latency >= 0.0 && self.servo_time > 0.0) {
            return Err(Error::invalid("gripper latency must be >= 0 and servo time > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    Open,
    Closing { started: f64, elapsed: f64 },
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GripperEventKind {
    Contact,
    Docked,
    Missed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperEvent {
    pub t: f64,
    pub kind: GripperEventKind,
    pub rel_pos: Vector3<f64>,
    pub rel_vel: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct PendingClose {
    act_at: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GripperState {
    pub params: GripperParams,
    pub gate: Gate,
    pub contact_time: Option<f64>,
    queue: VecDeque<PendingClose>,
}

impl GripperState {
    pub fn new(params: GripperParams) -> Self {
        Self {
            params,
            gate: Gate::Open,
            contact_time: None,
            queue: VecDeque::new(),
        }
    }

    /// Close requested by software; skips the sensing latency.
    pub fn command_close(&mut self, t: f64) {
        if self.gate == Gate::Open {
            self.enqueue(t);
        }
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    fn enqueue(&mut self, act_at: f64) {
        // queue stays sorted
        let idx = self.queue.iter().position(|p| p.act_at > act_at).unwrap_or(self.queue.len());
        self.queue.insert(idx, PendingClose { act_at });
    }
}

const TIME_EPS: f64 = 1e-9;

/// Advances the gripper to time `t` (end of a step of length `dt`).
///
/// `bar_rel_pos` / `bar_rel_vel` are the bar relative to the gripper tip.
pub fn gripper_step(
    grip: &GripperState,
    bar_rel_pos: &Vector3<f64>,
    bar_rel_vel: &Vector3<f64>,
    t: f64,
    dt: f64,
) -> Result<(GripperState, Option<GripperEvent>)> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let mut next = grip.clone();
    let event = |kind, t| GripperEvent {
        t,
        kind,
        rel_pos: *bar_rel_pos,
        rel_vel: *bar_rel_vel,
    };
    let mut out = None;

    if next.gate == Gate::Open
        && next.contact_time.is_none()
        && bar_rel_pos.norm() < next.params.contact_radius
    {
        next.contact_time = Some(t);
        let act_at = t + next.params.latency;
        next.enqueue(act_at);
        out = Some(event(GripperEventKind::Contact, t));
    }

    if next.gate == Gate::Open {
        if let Some(front) = next.queue.front().copied() {
            if front.act_at <= t + TIME_EPS {
                next.queue.pop_front();
                next.gate = Gate::Closing {
                    started: front.act_at,
                    elapsed: 0.0,
                };
            }
        }
    }

    if let Gate::Closing { started, .. } = next.gate {
        let servo = next.params.servo_time;
        let elapsed = (t - started).clamp(0.0, servo);
        if t - started + TIME_EPS >= servo {
            next.gate = Gate::Closed;
            next.queue.clear();
            let kind = if bar_rel_pos.norm() <= next.params.aperture {
                GripperEventKind::Docked
            } else {
                GripperEventKind::Missed
            };
            out = Some(event(kind, started + servo));
        } else {
            next.gate = Gate::Closing { started, elapsed };
        }
    }
    Ok((next, out))
}
