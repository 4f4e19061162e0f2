//! Suspended platform, gripper, dock state machine and post-dock load transfer.

pub mod gripper;
pub mod platform;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{e3, VehicleState, GRAVITY};
use crate::error::{Error, Result};
pub use gripper::{gripper_step, Gate, GripperEvent, GripperEventKind, GripperParams, GripperState};
pub use platform::{platform_step, PlatformState};

/// Mission-level docking state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DockState {
    Approach,
    ContactPending { contact: f64 },
    Docked { contact: f64, docked: f64 },
    Missed { contact: f64, missed: f64 },
}

impl DockState {
    pub fn label(&self) -> &'static str {
        match self {
            DockState::Approach => "approach",
            DockState::ContactPending { .. } => "contact-pending",
            DockState::Docked { .. } => "docked",
            DockState::Missed { .. } => "missed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, DockState::Docked { .. } | DockState::Missed { .. })
    }

    /// Applies a gripper event. Only `Approach → ContactPending →
    /// {Docked, Missed}` is allowed.
    pub fn on_event(self, event: &GripperEvent) -> Result<DockState> {
        use GripperEventKind::*;
        match (self, event.kind) {
            (DockState::Approach, Contact) => Ok(DockState::ContactPending { contact: event.t }),
            (DockState::ContactPending { contact }, Docked) => Ok(DockState::Docked {
                contact,
                docked: event.t,
            }),
            (DockState::ContactPending { contact }, Missed) => Ok(DockState::Missed {
                contact,
                missed: event.t,
            }),
            (state, kind) => Err(Error::invalid(format!(
                "dock transition {} on {kind:?} not allowed",
                state.label()
            ))),
        }
    }
}

/// One line of the docking event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DockEvent {
    pub t: f64,
    #[serde(rename = "type")]
    pub kind: String,
    pub rel_pos: [f64; 3],
    pub rel_vel: [f64; 3],
}

impl From<&GripperEvent> for DockEvent {
    fn from(e: &GripperEvent) -> Self {
        let kind = match e.kind {
            GripperEventKind::Contact => "contact",
            GripperEventKind::Docked => "docked",
            GripperEventKind::Missed => "missed",
        };
        Self {
            t: e.t,
            kind: kind.into(),
            rel_pos: e.rel_pos.into(),
            rel_vel: e.rel_vel.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CouplingParams {
    /// Time for the follower's thrust to ramp from hover to zero, s.
    pub ramp: f64,
    /// Delay before the leader learns of the dock and starts trimming, s.
    pub comm_latency: f64,
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self {
            ramp: 1.0,
            comm_latency: 0.1,
        }
    }
}

/// Load transfer after a successful dock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledMode {
    pub dock_time: f64,
    pub follower_mass: f64,
    pub leader_mass: f64,
    /// Follower's offset from the bar while attached (inertial axes), m.
    pub follower_offset: Vector3<f64>,
    pub params: CouplingParams,
}

impl CoupledMode {
    /// Fraction of hover thrust the follower still produces at `t`.
    pub fn thrust_fraction(&self, t: f64) -> f64 {
        if self.params.ramp <= 0.0 {
            return if t >= self.dock_time { 0.0 } else { 1.0 };
        }
        (1.0 - (t - self.dock_time) / self.params.ramp).clamp(0.0, 1.0)
    }

    /// Follower weight not supported by its own thrust, N.
    pub fn unsupported_weight(&self, t: f64) -> f64 {
        self.follower_mass * GRAVITY * (1.0 - self.thrust_fraction(t))
    }

    /// Extra down acceleration on the leader at `t`.
    pub fn leader_load_accel(&self, t: f64) -> Vector3<f64> {
        e3() * (self.unsupported_weight(t) / self.leader_mass)
    }

    /// Leader's feedforward for the load it believes it carries, lagging
    /// the true load by the communication latency.
    pub fn leader_trim(&self, t: f64) -> Vector3<f64> {
        -self.leader_load_accel(t - self.params.comm_latency)
    }

    /// Follower position while clamped to the bar.
    pub fn follower_position(&self, bar: &Vector3<f64>) -> Vector3<f64> {
        bar + self.follower_offset
    }
}

/// Builds the coupled-mode parameters at the moment of docking.
pub fn couple_on_dock(
    dock: &DockState,
    alpha: &VehicleState,
    bravo: &VehicleState,
    plat: &PlatformState,
    params: CouplingParams,
) -> Result<CoupledMode> {
    let DockState::Docked { docked, .. } = *dock else {
        return Err(Error::invalid("coupling requires a docked state"));
    };
    Ok(CoupledMode {
        dock_time: docked,
        follower_mass: bravo.mass,
        leader_mass: alpha.mass,
        follower_offset: bravo.position - plat.bar_position(alpha),
        params,
    })
}
