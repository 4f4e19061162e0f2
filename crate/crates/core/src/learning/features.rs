//! SO(2)-invariant features of the relative state and the canonical frame.
//!
//! Horizontal quantities are projected onto the leader's `a1, a2` plane.
//! The six features are unchanged by any rotation about the leader's
//! vertical axis; the angle `φ` of the projected offset carries the rotation
//! so predictions can be rotated back out of the canonical frame.

use std::f64::consts::PI;

use nalgebra::{Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;

/// Below this norm (m or m/s) a projected vector is treated as zero.
pub const DEGENERACY_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeState9 {
    /// Follower minus leader position, m.
    pub rel_pos: Vector3<f64>,
    pub leader_vel: Vector3<f64>,
    pub follower_vel: Vector3<f64>,
}

impl RelativeState9 {
    pub fn from_states(leader: &VehicleState, follower: &VehicleState) -> Self {
        Self {
            rel_pos: follower.position - leader.position,
            leader_vel: leader.velocity,
            follower_vel: follower.velocity,
        }
    }

    pub fn to_array(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        out[..3].copy_from_slice(self.rel_pos.as_slice());
        out[3..6].copy_from_slice(self.leader_vel.as_slice());
        out[6..].copy_from_slice(self.follower_vel.as_slice());
        out
    }

    pub fn from_array(v: &[f64; 9]) -> Self {
        Self {
            rel_pos: Vector3::new(v[0], v[1], v[2]),
            leader_vel: Vector3::new(v[3], v[4], v[5]),
            follower_vel: Vector3::new(v[6], v[7], v[8]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Rotates every component by `θ` about the leader's vertical axis.
    pub fn rotated(&self, leader_attitude: &Rotation3<f64>, theta: f64) -> Self {
        let rot = leader_vertical_rotation(leader_attitude, theta);
        Self {
            rel_pos: rot * self.rel_pos,
            leader_vel: rot * self.leader_vel,
            follower_vel: rot * self.follower_vel,
        }
    }
}

/// Rotation by `θ` about the leader's third body axis, in inertial axes.
pub fn leader_vertical_rotation(leader_attitude: &Rotation3<f64>, theta: f64) -> Rotation3<f64> {
    leader_attitude * Rotation3::from_axis_angle(&Vector3::z_axis(), theta) * leader_attitude.inverse()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub h: [f64; 6],
    /// Angle of the projected offset from the leader's first axis, in (−π, π].
    pub phi: f64,
}

fn planar(v: &Vector3<f64>) -> Vector2<f64> {
    Vector2::new(v.x, v.y)
}

pub fn wrap_pi(angle: f64) -> f64 {
    let mut a = crate::control::wrap_angle(angle);
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

pub fn feature_map(x: &RelativeState9, leader_attitude: &Rotation3<f64>) -> Features {
    let to_leader = leader_attitude.inverse();
    let dp = to_leader * x.rel_pos;
    let vb = to_leader * x.follower_vel;
    let va = to_leader * x.leader_vel;

    let dp_h = planar(&dp);
    let vb_h = planar(&vb);
    let dp_n = dp_h.norm();
    let vb_n = vb_h.norm();

    let alignment = if dp_n > DEGENERACY_EPS && vb_n > DEGENERACY_EPS {
        (dp_h.dot(&vb_h) / (dp_n * vb_n)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let phi = if dp_n > DEGENERACY_EPS {
        wrap_pi(dp_h.y.atan2(dp_h.x))
    } else {
        0.0
    };

    Features {
        h: [alignment, dp_n, vb_n, dp.z, vb.z, planar(&va).norm()],
        phi,
    }
}

/// Maps a vector from the canonical frame (offset along `+a1`) to inertial.
pub fn from_canonical(v: &Vector3<f64>, phi: f64, leader_attitude: &Rotation3<f64>) -> Vector3<f64> {
    leader_attitude * (Rotation3::from_axis_angle(&Vector3::z_axis(), phi) * v)
}

/// Inverse of [`from_canonical`].
pub fn to_canonical(v: &Vector3<f64>, phi: f64, leader_attitude: &Rotation3<f64>) -> Vector3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), -phi) * (leader_attitude.inverse() * v)
}
