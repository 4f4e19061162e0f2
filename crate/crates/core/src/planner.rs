//! Minimum-jerk approach trajectories and platform rendezvous prediction.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::docking::PlatformState;
use crate::dynamics::VehicleState;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub accel: Vector3<f64>,
}

impl BoundaryState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            accel: Vector3::zeros(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub yaw: f64,
}

/// Behaviour after the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum HoldMode {
    /// Stay at the goal position, at rest.
    HoldPoint,
    /// Keep the goal offset while the leader moves at constant velocity.
    TrackLeader { leader_velocity: Vector3<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuinticTrajectory {
    /// Per-axis coefficients, lowest order first, in `τ = t − t0`.
    pub coeffs: [[f64; 6]; 3],
    pub t0: f64,
    pub horizon: f64,
    pub hold: HoldMode,
    pub goal: BoundaryState,
    pub yaw: f64,
}

fn axis_coeffs(p0: f64, v0: f64, a0: f64, p1: f64, v1: f64, a1: f64, t: f64) -> [f64; 6] {
    let dp = p1 - p0;
    let t2 = t * t;
    let t3 = t2 * t;
    [
        p0,
        v0,
        0.5 * a0,
        (20.0 * dp - (8.0 * v1 + 12.0 * v0) * t - (3.0 * a0 - a1) * t2) / (2.0 * t3),
        (-30.0 * dp + (14.0 * v1 + 16.0 * v0) * t + (3.0 * a0 - 2.0 * a1) * t2) / (2.0 * t3 * t),
        (12.0 * dp - 6.0 * (v1 + v0) * t - (a0 - a1) * t2) / (2.0 * t3 * t2),
    ]
}

/// Plans the per-axis quintic joining `start` to `goal` in `horizon` seconds.
pub fn plan(
    start: &BoundaryState,
    goal: &BoundaryState,
    t0: f64,
    horizon: f64,
    hold: HoldMode,
    yaw: f64,
) -> Result<QuinticTrajectory> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    let mut coeffs = [[0.0; 6]; 3];
    for (i, c) in coeffs.iter_mut().enumerate() {
        *c = axis_coeffs(
            start.position[i],
            start.velocity[i],
            start.accel[i],
            goal.position[i],
            goal.velocity[i],
            goal.accel[i],
            horizon,
        );
    }
    Ok(QuinticTrajectory {
        coeffs,
        t0,
        horizon,
        hold,
        goal: *goal,
        yaw,
    })
}

impl QuinticTrajectory {
    pub fn end_time(&self) -> f64 {
        self.t0 + self.horizon
    }

    fn eval(&self, tau: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let mut p = Vector3::zeros();
        let mut v = Vector3::zeros();
        let mut a = Vector3::zeros();
        for (i, c) in self.coeffs.iter().enumerate() {
            p[i] = c[0] + tau * (c[1] + tau * (c[2] + tau * (c[3] + tau * (c[4] + tau * c[5]))));
            v[i] = c[1] + tau * (2.0 * c[2] + tau * (3.0 * c[3] + tau * (4.0 * c[4] + tau * 5.0 * c[5])));
            a[i] = 2.0 * c[2] + tau * (6.0 * c[3] + tau * (12.0 * c[4] + tau * 20.0 * c[5]));
        }
        (p, v, a)
    }

    /// Reference at time `t`; times before `t0` are clamped to `t0`.
    pub fn sample(&self, t: f64) -> Reference {
        let tau = (t - self.t0).max(0.0);
        let (position, velocity, accel) = if tau <= self.horizon * (1.0 + 1e-12) {
            self.eval(tau)
        } else {
            match self.hold {
                HoldMode::HoldPoint => (self.goal.position, Vector3::zeros(), Vector3::zeros()),
                HoldMode::TrackLeader { leader_velocity } => (
                    self.goal.position + leader_velocity * (tau - self.horizon),
                    leader_velocity,
                    Vector3::zeros(),
                ),
            }
        };
        Reference {
            position,
            velocity,
            accel,
            yaw: self.yaw,
        }
    }
}

/// Rendezvous goal for the follower: the bar's rest position at `t_meet`
/// assuming the leader keeps its current velocity, shifted so that the
/// gripper tip (not the follower's centre) lands on the bar.
pub fn predict_platform(
    leader: &VehicleState,
    platform: &PlatformState,
    now: f64,
    t_meet: f64,
    tip_offset: &Vector3<f64>,
) -> Result<BoundaryState> {
    if !(t_meet > now) {
        return Err(Error::invalid("rendezvous time must be in the future"));
    }
    let mut future = leader.clone();
    future.position += leader.velocity * (t_meet - now);
    Ok(BoundaryState {
        position: platform.rest_position(&future) - tip_offset,
        velocity: leader.velocity,
        accel: Vector3::zeros(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rest(x: f64, y: f64, z: f64) -> BoundaryState {
        BoundaryState::at_rest(Vector3::new(x, y, z))
    }

    #[test]
    fn constant_when_start_equals_goal() {
        let s = rest(1.0, -2.0, -3.0);
        let traj = plan(&s, &s, 0.0, 4.0, HoldMode::HoldPoint, 0.0).unwrap();
        for k in 0..=40 {
            let r = traj.sample(k as f64 * 0.1);
            assert_eq!(r.position, s.position);
            assert_eq!(r.velocity, Vector3::zeros());
        }
    }

    #[test]
    fn minimum_jerk_profile() {
        let traj = plan(&rest(0.0, 0.0, 0.0), &rest(1.0, 0.0, 0.0), 0.0, 1.0, HoldMode::HoldPoint, 0.0).unwrap();
        let mid = traj.sample(0.5);
        assert!((mid.position.x - 0.5).abs() < 1e-12);
        assert!((mid.velocity.x - 1.875).abs() < 1e-12);
        // peak speed is at the midpoint
        for k in 0..=100 {
            assert!(traj.sample(k as f64 * 0.01).velocity.x <= 1.875 + 1e-12);
        }
        for k in 0..=10 {
            let tau = k as f64 / 10.0;
            let s = 10.0 * tau.powi(3) - 15.0 * tau.powi(4) + 6.0 * tau.powi(5);
            assert!((traj.sample(tau).position.x - s).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_conditions_hold() {
        let start = BoundaryState {
            position: Vector3::new(-1.0, 0.3, -1.8),
            velocity: Vector3::new(0.1, -0.05, 0.02),
            accel: Vector3::new(0.0, 0.2, -0.1),
        };
        let goal = BoundaryState {
            position: Vector3::new(0.0, 0.0, -2.14),
            velocity: Vector3::new(0.25, 0.0, 0.0),
            accel: Vector3::zeros(),
        };
        let traj = plan(&start, &goal, 2.0, 4.0, HoldMode::HoldPoint, 0.0).unwrap();
        let a = traj.sample(2.0);
        let b = traj.sample(6.0);
        assert!((a.position - start.position).norm() < 1e-12);
        assert!((a.velocity - start.velocity).norm() < 1e-12);
        assert!((a.accel - start.accel).norm() < 1e-12);
        assert!((b.position - goal.position).norm() < 1e-12);
        assert!((b.velocity - goal.velocity).norm() < 1e-12);
        assert!((b.accel - goal.accel).norm() < 1e-12);
        // clamp before t0
        assert_eq!(traj.sample(0.0), a);
    }

    #[test]
    fn hold_modes_after_horizon() {
        let goal = BoundaryState {
            position: Vector3::new(1.0, 0.0, -2.0),
            velocity: Vector3::new(0.25, 0.0, 0.0),
            accel: Vector3::zeros(),
        };
        let hold = plan(&rest(0.0, 0.0, -1.0), &goal, 0.0, 6.0, HoldMode::HoldPoint, 0.0).unwrap();
        let r = hold.sample(9.0);
        assert_eq!(r.position, goal.position);
        assert_eq!(r.velocity, Vector3::zeros());

        let track = plan(
            &rest(0.0, 0.0, -1.0),
            &goal,
            0.0,
            6.0,
            HoldMode::TrackLeader {
                leader_velocity: Vector3::new(0.25, 0.0, 0.0),
            },
            0.0,
        )
        .unwrap();
        let r = track.sample(8.0);
        assert!((r.position - (goal.position + Vector3::new(0.5, 0.0, 0.0))).norm() < 1e-12);
        assert_eq!(r.velocity, Vector3::new(0.25, 0.0, 0.0));
    }

    #[test]
    fn rejects_non_positive_horizon() {
        let s = rest(0.0, 0.0, 0.0);
        assert!(matches!(plan(&s, &s, 0.0, 0.0, HoldMode::HoldPoint, 0.0), Err(Error::InvalidParameter(_))));
        assert!(plan(&s, &s, 0.0, -1.0, HoldMode::HoldPoint, 0.0).is_err());
    }

    #[test]
    fn hovering_leader_goal() {
        let leader = VehicleState::at_rest(Vector3::new(0.0, 0.0, -2.5), 0.7);
        let plat = PlatformState::at_rest(0.36, Vector3::zeros(), 0.05).unwrap();
        let g = predict_platform(&leader, &plat, 0.0, 4.0, &Vector3::zeros()).unwrap();
        assert!((g.position - Vector3::new(0.0, 0.0, -2.14)).norm() < 1e-12);
        assert_eq!(g.velocity, Vector3::zeros());
        assert_eq!(g.accel, Vector3::zeros());
        // a tip mounted above the centre lowers the follower's goal
        let g = predict_platform(&leader, &plat, 0.0, 4.0, &Vector3::new(0.0, 0.0, -0.05)).unwrap();
        assert!((g.position.z - -2.09).abs() < 1e-12);
    }

    #[test]
    fn moving_leader_goal() {
        let mut leader = VehicleState::at_rest(Vector3::new(3.0, 1.0, -2.5), 0.7);
        leader.velocity = Vector3::new(0.25, 0.0, 0.0);
        let plat = PlatformState::at_rest(0.36, Vector3::zeros(), 0.05).unwrap();
        let g = predict_platform(&leader, &plat, 0.0, 6.0, &Vector3::zeros()).unwrap();
        assert!((g.position.x - 4.5).abs() < 1e-12);
        assert_eq!(g.velocity, leader.velocity);
        assert!(predict_platform(&leader, &plat, 6.0, 6.0, &Vector3::zeros()).is_err());
    }

    fn arb_state() -> impl Strategy<Value = BoundaryState> {
        (
            prop::array::uniform3(-3.0f64..3.0),
            prop::array::uniform3(-1.0f64..1.0),
            prop::array::uniform3(-1.0f64..1.0),
        )
            .prop_map(|(p, v, a)| BoundaryState {
                position: p.into(),
                velocity: v.into(),
                accel: a.into(),
            })
    }

    proptest! {
        #[test]
        fn replanning_from_trajectory_reproduces_it(
            start in arb_state(), goal in arb_state(), horizon in 1.0f64..6.0, frac in 0.05f64..0.95
        ) {
            let traj = plan(&start, &goal, 0.0, horizon, HoldMode::HoldPoint, 0.0).unwrap();
            let t_mid = frac * horizon;
            let r = traj.sample(t_mid);
            let mid = BoundaryState { position: r.position, velocity: r.velocity, accel: r.accel };
            let re = plan(&mid, &goal, t_mid, horizon - t_mid, HoldMode::HoldPoint, 0.0).unwrap();
            for k in 0..=20 {
                let t = t_mid + (horizon - t_mid) * k as f64 / 20.0;
                let a = traj.sample(t);
                let b = re.sample(t);
                prop_assert!((a.position - b.position).norm() < 1e-9);
                prop_assert!((a.velocity - b.velocity).norm() < 1e-9, "{}", (a.velocity - b.velocity).norm());
            }
        }

        #[test]
        fn acceleration_is_continuous(start in arb_state(), goal in arb_state(), horizon in 1.0f64..6.0) {
            let traj = plan(&start, &goal, 0.0, horizon, HoldMode::HoldPoint, 0.0).unwrap();
            let h = 1e-4;
            for k in 1..50 {
                let t = horizon * k as f64 / 50.0;
                let (lo, mid, hi) = (traj.sample(t - h), traj.sample(t), traj.sample(t + h));
                let fd = (hi.velocity - lo.velocity) / (2.0 * h);
                prop_assert!((fd - mid.accel).norm() < 1e-5);
                let jerk_bound: f64 = traj.coeffs.iter().map(|c| {
                    6.0 * c[3].abs() + 24.0 * c[4].abs() * horizon + 60.0 * c[5].abs() * horizon * horizon
                }).sum();
                prop_assert!((hi.accel - lo.accel).norm() <= 2.0 * h * jerk_bound);
            }
        }
    }
}
