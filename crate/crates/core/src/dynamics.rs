//! Translational multirotor dynamics with a first-order attitude loop.
//!
//! Frame convention is NED (down positive). The rigid-body equation is
//! `m a = -R e3 T + m g e3`, with the disturbance entering as an additive
//! acceleration. Body torques are abstracted into an attitude loop that
//! relaxes the current rotation toward the commanded one.

use nalgebra::{Matrix3, Rotation3, SMatrix, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Default attitude-loop time constant, s.
pub const ATTITUDE_TAU: f64 = 0.05;

/// Thrust-vector magnitude floor (m/s²). Commands closer to free fall are
/// saturated to this magnitude.
pub const THRUST_EPS: f64 = 0.1 * GRAVITY;

/// Largest physics step accepted by [`step`].
pub const MAX_DT: f64 = 0.01;

pub type Matrix7 = SMatrix<f64, 7, 7>;
pub type Matrix7x4 = SMatrix<f64, 7, 4>;
pub type Matrix6x3 = SMatrix<f64, 6, 3>;
pub type Vector7 = SMatrix<f64, 7, 1>;

pub fn e3() -> Vector3<f64> {
    Vector3::z()
}

/// Yaw-only rotation about the down axis.
pub fn yaw_rotation(yaw: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
}

/// Heading of a body→inertial rotation (ZYX convention).
pub fn yaw_of(rotation: &Rotation3<f64>) -> f64 {
    let m = rotation.matrix();
    m[(1, 0)].atan2(m[(0, 0)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub yaw: f64,
    /// Body→inertial rotation.
    pub attitude: Rotation3<f64>,
    pub mass: f64,
}

impl VehicleState {
    pub fn at_rest(position: Vector3<f64>, mass: f64) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            yaw: 0.0,
            attitude: Rotation3::identity(),
            mass,
        }
    }

    /// The linear-model state `[p, v, yaw]`.
    pub fn as_vector(&self) -> Vector7 {
        let mut x = Vector7::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.position);
        x.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        x[6] = self.yaw;
        x
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.yaw.is_finite()
            && self.attitude.matrix().iter().all(|v| v.is_finite())
            && self.mass.is_finite()
    }

    /// `‖RᵀR − I‖` (Frobenius).
    pub fn orthonormality_error(&self) -> f64 {
        let r = self.attitude.matrix();
        (r.transpose() * r - Matrix3::identity()).norm()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerLoopCommand {
    pub attitude: Rotation3<f64>,
    /// Collective thrust, N.
    pub thrust: f64,
}

impl InnerLoopCommand {
    pub fn hover(mass: f64, yaw: f64) -> Self {
        Self {
            attitude: yaw_rotation(yaw),
            thrust: mass * GRAVITY,
        }
    }
}

/// Result of the thrust inversion. `saturated` flags a command whose thrust
/// vector fell below [`THRUST_EPS`] and was clipped.
#[derive(Clone, Debug, PartialEq)]
pub struct Inversion {
    pub command: InnerLoopCommand,
    pub saturated: bool,
}

/// Feedforward-linearized model `ẋ = A x + B u + B̄ f`, `y = C x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub a: Matrix7,
    pub b: Matrix7x4,
    pub b_dist: Matrix6x3,
    pub c: Matrix7,
}

pub fn linear_model(mass: f64) -> Result<LinearModel> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::invalid(format!("mass must be positive, got {mass}")));
    }
    let mut a = Matrix7::zeros();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());

    let mut b_dist = Matrix6x3::zeros();
    b_dist.fixed_view_mut::<3, 3>(3, 0).copy_from(&Matrix3::identity());

    let mut b = Matrix7x4::zeros();
    b.fixed_view_mut::<6, 3>(0, 0).copy_from(&b_dist);
    b[(6, 3)] = 1.0;

    Ok(LinearModel {
        a,
        b,
        b_dist,
        c: Matrix7::identity(),
    })
}

/// Maps a commanded acceleration and heading onto attitude and thrust.
///
/// The body thrust axis (`R e3`) is aligned with `g e3 − a_cmd` and the
/// heading of the first body axis is set to `yaw_cmd`.
pub fn invert_dynamics(accel_cmd: &Vector3<f64>, yaw_cmd: f64, mass: f64) -> Inversion {
    let mut thrust_vec = GRAVITY * e3() - accel_cmd;
    let mut norm = thrust_vec.norm();
    let saturated = !(norm > THRUST_EPS);
    if saturated {
        thrust_vec = if norm > 1e-12 {
            thrust_vec * (THRUST_EPS / norm)
        } else {
            THRUST_EPS * e3()
        };
        norm = THRUST_EPS;
    }
    let b3 = thrust_vec / norm;

    // first body axis in the vertical plane of the heading (ZYX yaw = yaw_cmd)
    let heading = Vector3::new(yaw_cmd.cos(), yaw_cmd.sin(), 0.0);
    let mut b1 = heading * b3.dot(&e3()) - e3() * b3.dot(&heading);
    if b1.norm() < 1e-9 {
        b1 = Vector3::new(-yaw_cmd.sin(), yaw_cmd.cos(), 0.0).cross(&b3);
    }
    let b1 = b1.normalize();
    let b2 = b3.cross(&b1);
    let attitude = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[b1, b2, b3]));

    Inversion {
        command: InnerLoopCommand {
            attitude,
            thrust: mass * norm,
        },
        saturated,
    }
}

/// Translational acceleration produced by a given attitude and thrust.
pub fn acceleration(
    attitude: &Rotation3<f64>,
    thrust: f64,
    mass: f64,
    f_ext: &Vector3<f64>,
) -> Vector3<f64> {
    -(attitude * e3()) * (thrust / mass) + GRAVITY * e3() + f_ext
}

fn relax(from: &Rotation3<f64>, to: &Rotation3<f64>, fraction: f64) -> Rotation3<f64> {
    if fraction >= 1.0 {
        return *to;
    }
    let q0 = UnitQuaternion::from_rotation_matrix(from);
    let q1 = UnitQuaternion::from_rotation_matrix(to);
    let q = q0.try_slerp(&q1, fraction, 1e-12).unwrap_or(q1);
    q.to_rotation_matrix()
}

/// Attitude used for the thrust direction over a step starting at
/// `attitude`.
pub fn mid_step_attitude(
    attitude: &Rotation3<f64>,
    cmd: &InnerLoopCommand,
    dt: f64,
    attitude_tau: f64,
) -> Rotation3<f64> {
    if attitude_tau == 0.0 {
        cmd.attitude
    } else {
        relax(attitude, &cmd.attitude, 1.0 - (-0.5 * dt / attitude_tau).exp())
    }
}

/// One physics step with the default attitude time constant.
pub fn step(
    state: &VehicleState,
    cmd: &InnerLoopCommand,
    f_ext: &Vector3<f64>,
    dt: f64,
) -> Result<VehicleState> {
    step_with_tau(state, cmd, f_ext, dt, ATTITUDE_TAU)
}

/// One physics step.
///
/// The attitude relaxes toward the command with time constant
/// `attitude_tau` (`0` means an ideal inner loop). Velocity is advanced
/// with the mid-step attitude, then position with the mean velocity.
pub fn step_with_tau(
    state: &VehicleState,
    cmd: &InnerLoopCommand,
    f_ext: &Vector3<f64>,
    dt: f64,
    attitude_tau: f64,
) -> Result<VehicleState> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::invalid(format!(
            "dt must be in (0, {MAX_DT}], got {dt}"
        )));
    }
    if !(attitude_tau >= 0.0) {
        return Err(Error::invalid("attitude time constant must be >= 0"));
    }
    if !state.is_finite()
        || !cmd.thrust.is_finite()
        || !cmd.attitude.matrix().iter().all(|v| v.is_finite())
        || !f_ext.iter().all(|v| v.is_finite())
    {
        return Err(Error::NonFinite("dynamics step input".into()));
    }
    if cmd.thrust < 0.0 {
        return Err(Error::invalid("thrust must be non-negative"));
    }

    let mid = mid_step_attitude(&state.attitude, cmd, dt, attitude_tau);
    let end = if attitude_tau == 0.0 {
        cmd.attitude
    } else {
        relax(&state.attitude, &cmd.attitude, 1.0 - (-dt / attitude_tau).exp())
    };

    let accel = acceleration(&mid, cmd.thrust, state.mass, f_ext);
    let velocity = state.velocity + accel * dt;
    let position = state.position + (state.velocity + velocity) * (0.5 * dt);

    Ok(VehicleState {
        position,
        velocity,
        yaw: yaw_of(&end),
        attitude: end,
        mass: state.mass,
    })
}

/// Angle between two rotations, rad.
pub fn rotation_distance(a: &Rotation3<f64>, b: &Rotation3<f64>) -> f64 {
    a.rotation_to(b).angle()
}

/// Rotation of the body thrust axis away from vertical, rad.
pub fn tilt(attitude: &Rotation3<f64>) -> f64 {
    let axis: Unit<Vector3<f64>> = Unit::new_normalize(attitude * e3());
    axis.dot(&e3()).clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MASS: f64 = 0.7;

    fn converged(cmd: &InnerLoopCommand) -> VehicleState {
        VehicleState {
            attitude: cmd.attitude,
            yaw: yaw_of(&cmd.attitude),
            ..VehicleState::at_rest(Vector3::new(0.0, 0.0, -2.0), MASS)
        }
    }

    #[test]
    fn linear_model_block_structure() {
        let m = linear_model(0.7).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let expected = if j == i + 3 && i < 3 { 1.0 } else { 0.0 };
                assert_eq!(m.a[(i, j)], expected, "A[{i}][{j}]");
            }
        }
        assert_eq!(m.c, Matrix7::identity());
        assert_eq!(m.b_dist.transpose() * m.b_dist, Matrix3::identity());
        assert_eq!(m.b.fixed_view::<6, 3>(0, 0), m.b_dist);
        assert_eq!(m.b[(6, 3)], 1.0);
        assert_eq!(m.b.fixed_view::<6, 1>(0, 3).norm(), 0.0);
    }

    #[test]
    fn linear_model_rejects_bad_mass() {
        assert!(matches!(linear_model(0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(linear_model(-1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn hover_inversion() {
        let inv = invert_dynamics(&Vector3::zeros(), 0.0, MASS);
        assert!(!inv.saturated);
        assert!((inv.command.thrust - 6.867).abs() < 1e-12);
        assert!(rotation_distance(&inv.command.attitude, &Rotation3::identity()) < 1e-12);

        let inv = invert_dynamics(&Vector3::zeros(), 0.8, MASS);
        assert!(rotation_distance(&inv.command.attitude, &yaw_rotation(0.8)) < 1e-12);
    }

    #[test]
    fn forward_accel_inversion() {
        let inv = invert_dynamics(&Vector3::new(2.0, 0.0, 0.0), 0.0, MASS);
        let expected_thrust = 0.7 * (4.0f64 + 9.81 * 9.81).sqrt();
        assert!((inv.command.thrust - expected_thrust).abs() < 1e-12);
        assert!((inv.command.thrust - 7.009).abs() < 1e-3);
        let pitch = tilt(&inv.command.attitude);
        assert!((pitch - 2.0f64.atan2(9.81)).abs() < 1e-12);
        assert!((pitch - 0.2013).abs() < 5e-4);
        // nose pitched toward north: thrust axis leans forward
        let thrust_dir = -(inv.command.attitude * e3());
        assert!(thrust_dir.x > 0.0);
    }

    #[test]
    fn free_fall_command_saturates() {
        let inv = invert_dynamics(&(GRAVITY * e3()), 0.0, MASS);
        assert!(inv.saturated);
        assert!((inv.command.thrust - MASS * THRUST_EPS).abs() < 1e-12);
        assert!(inv.command.thrust >= 0.0);
    }

    #[test]
    fn inversion_round_trip() {
        let cases = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(2.0, -1.0, 0.5),
            Vector3::new(-3.0, 4.0, -6.0),
            Vector3::new(0.1, 0.2, 7.5),
        ];
        for a in cases {
            for yaw in [0.0, 1.0, -2.5] {
                let inv = invert_dynamics(&a, yaw, MASS);
                let s0 = converged(&inv.command);
                let dt = 0.002;
                let s1 = step(&s0, &inv.command, &Vector3::zeros(), dt).unwrap();
                let measured = (s1.velocity - s0.velocity) / dt;
                assert!((measured - a).norm() < 1e-9, "{a:?}: {measured:?}");
                assert!((s1.yaw - yaw).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn hover_is_equilibrium() {
        let cmd = InnerLoopCommand::hover(MASS, 0.0);
        let s0 = converged(&cmd);
        let s1 = step(&s0, &cmd, &Vector3::zeros(), 0.002).unwrap();
        assert!((s1.velocity - s0.velocity).norm() < 1e-12);
    }

    #[test]
    fn disturbance_euler_arithmetic() {
        let cmd = InnerLoopCommand::hover(MASS, 0.0);
        let s0 = converged(&cmd);
        let s1 = step(&s0, &cmd, &Vector3::new(0.0, 0.0, 3.0), 0.002).unwrap();
        assert!((s1.velocity.z - s0.velocity.z - 0.006).abs() < 1e-12);
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let cmd = InnerLoopCommand::hover(MASS, 0.0);
        let s0 = converged(&cmd);
        let zero = Vector3::zeros();
        assert!(matches!(step(&s0, &cmd, &zero, 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(step(&s0, &cmd, &zero, 0.02), Err(Error::InvalidParameter(_))));
        let nan = Vector3::new(f64::NAN, 0.0, 0.0);
        assert!(matches!(step(&s0, &cmd, &nan, 0.002), Err(Error::NonFinite(_))));
        let mut bad = s0.clone();
        bad.velocity.y = f64::INFINITY;
        assert!(matches!(step(&bad, &cmd, &zero, 0.002), Err(Error::NonFinite(_))));
    }

    fn fly(dt: f64, duration: f64) -> VehicleState {
        let cmd = InnerLoopCommand {
            attitude: Rotation3::from_euler_angles(0.1, -0.2, 0.3),
            thrust: MASS * GRAVITY,
        };
        let mut s = converged(&InnerLoopCommand::hover(MASS, 0.0));
        let n = (duration / dt).round() as usize;
        for _ in 0..n {
            s = step(&s, &cmd, &Vector3::zeros(), dt).unwrap();
        }
        s
    }

    #[test]
    fn tilt_command_matches_fine_step_reference() {
        let coarse = fly(0.002, 1.0);
        let fine = fly(0.0002, 1.0);
        assert!((coarse.position - fine.position).norm() < 1e-4);
        assert!(coarse.orthonormality_error() < 1e-9);
    }

    #[test]
    fn ballistic_fall_is_exact() {
        let mut s = VehicleState::at_rest(Vector3::zeros(), MASS);
        s.velocity = Vector3::new(1.0, 0.0, -2.0);
        let cmd = InnerLoopCommand {
            attitude: Rotation3::identity(),
            thrust: 0.0,
        };
        let dt = 0.005;
        let mut t = 0.0;
        for _ in 0..200 {
            s = step(&s, &cmd, &Vector3::zeros(), dt).unwrap();
            t += dt;
            let z = -2.0 * t + 0.5 * GRAVITY * t * t;
            assert!((s.position.z - z).abs() < 1e-9);
            assert!((s.position.x - t).abs() < 1e-9);
            let energy = 0.5 * s.velocity.norm_squared() - GRAVITY * s.position.z;
            assert!((energy - 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn step_is_deterministic_and_keeps_rotation_orthonormal() {
        let a = fly(0.002, 2.0);
        let b = fly(0.002, 2.0);
        assert_eq!(a, b);
        assert!(a.orthonormality_error() < 1e-9);
    }
}
