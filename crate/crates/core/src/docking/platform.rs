//! Bar suspended below the leader, modelled as a damped spherical pendulum.

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{e3, VehicleState, GRAVITY};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlatformState {
    /// Cable attach point in the leader body frame, m.
    pub anchor_offset: Vector3<f64>,
    /// Cable length `d_p`, m.
    pub cable_length: f64,
    /// Unit vector from anchor to bar (inertial).
    pub direction: Unit<Vector3<f64>>,
    /// Swing angular velocity (inertial, perpendicular to `direction`), rad/s.
    pub angular_velocity: Vector3<f64>,
    pub damping_ratio: f64,
}

impl PlatformState {
    /// Bar hanging at rest straight below the anchor.
    pub fn at_rest(cable_length: f64, anchor_offset: Vector3<f64>, damping_ratio: f64) -> Result<Self> {
        if !(cable_length > 0.0 && cable_length.is_finite()) {
            return Err(Error::invalid("cable length must be positive"));
        }
        if !(damping_ratio >= 0.0) {
            return Err(Error::invalid("damping ratio must be non-negative"));
        }
        Ok(Self {
            anchor_offset,
            cable_length,
            direction: Vector3::z_axis(),
            angular_velocity: Vector3::zeros(),
            damping_ratio,
        })
    }

    pub fn anchor(&self, leader: &VehicleState) -> Vector3<f64> {
        leader.position + leader.attitude * self.anchor_offset
    }

    pub fn bar_position(&self, leader: &VehicleState) -> Vector3<f64> {
        self.anchor(leader) + self.direction.into_inner() * self.cable_length
    }

    /// Bar velocity; leader body rates are not tracked and do not contribute.
    pub fn bar_velocity(&self, leader: &VehicleState) -> Vector3<f64> {
        leader.velocity + self.angular_velocity.cross(&self.direction) * self.cable_length
    }

    /// Bar position with the cable hanging straight down.
    pub fn rest_position(&self, leader: &VehicleState) -> Vector3<f64> {
        self.anchor(leader) + e3() * self.cable_length
    }

    /// Swing angle from vertical, rad.
    pub fn swing_angle(&self) -> f64 {
        self.direction.dot(&e3()).clamp(-1.0, 1.0).acos()
    }

    pub fn natural_frequency(&self) -> f64 {
        (GRAVITY / self.cable_length).sqrt()
    }
}

/// Advances the swing by `dt` given the anchor's inertial acceleration.
///
/// Works on the bar position relative to the anchor. The tangential part of
/// gravity minus anchor acceleration drives the swing, viscous damping is
/// `2 ζ ω₀`, and the cable length is restored exactly after each step.
pub fn platform_step(
    plat: &PlatformState,
    anchor_accel: &Vector3<f64>,
    dt: f64,
) -> Result<PlatformState> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    if !anchor_accel.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("platform anchor acceleration".into()));
    }
    let len = plat.cable_length;
    let n = plat.direction.into_inner();
    let rel = n * len;
    let rel_vel = plat.angular_velocity.cross(&n) * len;

    let drive = GRAVITY * e3() - anchor_accel;
    let tangential = drive - n * n.dot(&drive);
    let damping = 2.0 * plat.damping_ratio * plat.natural_frequency();
    let centripetal = n * (rel_vel.norm_squared() / len);

    let mut vel = rel_vel + (tangential - rel_vel * damping - centripetal) * dt;
    let pos = rel + vel * dt;
    let dir = Unit::new_normalize(pos);
    vel -= dir.into_inner() * dir.dot(&vel);

    Ok(PlatformState {
        direction: dir,
        angular_velocity: dir.cross(&vel) / len,
        ..plat.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leader() -> VehicleState {
        VehicleState::at_rest(Vector3::new(0.0, 0.0, -2.5), 0.7)
    }

    fn released(angle: f64, damping: f64) -> PlatformState {
        let mut p = PlatformState::at_rest(0.36, Vector3::zeros(), damping).unwrap();
        p.direction = Unit::new_normalize(Vector3::new(angle.sin(), 0.0, angle.cos()));
        p
    }

    #[test]
    fn rest_is_equilibrium() {
        let mut p = PlatformState::at_rest(0.36, Vector3::zeros(), 0.05).unwrap();
        for _ in 0..5000 {
            p = platform_step(&p, &Vector3::zeros(), 0.002).unwrap();
        }
        let bar = p.bar_position(&leader());
        assert!((bar - Vector3::new(0.0, 0.0, -2.14)).norm() < 1e-12);
    }

    #[test]
    fn small_angle_period() {
        let mut p = released(0.05, 0.0);
        let dt = 0.0005;
        let mut crossings = Vec::new();
        let mut prev = p.direction.x;
        for k in 1..=40_000 {
            p = platform_step(&p, &Vector3::zeros(), dt).unwrap();
            let x = p.direction.x;
            if prev > 0.0 && x <= 0.0 {
                // linear interpolation of the downward zero crossing
                crossings.push((k as f64 - x / (x - prev)) * dt);
            }
            prev = x;
        }
        let periods: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = periods.iter().sum::<f64>() / periods.len() as f64;
        let expected = 2.0 * std::f64::consts::PI * (0.36f64 / 9.81).sqrt();
        assert!((expected - 1.204).abs() < 1e-3);
        assert!((mean - expected).abs() < 0.02 * expected, "{mean} vs {expected}");
    }

    #[test]
    fn cable_length_is_preserved() {
        let mut p = released(0.6, 0.05);
        p.angular_velocity = Vector3::new(0.5, 1.0, 0.0);
        let mut l = leader();
        for k in 0..5000 {
            let accel = Vector3::new((k as f64 * 0.01).sin(), 0.3, -0.2);
            l.position += Vector3::new(0.001, 0.0, 0.0);
            p = platform_step(&p, &accel, 0.002).unwrap();
            let d = (p.bar_position(&l) - p.anchor(&l)).norm();
            assert!((d - 0.36).abs() < 1e-9);
        }
    }

    #[test]
    fn damped_amplitude_decays() {
        let mut p = released(0.2, 0.05);
        let dt = 0.001;
        let mut peaks = Vec::new();
        let mut prev = p.swing_angle();
        let mut rising = false;
        for _ in 0..20_000 {
            p = platform_step(&p, &Vector3::zeros(), dt).unwrap();
            let a = p.swing_angle();
            if rising && a < prev {
                peaks.push(prev);
            }
            rising = a > prev;
            prev = a;
        }
        assert!(peaks.len() > 10);
        assert!(peaks.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(peaks.last().unwrap() < &(0.5 * peaks[0]));
    }

    #[test]
    fn anchor_acceleration_swings_bar_backward() {
        let mut p = PlatformState::at_rest(0.36, Vector3::zeros(), 0.05).unwrap();
        for _ in 0..50 {
            p = platform_step(&p, &Vector3::new(2.0, 0.0, 0.0), 0.002).unwrap();
        }
        assert!(p.direction.x < 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PlatformState::at_rest(0.0, Vector3::zeros(), 0.05).is_err());
        let p = PlatformState::at_rest(0.36, Vector3::zeros(), 0.05).unwrap();
        assert!(platform_step(&p, &Vector3::zeros(), 0.0).is_err());
        assert!(platform_step(&p, &Vector3::new(f64::NAN, 0.0, 0.0), 0.002).is_err());
    }
}
