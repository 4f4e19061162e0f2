//! Steady-state Kalman disturbance observer.
//!
//! Each translational axis is augmented with a random-walk disturbance,
//! `[p, v, f]`, and both `p` and `v` are measured. Gains are the fixed point
//! of the discrete covariance recursion, computed once.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::ControlInput;
use crate::dynamics::Vector7;
use crate::error::{Error, Result};

/// Noise intensities for the steady-state gain design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObserverNoise {
    /// Position measurement std, m.
    pub position: f64,
    /// Velocity measurement std, m/s.
    pub velocity: f64,
    /// Acceleration process noise density.
    pub accel: f64,
    /// Disturbance random-walk density.
    pub disturbance: f64,
}

impl Default for ObserverNoise {
    fn default() -> Self {
        Self {
            position: 0.02,
            velocity: 0.05,
            accel: 0.05,
            disturbance: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverGain {
    /// Per-axis gain from `[p, v]` innovation to `[p, v, f]` correction.
    pub axis: Matrix3x2<f64>,
    pub yaw: f64,
    pub dt: f64,
}

fn transition(dt: f64) -> Matrix3<f64> {
    Matrix3::new(1.0, dt, 0.5 * dt * dt, 0.0, 1.0, dt, 0.0, 0.0, 1.0)
}

fn input(dt: f64) -> Vector3<f64> {
    Vector3::new(0.5 * dt * dt, dt, 0.0)
}

impl ObserverGain {
    pub fn steady_state(noise: &ObserverNoise, dt: f64) -> Result<Self> {
        let vals = [noise.position, noise.velocity, noise.accel, noise.disturbance];
        if vals.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(dt > 0.0) {
            return Err(Error::invalid("observer noise and dt must be positive"));
        }
        let f = transition(dt);
        let h = Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        let q = Matrix3::from_diagonal(&Vector3::new(
            0.0,
            noise.accel * noise.accel * dt,
            noise.disturbance * noise.disturbance * dt,
        ));
        let r = Matrix2::from_diagonal(&Vector2::new(
            noise.position * noise.position,
            noise.velocity * noise.velocity,
        ));

        let mut p = Matrix3::identity();
        let mut gain = Matrix3x2::zeros();
        for _ in 0..100_000 {
            let prior = f * p * f.transpose() + q;
            let s = h * prior * h.transpose() + r;
            let s_inv = s
                .try_inverse()
                .ok_or_else(|| Error::invalid("singular innovation covariance"))?;
            let next_gain = prior * h.transpose() * s_inv;
            let next_p = (Matrix3::identity() - next_gain * h) * prior;
            let converged = (next_gain - gain).norm() < 1e-14;
            gain = next_gain;
            p = next_p;
            if converged {
                return Ok(Self {
                    axis: gain,
                    yaw: 0.5,
                    dt,
                });
            }
        }
        Err(Error::invalid("observer covariance recursion did not converge"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObserverState {
    pub x_hat: Vector7,
    pub f_hat: Vector3<f64>,
    pub gain: ObserverGain,
}

impl ObserverState {
    pub fn new(x0: Vector7, gain: ObserverGain) -> Self {
        Self {
            x_hat: x0,
            f_hat: Vector3::zeros(),
            gain,
        }
    }
}

/// Predict with the applied command over `dt`, then correct with the
/// measured state.
pub fn observer_update(
    obs: &ObserverState,
    x_meas: &Vector7,
    u_applied: &ControlInput,
    dt: f64,
) -> ObserverState {
    let f = transition(dt);
    let b = input(dt);
    let mut next = obs.clone();
    for axis in 0..3 {
        let z = Vector3::new(obs.x_hat[axis], obs.x_hat[axis + 3], obs.f_hat[axis]);
        let prior = f * z + b * u_applied.accel[axis];
        let innov = Vector2::new(x_meas[axis] - prior[0], x_meas[axis + 3] - prior[1]);
        let post = prior + obs.gain.axis * innov;
        next.x_hat[axis] = post[0];
        next.x_hat[axis + 3] = post[1];
        next.f_hat[axis] = post[2];
    }
    let yaw_prior = obs.x_hat[6] + u_applied.yaw_rate * dt;
    next.x_hat[6] = yaw_prior + obs.gain.yaw * super::wrap_angle(x_meas[6] - yaw_prior);
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 0.02;

    fn gain() -> ObserverGain {
        ObserverGain::steady_state(&ObserverNoise::default(), DT).unwrap()
    }

    /// Open-loop double integrator under `disturbance(t)`; returns `(t, f_true, f_hat)`.
    fn track(disturbance: impl Fn(f64) -> Vector3<f64>, duration: f64) -> Vec<(f64, Vector3<f64>, Vector3<f64>)> {
        let mut obs = ObserverState::new(Vector7::zeros(), gain());
        let mut p = Vector3::zeros();
        let mut v = Vector3::zeros();
        let u = ControlInput::default();
        let sub = 10;
        let h = DT / sub as f64;
        let mut out = Vec::new();
        let n = (duration / DT).round() as usize;
        for k in 0..n {
            for j in 0..sub {
                let t = k as f64 * DT + j as f64 * h;
                let a = disturbance(t);
                let v1 = v + a * h;
                p += (v + v1) * (0.5 * h);
                v = v1;
            }
            let mut x = Vector7::zeros();
            x.fixed_rows_mut::<3>(0).copy_from(&p);
            x.fixed_rows_mut::<3>(3).copy_from(&v);
            obs = observer_update(&obs, &x, &u, DT);
            let t = (k + 1) as f64 * DT;
            out.push((t, disturbance(t), obs.f_hat));
        }
        out
    }

    #[test]
    fn zero_disturbance_stays_zero() {
        let trace = track(|_| Vector3::zeros(), 2.0);
        assert!(trace.iter().all(|(_, _, f)| f.norm() == 0.0));
    }

    #[test]
    fn step_disturbance_settles_within_a_second() {
        let trace = track(|_| Vector3::new(0.0, 0.0, 3.0), 4.0);
        let t95 = trace
            .iter()
            .find(|(_, _, f)| f.z >= 0.95 * 3.0)
            .map(|(t, _, _)| *t)
            .expect("never reached 95%");
        assert!((t95 - 1.0).abs() <= 0.3, "t95 = {t95}");
        let last = trace.last().unwrap().2;
        assert!((last.z - 3.0).abs() < 0.01);
        assert!(last.x.abs() < 1e-12);
    }

    #[test]
    fn fast_disturbance_lags() {
        // 0.5 s timescale: ω = 2 rad/s
        let trace = track(|t| Vector3::new(0.0, 0.0, 3.0 * (2.0 * t).sin()), 12.0);
        let worst = trace
            .iter()
            .filter(|(t, _, _)| *t > 6.0)
            .map(|(_, f, fh)| (f.z - fh.z).abs())
            .fold(0.0, f64::max);
        assert!(worst > 0.3 * 3.0, "lag error {worst}");
    }

    #[test]
    fn rejects_bad_noise() {
        let noise = ObserverNoise {
            velocity: 0.0,
            ..ObserverNoise::default()
        };
        assert!(ObserverGain::steady_state(&noise, DT).is_err());
    }
}
