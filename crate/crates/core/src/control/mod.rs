//! LQR tracking, downwash compensation and the disturbance-observer baseline.

pub mod observer;
pub mod riccati;

use nalgebra::{Complex, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{LinearModel, Matrix7, Vector7};
use crate::error::{Error, Result};
pub use observer::{observer_update, ObserverGain, ObserverNoise, ObserverState};
pub use riccati::{Matrix4, Matrix4x7};

/// Per-axis acceleration command limit, m/s².
pub const A_MAX: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LqrWeights {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub yaw: f64,
    pub accel: [f64; 3],
    pub yaw_rate: f64,
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            position: [8.0; 3],
            velocity: [4.0; 3],
            yaw: 2.0,
            accel: [1.0; 3],
            yaw_rate: 1.0,
        }
    }
}

impl LqrWeights {
    pub fn uniform(q_p: f64, q_v: f64, r: f64) -> Self {
        Self {
            position: [q_p; 3],
            velocity: [q_v; 3],
            accel: [r; 3],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .position
            .iter()
            .chain(&self.velocity)
            .chain(&self.accel)
            .chain([&self.yaw, &self.yaw_rate]);
        for w in all {
            if !(*w > 0.0 && w.is_finite()) {
                return Err(Error::invalid("LQR weights must be strictly positive"));
            }
        }
        Ok(())
    }

    pub fn q(&self) -> Matrix7 {
        let mut d = Vector7::zeros();
        for i in 0..3 {
            d[i] = self.position[i];
            d[i + 3] = self.velocity[i];
        }
        d[6] = self.yaw;
        Matrix7::from_diagonal(&d)
    }

    pub fn r(&self) -> Matrix4 {
        Matrix4::from_diagonal(&nalgebra::Vector4::new(
            self.accel[0],
            self.accel[1],
            self.accel[2],
            self.yaw_rate,
        ))
    }
}

/// LQR gain `K` (4×7) together with the Riccati solution it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct GainMatrix {
    pub k: Matrix4x7,
    pub riccati: Matrix7,
}

impl GainMatrix {
    pub fn closed_loop(&self, model: &LinearModel) -> Matrix7 {
        model.a - model.b * self.k
    }

    pub fn closed_loop_eigenvalues(&self, model: &LinearModel) -> Vec<Complex<f64>> {
        self.closed_loop(model)
            .complex_eigenvalues()
            .iter()
            .copied()
            .collect()
    }

    pub fn max_real_eigenvalue(&self, model: &LinearModel) -> f64 {
        self.closed_loop_eigenvalues(model)
            .iter()
            .map(|c| c.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(k_p, k_v)` for translational axis `axis`.
    pub fn axis_gains(&self, axis: usize) -> (f64, f64) {
        (self.k[(axis, axis)], self.k[(axis, axis + 3)])
    }

    pub fn yaw_gain(&self) -> f64 {
        self.k[(3, 6)]
    }
}

fn is_decoupled_model(model: &LinearModel) -> bool {
    match crate::dynamics::linear_model(1.0) {
        Ok(reference) => reference.a == model.a && reference.b == model.b,
        Err(_) => false,
    }
}

/// Infinite-horizon LQR gain for the feedforward-linearized model, solved
/// axis by axis in closed form.
pub fn solve_lqr(weights: &LqrWeights, model: &LinearModel) -> Result<GainMatrix> {
    weights.validate()?;
    if !is_decoupled_model(model) {
        return Err(Error::invalid(
            "model does not have the decoupled double-integrator structure",
        ));
    }
    let mut k = Matrix4x7::zeros();
    let mut p = Matrix7::zeros();
    for axis in 0..3 {
        let (q_p, q_v, r) = (
            weights.position[axis],
            weights.velocity[axis],
            weights.accel[axis],
        );
        let (k_p, k_v) = riccati::double_integrator_gains(q_p, q_v, r);
        k[(axis, axis)] = k_p;
        k[(axis, axis + 3)] = k_v;
        let [[p1, p2], [_, p3]] = riccati::double_integrator_riccati(q_p, q_v, r);
        p[(axis, axis)] = p1;
        p[(axis, axis + 3)] = p2;
        p[(axis + 3, axis)] = p2;
        p[(axis + 3, axis + 3)] = p3;
    }
    k[(3, 6)] = (weights.yaw / weights.yaw_rate).sqrt();
    p[(6, 6)] = (weights.yaw * weights.yaw_rate).sqrt();
    Ok(GainMatrix { k, riccati: p })
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub accel: Vector3<f64>,
    pub yaw_rate: f64,
}

impl ControlInput {
    pub fn saturated(mut self, a_max: f64) -> Self {
        self.accel = saturate(&self.accel, a_max);
        self
    }
}

/// Per-component clamp to `±a_max`.
pub fn saturate(accel: &Vector3<f64>, a_max: f64) -> Vector3<f64> {
    accel.map(|v| v.clamp(-a_max, a_max))
}

pub fn wrap_angle(angle: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = angle.rem_euclid(two_pi);
    if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// `u = −K (x − x_ref) + [a_ff; 0]`, saturated to `a_max`.
pub fn feedback(
    x: &Vector7,
    x_ref: &Vector7,
    accel_ff: &Vector3<f64>,
    gains: &GainMatrix,
    a_max: f64,
) -> ControlInput {
    let mut err = x - x_ref;
    err[6] = wrap_angle(err[6]);
    let u = -(gains.k * err);
    ControlInput {
        accel: Vector3::new(u[0], u[1], u[2]) + accel_ff,
        yaw_rate: u[3],
    }
    .saturated(a_max)
}

/// Subtracts a predicted disturbance acceleration from the command.
pub fn compensate(u: &ControlInput, f_pred: &Vector3<f64>, a_max: f64) -> ControlInput {
    ControlInput {
        accel: u.accel - f_pred,
        yaw_rate: u.yaw_rate,
    }
    .saturated(a_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::linear_model;

    fn model() -> LinearModel {
        linear_model(0.7).unwrap()
    }

    #[test]
    fn unit_weights_axis_gains() {
        let w = LqrWeights {
            yaw: 4.0,
            ..LqrWeights::uniform(1.0, 1.0, 1.0)
        };
        let g = solve_lqr(&w, &model()).unwrap();
        for axis in 0..3 {
            let (kp, kv) = g.axis_gains(axis);
            assert!((kp - 1.0).abs() < 1e-12);
            assert!((kv - 1.732_050_8).abs() < 1e-7);
        }
        assert!((g.yaw_gain() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn default_gains_are_stable_and_satisfy_care() {
        let w = LqrWeights::default();
        let m = model();
        let g = solve_lqr(&w, &m).unwrap();
        assert!(g.max_real_eigenvalue(&m) < 0.0);
        let res = riccati::care_residual(&m.a, &m.b, &w.q(), &w.r(), &g.riccati);
        assert!(res < 1e-8, "residual {res}");
    }

    #[test]
    fn rejects_non_positive_weights() {
        let mut w = LqrWeights::default();
        w.velocity[1] = 0.0;
        assert!(matches!(solve_lqr(&w, &model()), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn rejects_foreign_model() {
        let mut m = model();
        m.a[(3, 0)] = 1.0;
        assert!(solve_lqr(&LqrWeights::default(), &m).is_err());
    }

    #[test]
    fn feedback_zero_at_reference() {
        let g = solve_lqr(&LqrWeights::default(), &model()).unwrap();
        let mut x = Vector7::zeros();
        x[0] = 1.0;
        x[4] = -0.3;
        x[6] = 0.2;
        let u = feedback(&x, &x, &Vector3::zeros(), &g, A_MAX);
        assert_eq!(u, ControlInput::default());
    }

    #[test]
    fn feedback_proportional_down_error() {
        let w = LqrWeights::uniform(1.0, 1.0, 1.0);
        let g = solve_lqr(&w, &model()).unwrap();
        let mut x = Vector7::zeros();
        x[2] = 0.1;
        let u = feedback(&x, &Vector7::zeros(), &Vector3::zeros(), &g, A_MAX);
        assert!((u.accel - Vector3::new(0.0, 0.0, -0.1)).norm() < 1e-15);
    }

    #[test]
    fn feedback_wraps_yaw_error() {
        let g = solve_lqr(&LqrWeights::default(), &model()).unwrap();
        let mut x = Vector7::zeros();
        x[6] = 3.1;
        let mut r = Vector7::zeros();
        r[6] = -3.1;
        let u = feedback(&x, &r, &Vector3::zeros(), &g, A_MAX);
        // error is -0.083 rad across the branch cut, not +6.2 rad
        assert!(u.yaw_rate > 0.0 && u.yaw_rate < 0.2);
    }

    #[test]
    fn compensation_arithmetic() {
        let u = ControlInput {
            accel: Vector3::new(0.3, -0.2, 1.0),
            yaw_rate: 0.4,
        };
        assert_eq!(compensate(&u, &Vector3::zeros(), A_MAX), u);
        let c = compensate(&ControlInput::default(), &Vector3::new(0.0, 0.0, 6.0), A_MAX);
        assert_eq!(c.accel, Vector3::new(0.0, 0.0, -6.0));
        assert_eq!(c.yaw_rate, 0.0);
        let c = compensate(&u, &Vector3::new(0.0, 0.0, 12.0), A_MAX);
        assert_eq!(c.accel.z, -A_MAX);
        assert_eq!(c.yaw_rate, 0.4);
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn saturation_never_flips_sign(
            ax in -50.0f64..50.0, ay in -50.0f64..50.0, az in -50.0f64..50.0, a_max in 0.1f64..20.0
        ) {
            let a = Vector3::new(ax, ay, az);
            let s = saturate(&a, a_max);
            for i in 0..3 {
                proptest::prop_assert!(s[i] * a[i] >= 0.0);
                proptest::prop_assert!(s[i].abs() <= a_max);
                proptest::prop_assert!(s[i].abs() <= a[i].abs());
            }
        }
    }
}
