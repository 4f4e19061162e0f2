//! Continuous algebraic Riccati equation for the decoupled model.
//!
//! The model splits into three double-integrator axes and one integrator
//! (yaw), each with a closed-form solution. [`solve_care_newton`] is a dense
//! Newton–Kleinman iteration kept as an independent cross-check.

use nalgebra::{DMatrix, DVector, SMatrix};

use crate::dynamics::{Matrix7, Matrix7x4};

pub type Matrix4 = SMatrix<f64, 4, 4>;
pub type Matrix4x7 = SMatrix<f64, 4, 7>;

/// Gains `(k_p, k_v)` of a double integrator with costs `q_p, q_v, r`.
pub fn double_integrator_gains(q_p: f64, q_v: f64, r: f64) -> (f64, f64) {
    let k_p = (q_p / r).sqrt();
    let k_v = (q_v / r + 2.0 * k_p).sqrt();
    (k_p, k_v)
}

/// Riccati solution `[[p1, p2], [p2, p3]]` of the double integrator.
pub fn double_integrator_riccati(q_p: f64, q_v: f64, r: f64) -> [[f64; 2]; 2] {
    let p2 = (q_p * r).sqrt();
    let p3 = (r * (q_v + 2.0 * p2)).sqrt();
    let p1 = p2 * p3 / r;
    [[p1, p2], [p2, p3]]
}

/// `‖AᵀP + PA − P B R⁻¹ Bᵀ P + Q‖` (Frobenius).
pub fn care_residual(a: &Matrix7, b: &Matrix7x4, q: &Matrix7, r: &Matrix4, p: &Matrix7) -> f64 {
    let r_inv = r.try_inverse().expect("R must be invertible");
    let res = a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q;
    res.norm()
}

/// Solves `Mᵀ P + P M + S = 0` through the Kronecker form.
fn lyapunov(m: &Matrix7, s: &Matrix7) -> Option<Matrix7> {
    let n = 7;
    let mt = m.transpose();
    let mut big = DMatrix::<f64>::zeros(n * n, n * n);
    // column-major vec: vec(Mᵀ P) = (I ⊗ Mᵀ) vec(P), vec(P M) = (Mᵀ ⊗ I) vec(P)
    for j in 0..n {
        for i in 0..n {
            let row = i + j * n;
            for k in 0..n {
                big[(row, k + j * n)] += mt[(i, k)];
                big[(row, i + k * n)] += mt[(j, k)];
            }
        }
    }
    let rhs = DVector::from_iterator(n * n, s.iter().map(|v| -v));
    let sol = big.lu().solve(&rhs)?;
    let p = Matrix7::from_column_slice(sol.as_slice());
    Some((p + p.transpose()) * 0.5)
}

/// Newton–Kleinman iteration from a stabilizing initial gain.
///
/// Returns `(P, K)` or `None` if a Lyapunov solve fails or the iteration
/// does not settle within `max_iter`.
pub fn solve_care_newton(
    a: &Matrix7,
    b: &Matrix7x4,
    q: &Matrix7,
    r: &Matrix4,
    k0: &Matrix4x7,
    max_iter: usize,
    tol: f64,
) -> Option<(Matrix7, Matrix4x7)> {
    let r_inv = r.try_inverse()?;
    let mut k = *k0;
    let mut p_prev = Matrix7::zeros();
    for _ in 0..max_iter {
        let closed = a - b * k;
        let s = q + k.transpose() * r * k;
        let p = lyapunov(&closed, &s)?;
        k = r_inv * b.transpose() * p;
        if (p - p_prev).norm() <= tol * p.norm().max(1.0) {
            return Some((p, k));
        }
        p_prev = p;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_unit_weights() {
        let (kp, kv) = double_integrator_gains(1.0, 1.0, 1.0);
        assert!((kp - 1.0).abs() < 1e-15);
        assert!((kv - 1.732_050_8).abs() < 1e-7);
    }

    #[test]
    fn scalar_riccati_entries_satisfy_equations() {
        let (qp, qv, r) = (8.0, 4.0, 1.5);
        let [[p1, p2], [_, p3]] = double_integrator_riccati(qp, qv, r);
        // AᵀP + PA − PBR⁻¹BᵀP + Q with A = [[0,1],[0,0]], B = [0,1]ᵀ
        assert!((qp - p2 * p2 / r).abs() < 1e-12);
        assert!((p1 - p2 * p3 / r).abs() < 1e-12);
        assert!((2.0 * p2 + qv - p3 * p3 / r).abs() < 1e-12);
    }
}
