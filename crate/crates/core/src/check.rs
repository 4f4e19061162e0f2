//! Property suites run by `aerodock check`: feature invariance and
//! prediction equivariance, the closed-form Riccati gains against an
//! iterative solver, and network gradients against finite differences.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::control::riccati::{care_residual, solve_care_newton, Matrix4x7};
use crate::control::{solve_lqr, LqrWeights};
use crate::dynamics::{linear_model, yaw_rotation};
use crate::error::Result;
use crate::learning::features::{feature_map, leader_vertical_rotation, wrap_pi, RelativeState9, DEGENERACY_EPS};
use crate::learning::mlp::{flatten, MlpModel, LAYER_SIZES};
use crate::learning::predict;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    /// Worst observed error.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &'static str, worst: f64, tolerance: f64) -> Self {
        Self {
            name,
            worst,
            tolerance,
            passed: worst < tolerance,
        }
    }
}

/// Worst feature, prediction and angle errors over `n` random rotations.
pub fn equivariance(n: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MlpModel::new(&LAYER_SIZES, seed);
    model.axis_radius = 0.05;
    let (mut dh, mut df, mut dphi) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n {
        let arr: [f64; 9] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let x = RelativeState9::from_array(&arr);
        let att = yaw_rotation(rng.random_range(-PI..PI));
        let theta = rng.random_range(-PI..PI);
        let xr = x.rotated(&att, theta);
        let (f0, f1) = (feature_map(&x, &att), feature_map(&xr, &att));
        for i in 0..6 {
            dh = dh.max((f0.h[i] - f1.h[i]).abs());
        }
        let rot = leader_vertical_rotation(&att, theta);
        df = df.max((predict(&model, &xr, &att) - rot * predict(&model, &x, &att)).norm());
        if f0.h[1] > DEGENERACY_EPS {
            dphi = dphi.max(wrap_pi(f1.phi - (f0.phi + theta)).abs());
        }
    }
    vec![
        CheckResult::new("feature invariance", dh, 1e-9),
        CheckResult::new("prediction equivariance", df, 1e-9),
        CheckResult::new("angle shift", dphi, 1e-9),
    ]
}

/// Closed-form gains against Newton–Kleinman for several weight sets.
pub fn riccati() -> Result<Vec<CheckResult>> {
    let model = linear_model(0.7)?;
    let mut k0 = Matrix4x7::zeros();
    for axis in 0..3 {
        k0[(axis, axis)] = 1.0;
        k0[(axis, axis + 3)] = 2.0;
    }
    k0[(3, 6)] = 1.0;
    let (mut dk, mut dp, mut residual, mut max_re) = (0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    for w in [
        LqrWeights::default(),
        LqrWeights::uniform(1.0, 1.0, 1.0),
        LqrWeights::uniform(400.0, 200.0, 1.0),
        LqrWeights::uniform(100.0, 200.0, 1.0),
        LqrWeights::uniform(3.0, 0.5, 2.0),
    ] {
        let g = solve_lqr(&w, &model)?;
        let (q, r) = (w.q(), w.r());
        residual = residual.max(care_residual(&model.a, &model.b, &q, &r, &g.riccati));
        max_re = max_re.max(g.max_real_eigenvalue(&model));
        match solve_care_newton(&model.a, &model.b, &q, &r, &k0, 100, 1e-15) {
            Some((p, k)) => {
                dk = dk.max((k - g.k).amax());
                dp = dp.max((p - g.riccati).amax());
            }
            None => {
                dk = f64::INFINITY;
            }
        }
    }
    Ok(vec![
        CheckResult::new("gain vs iterative solver", dk, 1e-9),
        CheckResult::new("riccati vs iterative solver", dp, 1e-9),
        CheckResult::new("riccati residual", residual, 1e-8),
        CheckResult {
            name: "closed-loop stability",
            worst: max_re,
            tolerance: 0.0,
            passed: max_re < 0.0,
        },
    ])
}

/// Largest relative error between backprop and central differences over
/// `draws` random networks.
pub fn gradients(draws: u64, seed: u64) -> CheckResult {
    let mut worst: f64 = 0.0;
    for d in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(d));
        let mut model = MlpModel::new(&LAYER_SIZES, seed.wrapping_add(d));
        if d % 2 == 1 {
            model.axis_radius = 0.05;
        }
        let x = DMatrix::from_fn(6, 8, |_, _| rng.random_range(-1.5..1.5));
        let y = DMatrix::from_fn(3, 8, |_, _| rng.random_range(-3.0..3.0));
        let (_, grads) = model.loss_and_grad(&x, &y);
        let analytic = flatten(&grads);
        let base = model.params();
        let mut probe = model.clone();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.set_params(&p);
            let up = probe.loss(&x, &y);
            p[i] = base[i] - h;
            probe.set_params(&p);
            let down = probe.loss(&x, &y);
            let numeric = (up - down) / (2.0 * h);
            let denom = numeric.abs().max(analytic[i].abs()).max(1e-7);
            worst = worst.max((numeric - analytic[i]).abs() / denom);
        }
    }
    CheckResult::new("network gradients", worst, 1e-4)
}

/// Every suite with its default size.
pub fn run_all() -> Result<Vec<CheckResult>> {
    let mut out = equivariance(100, 1);
    out.extend(riccati()?);
    out.push(gradients(10, 1));
    Ok(out)
}
