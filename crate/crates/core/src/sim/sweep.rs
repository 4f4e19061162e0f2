//! Scripted lateral sweeps under a slowly moving leader, used to collect
//! curriculum data.

use std::f64::consts::TAU;

use nalgebra::Vector3;

use crate::control::{compensate, feedback, solve_lqr, ControlInput};
use crate::dynamics::{acceleration, invert_dynamics, linear_model, mid_step_attitude, step_with_tau, Vector7, VehicleState};
use crate::error::{Error, Result};
use crate::field::{mean_force, sample_force, TurbulenceState};
use crate::learning::curriculum::{run_curriculum, CurriculumOutcome, Stage, SweepEnvironment};
use crate::learning::train::TrainHyper;
use crate::learning::dataset::{estimate_bias, make_label, TrainingSample};
use crate::learning::{predict, MlpModel, RelativeState9};
use crate::sim::config::ScenarioConfig;

/// Position, velocity and acceleration of a prescribed path at one time.
#[derive(Clone, Copy, Debug)]
struct PathPoint {
    p: Vector3<f64>,
    v: Vector3<f64>,
    a: Vector3<f64>,
}

/// Thrust acceleration actually produced over a control interval, in place
/// of the command.
fn achieved_input(accel: Vector3<f64>, u: &ControlInput) -> ControlInput {
    ControlInput { accel, ..*u }
}

/// Warped clock `τ(t) = t - sin(ω t)/ω`: it advances at rate
/// `1 - cos(ω t)`, which falls to zero once per pause period. Returns
/// `(τ, τ', τ'')`.
fn warped_clock(pause_period: f64, t: f64) -> (f64, f64, f64) {
    let w = TAU / pause_period;
    let (s, c) = (w * t).sin_cos();
    (t - s / w, 1.0 - c, w * s)
}

/// `amp · sin(w τ + phase)` and its first two time derivatives.
fn sine(amp: f64, w: f64, phase: f64, clock: (f64, f64, f64)) -> (f64, f64, f64) {
    let (tau, d, dd) = clock;
    let (s, c) = (w * tau + phase).sin_cos();
    (
        amp * s,
        amp * w * c * d,
        amp * w * (c * dd - w * s * d * d),
    )
}

#[derive(Clone, Debug)]
pub struct SweepParams {
    /// Leader figure-eight half-width, m, and period, s.
    pub leader_amplitude: f64,
    pub leader_period: f64,
    /// Follower crosses the leader's axis along a slowly turning line:
    /// signed distance `amplitude · sin(2π t / radial_period)`, line
    /// heading advancing once per `turn_period`.
    pub lateral_amplitude: f64,
    pub radial_period: f64,
    pub turn_period: f64,
    pub vertical_period: f64,
    /// Both vehicles come to rest together once per pause period, s.
    pub pause_period: f64,
    /// Keep one sample every this many control ticks.
    pub sample_every: usize,
    /// Hover time far from the leader for bias calibration, s.
    pub calibration_time: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            leader_amplitude: 1.0,
            leader_period: 25.0,
            pause_period: 4.0,
            lateral_amplitude: 0.45,
            radial_period: 5.0,
            turn_period: 23.0,
            vertical_period: 1.5,
            sample_every: 5,
            calibration_time: 5.0,
        }
    }
}

/// Collection environment built on the scenario physics.
pub struct SimSweepEnv {
    pub cfg: ScenarioConfig,
    pub params: SweepParams,
    /// Bias estimated on the first call, reused afterwards.
    pub bias_estimate: Option<Vector3<f64>>,
}

impl SimSweepEnv {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            params: SweepParams::default(),
            bias_estimate: None,
        })
    }

    fn leader_path(&self, t: f64) -> PathPoint {
        let p = &self.params;
        let w = TAU / p.leader_period;
        let clock = warped_clock(p.pause_period, t);
        let a = p.leader_amplitude;
        let (x, vx, ax) = sine(a, w, 0.0, clock);
        let (y, vy, ay) = sine(0.5 * a, 2.0 * w, 0.0, clock);
        let base = Vector3::from(self.cfg.leader_position);
        PathPoint {
            p: base + Vector3::new(x, y, 0.0),
            v: Vector3::new(vx, vy, 0.0),
            a: Vector3::new(ax, ay, 0.0),
        }
    }

    fn offset_path(&self, stage: &Stage, stage_index: usize, t: f64) -> PathPoint {
        let p = &self.params;
        let phase = stage_index as f64;
        let clock = warped_clock(p.pause_period, t);
        let (rho, drho, ddrho) = sine(p.lateral_amplitude, TAU / p.radial_period, phase, clock);
        let (tau, dtau, ddtau) = clock;
        let w = TAU / p.turn_period;
        let th = w * tau + phase;
        let (dth, ddth) = (w * dtau, w * ddtau);
        let (s, c) = th.sin_cos();
        let (x, vx, ax) = (
            rho * c,
            drho * c - rho * dth * s,
            ddrho * c - 2.0 * drho * dth * s - rho * (ddth * s + dth * dth * c),
        );
        let (y, vy, ay) = (
            rho * s,
            drho * s + rho * dth * c,
            ddrho * s + 2.0 * drho * dth * c + rho * (ddth * c - dth * dth * s),
        );
        let half = 0.5 * (stage.far - stage.near);
        let (z, vz, az) = sine(half, TAU / p.vertical_period, phase, clock);
        PathPoint {
            p: Vector3::new(x, y, stage.mid() + z),
            v: Vector3::new(vx, vy, vz),
            a: Vector3::new(ax, ay, az),
        }
    }

    pub fn calibrate(&self) -> Result<Vector3<f64>> {
        let cfg = &self.cfg;
        let gains = solve_lqr(&cfg.lqr, &linear_model(cfg.mass)?)?;
        let hover_at = Vector3::from(cfg.leader_position) + Vector3::new(5.0, 0.0, 0.0);
        let mut bravo = VehicleState::at_rest(hover_at, cfg.mass);
        let mut x_ref = Vector7::zeros();
        x_ref.fixed_rows_mut::<3>(0).copy_from(&hover_at);
        let ticks = (self.params.calibration_time * cfg.control_rate).round() as usize;
        let bias = Vector3::from(cfg.accel_bias);
        let mut residuals = Vec::with_capacity(ticks);
        for _ in 0..ticks {
            let u = feedback(&bravo.as_vector(), &x_ref, &Vector3::zeros(), &gains, cfg.a_max);
            let v0 = bravo.velocity;
            let inv = invert_dynamics(&u.accel, 0.0, cfg.mass);
            let mut achieved = Vector3::zeros();
            for _ in 0..cfg.substeps() {
                let mid = mid_step_attitude(&bravo.attitude, &inv.command, cfg.physics_dt(), cfg.attitude_tau);
                achieved += acceleration(&mid, inv.command.thrust, cfg.mass, &Vector3::zeros());
                bravo = step_with_tau(&bravo, &inv.command, &bias, cfg.physics_dt(), cfg.attitude_tau)?;
            }
            let a_obs = (bravo.velocity - v0) / cfg.control_dt();
            let applied = achieved_input(achieved / cfg.substeps() as f64, &u);
            residuals.push(make_label(&a_obs, &applied, &Vector3::zeros()));
        }
        estimate_bias(&residuals)
    }

    /// Flies one stage; returns the samples and the per-sample true mean
    /// field averaged over each label's interval.
    pub fn fly(
        &mut self,
        stage_index: usize,
        stage: &Stage,
        model: Option<&MlpModel>,
    ) -> Result<(Vec<TrainingSample>, Vec<Vector3<f64>>)> {
        let bias = match self.bias_estimate {
            Some(b) => b,
            None => {
                let b = self.calibrate()?;
                self.bias_estimate = Some(b);
                b
            }
        };
        let cfg = &self.cfg;
        let gains = solve_lqr(&cfg.lqr, &linear_model(cfg.mass)?)?;
        let dt = cfg.physics_dt();
        let ctrl_dt = cfg.control_dt();
        let true_bias = Vector3::from(cfg.accel_bias);
        let mut turb = TurbulenceState::with_stream(cfg.seed, 1000 + stage_index as u64);

        let start_l = self.leader_path(0.0);
        let start_o = self.offset_path(stage, stage_index, 0.0);
        let mut bravo = VehicleState::at_rest(start_l.p + start_o.p, cfg.mass);
        bravo.velocity = start_l.v + start_o.v;

        let ticks = (stage.duration * cfg.control_rate).round() as usize;
        let mut samples = Vec::new();
        let mut oracle = Vec::new();
        let mut k: u64 = 0;
        for tick in 0..ticks {
            let t = tick as f64 * ctrl_dt;
            let l = self.leader_path(t);
            let o = self.offset_path(stage, stage_index, t);
            let mut x_ref = Vector7::zeros();
            x_ref.fixed_rows_mut::<3>(0).copy_from(&(l.p + o.p));
            x_ref.fixed_rows_mut::<3>(3).copy_from(&(l.v + o.v));
            let u_fb = feedback(&bravo.as_vector(), &x_ref, &(l.a + o.a), &gains, cfg.a_max);
            let mut leader = VehicleState::at_rest(l.p, cfg.leader_mass);
            leader.velocity = l.v;
            let x9 = RelativeState9::from_states(&leader, &bravo);
            let f_pred = match model {
                Some(m) => predict(m, &x9, &leader.attitude),
                None => Vector3::zeros(),
            };
            let u: ControlInput = compensate(&u_fb, &f_pred, cfg.a_max);
            let inv = invert_dynamics(&u.accel, 0.0, cfg.mass);
            let v0 = bravo.velocity;
            let mut field_sum = Vector3::zeros();
            let mut achieved = Vector3::zeros();
            for _ in 0..cfg.substeps() {
                let tp = k as f64 * dt;
                let lp = self.leader_path(tp);
                let mut leader_now = VehicleState::at_rest(lp.p, cfg.leader_mass);
                leader_now.velocity = lp.v;
                let mean = mean_force(&leader_now, &bravo, &cfg.field);
                field_sum += mean;
                let f = sample_force(&mean, &mut turb, &cfg.field, dt);
                let mid = mid_step_attitude(&bravo.attitude, &inv.command, dt, cfg.attitude_tau);
                achieved += acceleration(&mid, inv.command.thrust, cfg.mass, &Vector3::zeros());
                bravo = step_with_tau(&bravo, &inv.command, &(f + true_bias), dt, cfg.attitude_tau)?;
                k += 1;
            }
            if !bravo.is_finite() {
                return Err(Error::Aborted {
                    t,
                    reason: "non-finite follower state during sweep".into(),
                });
            }
            if tick % self.params.sample_every == 0 {
                let a_obs = (bravo.velocity - v0) / ctrl_dt;
                samples.push(TrainingSample {
                    x: x9,
                    label: make_label(&a_obs, &achieved_input(achieved / cfg.substeps() as f64, &u), &bias),
                    stage: stage_index,
                    t,
                });
                oracle.push(field_sum / cfg.substeps() as f64);
            }
        }
        Ok((samples, oracle))
    }
}

impl SweepEnvironment for SimSweepEnv {
    fn collect(&mut self, stage_index: usize, stage: &Stage, model: Option<&MlpModel>) -> Result<Vec<TrainingSample>> {
        self.fly(stage_index, stage, model).map(|(s, _)| s)
    }
}

/// Collects the given stages in simulation and trains on them.
pub fn train_in_sim(cfg: &ScenarioConfig, stages: &[Stage], hyper: &TrainHyper) -> Result<CurriculumOutcome> {
    let mut env = SimSweepEnv::new(cfg.clone())?;
    run_curriculum(&mut env, stages, hyper)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_cfg() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.field = cfg.field.without_turbulence();
        cfg
    }

    #[test]
    fn labels_match_field_without_turbulence() {
        let mut cfg = quiet_cfg();
        cfg.accel_bias = [0.05, -0.1, 0.2];
        let mut env = SimSweepEnv::new(cfg.clone()).unwrap();
        env.bias_estimate = Some(Vector3::from(cfg.accel_bias));
        let stage = Stage::new(0.9, 0.6, 6.0);
        let (samples, oracle) = env.fly(3, &stage, None).unwrap();
        assert_eq!(samples.len(), oracle.len());
        assert!(!samples.is_empty());
        for (s, o) in samples.iter().zip(&oracle) {
            assert!((s.label - o).norm() < 1e-6, "{} vs {}", s.label, o);
        }
    }

    #[test]
    fn calibration_recovers_injected_bias() {
        let mut cfg = quiet_cfg();
        cfg.accel_bias = [0.1, 0.0, -0.3];
        let env = SimSweepEnv::new(cfg.clone()).unwrap();
        let b = env.calibrate().unwrap();
        assert!((b - Vector3::from(cfg.accel_bias)).norm() < 1e-3, "{b}");
    }

    #[test]
    fn noisy_labels_track_the_field() {
        let mut cfg = ScenarioConfig::default();
        cfg.accel_bias = [0.0, 0.2, 0.1];
        let mut env = SimSweepEnv::new(cfg.clone()).unwrap();
        let (samples, oracle) = env.fly(4, &Stage::new(0.6, 0.5, 20.0), None).unwrap();
        let n = samples.len() as f64;
        let mean_err: Vector3<f64> = samples.iter().zip(&oracle).map(|(s, o)| s.label - o).sum::<Vector3<f64>>() / n;
        let spread = (oracle.iter().map(|o| o.norm_squared()).sum::<f64>() / n).sqrt() * cfg.field.turb_std_frac;
        assert!(mean_err.norm() < spread, "{mean_err} vs {spread}");
    }

    #[test]
    fn sweep_stays_in_band() {
        let env = SimSweepEnv::new(quiet_cfg()).unwrap();
        let stage = Stage::new(1.2, 0.9, 30.0);
        for k in 0..1500 {
            let t = k as f64 * 0.02;
            let o = env.offset_path(&stage, 2, t);
            assert!(o.p.z >= stage.near - 1e-9 && o.p.z <= stage.far + 1e-9);
            assert!(o.p.xy().norm() <= env.params.lateral_amplitude + 1e-9);
        }
    }

    #[test]
    fn path_derivatives_are_consistent() {
        let env = SimSweepEnv::new(quiet_cfg()).unwrap();
        let stage = Stage::new(0.6, 0.5, 30.0);
        let h = 1e-5;
        for &t in &[0.3, 2.1, 7.7, 13.0] {
            for path in [
                Box::new(|t| env.leader_path(t)) as Box<dyn Fn(f64) -> PathPoint>,
                Box::new(|t| env.offset_path(&stage, 1, t)),
            ] {
                let (a, b, c) = (path(t - h), path(t), path(t + h));
                assert!(((c.p - a.p) / (2.0 * h) - b.v).norm() < 1e-6);
                assert!(((c.v - a.v) / (2.0 * h) - b.a).norm() < 1e-6);
            }
        }
    }
}
