//! Fixed-step scenario loop: physics at the physics rate, control,
//! prediction and logging at the control rate.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::observer::{observer_update, ObserverGain, ObserverState};
use crate::control::{compensate, feedback, solve_lqr, ControlInput, GainMatrix};
use crate::docking::{
    couple_on_dock, gripper_step, platform_step, CoupledMode, DockEvent, DockState, GripperEventKind, GripperState,
    PlatformState,
};
use crate::dynamics::{invert_dynamics, linear_model, step_with_tau, yaw_rotation, Vector7, VehicleState, GRAVITY};
use crate::error::{Error, Result};
use crate::field::{mean_force, sample_force, TurbulenceState};
use crate::learning::{predict, MlpModel, RelativeState9};
use crate::planner::{plan, predict_platform, BoundaryState, HoldMode, QuinticTrajectory, Reference};
use crate::sim::config::{Compensation, LeaderMode, ScenarioConfig};

/// Salt separating the start-jitter stream from the turbulence stream.
const JITTER_SALT: u64 = 0x6a09_e667_f3bc_c909;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub alpha_pos: Vector3<f64>,
    pub alpha_vel: Vector3<f64>,
    pub bravo_pos: Vector3<f64>,
    pub bravo_vel: Vector3<f64>,
    pub bar_pos: Vector3<f64>,
    pub ref_pos: Vector3<f64>,
    pub ref_vel: Vector3<f64>,
    /// Acceleration command after compensation.
    pub accel_cmd: Vector3<f64>,
    /// True disturbance in the last physics step.
    pub f_ext: Vector3<f64>,
    /// Mean downwash field at this tick.
    pub f_mean: Vector3<f64>,
    pub f_pred: Vector3<f64>,
    /// Vertical separation, follower below leader, m.
    pub separation: f64,
    pub in_proximity: bool,
    pub dock: String,
}

impl LogRow {
    pub fn error(&self) -> Vector3<f64> {
        self.bravo_pos - self.ref_pos
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub rows: Vec<LogRow>,
    pub events: Vec<DockEvent>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunResult {
    Dock,
    Miss,
    /// Tracking-only mission; no dock attempted.
    NoAttempt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub result: RunResult,
    /// Mean |down error| over the summary window, m.
    pub error_down: f64,
    /// Mean 3D error over the summary window, m.
    pub error_3d: f64,
    /// Mean ‖f_pred‖ over the window, m/s²; absent without compensation.
    pub predicted_force: Option<f64>,
    pub contact_time: Option<f64>,
    pub dock_time: Option<f64>,
    /// End of the summary window (dock, miss, abort or run end), s.
    pub window_end: f64,
    pub window: f64,
    pub aborted: bool,
}

/// Leader-side state of a run.
struct Leader {
    state: VehicleState,
    mode: LeaderMode,
    start: Vector3<f64>,
    velocity: Vector3<f64>,
    gains: GainMatrix,
    u: ControlInput,
}

impl Leader {
    fn reference(&self, t: f64) -> Vector7 {
        let mut x = Vector7::zeros();
        let p = self.start + self.velocity * t;
        x.fixed_rows_mut::<3>(0).copy_from(&p);
        x.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        x
    }
}

fn fault(t: f64, e: Error) -> Error {
    Error::Aborted {
        t,
        reason: e.to_string(),
    }
}

/// Start state of the follower, including the seeded jitter.
pub fn follower_start(cfg: &ScenarioConfig, goal: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ JITTER_SALT);
    rng.set_stream(cfg.run_index);
    let mut draw = |half: f64| {
        if half > 0.0 {
            Vector3::from_fn(|_, _| rng.random_range(-half..=half))
        } else {
            Vector3::zeros()
        }
    };
    let dp = draw(cfg.jitter.position);
    let dv = draw(cfg.jitter.velocity);
    (
        goal + Vector3::from(cfg.start_offset) + dp,
        Vector3::from(cfg.start_velocity) + dv,
    )
}

fn as_boundary(state: &VehicleState) -> BoundaryState {
    BoundaryState {
        position: state.position,
        velocity: state.velocity,
        accel: Vector3::zeros(),
    }
}

fn reference_vector(r: &Reference) -> Vector7 {
    let mut x = Vector7::zeros();
    x.fixed_rows_mut::<3>(0).copy_from(&r.position);
    x.fixed_rows_mut::<3>(3).copy_from(&r.velocity);
    x[6] = r.yaw;
    x
}

/// Runs one scenario. `model` is required when compensation is `Model`.
pub fn run_scenario(cfg: &ScenarioConfig, model: Option<&MlpModel>) -> Result<(SimLog, RunSummary)> {
    cfg.validate()?;
    if cfg.compensation == Compensation::Model && model.is_none() {
        return Err(Error::invalid("model compensation requested but no model given"));
    }
    let dt = cfg.physics_dt();
    let ctrl_dt = cfg.control_dt();
    let substeps = cfg.substeps();

    let gains = solve_lqr(&cfg.lqr, &linear_model(cfg.mass)?)?;
    let leader_gains = solve_lqr(&cfg.leader_lqr, &linear_model(cfg.leader_mass)?)?;
    let leader_start = Vector3::from(cfg.leader_position);
    let leader_velocity = cfg.leader_velocity();
    let mut alpha_state = VehicleState::at_rest(leader_start, cfg.leader_mass);
    alpha_state.velocity = leader_velocity;
    let mut leader = Leader {
        state: alpha_state,
        mode: cfg.leader,
        start: leader_start,
        velocity: leader_velocity,
        gains: leader_gains,
        u: ControlInput::default(),
    };

    let mut plat = PlatformState::at_rest(cfg.cable_length, Vector3::from(cfg.anchor_offset), cfg.platform_damping)?;
    let tip = cfg.gripper.tip_offset;
    let goal = predict_platform(&leader.state, &plat, 0.0, cfg.horizon, &tip)?;
    let hold = match cfg.leader {
        LeaderMode::ConstantVelocity { .. } => HoldMode::TrackLeader { leader_velocity },
        _ => HoldMode::HoldPoint,
    };
    let (p0, v0) = follower_start(cfg, &goal.position);
    let mut bravo = VehicleState::at_rest(p0, cfg.mass);
    bravo.velocity = v0;
    let start = BoundaryState {
        position: p0,
        velocity: v0,
        accel: Vector3::zeros(),
    };
    let mut traj: QuinticTrajectory = plan(&start, &goal, 0.0, cfg.horizon, hold, 0.0)?;

    let mut turb = TurbulenceState::with_stream(cfg.seed, cfg.run_index);
    let mut grip = GripperState::new(cfg.gripper.clone());
    let mut dock = DockState::Approach;
    let mut coupled: Option<CoupledMode> = None;
    let mut observer = ObserverState::new(bravo.as_vector(), ObserverGain::steady_state(&cfg.observer, ctrl_dt)?);
    let bias = Vector3::from(cfg.accel_bias);

    let abort_at = cfg.horizon + cfg.abort_margin;
    let mut end_time = match cfg.duration {
        Some(d) => d,
        None if cfg.gripper_enabled => abort_at + cfg.post_time,
        None => cfg.horizon + cfg.hold_duration,
    };
    let mut summary_end: Option<f64> = None;
    let mut aborted = false;

    let mut log = SimLog::default();
    let mut u_applied = ControlInput::default();
    let mut f_true = Vector3::zeros();
    let mut k: u64 = 0;
    loop {
        let t = k as f64 * dt;
        if t > end_time + 1e-9 {
            break;
        }
        // control tick
        let reference = traj.sample(t);
        let x_ref = reference_vector(&reference);
        let x = bravo.as_vector();
        observer = observer_update(&observer, &x, &u_applied, ctrl_dt);
        let u_fb = feedback(&x, &x_ref, &reference.accel, &gains, cfg.a_max);
        let x9 = RelativeState9::from_states(&leader.state, &bravo);
        let leader_att = yaw_rotation(leader.state.yaw);
        let f_mean = if cfg.downwash {
            mean_force(&leader.state, &bravo, &cfg.field)
        } else {
            Vector3::zeros()
        };
        let f_pred = match cfg.compensation {
            Compensation::None | Compensation::Oracle => Vector3::zeros(),
            Compensation::Model => predict(model.expect("checked above"), &x9, &leader_att),
            Compensation::Observer => observer.f_hat,
            Compensation::MeanField => f_mean,
        };
        let u_cmd = compensate(&u_fb, &f_pred, cfg.a_max);
        let separation = bravo.position.z - leader.state.position.z;
        log.rows.push(LogRow {
            t,
            alpha_pos: leader.state.position,
            alpha_vel: leader.state.velocity,
            bravo_pos: bravo.position,
            bravo_vel: bravo.velocity,
            bar_pos: plat.bar_position(&leader.state),
            ref_pos: reference.position,
            ref_vel: reference.velocity,
            accel_cmd: u_cmd.accel,
            f_ext: f_true,
            f_mean,
            f_pred,
            separation,
            in_proximity: separation > 0.0 && (bravo.position - leader.state.position).norm() < cfg.proximity,
            dock: dock.label().to_string(),
        });
        if leader.mode != LeaderMode::RigidMount {
            let ff = Vector3::zeros();
            leader.u = feedback(&leader.state.as_vector(), &leader.reference(t), &ff, &leader.gains, cfg.a_max);
        }
        u_applied = u_cmd;

        for _ in 0..substeps {
            let t_now = k as f64 * dt;
            let t_next = (k + 1) as f64 * dt;
            // downwash on the follower
            f_true = if cfg.downwash {
                let mean = mean_force(&leader.state, &bravo, &cfg.field);
                sample_force(&mean, &mut turb, &cfg.field, dt)
            } else {
                Vector3::zeros()
            };

            // leader
            let alpha_prev_vel = leader.state.velocity;
            if leader.mode != LeaderMode::RigidMount {
                let (load, believed) = match &coupled {
                    Some(c) => (c.leader_load_accel(t_now), c.unsupported_weight(t_now - c.params.comm_latency)),
                    None => (Vector3::zeros(), 0.0),
                };
                let m_eff = cfg.leader_mass + believed / GRAVITY;
                let inv = invert_dynamics(&leader.u.accel, 0.0, m_eff);
                leader.state =
                    step_with_tau(&leader.state, &inv.command, &load, dt, cfg.attitude_tau).map_err(|e| fault(t_now, e))?;
            }
            let anchor_accel = (leader.state.velocity - alpha_prev_vel) / dt;
            plat = platform_step(&plat, &anchor_accel, dt).map_err(|e| fault(t_now, e))?;

            // follower
            if let Some(c) = &coupled {
                let bar = plat.bar_position(&leader.state);
                bravo.position = c.follower_position(&bar);
                bravo.velocity = plat.bar_velocity(&leader.state);
            } else {
                let u = if cfg.compensation == Compensation::Oracle {
                    compensate(&u_fb, &f_true, cfg.a_max)
                } else {
                    u_cmd
                };
                let inv = invert_dynamics(&u.accel, reference.yaw, cfg.mass);
                bravo = step_with_tau(&bravo, &inv.command, &(f_true + bias), dt, cfg.attitude_tau)
                    .map_err(|e| fault(t_now, e))?;
            }
            if !bravo.is_finite() || !leader.state.is_finite() {
                return Err(Error::Aborted {
                    t: t_now,
                    reason: "non-finite vehicle state".into(),
                });
            }

            // gripper and mission logic
            if cfg.gripper_enabled && !dock.is_terminal() && !aborted {
                let bar = plat.bar_position(&leader.state);
                let rel_pos = bar - (bravo.position + tip);
                let rel_vel = plat.bar_velocity(&leader.state) - bravo.velocity;
                let (next, event) = gripper_step(&grip, &rel_pos, &rel_vel, t_next, dt).map_err(|e| fault(t_now, e))?;
                grip = next;
                if let Some(ev) = event {
                    dock = dock.on_event(&ev).map_err(|e| fault(t_now, e))?;
                    log.events.push(DockEvent::from(&ev));
                    match ev.kind {
                        GripperEventKind::Docked => {
                            coupled = Some(couple_on_dock(&dock, &leader.state, &bravo, &plat, cfg.coupling.clone())?);
                            summary_end = Some(ev.t);
                            if cfg.duration.is_none() {
                                end_time = ev.t + cfg.post_time;
                            }
                        }
                        GripperEventKind::Missed => {
                            summary_end = Some(ev.t);
                            traj = wind_down(cfg, &bravo, t_next)?;
                            if cfg.duration.is_none() {
                                end_time = ev.t + cfg.post_time;
                            }
                        }
                        GripperEventKind::Contact => {}
                    }
                }
                if dock == DockState::Approach && t_next >= abort_at - 1e-9 {
                    aborted = true;
                    summary_end = Some(t_next);
                    log.events.push(DockEvent {
                        t: t_next,
                        kind: "abort".into(),
                        rel_pos: rel_pos.into(),
                        rel_vel: rel_vel.into(),
                    });
                    traj = wind_down(cfg, &bravo, t_next)?;
                    if cfg.duration.is_none() {
                        end_time = t_next + cfg.post_time;
                    }
                }
            }
            k += 1;
        }
    }

    let window_end = summary_end.unwrap_or_else(|| log.rows.last().map(|r| r.t).unwrap_or(0.0));
    let summary = summarize(cfg, &log, &dock, window_end, aborted);
    Ok((log, summary))
}

/// Descent plan after a miss.
fn wind_down(cfg: &ScenarioConfig, bravo: &VehicleState, t: f64) -> Result<QuinticTrajectory> {
    let start = as_boundary(bravo);
    let goal = BoundaryState::at_rest(bravo.position + Vector3::new(0.0, 0.0, cfg.wind_down_depth));
    plan(&start, &goal, t, cfg.wind_down_time, HoldMode::HoldPoint, 0.0)
}

fn summarize(cfg: &ScenarioConfig, log: &SimLog, dock: &DockState, window_end: f64, aborted: bool) -> RunSummary {
    let lo = window_end - cfg.metrics_window;
    let rows: Vec<&LogRow> = log
        .rows
        .iter()
        .filter(|r| r.t > lo + 1e-9 && r.t <= window_end + 1e-9)
        .collect();
    let n = rows.len().max(1) as f64;
    let mean = |f: &dyn Fn(&LogRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
    let (result, contact_time, dock_time) = match *dock {
        DockState::Docked { contact, docked } => (RunResult::Dock, Some(contact), Some(docked)),
        DockState::Missed { contact, .. } => (RunResult::Miss, Some(contact), None),
        DockState::ContactPending { contact } => (RunResult::Miss, Some(contact), None),
        DockState::Approach if cfg.gripper_enabled || aborted => (RunResult::Miss, None, None),
        DockState::Approach => (RunResult::NoAttempt, None, None),
    };
    RunSummary {
        result,
        error_down: mean(&|r| r.error().z.abs()),
        error_3d: mean(&|r| r.error().norm()),
        predicted_force: (cfg.compensation != Compensation::None).then(|| mean(&|r| r.f_pred.norm())),
        contact_time,
        dock_time,
        window_end,
        window: cfg.metrics_window,
        aborted,
    }
}

/// Columns of `log.csv`, in order.
pub const LOG_COLUMNS: [&str; 37] = [
    "t", "alpha_n", "alpha_e", "alpha_d", "alpha_vn", "alpha_ve", "alpha_vd", "bravo_n", "bravo_e", "bravo_d",
    "bravo_vn", "bravo_ve", "bravo_vd", "bar_n", "bar_e", "bar_d", "ref_n", "ref_e", "ref_d", "ref_vn", "ref_ve",
    "ref_vd", "u_n", "u_e", "u_d", "fext_n", "fext_e", "fext_d", "fmean_n", "fmean_e", "fmean_d", "fpred_n",
    "fpred_e", "fpred_d", "separation", "in_proximity", "dock",
];

impl LogRow {
    pub fn record(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(LOG_COLUMNS.len());
        out.push(self.t.to_string());
        for v in [
            &self.alpha_pos,
            &self.alpha_vel,
            &self.bravo_pos,
            &self.bravo_vel,
            &self.bar_pos,
            &self.ref_pos,
            &self.ref_vel,
            &self.accel_cmd,
            &self.f_ext,
            &self.f_mean,
            &self.f_pred,
        ] {
            out.extend(v.iter().map(|x| x.to_string()));
        }
        out.push(self.separation.to_string());
        out.push(u8::from(self.in_proximity).to_string());
        out.push(self.dock.clone());
        out
    }
}
