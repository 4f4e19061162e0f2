//! Close-proximity aerial docking simulator.
//!
//! A follower multirotor ("Bravo") flies an LQR tracking controller on the
//! feedforward-linearized translational model, compensates for the leader's
//! ("Alpha") downwash with a small SO(2)-equivariant network, plans a
//! minimum-jerk approach onto a cable-suspended bar and closes a rotary-gate
//! gripper with sensing latency.
//!
//! Module map:
//! - [`dynamics`]: rigid-body translational model, thrust inversion, linear model.
//! - [`field`]: synthetic ground-truth downwash used to label and evaluate.
//! - [`control`]: LQR gains, tracking feedback, compensation, disturbance observer.
//! - [`planner`]: quintic approach trajectories and platform prediction.
//! - [`learning`]: invariant features, the network, labels, training, curriculum.
//! - [`docking`]: suspended platform, gripper, dock state machine, load transfer.
//! - [`sim`]: scenario engine, experiments and file outputs.
//! - [`check`]: property suites behind `aerodock check`.

pub mod check;
pub mod control;
pub mod docking;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod learning;
pub mod planner;
pub mod sim;

pub use error::{Error, Result};
