//! Hierarchical quantum-network simulator.
//!
//! The crate is layered bottom-up:
//!
//! * [`kernel`]: exact statevector registers (up to 12 qubits) used as the
//!   ground truth for W-state conversion, Bell measurements, swapping and
//!   teleportation.
//! * [`noise`]: closed-form environmental models (channel loss, dephasing,
//!   memory depolarization, W-state parameter mapping).
//! * [`topology`]: hierarchical and distributed cellular layouts, domain
//!   shortest-path and edge-repeater tables, cost models.
//! * [`control`]: central/local state matrices and memory reservation.
//! * [`routing`]: centralized entanglement routing plus greedy, SLMP and
//!   Q-Cast style baselines.
//! * [`distribution`]: entanglement preparation & distribution schemes.
//! * [`engine`]: the discrete-event communication model with timers,
//!   retries and rerouting.
//! * [`experiments`]: scenario registry producing CSV rows.

pub mod control;
pub mod distribution;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod noise;
pub mod routing;
pub mod topology;

pub use error::{Error, Result};
