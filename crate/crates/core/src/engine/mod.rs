//! Deterministic discrete-event simulation of communication sessions.
//!
//! Sessions are issued back to back. Each one walks the communication model
//! (handshake, routing, reservation, preparation and distribution, swapping,
//! teleportation) with retries on the current path, maintenance marking and
//! rerouting once the retry limit is spent.

mod metrics;
mod session;
mod sim;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

pub use metrics::Metrics;
pub use session::{SessionState, ALLOWED_TRANSITIONS};

use crate::control::SessionId;
use crate::distribution::{ResidualPolicy, Scheme, Timing};
use crate::error::{check_prob, Error, Result};
use crate::routing::{Algorithm, DEFAULT_RECURSION, SCORE_TOLERANCE};
use crate::topology::Topology;

pub const DEFAULT_RETRY_LIMIT: u32 = 3;
pub const DEFAULT_WARMUP_ROUNDS: u32 = 50;

/// Time unit of the configured depolarizing rates. Calibrated so that a
/// memory five times better than the optical baseline is about where
/// W-state distribution starts to pay off.
pub const DEPOLARIZING_UNIT_MS: f64 = 1.75;

/// Injected faults, each drawn independently per opportunity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FaultPlan {
    /// A segment's distribution silently produces nothing.
    pub channel_outage: f64,
    /// A swap is stalled past the swapping timer.
    pub swap_stall: f64,
    /// The teleportation measurement is stalled past the swapping timer.
    pub teleport_stall: f64,
    /// The destination rejects the request.
    pub reject: f64,
    /// Upper bound on extra delay added to each classical message.
    pub message_jitter_ns: u64,
}

impl FaultPlan {
    pub fn validate(&self) -> Result<()> {
        check_prob("channel_outage", self.channel_outage)?;
        check_prob("swap_stall", self.swap_stall)?;
        check_prob("teleport_stall", self.teleport_stall)?;
        check_prob("reject", self.reject)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub scheme: Scheme,
    pub algorithm: Algorithm,
    pub residual_policy: ResidualPolicy,
    pub retry_limit: u32,
    /// Reroutes allowed per session after the retry limit is spent.
    pub max_reroutes: u32,
    pub timing: Timing,
    /// Time unit, in ms, of the devices' depolarizing rates.
    pub depolarizing_unit_ms: f64,
    /// How much longer atomic memories hold state than optical ones.
    pub memory_ratio: f64,
    /// Preparation success constant.
    pub p_w: f64,
    pub sessions: u32,
    /// Endpoint pairs, used round-robin.
    pub pairs: Vec<(String, String)>,
    /// Rounds of probe distributions and swaps that fill the state windows
    /// before the first session.
    pub warmup_rounds: u32,
    pub recursion: usize,
    pub score_tolerance: f64,
    /// Route every session over this path instead of asking the algorithm.
    pub fixed_path: Option<Vec<String>>,
    pub faults: FaultPlan,
    /// Replay each successful delivery in the statevector kernel with a
    /// random payload. Only meaningful on noiseless paths.
    pub kernel_oracle: bool,
    pub trace: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            scheme: Scheme::DpCepd,
            algorithm: Algorithm::Cer,
            residual_policy: ResidualPolicy::default(),
            retry_limit: DEFAULT_RETRY_LIMIT,
            max_reroutes: 2,
            timing: Timing::default(),
            depolarizing_unit_ms: DEPOLARIZING_UNIT_MS,
            memory_ratio: 1.0,
            p_w: 1.0,
            sessions: 1,
            pairs: Vec::new(),
            warmup_rounds: DEFAULT_WARMUP_ROUNDS,
            recursion: DEFAULT_RECURSION,
            score_tolerance: SCORE_TOLERANCE,
            fixed_path: None,
            faults: FaultPlan::default(),
            kernel_oracle: false,
            trace: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self, t: &Topology) -> Result<()> {
        check_prob("p_w", self.p_w)?;
        check_prob("score_tolerance", self.score_tolerance)?;
        self.faults.validate()?;
        if !(self.depolarizing_unit_ms > 0.0 && self.depolarizing_unit_ms.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "depolarizing_unit_ms",
                value: self.depolarizing_unit_ms,
                reason: "must be positive",
            });
        }
        if !(self.memory_ratio >= 1.0 && self.memory_ratio.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "memory_ratio",
                value: self.memory_ratio,
                reason: "must be at least 1",
            });
        }
        if self.scheme.is_centralized() && t.mode != crate::topology::Mode::Hierarchical {
            return Err(Error::Config(format!(
                "{} needs a hierarchical topology",
                self.scheme
            )));
        }
        if self.sessions > 0 && self.pairs.is_empty() {
            return Err(Error::Config("no endpoint pairs configured".into()));
        }
        for (a, b) in &self.pairs {
            for u in [a, b] {
                let i = t.idx(u)?;
                if t.devices[i].kind != crate::topology::DeviceKind::User {
                    return Err(Error::Config(format!("{u} is not a user")));
                }
            }
            if a == b {
                return Err(Error::Config(format!("{a} cannot talk to itself")));
            }
        }
        if let Some(p) = &self.fixed_path {
            for d in p {
                t.idx(d)?;
            }
        }
        Ok(())
    }
}

/// Everything a run produces.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub metrics: Metrics,
    /// `time | device | event | detail` lines, when tracing is on.
    pub trace: Vec<String>,
    /// Every state change of every session.
    pub transitions: Vec<(SessionId, SessionState, SessionState)>,
    /// Operations found executing after their governing timer expired.
    pub timer_violations: u64,
    /// Memories still occupied when a session ended.
    pub leaked_memories: u64,
}

impl RunReport {
    /// Hash of the trace text, for determinism checks.
    pub fn trace_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.trace.hash(&mut h);
        h.finish()
    }

    pub fn illegal_transitions(&self) -> Vec<(SessionId, SessionState, SessionState)> {
        self.transitions
            .iter()
            .copied()
            .filter(|&(_, a, b)| !a.can_move_to(b))
            .collect()
    }
}

/// Run `config.sessions` sessions on `topology`. A pure function of its
/// arguments.
pub fn run(topology: &Topology, config: &EngineConfig, seed: u64) -> Result<RunReport> {
    config.validate(topology)?;
    sim::Sim::new(topology, config, seed)?.run()
}
