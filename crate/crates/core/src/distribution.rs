//! Entanglement preparation & distribution for one segment, under the
//! centralized (controller-prepared) and distributed (repeater-prepared)
//! schemes.

use std::fmt;
use std::ops::AddAssign;

use rand::Rng;

use crate::control::ReservationNeeds;
use crate::error::{Error, Result};
use crate::kernel::{BellPair, BellState, KernelResult, Qubit, StateRegister, WBranch};
use crate::noise::{ComponentProbs, EnvParams};
use crate::topology::MemoryKind;

/// Speed of light in fiber.
pub const FIBER_KM_PER_S: f64 = 2e5;

/// Default latency of one local quantum operation.
pub const DEFAULT_OP_NS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    WStateCepd,
    DpCepd,
    DepdSenderReceiver,
    DepdMeetInMiddle,
    DepdMidpointSource,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::WStateCepd,
        Scheme::DpCepd,
        Scheme::DepdSenderReceiver,
        Scheme::DepdMeetInMiddle,
        Scheme::DepdMidpointSource,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::WStateCepd => "wstate-cepd",
            Scheme::DpCepd => "dp-cepd",
            Scheme::DepdSenderReceiver => "depd-sender-receiver",
            Scheme::DepdMeetInMiddle => "depd-meet-in-middle",
            Scheme::DepdMidpointSource => "depd-midpoint-source",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        let alias = match s.as_str() {
            "dp-depd" => "depd-sender-receiver",
            other => other,
        };
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == alias)
            .ok_or_else(|| Error::Config(format!("unknown distribution scheme `{s}`")))
    }

    pub fn is_centralized(self) -> bool {
        matches!(self, Scheme::WStateCepd | Scheme::DpCepd)
    }

    /// Memory technology holding the distributed pair.
    pub fn memory(self) -> MemoryKind {
        match self {
            Scheme::WStateCepd => MemoryKind::Atomic,
            _ => MemoryKind::Optical,
        }
    }

    pub fn needs(self) -> ReservationNeeds {
        ReservationNeeds {
            endpoint_kind: self.memory(),
            controller_slots_per_segment: if self == Scheme::WStateCepd { 2 } else { 0 },
        }
    }

    /// Operations and photon transmissions of one successful segment.
    pub fn segment_counters(self) -> Counters {
        let (ops, photons) = match self {
            Scheme::WStateCepd => (5, 4),
            Scheme::DpCepd => (0, 2),
            Scheme::DepdSenderReceiver => (1, 2),
            Scheme::DepdMeetInMiddle => (3, 2),
            Scheme::DepdMidpointSource => (3, 4),
        };
        Counters { ops, photons }
    }

    /// Counters of a successful `segments`-long chain joined by swaps.
    pub fn chain_counters(self, segments: u32) -> Counters {
        let c = self.segment_counters();
        Counters {
            ops: c.ops * segments + segments.saturating_sub(1),
            photons: c.photons * segments,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What happens when the W-state conversion lands on the residual branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualPolicy {
    /// The conversion BSM is heralded: its success probability already
    /// covers the two-pair outcome, and the protocol continues on it.
    #[default]
    FoldIntoBsm,
    /// The residual outcome fails the attempt.
    Retry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub ops: u32,
    pub photons: u32,
}

impl AddAssign for Counters {
    fn add_assign(&mut self, o: Counters) {
        self.ops += o.ops;
        self.photons += o.photons;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Preparation,
    Transmission,
    Bsm,
    Residual,
    PhotonSwap,
    AtomSwap,
    MidpointBsm,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Preparation => "preparation",
            Stage::Transmission => "transmission",
            Stage::Bsm => "bsm",
            Stage::Residual => "residual",
            Stage::PhotonSwap => "photon-swap",
            Stage::AtomSwap => "atom-swap",
            Stage::MidpointBsm => "midpoint-bsm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionResult {
    pub success: bool,
    pub failed: Option<Stage>,
    pub counters: Counters,
    pub elapsed_ns: u64,
    /// Fidelity of the delivered pair at completion, before storage decay.
    pub fidelity: f64,
    /// Fidelity of the final pair in the statevector oracle, when run.
    pub oracle_fidelity: Option<f64>,
}

/// Latency model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub op_ns: u64,
    pub fiber_km_per_s: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            op_ns: DEFAULT_OP_NS,
            fiber_km_per_s: FIBER_KM_PER_S,
        }
    }
}

impl Timing {
    pub fn flight_ns(&self, km: f64) -> u64 {
        (km / self.fiber_km_per_s * 1e9).round() as u64
    }

    /// Latency of a successful segment under `scheme`.
    pub fn segment_ns(&self, scheme: Scheme, length_km: f64) -> u64 {
        let hop = self.flight_ns(length_km);
        let half = self.flight_ns(length_km / 2.0);
        let op = self.op_ns;
        match scheme {
            // photons out, BSM + photon swap, results in, atom swap, notify
            Scheme::WStateCepd => 3 * hop + 3 * op,
            // photons out, arrival confirmations in
            Scheme::DpCepd => 2 * hop,
            // prepare, photon across, acknowledgement back
            Scheme::DepdSenderReceiver => 2 * hop + op,
            // prepare, photons to midpoint, midpoint BSM, result back
            Scheme::DepdMeetInMiddle => 2 * half + 2 * op,
            // midpoint prepares, photons out, absorbing BSMs, confirmations
            Scheme::DepdMidpointSource => 2 * half + 2 * op,
        }
    }
}

/// Per-side stage probabilities of W-state distribution (side 0 and 1 are
/// the two endpoints).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WStateProbs {
    pub p_w: f64,
    pub p_qchannel: [f64; 2],
    pub p_bsm: [f64; 2],
    pub p_p_swap: [f64; 2],
    pub p_a_swap: f64,
}

impl From<ComponentProbs> for WStateProbs {
    fn from(c: ComponentProbs) -> Self {
        WStateProbs {
            p_w: c.p_w,
            p_qchannel: [c.p_qchannel; 2],
            p_bsm: [c.p_bsm; 2],
            p_p_swap: [c.p_p_swap; 2],
            p_a_swap: c.p_a_swap,
        }
    }
}

impl WStateProbs {
    pub fn success(&self) -> f64 {
        self.p_w.powi(2)
            * self.p_qchannel.iter().product::<f64>()
            * self.p_bsm.iter().product::<f64>()
            * self.p_p_swap.iter().product::<f64>()
            * self.p_a_swap
    }
}

/// Environment seen by one segment's distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentEnv {
    /// Preparation success constant of whichever device prepares.
    pub p_w: f64,
    /// Channel toward each endpoint (centralized) or the single link,
    /// repeated (distributed).
    pub channel: [EnvParams; 2],
    /// Operation success at each endpoint.
    pub endpoint_op: [f64; 2],
    /// Operation success at the controller or midpoint station.
    pub middle_op: f64,
}

impl SegmentEnv {
    pub fn perfect(length_km: f64) -> Self {
        let ch = EnvParams {
            length_km,
            ..EnvParams::noiseless()
        };
        SegmentEnv {
            p_w: 1.0,
            channel: [ch; 2],
            endpoint_op: [1.0; 2],
            middle_op: 1.0,
        }
    }

    pub fn length_km(&self) -> f64 {
        self.channel[0].length_km
    }

    fn survival(&self, side: usize, fraction: f64) -> f64 {
        let c = &self.channel[side];
        (1.0 - c.loss_init) * 10f64.powf(-c.loss_noise * c.length_km * fraction / 10.0)
    }

    pub fn wstate_probs(&self) -> WStateProbs {
        WStateProbs {
            p_w: self.p_w,
            p_qchannel: [self.survival(0, 1.0), self.survival(1, 1.0)],
            p_bsm: self.endpoint_op,
            p_p_swap: self.endpoint_op,
            p_a_swap: self.middle_op,
        }
    }

    /// Analytic success probability of one attempt.
    pub fn success_prob(&self, scheme: Scheme) -> f64 {
        match scheme {
            Scheme::WStateCepd => self.wstate_probs().success(),
            Scheme::DpCepd => self.p_w * self.survival(0, 1.0) * self.survival(1, 1.0),
            Scheme::DepdSenderReceiver => self.p_w * self.survival(0, 1.0),
            Scheme::DepdMeetInMiddle => {
                self.p_w.powi(2) * self.survival(0, 0.5) * self.survival(1, 0.5) * self.middle_op
            }
            Scheme::DepdMidpointSource => {
                self.p_w
                    * self.survival(0, 0.5)
                    * self.survival(1, 0.5)
                    * self.endpoint_op[0]
                    * self.endpoint_op[1]
            }
        }
    }
}

/// Runs stochastic stages in order, counting what was attempted.
struct Stages<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
    counters: Counters,
}

impl<R: Rng + ?Sized> Stages<'_, R> {
    fn try_stage(&mut self, p: f64, ops: u32, photons: u32) -> bool {
        self.counters.ops += ops;
        self.counters.photons += photons;
        self.rng.random::<f64>() < p
    }
}

fn finish(
    scheme: Scheme,
    env: &SegmentEnv,
    timing: &Timing,
    counters: Counters,
    failed: Option<Stage>,
    oracle_fidelity: Option<f64>,
) -> DistributionResult {
    let success = failed.is_none();
    DistributionResult {
        success,
        failed,
        counters,
        elapsed_ns: timing.segment_ns(scheme, env.length_km()),
        fidelity: if success { 1.0 } else { 0.0 },
        oracle_fidelity,
    }
}

/// W-state based centralized distribution of one segment: two W-state
/// preparations at the controller, atom-photon BSMs and photon swaps at the
/// endpoints, an atom swap at the controller.
pub fn wstate_cepd<R: Rng + ?Sized>(
    probs: &WStateProbs,
    env: &SegmentEnv,
    timing: &Timing,
    policy: ResidualPolicy,
    oracle: bool,
    rng: &mut R,
) -> Result<DistributionResult> {
    let mut s = Stages {
        rng,
        counters: Counters::default(),
    };
    let mut failed = None;
    // Step 1: both W states prepared, one photon per side must arrive.
    for side in 0..2 {
        if failed.is_none() && !s.try_stage(probs.p_w, 0, 0) {
            failed = Some(Stage::Preparation);
        }
        if failed.is_none() && !s.try_stage(probs.p_qchannel[side], 0, 2) {
            failed = Some(Stage::Transmission);
        }
    }
    // Step 2: conversion BSMs at the endpoints.
    let mut branches = [WBranch::TwoEpr; 2];
    for side in 0..2 {
        if failed.is_some() {
            break;
        }
        if !s.try_stage(probs.p_bsm[side], 1, 0) {
            failed = Some(Stage::Bsm);
        } else if policy == ResidualPolicy::Retry && s.rng.random::<f64>() >= 2.0 / 3.0 {
            branches[side] = WBranch::Residual;
            failed = Some(Stage::Residual);
        }
    }
    // Step 3: photon swaps at the endpoints.
    for side in 0..2 {
        if failed.is_none() && !s.try_stage(probs.p_p_swap[side], 1, 0) {
            failed = Some(Stage::PhotonSwap);
        }
    }
    // Step 4: atom swap at the controller.
    if failed.is_none() && !s.try_stage(probs.p_a_swap, 1, 0) {
        failed = Some(Stage::AtomSwap);
    }
    let oracle_fidelity = if oracle && failed.is_none() {
        Some(wstate_oracle(branches, s.rng)?)
    } else {
        None
    };
    Ok(finish(
        Scheme::WStateCepd,
        env,
        timing,
        s.counters,
        failed,
        oracle_fidelity,
    ))
}

/// Replay a successful W-state segment in the statevector kernel and return
/// the fidelity of the endpoint atoms to `|Φ+⟩`.
pub fn wstate_oracle<R: Rng + ?Sized>(branches: [WBranch; 2], rng: &mut R) -> KernelResult<f64> {
    let mut reg = StateRegister::with_labels(&[
        "a_x", "p1_x", "p2_x", "alc_x", "a_y", "p1_y", "p2_y", "alc_y",
    ])?;
    let q = |i| Qubit(i);
    let sides = [(q(0), q(1), q(2), q(3)), (q(4), q(5), q(6), q(7))];
    let mut atom_pairs = Vec::new();
    for (k, &(atom, p1, p2, alc)) in sides.iter().enumerate() {
        reg.prepare_w_state(p1, p2, alc)?;
        reg.project_w_conversion(&[p1, p2, alc], atom, branches[k])?;
        let left = BellPair::new(atom, p1, BellState::PhiPlus);
        let right = BellPair::new(p2, alc, BellState::PsiPlus);
        atom_pairs.push(reg.entanglement_swap(left, right, rng)?.pair);
    }
    let (x, y) = (atom_pairs[0], atom_pairs[1]);
    let joined = reg.entanglement_swap(
        BellPair::new(x.a, x.b, BellState::PhiPlus),
        BellPair::new(y.b, y.a, BellState::PhiPlus),
        rng,
    )?;
    reg.pair_fidelity(&joined.pair)
}

/// Double-photon centralized: the controller prepares a photon pair and
/// sends one photon to each endpoint.
pub fn double_photon_cepd<R: Rng + ?Sized>(
    env: &SegmentEnv,
    timing: &Timing,
    rng: &mut R,
) -> DistributionResult {
    let mut s = Stages {
        rng,
        counters: Counters::default(),
    };
    let mut failed = None;
    if !s.try_stage(env.p_w, 0, 0) {
        failed = Some(Stage::Preparation);
    }
    for side in 0..2 {
        if failed.is_none() && !s.try_stage(env.survival(side, 1.0), 0, 1) {
            failed = Some(Stage::Transmission);
        }
    }
    finish(Scheme::DpCepd, env, timing, s.counters, failed, None)
}

/// One repeater prepares and sends one photon of the pair to its neighbour.
pub fn depd_sender_receiver<R: Rng + ?Sized>(
    env: &SegmentEnv,
    timing: &Timing,
    rng: &mut R,
) -> DistributionResult {
    let mut s = Stages {
        rng,
        counters: Counters::default(),
    };
    let mut failed = None;
    if !s.try_stage(env.p_w, 1, 1) {
        failed = Some(Stage::Preparation);
    } else if !s.try_stage(env.survival(0, 1.0), 0, 1) {
        failed = Some(Stage::Transmission);
    }
    finish(Scheme::DepdSenderReceiver, env, timing, s.counters, failed, None)
}

/// Both repeaters send a photon to a midpoint station that swaps them.
pub fn depd_meet_in_middle<R: Rng + ?Sized>(
    env: &SegmentEnv,
    timing: &Timing,
    rng: &mut R,
) -> DistributionResult {
    let mut s = Stages {
        rng,
        counters: Counters::default(),
    };
    let mut failed = None;
    for side in 0..2 {
        if failed.is_none() && !s.try_stage(env.p_w, 1, 0) {
            failed = Some(Stage::Preparation);
        }
        if failed.is_none() && !s.try_stage(env.survival(side, 0.5), 0, 1) {
            failed = Some(Stage::Transmission);
        }
    }
    if failed.is_none() && !s.try_stage(env.middle_op, 1, 0) {
        failed = Some(Stage::MidpointBsm);
    }
    finish(Scheme::DepdMeetInMiddle, env, timing, s.counters, failed, None)
}

/// A midpoint source sends a photon to each repeater; each repeater moves
/// it into its atom with a local atom-photon pair and a BSM.
pub fn depd_midpoint_source<R: Rng + ?Sized>(
    env: &SegmentEnv,
    timing: &Timing,
    rng: &mut R,
) -> DistributionResult {
    let mut s = Stages {
        rng,
        counters: Counters::default(),
    };
    let mut failed = None;
    if !s.try_stage(env.p_w, 1, 0) {
        failed = Some(Stage::Preparation);
    }
    for side in 0..2 {
        if failed.is_none() && !s.try_stage(env.survival(side, 0.5), 0, 1) {
            failed = Some(Stage::Transmission);
        }
    }
    for side in 0..2 {
        if failed.is_none() && !s.try_stage(env.endpoint_op[side], 1, 1) {
            failed = Some(Stage::Bsm);
        }
    }
    finish(Scheme::DepdMidpointSource, env, timing, s.counters, failed, None)
}

/// Dispatch one segment attempt.
pub fn distribute<R: Rng + ?Sized>(
    scheme: Scheme,
    env: &SegmentEnv,
    timing: &Timing,
    policy: ResidualPolicy,
    rng: &mut R,
) -> DistributionResult {
    match scheme {
        Scheme::WStateCepd => wstate_cepd(&env.wstate_probs(), env, timing, policy, false, rng)
            .expect("oracle disabled"),
        Scheme::DpCepd => double_photon_cepd(env, timing, rng),
        Scheme::DepdSenderReceiver => depd_sender_receiver(env, timing, rng),
        Scheme::DepdMeetInMiddle => depd_meet_in_middle(env, timing, rng),
        Scheme::DepdMidpointSource => depd_midpoint_source(env, timing, rng),
    }
}

/// Outcome of distributing every segment of a chain and joining them with
/// swaps, as used for instrumented counter checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainResult {
    pub success: bool,
    pub counters: Counters,
}

/// Distribute each segment once, then swap at every junction (success
/// probability `swap_ops[i]` at junction `i`). Stops at the first failure.
pub fn run_chain<R: Rng + ?Sized>(
    scheme: Scheme,
    segments: &[SegmentEnv],
    swap_ops: &[f64],
    timing: &Timing,
    policy: ResidualPolicy,
    rng: &mut R,
) -> ChainResult {
    let mut counters = Counters::default();
    for env in segments {
        let r = distribute(scheme, env, timing, policy, rng);
        counters += r.counters;
        if !r.success {
            return ChainResult {
                success: false,
                counters,
            };
        }
    }
    for &p in swap_ops.iter().take(segments.len().saturating_sub(1)) {
        counters.ops += 1;
        if rng.random::<f64>() >= p {
            return ChainResult {
                success: false,
                counters,
            };
        }
    }
    ChainResult {
        success: true,
        counters,
    }
}
