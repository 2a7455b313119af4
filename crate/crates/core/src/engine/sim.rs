use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EngineConfig, RunReport, SessionState};
use crate::control::{CentralStateMatrix, CompletePath, SessionId, StageFlag};
use crate::distribution::{distribute, SegmentEnv, Stage};
use crate::error::{Error, Result};
use crate::kernel::chain_teleport_fidelity;
use crate::routing::{
    cer_choose, cer_route, greedy_route, qcast_route, slmp_route, Algorithm, PathMiddle,
    WORK_UNIT_MS,
};
use crate::topology::{build_dspt_dert, DeviceIdx, DeviceKind, Dert, Dspt, MemoryKind, Mode, Topology};

/// Processing delay added to every classical message.
const MESSAGE_PROCESSING_NS: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    RequestArrives,
    ReplyArrives { accept: bool },
    RouteDone,
    Reserved,
    Prepared,
    SegmentReady { seg: usize, created: u64 },
    DistributionTimer,
    Swap { k: usize },
    SwapsReported,
    TeleportBsm,
    Correction,
    SwapTimer,
}

impl EventKind {
    /// Quantum operations, which must not run once their timer expired.
    fn is_operation(self) -> bool {
        matches!(
            self,
            EventKind::SegmentReady { .. }
                | EventKind::Swap { .. }
                | EventKind::TeleportBsm
                | EventKind::Correction
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Event {
    time: u64,
    seq: u64,
    attempt: u64,
    device: DeviceIdx,
    kind: EventKind,
}

impl Ord for Event {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(o.time, o.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Seg {
    ready: Option<u64>,
    /// Werner parameter of the pair right after distribution.
    w0: f64,
}

struct Session {
    id: SessionId,
    src: DeviceIdx,
    dst: DeviceIdx,
    inter: bool,
    coordinator: DeviceIdx,
    state: SessionState,
    attempt: u64,
    retries: u32,
    reroutes: u32,
    src_mem: String,
    dst_mem: String,
    candidates: Vec<Vec<DeviceIdx>>,
    consumption: Option<u32>,
    route_ms: f64,
    predistributed_at: Option<u64>,
    path: Option<CompletePath>,
    segs: Vec<Seg>,
    deadline: Option<u64>,
    implicated: BTreeSet<DeviceIdx>,
    swap_time: Vec<u64>,
    op_factor: f64,
    bsm_time: Option<u64>,
    rng: ChaCha8Rng,
    route_rng: ChaCha8Rng,
    fault_rng: ChaCha8Rng,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub(super) struct Sim<'a> {
    t: &'a Topology,
    cfg: &'a EngineConfig,
    seed: u64,
    csm: CentralStateMatrix,
    tables: Option<(Dspt, Dert)>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: u64,
    distance: HashMap<(DeviceIdx, DeviceIdx), u64>,
    link_success: Vec<f64>,
    maintained: Vec<DeviceIdx>,
    report: RunReport,
}

impl<'a> Sim<'a> {
    pub(super) fn new(t: &'a Topology, cfg: &'a EngineConfig, seed: u64) -> Result<Self> {
        let tables = if cfg.algorithm == Algorithm::Cer && cfg.fixed_path.is_none() {
            if t.mode != Mode::Hierarchical {
                return Err(Error::Config("CER needs a hierarchical topology".into()));
            }
            Some(build_dspt_dert(t)?)
        } else {
            None
        };
        let link_success = t
            .quantum
            .iter()
            .map(|q| q.env.channel_success() * cfg.p_w)
            .collect();
        Ok(Sim {
            t,
            cfg,
            seed,
            csm: CentralStateMatrix::from_topology(t),
            tables,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            distance: HashMap::new(),
            link_success,
            maintained: Vec::new(),
            report: RunReport::default(),
        })
    }

    pub(super) fn run(mut self) -> Result<RunReport> {
        self.warmup()?;
        for i in 0..self.cfg.sessions {
            self.repair()?;
            self.run_session(i as SessionId)?;
        }
        self.report.metrics.elapsed_ns = self.now;
        Ok(self.report)
    }

    // ---- plumbing -------------------------------------------------------

    fn trace(&mut self, device: DeviceIdx, event: &str, detail: String) {
        if self.cfg.trace {
            let line = format!(
                "{:.6} | {} | {} | {}",
                self.now as f64 / 1e6,
                self.t.name(device),
                event,
                detail
            );
            self.report.trace.push(line);
        }
    }

    fn schedule(&mut self, s: &Session, at: u64, device: DeviceIdx, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Event {
            time: at,
            seq: self.seq,
            attempt: s.attempt,
            device,
            kind,
        }));
    }

    fn goto(&mut self, s: &mut Session, next: SessionState) {
        self.report.transitions.push((s.id, s.state, next));
        self.trace(
            s.coordinator,
            "state",
            format!("session={} {}->{}", s.id, s.state, next),
        );
        s.state = next;
    }

    fn distance_ns(&mut self, a: DeviceIdx, b: DeviceIdx) -> u64 {
        if a == b {
            return 0;
        }
        let key = (a.min(b), a.max(b));
        if let Some(&d) = self.distance.get(&key) {
            return d;
        }
        let km = self.t.classical_distance(a, b).unwrap_or_else(|| {
            let (pa, pb) = (self.t.devices[a].pos, self.t.devices[b].pos);
            ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt()
        });
        let d = self.cfg.timing.flight_ns(km);
        self.distance.insert(key, d);
        d
    }

    /// Classical message latency, with injected jitter.
    fn message(&mut self, s: &mut Session, a: DeviceIdx, b: DeviceIdx) -> u64 {
        let jitter = match self.cfg.faults.message_jitter_ns {
            0 => 0,
            j => s.fault_rng.random_range(0..=j),
        };
        self.distance_ns(a, b) + MESSAGE_PROCESSING_NS + jitter
    }

    /// Message between the two users through the session's coordinator.
    fn relay(&mut self, s: &mut Session, a: DeviceIdx, b: DeviceIdx) -> u64 {
        if s.coordinator == a || s.coordinator == b {
            return self.message(s, a, b);
        }
        let c = s.coordinator;
        self.message(s, a, c) + self.message(s, c, b)
    }

    fn nominal(&mut self, a: DeviceIdx, b: DeviceIdx) -> u64 {
        self.distance_ns(a, b) + MESSAGE_PROCESSING_NS
    }

    fn dephasing(&self, d: DeviceIdx) -> f64 {
        self.t.devices[d].env.dephasing_rate
    }

    /// Depolarizing rate per ns of the memory a pair is stored in.
    fn memory_rate(&self, d: DeviceIdx) -> f64 {
        let mut r = self.t.devices[d].env.depolarizing_rate / (self.cfg.depolarizing_unit_ms * 1e6);
        if self.cfg.scheme.memory() == MemoryKind::Atomic {
            r /= self.cfg.memory_ratio;
        }
        r
    }

    fn segment_env(&self, a: DeviceIdx, b: DeviceIdx) -> SegmentEnv {
        let links = self.t.segment_links(a, b);
        let ch0 = self.t.quantum[links[0]].env;
        let ch1 = links.get(1).map_or(ch0, |&l| self.t.quantum[l].env);
        let middle_op = self
            .t
            .segment_controller(a, b)
            .map_or(1.0, |c| 1.0 - self.dephasing(c));
        SegmentEnv {
            p_w: self.cfg.p_w,
            channel: [ch0, ch1],
            endpoint_op: [1.0 - self.dephasing(a), 1.0 - self.dephasing(b)],
            middle_op,
        }
    }

    /// Werner factor from the local operations of one distribution.
    fn distribution_factor(&self, a: DeviceIdx, b: DeviceIdx) -> f64 {
        use crate::distribution::Scheme::*;
        let op = |d: DeviceIdx| 1.0 - self.dephasing(d);
        let mid = self.t.segment_controller(a, b).map_or(1.0, op);
        match self.cfg.scheme {
            WStateCepd => op(a).powi(2) * op(b).powi(2) * mid,
            DpCepd => 1.0,
            DepdSenderReceiver => op(a),
            DepdMeetInMiddle => op(a) * op(b),
            DepdMidpointSource => op(a) * op(b),
        }
    }

    fn set_flag(&mut self, d: DeviceIdx, f: impl FnOnce(&mut crate::control::DeviceRecord)) {
        if let Ok(r) = self.csm.record_mut(self.t.name(d)) {
            f(r);
        }
    }

    // ---- run-level steps ------------------------------------------------

    /// Probe distributions and swaps so the state windows hold statistics
    /// before routing starts.
    fn warmup(&mut self) -> Result<()> {
        let mut rng = stream_rng(self.seed, 0);
        let relays: Vec<DeviceIdx> = (0..self.t.devices.len())
            .filter(|&i| {
                let k = self.t.devices[i].kind;
                k == DeviceKind::User || k.is_repeater()
            })
            .collect();
        for _ in 0..self.cfg.warmup_rounds {
            for &u in &relays {
                for v in self.t.segment_neighbors(u) {
                    if v < u || !relays.contains(&v) {
                        continue;
                    }
                    let p = self.segment_env(u, v).success_prob(self.cfg.scheme);
                    let ok = rng.random::<f64>() < p;
                    self.csm.update_link_state(self.t.name(u), ok)?;
                    self.csm.update_link_state(self.t.name(v), ok)?;
                }
            }
            for &r in &relays {
                if self.t.devices[r].kind.is_repeater() {
                    let ok = rng.random::<f64>() < 1.0 - self.dephasing(r);
                    self.csm.update_swap_rate(self.t.name(r), ok)?;
                }
            }
        }
        Ok(())
    }

    /// Devices put into maintenance come back before the next session.
    fn repair(&mut self) -> Result<()> {
        for d in std::mem::take(&mut self.maintained) {
            self.csm.mark_normal(self.t.name(d))?;
            self.trace(d, "repaired", String::new());
        }
        Ok(())
    }

    fn run_session(&mut self, id: SessionId) -> Result<()> {
        let pair = &self.cfg.pairs[id as usize % self.cfg.pairs.len()];
        let (src, dst) = (self.t.idx(&pair.0)?, self.t.idx(&pair.1)?);
        let intra = self.t.mode == Mode::Hierarchical && self.t.can_segment(src, dst);
        let coordinator = match self.t.mode {
            Mode::Hierarchical if intra => self.t.segment_controller(src, dst).unwrap_or(src),
            Mode::Hierarchical => self
                .t
                .central_controller()
                .or_else(|| self.t.segment_controller(src, src))
                .unwrap_or(src),
            Mode::Distributed => src,
        };
        let mut s = Session {
            id,
            src,
            dst,
            inter: !intra,
            coordinator,
            state: SessionState::Requested,
            attempt: 0,
            retries: 0,
            reroutes: 0,
            src_mem: String::new(),
            dst_mem: String::new(),
            candidates: Vec::new(),
            consumption: None,
            route_ms: 0.0,
            predistributed_at: None,
            path: None,
            segs: Vec::new(),
            deadline: None,
            implicated: BTreeSet::new(),
            swap_time: Vec::new(),
            op_factor: 1.0,
            bsm_time: None,
            rng: stream_rng(self.seed, 3 * id + 1),
            route_rng: stream_rng(self.seed, 3 * id + 2),
            fault_rng: stream_rng(self.seed, 3 * id + 3),
        };
        self.trace(
            src,
            "request",
            format!("session={id} dst={}", self.t.name(dst)),
        );
        let at = self.now + self.relay(&mut s, src, dst);
        self.schedule(&s, at, dst, EventKind::RequestArrives);
        while let Some(Reverse(ev)) = self.queue.pop() {
            self.now = ev.time;
            if ev.attempt != s.attempt {
                continue;
            }
            if ev.kind.is_operation() && s.deadline.is_some_and(|d| ev.time > d) {
                self.report.timer_violations += 1;
            }
            self.handle(&mut s, ev)?;
            if s.state.is_terminal() {
                break;
            }
        }
        self.queue.clear();
        if !s.state.is_terminal() {
            self.report.metrics.fail("stalled");
            self.fail(&mut s, "stalled")?;
        }
        Ok(())
    }

    fn handle(&mut self, s: &mut Session, ev: Event) -> Result<()> {
        match ev.kind {
            EventKind::RequestArrives => {
                let kind = self.cfg.scheme.memory();
                let reject = s.fault_rng.random::<f64>() < self.cfg.faults.reject;
                let accept = !reject && self.csm.idle_memories(self.t.name(s.dst), kind) > 0;
                if accept {
                    s.dst_mem = self.csm.reserve_one(self.t.name(s.dst), kind, s.id)?;
                }
                self.trace(s.dst, "reply", format!("session={} accept={accept}", s.id));
                let at = self.now + self.relay(s, s.dst, s.src);
                self.schedule(s, at, s.src, EventKind::ReplyArrives { accept });
            }
            EventKind::ReplyArrives { accept } => {
                let kind = self.cfg.scheme.memory();
                if !accept || self.csm.idle_memories(self.t.name(s.src), kind) == 0 {
                    self.report.metrics.fail("rejected");
                    return self.fail(s, "rejected");
                }
                s.src_mem = self.csm.reserve_one(self.t.name(s.src), kind, s.id)?;
                if s.inter {
                    self.begin_routing(s)?;
                } else {
                    s.candidates = vec![vec![s.src, s.dst]];
                    s.consumption = Some(1);
                    if !self.reserve(s)? {
                        self.report.metrics.fail("reservation");
                        return self.fail(s, "reservation");
                    }
                    self.begin_preparing(s, false)?;
                }
            }
            EventKind::RouteDone => {
                self.goto(s, SessionState::Reserving);
                if !self.reserve(s)? {
                    self.report.metrics.fail("reservation");
                    return self.fail(s, "reservation");
                }
                let path = s.path.as_ref().expect("reserved");
                let controllers: Vec<DeviceIdx> = match self.t.mode {
                    Mode::Hierarchical => path.segments.iter().filter_map(|g| g.controller).collect(),
                    Mode::Distributed => path.devices.clone(),
                };
                let mut rtt = 0;
                for c in controllers {
                    rtt = rtt.max(2 * self.message(s, s.coordinator, c));
                }
                self.schedule(s, self.now + rtt, s.coordinator, EventKind::Reserved);
            }
            EventKind::Reserved => self.begin_preparing(s, false)?,
            EventKind::Prepared => self.begin_distributing(s)?,
            EventKind::SegmentReady { seg, created } => {
                s.segs[seg].ready = Some(created);
                let g = s.path.as_ref().expect("path").segments[seg].clone();
                self.csm.set_pair(self.t, &g)?;
                self.trace(
                    g.left,
                    "pair-ready",
                    format!("session={} with={}", s.id, self.t.name(g.right)),
                );
                if s.segs.iter().all(|g| g.ready.is_some()) {
                    self.begin_swapping(s)?;
                }
            }
            EventKind::DistributionTimer => {
                if s.state == SessionState::Distributing {
                    self.trace(s.coordinator, "t_d-expired", format!("session={}", s.id));
                    self.on_failure(s, "distribution-timeout")?;
                }
            }
            EventKind::Swap { k } => self.swap(s, k)?,
            EventKind::SwapsReported => {
                self.goto(s, SessionState::Teleporting);
                let mut at = self.now + self.cfg.timing.op_ns;
                if s.fault_rng.random::<f64>() < self.cfg.faults.teleport_stall {
                    at += self.st_timer(s);
                }
                self.schedule(s, at, s.src, EventKind::TeleportBsm);
            }
            EventKind::TeleportBsm => {
                let d = self.dephasing(s.src);
                let ok = s.rng.random::<f64>() < 1.0 - d;
                self.trace(s.src, "teleport-bsm", format!("session={} ok={ok}", s.id));
                if !ok {
                    self.set_flag(s.src, |r| r.teleportation = StageFlag::Failure);
                    self.report.metrics.fail("teleport-bsm");
                    return self.fail(s, "teleport-bsm");
                }
                s.op_factor *= 1.0 - d;
                s.bsm_time = Some(self.now);
                let at = self.now + self.relay(s, s.src, s.dst) + self.cfg.timing.op_ns;
                self.schedule(s, at, s.dst, EventKind::Correction);
            }
            EventKind::Correction => {
                let d = self.dephasing(s.dst);
                let ok = s.rng.random::<f64>() < 1.0 - d;
                self.trace(s.dst, "correction", format!("session={} ok={ok}", s.id));
                if !ok {
                    self.set_flag(s.dst, |r| r.teleportation = StageFlag::Failure);
                    self.report.metrics.fail("correction");
                    return self.fail(s, "the target qubit has been broken");
                }
                s.op_factor *= 1.0 - d;
                self.succeed(s)?;
            }
            EventKind::SwapTimer => {
                if matches!(s.state, SessionState::Swapping | SessionState::Teleporting) {
                    self.trace(s.coordinator, "t_st-expired", format!("session={}", s.id));
                    if s.bsm_time.is_some() {
                        self.report.metrics.fail("teleport-timeout");
                        return self.fail(s, "teleport-timeout");
                    }
                    self.on_failure(s, "swap-timeout")?;
                }
            }
        }
        Ok(())
    }
}

impl Sim<'_> {
    // ---- stages -----------------------------------------------------------

    fn begin_routing(&mut self, s: &mut Session) -> Result<()> {
        self.goto(s, SessionState::Routing);
        let t = self.t;
        let routed: Result<(Vec<Vec<DeviceIdx>>, u32, u64, bool)> =
            if let Some(fixed) = &self.cfg.fixed_path {
                let devs = fixed.iter().map(|n| t.idx(n)).collect::<Result<Vec<_>>>()?;
                let p = PathMiddle::new(devs.clone());
                if !p.is_valid(t, s.src, s.dst) {
                    return Err(Error::Config(format!(
                        "fixed path {} does not join {} and {}",
                        p.render(t),
                        t.name(s.src),
                        t.name(s.dst)
                    )));
                }
                Ok((vec![devs], p.segments() as u32, 0, false))
            } else {
                let csm = &self.csm;
                let one = |o: crate::routing::RouteOutcome| {
                    (vec![o.path.devices], o.consumption, o.work, o.predistributed)
                };
                match self.cfg.algorithm {
                    Algorithm::Greedy => greedy_route(t, Some(csm), s.src, s.dst).map(one),
                    Algorithm::Slmp => slmp_route(
                        t,
                        Some(csm),
                        &self.link_success,
                        s.src,
                        s.dst,
                        &mut s.route_rng,
                    )
                    .map(one),
                    Algorithm::QCast => {
                        qcast_route(t, csm, &self.link_success, s.src, s.dst, &mut s.route_rng)
                            .map(one)
                    }
                    Algorithm::Cer => {
                        let (dspt, dert) = self.tables.as_ref().expect("tables built for CER");
                        let mut work = 0;
                        cer_route(t, csm, dspt, dert, s.src, s.dst, self.cfg.recursion, &mut work)
                            .map(|list| {
                                let pick = cer_choose(&list, self.cfg.score_tolerance).unwrap_or(0);
                                let consumption = list[pick].path.segments() as u32;
                                let mut order = vec![list[pick].path.devices.clone()];
                                order.extend(
                                    list.iter()
                                        .enumerate()
                                        .filter(|&(i, _)| i != pick)
                                        .map(|(_, p)| p.path.devices.clone()),
                                );
                                (order, consumption, work, false)
                            })
                    }
                }
            };
        match routed {
            Err(_) => {
                self.report.metrics.fail("no-path");
                self.fail(s, "no-path")
            }
            Ok((candidates, consumption, work, predistributed)) => {
                let ms = work as f64 * WORK_UNIT_MS;
                s.route_ms += ms;
                s.consumption = Some(consumption);
                // A global distribution round runs on every link in parallel
                // before the route is computed over the survivors.
                let mut round = 0;
                if predistributed {
                    round = t
                        .quantum
                        .iter()
                        .map(|q| self.cfg.timing.segment_ns(self.cfg.scheme, q.env.length_km))
                        .max()
                        .unwrap_or(0);
                    s.predistributed_at = Some(self.now + round);
                }
                let names = PathMiddle::new(candidates[0].clone()).render(t);
                self.trace(
                    s.coordinator,
                    "route",
                    format!("session={} {} path={names}", s.id, self.cfg.algorithm.name()),
                );
                s.candidates = candidates;
                let at = self.now + round + (ms * 1e6).round() as u64;
                self.schedule(s, at, s.coordinator, EventKind::RouteDone);
                Ok(())
            }
        }
    }

    /// Reserve memories along the first candidate that has them.
    fn reserve(&mut self, s: &mut Session) -> Result<bool> {
        let needs = self.cfg.scheme.needs();
        for devs in s.candidates.clone() {
            match self
                .csm
                .reserve_memories(self.t, &devs, &s.src_mem, &s.dst_mem, needs, s.id)
            {
                Ok(cp) => {
                    let text = cp.render(self.t);
                    self.trace(s.coordinator, "reserved", format!("session={} {text}", s.id));
                    s.segs = vec![Seg::default(); cp.segments.len()];
                    s.path = Some(cp);
                    return Ok(true);
                }
                Err(Error::ReservationFailure { .. }) | Err(Error::Topology(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(false)
    }

    fn begin_preparing(&mut self, s: &mut Session, keep_ready: bool) -> Result<()> {
        self.goto(s, SessionState::Preparing);
        s.deadline = None;
        s.swap_time.clear();
        s.op_factor = 1.0;
        s.bsm_time = None;
        let path = s.path.clone().expect("reserved path");
        let mut instr = 0;
        for (k, g) in path.segments.iter().enumerate() {
            if keep_ready && s.segs[k].ready.is_some() {
                continue;
            }
            s.segs[k] = Seg::default();
            self.csm.clear_pair(self.t, g)?;
            let preparer = g.controller.unwrap_or(g.left);
            self.set_flag(preparer, |r| r.preparation = StageFlag::Running);
            instr = instr.max(self.message(s, s.coordinator, preparer));
        }
        let at = self.now + instr + self.cfg.timing.op_ns;
        self.schedule(s, at, s.coordinator, EventKind::Prepared);
        Ok(())
    }

    fn begin_distributing(&mut self, s: &mut Session) -> Result<()> {
        self.goto(s, SessionState::Distributing);
        let path = s.path.clone().expect("reserved path");
        let mut expected = 0;
        for g in &path.segments {
            let len = self.segment_env(g.left, g.right).length_km();
            let notify = self.nominal(g.controller.unwrap_or(g.left), s.coordinator);
            expected = expected.max(self.cfg.timing.segment_ns(self.cfg.scheme, len) + notify);
        }
        let deadline = self.now + 3 * expected;
        s.deadline = Some(deadline);
        self.schedule(s, deadline, s.coordinator, EventKind::DistributionTimer);
        let predistributed = s.predistributed_at.take();
        for (k, g) in path.segments.iter().enumerate() {
            if s.segs[k].ready.is_some() {
                continue;
            }
            let preparer = g.controller.unwrap_or(g.left);
            self.set_flag(preparer, |r| r.preparation = StageFlag::Success);
            if let Some(at) = predistributed {
                s.segs[k].w0 = self.distribution_factor(g.left, g.right);
                self.schedule(s, self.now, g.left, EventKind::SegmentReady { seg: k, created: at });
                continue;
            }
            let env = self.segment_env(g.left, g.right);
            let r = distribute(
                self.cfg.scheme,
                &env,
                &self.cfg.timing,
                self.cfg.residual_policy,
                &mut s.rng,
            );
            let outage = s.fault_rng.random::<f64>() < self.cfg.faults.channel_outage;
            let ok = r.success && !outage;
            let flag = if ok { StageFlag::Success } else { StageFlag::Failure };
            for d in [g.left, g.right] {
                self.csm.update_link_state(self.t.name(d), ok)?;
                self.set_flag(d, |r| r.distribution = flag);
            }
            if ok {
                s.segs[k].w0 = self.distribution_factor(g.left, g.right);
                let created = self.now + r.elapsed_ns;
                let at = created + self.message(s, preparer, s.coordinator);
                self.schedule(s, at, g.left, EventKind::SegmentReady { seg: k, created });
            } else {
                let stage = if outage {
                    Stage::Transmission
                } else {
                    r.failed.unwrap_or(Stage::Transmission)
                };
                let blamed: Vec<DeviceIdx> = if stage == Stage::Preparation {
                    vec![preparer]
                } else {
                    vec![g.left, g.right]
                };
                for d in blamed {
                    if self.t.devices[d].kind != DeviceKind::User {
                        s.implicated.insert(d);
                    }
                }
                self.trace(
                    preparer,
                    "distribution-failed",
                    format!("session={} with={} stage={stage}", s.id, self.t.name(g.right)),
                );
            }
        }
        Ok(())
    }

    /// Swapping & teleportation timer: twice the expected latency of both
    /// stages.
    fn st_timer(&mut self, s: &Session) -> u64 {
        let path = s.path.as_ref().expect("path");
        let interior = &path.devices[1..path.devices.len() - 1];
        let op = self.cfg.timing.op_ns;
        let mut instr = 0;
        let mut report = 0;
        for &r in interior {
            instr = instr.max(self.nominal(s.coordinator, r));
            report = report.max(self.nominal(r, s.dst));
        }
        let relay = if s.coordinator == s.src || s.coordinator == s.dst {
            self.nominal(s.src, s.dst)
        } else {
            self.nominal(s.src, s.coordinator) + self.nominal(s.coordinator, s.dst)
        };
        let expected = instr + interior.len() as u64 * op + report + op + relay + op;
        2 * expected
    }

    fn swap_delay(&mut self, s: &mut Session) -> u64 {
        let mut at = self.cfg.timing.op_ns;
        if s.fault_rng.random::<f64>() < self.cfg.faults.swap_stall {
            at += self.st_timer(s);
        }
        at
    }

    fn begin_swapping(&mut self, s: &mut Session) -> Result<()> {
        self.goto(s, SessionState::Swapping);
        let deadline = self.now + self.st_timer(s);
        s.deadline = Some(deadline);
        self.schedule(s, deadline, s.coordinator, EventKind::SwapTimer);
        let devices = s.path.as_ref().expect("path").devices.clone();
        let interior = &devices[1..devices.len() - 1];
        s.swap_time = vec![0; interior.len()];
        if interior.is_empty() {
            self.schedule(s, self.now, s.src, EventKind::SwapsReported);
            return Ok(());
        }
        let mut instr = 0;
        for &r in interior {
            instr = instr.max(self.message(s, s.coordinator, r));
        }
        let at = self.now + instr + self.swap_delay(s);
        self.schedule(s, at, interior[0], EventKind::Swap { k: 0 });
        Ok(())
    }

    fn swap(&mut self, s: &mut Session, k: usize) -> Result<()> {
        let devices = s.path.as_ref().expect("path").devices.clone();
        let interior = &devices[1..devices.len() - 1];
        let rep = interior[k];
        let d = self.dephasing(rep);
        let ok = s.rng.random::<f64>() < 1.0 - d;
        self.csm.update_swap_rate(self.t.name(rep), ok)?;
        let flag = if ok { StageFlag::Success } else { StageFlag::Failure };
        self.set_flag(rep, |r| r.swapping = flag);
        self.trace(rep, "swap", format!("session={} ok={ok}", s.id));
        if !ok {
            s.implicated.insert(rep);
            return self.on_failure(s, "swap");
        }
        s.swap_time[k] = self.now;
        s.op_factor *= 1.0 - d;
        if k + 1 < interior.len() {
            let at = self.now + self.swap_delay(s);
            self.schedule(s, at, interior[k + 1], EventKind::Swap { k: k + 1 });
        } else {
            let mut report = 0;
            for &r in interior {
                report = report.max(self.message(s, r, s.dst));
            }
            self.schedule(s, self.now + report, s.dst, EventKind::SwapsReported);
        }
        Ok(())
    }

    // ---- error control and completion -----------------------------------

    fn on_failure(&mut self, s: &mut Session, cause: &str) -> Result<()> {
        self.report.metrics.fail(cause);
        self.report.metrics.retries += 1;
        s.attempt += 1;
        s.deadline = None;
        s.retries += 1;
        self.trace(
            s.coordinator,
            "retry",
            format!("session={} cause={cause} retries={}", s.id, s.retries),
        );
        if s.retries <= self.cfg.retry_limit {
            return self.begin_preparing(s, cause == "distribution-timeout");
        }
        for d in std::mem::take(&mut s.implicated) {
            self.csm.mark_maintain(self.t.name(d))?;
            self.maintained.push(d);
            self.trace(d, "maintain", format!("session={}", s.id));
        }
        self.release_path(s)?;
        if s.inter && s.reroutes < self.cfg.max_reroutes {
            s.reroutes += 1;
            s.retries = 0;
            self.report.metrics.reroutes += 1;
            self.begin_routing(s)
        } else {
            self.fail(s, cause)
        }
    }

    /// Drop the path's memories but keep the two user memories.
    fn release_path(&mut self, s: &mut Session) -> Result<()> {
        self.csm.release_memories(s.id);
        let kind = self.cfg.scheme.memory();
        s.src_mem = self.csm.reserve_one(self.t.name(s.src), kind, s.id)?;
        s.dst_mem = self.csm.reserve_one(self.t.name(s.dst), kind, s.id)?;
        s.path = None;
        s.segs.clear();
        Ok(())
    }

    fn fail(&mut self, s: &mut Session, reason: &str) -> Result<()> {
        s.attempt += 1;
        s.deadline = None;
        self.goto(s, SessionState::Failed);
        self.trace(s.coordinator, "failed", format!("session={} reason={reason}", s.id));
        self.finish(s, 0.0);
        Ok(())
    }

    /// Werner parameter of the delivered state: every stored qubit decays
    /// from its pair's creation until it is measured, and every operation
    /// that touched the chain leaves its dephasing factor.
    fn delivered_fidelity(&self, s: &Session) -> f64 {
        let path = s.path.as_ref().expect("path");
        let devs = &path.devices;
        let n = s.segs.len();
        let bsm = s.bsm_time.expect("teleported");
        let mut w = s.op_factor;
        let mut x = 0.0;
        for (k, seg) in s.segs.iter().enumerate() {
            let c = seg.ready.expect("distributed");
            w *= seg.w0;
            let left_end = if k == 0 { bsm } else { s.swap_time[k - 1] };
            let right_end = if k + 1 == n { self.now } else { s.swap_time[k] };
            x += self.memory_rate(devs[k]) * left_end.saturating_sub(c) as f64;
            x += self.memory_rate(devs[k + 1]) * right_end.saturating_sub(c) as f64;
        }
        (1.0 + w * (-x).exp()) / 2.0
    }

    fn succeed(&mut self, s: &mut Session) -> Result<()> {
        let f = self.delivered_fidelity(s);
        for d in [s.src, s.dst] {
            self.set_flag(d, |r| r.teleportation = StageFlag::Success);
        }
        self.goto(s, SessionState::Succeeded);
        self.trace(s.dst, "delivered", format!("session={} fidelity={f:.6}", s.id));
        let hops = s.path.as_ref().expect("path").devices.len() - 2;
        self.report.metrics.successes += 1;
        self.report.metrics.hops.push(hops);
        if self.cfg.kernel_oracle {
            let mut rng = stream_rng(self.seed, u64::MAX - s.id);
            let theta = rng.random::<f64>() * PI;
            let phi = rng.random::<f64>() * 2.0 * PI;
            let alpha = Complex64::new((theta / 2.0).cos(), 0.0);
            let beta = Complex64::from_polar((theta / 2.0).sin(), phi);
            if let Ok(k) = chain_teleport_fidelity(hops, alpha, beta, &mut rng) {
                self.report.metrics.oracle_fidelity.push(k);
            }
        }
        self.finish(s, f);
        Ok(())
    }

    fn finish(&mut self, s: &mut Session, fidelity: f64) {
        self.csm.release_memories(s.id);
        let left = self.csm.occupied();
        if left > 0 {
            self.report.leaked_memories += left as u64;
        }
        let m = &mut self.report.metrics;
        m.sessions += 1;
        m.fidelity.push(fidelity);
        if let Some(c) = s.consumption {
            m.pairs_consumed.push(c);
        }
        if s.inter && s.consumption.is_some() {
            m.route_time_ms.push(s.route_ms);
        }
    }
}
