//! Path selection: centralized entanglement routing over the state matrix,
//! and three hop-count baselines.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

use crate::control::CentralStateMatrix;
use crate::error::{Error, Result};
use crate::topology::{Dert, DeviceIdx, Dspt, Topology};

pub const SWAP_RATE_WEIGHT: f64 = 0.3;
pub const LINK_STATE_WEIGHT: f64 = 0.7;
pub const DEFAULT_RECURSION: usize = 2;

/// Simulated cost of one unit of routing work, in milliseconds.
pub const WORK_UNIT_MS: f64 = 1e-4;

/// Device sequence from source to destination user, plus the user memories
/// recorded at request time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathMiddle {
    pub devices: Vec<DeviceIdx>,
    pub src_memory: Option<String>,
    pub dst_memory: Option<String>,
}

impl PathMiddle {
    pub fn new(devices: Vec<DeviceIdx>) -> Self {
        PathMiddle {
            devices,
            src_memory: None,
            dst_memory: None,
        }
    }

    pub fn segments(&self) -> usize {
        self.devices.len().saturating_sub(1)
    }

    /// Number of relaying devices.
    pub fn repeater_hops(&self) -> usize {
        self.devices.len().saturating_sub(2)
    }

    pub fn interior(&self) -> &[DeviceIdx] {
        if self.devices.len() < 2 {
            &[]
        } else {
            &self.devices[1..self.devices.len() - 1]
        }
    }

    pub fn names(&self, t: &Topology) -> Vec<String> {
        self.devices.iter().map(|&d| t.name(d).to_string()).collect()
    }

    /// `U_A[LC_A,um_1] -> R_A_B[LC_A,LC_B] -> … -> U_I[LC_I,um_1]`
    pub fn render(&self, t: &Topology) -> String {
        let n = self.devices.len();
        let mut parts = Vec::with_capacity(n);
        for (i, &d) in self.devices.iter().enumerate() {
            let mut inner = Vec::new();
            if i > 0 {
                if let Some(c) = t.segment_controller(self.devices[i - 1], d) {
                    inner.push(t.name(c).to_string());
                }
            }
            if i + 1 < n {
                if let Some(c) = t.segment_controller(d, self.devices[i + 1]) {
                    inner.push(t.name(c).to_string());
                }
            }
            let mem = if i == 0 {
                self.src_memory.as_ref()
            } else if i + 1 == n {
                self.dst_memory.as_ref()
            } else {
                None
            };
            inner.extend(mem.cloned());
            if inner.is_empty() {
                parts.push(t.name(d).to_string());
            } else {
                parts.push(format!("{}[{}]", t.name(d), inner.join(",")));
            }
        }
        parts.join(" -> ")
    }

    /// Endpoints correct, consecutive devices can share a pair, interior
    /// devices are distinct repeaters.
    pub fn is_valid(&self, t: &Topology, src: DeviceIdx, dst: DeviceIdx) -> bool {
        if self.devices.first() != Some(&src) || self.devices.last() != Some(&dst) {
            return false;
        }
        let distinct: BTreeSet<_> = self.devices.iter().collect();
        distinct.len() == self.devices.len()
            && self.interior().iter().all(|&d| t.devices[d].kind.is_repeater())
            && self.devices.windows(2).all(|w| t.can_segment(w[0], w[1]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPath {
    pub path: PathMiddle,
    pub score: f64,
    /// Repeater hops.
    pub hops: usize,
}

pub fn score_repeater(swap_rate: f64, link_state: f64) -> f64 {
    SWAP_RATE_WEIGHT * swap_rate + LINK_STATE_WEIGHT * link_state
}

/// Mean repeater score along the path (1.0 with no repeaters).
pub fn score_path(t: &Topology, csm: &CentralStateMatrix, path: &PathMiddle) -> f64 {
    let hops = path.repeater_hops();
    if hops == 0 {
        return 1.0;
    }
    let sum: f64 = path
        .interior()
        .iter()
        .map(|&d| {
            let n = t.name(d);
            score_repeater(csm.swap_rate(n), csm.link_state(n))
        })
        .sum();
    sum / hops as f64
}

/// Whether some three consecutive devices all belong to one domain.
pub fn has_same_domain_triple(t: &Topology, path: &PathMiddle) -> bool {
    path.devices.windows(3).any(|w| {
        t.devices[w[0]]
            .domains
            .iter()
            .any(|d| t.devices[w[1]].in_domain(d) && t.devices[w[2]].in_domain(d))
    })
}

/// Which algorithm picks the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Cer,
    Greedy,
    QCast,
    Slmp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Cer,
        Algorithm::Greedy,
        Algorithm::QCast,
        Algorithm::Slmp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cer => "cer",
            Algorithm::Greedy => "greedy",
            Algorithm::QCast => "qcast",
            Algorithm::Slmp => "slmp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown routing algorithm `{s}`")))
    }
}

/// Result of one routing call.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteOutcome {
    pub path: PathMiddle,
    /// Entanglement pairs the algorithm's plan consumes.
    pub consumption: u32,
    /// Abstract work units spent; see [`WORK_UNIT_MS`].
    pub work: u64,
    /// Segments whose pair was already distributed while routing.
    pub predistributed: bool,
}

impl RouteOutcome {
    pub fn route_time_ms(&self) -> f64 {
        self.work as f64 * WORK_UNIT_MS
    }
}

fn no_path(t: &Topology, src: DeviceIdx, dst: DeviceIdx) -> Error {
    Error::NoPathFound {
        src: t.name(src).to_string(),
        dst: t.name(dst).to_string(),
    }
}

/// Minimum-segment path by BFS with name-ordered tie-breaking. Only
/// repeaters relay; `usable` filters relays, `segment_ok` filters segments.
pub fn bfs_path(
    t: &Topology,
    src: DeviceIdx,
    dst: DeviceIdx,
    usable: &dyn Fn(DeviceIdx) -> bool,
    segment_ok: &dyn Fn(DeviceIdx, DeviceIdx) -> bool,
    work: &mut u64,
) -> Option<Vec<DeviceIdx>> {
    if src == dst {
        return Some(Vec::new());
    }
    let mut parent = vec![usize::MAX; t.devices.len()];
    let mut seen = vec![false; t.devices.len()];
    seen[src] = true;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for v in t.segment_neighbors(u) {
            *work += 1;
            if seen[v] || !segment_ok(u, v) {
                continue;
            }
            if v == dst {
                let mut path = vec![dst, u];
                let mut cur = u;
                while cur != src {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            if t.devices[v].kind.is_repeater() && usable(v) {
                seen[v] = true;
                parent[v] = u;
                q.push_back(v);
            }
        }
    }
    None
}

fn available<'a>(
    t: &'a Topology,
    csm: Option<&'a CentralStateMatrix>,
) -> impl Fn(DeviceIdx) -> bool + 'a {
    move |d| csm.is_none_or(|c| c.is_available(t.name(d)))
}

/// Shortest path ignoring all state except devices under maintenance.
pub fn greedy_route(
    t: &Topology,
    csm: Option<&CentralStateMatrix>,
    src: DeviceIdx,
    dst: DeviceIdx,
) -> Result<RouteOutcome> {
    let mut work = 0;
    let usable = available(t, csm);
    let devices = bfs_path(t, src, dst, &usable, &|_, _| true, &mut work)
        .ok_or_else(|| no_path(t, src, dst))?;
    let path = PathMiddle::new(devices);
    Ok(RouteOutcome {
        consumption: path.segments() as u32,
        path,
        work,
        predistributed: false,
    })
}

/// Distribute on every quantum link first, then route over the links that
/// succeeded. `link_success[i]` is the success probability of link `i`.
pub fn slmp_route<R: Rng + ?Sized>(
    t: &Topology,
    csm: Option<&CentralStateMatrix>,
    link_success: &[f64],
    src: DeviceIdx,
    dst: DeviceIdx,
    rng: &mut R,
) -> Result<RouteOutcome> {
    let ok: Vec<bool> = link_success.iter().map(|&p| rng.random::<f64>() < p).collect();
    slmp_route_with(t, csm, &ok, src, dst)
}

/// SLMP with a fixed link-outcome vector.
pub fn slmp_route_with(
    t: &Topology,
    csm: Option<&CentralStateMatrix>,
    link_ok: &[bool],
    src: DeviceIdx,
    dst: DeviceIdx,
) -> Result<RouteOutcome> {
    let mut work = 0;
    let usable = available(t, csm);
    let seg_ok = |a: DeviceIdx, b: DeviceIdx| {
        let links = t.segment_links(a, b);
        !links.is_empty() && links.iter().all(|&l| link_ok[l])
    };
    let devices =
        bfs_path(t, src, dst, &usable, &seg_ok, &mut work).ok_or_else(|| no_path(t, src, dst))?;
    // Global distribution dominates: every link is attempted and reported.
    work += GLOBAL_DISTRIBUTION_WORK_PER_LINK * link_ok.len() as u64;
    Ok(RouteOutcome {
        path: PathMiddle::new(devices),
        consumption: link_ok.len() as u32,
        work,
        predistributed: true,
    })
}

/// Work charged per link for SLMP's global distribution round.
pub const GLOBAL_DISTRIBUTION_WORK_PER_LINK: u64 = 1000;

/// Primary path plus a precomputed detour per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct QCastPlan {
    pub primary: PathMiddle,
    /// Detour for segment `i` (from `primary[i]` to `primary[i+1]`), if any.
    pub recovery: Vec<Option<Vec<DeviceIdx>>>,
    pub work: u64,
}

/// Memory-aware minimum-hop primary path with per-segment recovery detours.
pub fn qcast_plan(
    t: &Topology,
    csm: &CentralStateMatrix,
    src: DeviceIdx,
    dst: DeviceIdx,
) -> Result<QCastPlan> {
    let mut work = 0;
    let usable = |d: DeviceIdx| {
        let n = t.name(d);
        let free: usize = t.devices[d]
            .memories
            .iter()
            .collect::<BTreeSet<_>>()
            .iter()
            .map(|&&k| csm.idle_memories(n, k))
            .max()
            .unwrap_or(0);
        csm.is_available(n) && free >= 2
    };
    let primary = bfs_path(t, src, dst, &usable, &|_, _| true, &mut work)
        .ok_or_else(|| no_path(t, src, dst))?;
    let on_primary: BTreeSet<DeviceIdx> = primary.iter().copied().collect();
    let mut recovery = Vec::with_capacity(primary.len().saturating_sub(1));
    for w in primary.windows(2) {
        let (a, b) = (w[0], w[1]);
        let off_path = |d: DeviceIdx| usable(d) && !on_primary.contains(&d);
        let not_direct = |x: DeviceIdx, y: DeviceIdx| !((x == a && y == b) || (x == b && y == a));
        recovery.push(bfs_path(t, a, b, &off_path, &not_direct, &mut work));
    }
    Ok(QCastPlan {
        primary: PathMiddle::new(primary),
        recovery,
        work,
    })
}

impl QCastPlan {
    /// Splice in the detour of every failed segment that has one.
    pub fn realize(&self, segment_ok: &[bool]) -> RouteOutcome {
        let p = &self.primary.devices;
        let mut devices = vec![p[0]];
        let mut consumption = 0u32;
        for (i, w) in p.windows(2).enumerate() {
            match (&self.recovery[i], segment_ok.get(i).copied().unwrap_or(true)) {
                (Some(detour), false) => {
                    devices.extend_from_slice(&detour[1..]);
                    consumption += (detour.len() - 1) as u32;
                }
                _ => {
                    devices.push(w[1]);
                    consumption += 1;
                }
            }
        }
        RouteOutcome {
            path: PathMiddle::new(devices),
            consumption,
            work: self.work,
            predistributed: false,
        }
    }
}

/// Q-Cast: sample whether each primary segment's links hold, and use the
/// recovery detour for those that do not.
pub fn qcast_route<R: Rng + ?Sized>(
    t: &Topology,
    csm: &CentralStateMatrix,
    link_success: &[f64],
    src: DeviceIdx,
    dst: DeviceIdx,
    rng: &mut R,
) -> Result<RouteOutcome> {
    let plan = qcast_plan(t, csm, src, dst)?;
    let ok: Vec<bool> = plan
        .primary
        .devices
        .windows(2)
        .map(|w| {
            let p: f64 = t
                .segment_links(w[0], w[1])
                .iter()
                .map(|&l| link_success[l])
                .product();
            rng.random::<f64>() < p
        })
        .collect();
    Ok(plan.realize(&ok))
}

/// Pairs `(x, y)` that can stand in for `old` between `prev` and `next`.
/// At least one of the pair shares a domain with `old`, so the detour stays
/// around the replaced repeater.
pub fn replacement_pairs(
    t: &Topology,
    prev: DeviceIdx,
    old: DeviceIdx,
    next: DeviceIdx,
) -> Vec<(DeviceIdx, DeviceIdx)> {
    let relays = |d: DeviceIdx| -> Vec<DeviceIdx> {
        t.segment_neighbors(d)
            .into_iter()
            .filter(|&x| x != old && t.devices[x].kind.is_repeater())
            .collect()
    };
    let near_old = |d: DeviceIdx| t.shared_domain(d, old).is_some();
    let mut out = Vec::new();
    let after = relays(next);
    for x in relays(prev) {
        for &y in &after {
            if x != y && t.can_segment(x, y) && (near_old(x) || near_old(y)) {
                out.push((x, y));
            }
        }
    }
    out
}

/// All candidate paths of CER before scoring: domain-table seeds plus
/// `recursion` expansion rounds, with same-domain triples eliminated.
pub fn cer_candidates(
    t: &Topology,
    csm: &CentralStateMatrix,
    dspt: &Dspt,
    dert: &Dert,
    src: DeviceIdx,
    dst: DeviceIdx,
    recursion: usize,
    work: &mut u64,
) -> Vec<PathMiddle> {
    let ok = |d: DeviceIdx| csm.is_available(t.name(d));
    let sd = &t.devices[src].domains[0];
    let dd = &t.devices[dst].domains[0];
    let mut all: BTreeSet<Vec<DeviceIdx>> = BTreeSet::new();
    let mut frontier: Vec<Vec<DeviceIdx>> = Vec::new();
    if t.can_segment(src, dst) {
        frontier.push(vec![src, dst]);
    }
    for seq in dspt.get(sd, dd) {
        let mut partial: Vec<Vec<DeviceIdx>> = vec![vec![src]];
        for w in seq.windows(2) {
            let edges = dert.get(&w[0], &w[1]);
            let mut next = Vec::new();
            for p in &partial {
                for &e in edges {
                    *work += 1;
                    if ok(e) && !p.contains(&e) {
                        let mut q = p.clone();
                        q.push(e);
                        next.push(q);
                    }
                }
            }
            partial = next;
        }
        for mut p in partial {
            p.push(dst);
            frontier.push(p);
        }
    }
    all.extend(frontier.iter().cloned());
    for _ in 0..recursion {
        let mut next = Vec::new();
        for p in &frontier {
            for i in 1..p.len().saturating_sub(1) {
                let (prev, old, after) = (p[i - 1], p[i], p[i + 1]);
                for (x, y) in replacement_pairs(t, prev, old, after) {
                    *work += 1;
                    if !ok(x) || !ok(y) || p.contains(&x) || p.contains(&y) {
                        continue;
                    }
                    let mut q = p[..i].to_vec();
                    q.push(x);
                    q.push(y);
                    q.extend_from_slice(&p[i + 1..]);
                    if all.insert(q.clone()) {
                        next.push(q);
                    }
                }
            }
        }
        frontier = next;
    }
    all.into_iter()
        .map(PathMiddle::new)
        .filter(|p| {
            *work += 1;
            !has_same_domain_triple(t, p)
        })
        .collect()
}

/// Centralized entanglement routing: candidates scored from the state
/// matrix, best first (score desc, hops asc, names asc).
#[allow(clippy::too_many_arguments)]
pub fn cer_route(
    t: &Topology,
    csm: &CentralStateMatrix,
    dspt: &Dspt,
    dert: &Dert,
    src: DeviceIdx,
    dst: DeviceIdx,
    recursion: usize,
    work: &mut u64,
) -> Result<Vec<ScoredPath>> {
    let cands = cer_candidates(t, csm, dspt, dert, src, dst, recursion, work);
    let mut scored: Vec<(ScoredPath, Vec<String>)> = cands
        .into_iter()
        .map(|p| {
            *work += p.devices.len() as u64;
            let score = score_path(t, csm, &p);
            let names = p.names(t);
            (
                ScoredPath {
                    hops: p.repeater_hops(),
                    score,
                    path: p,
                },
                names,
            )
        })
        .collect();
    if scored.is_empty() {
        return Err(no_path(t, src, dst));
    }
    scored.sort_by(|(a, an), (b, bn)| {
        b.score
            .total_cmp(&a.score)
            .then(a.hops.cmp(&b.hops))
            .then(an.cmp(bn))
    });
    Ok(scored.into_iter().map(|(s, _)| s).collect())
}

/// Relative score band inside which CER prefers fewer hops. Link and swap
/// statistics come from finite windows, so scores closer than this are not
/// distinguishable.
pub const SCORE_TOLERANCE: f64 = 0.03;

/// Index of the path CER commits to: the fewest-hop candidate whose score is
/// within `tolerance` (relative) of the best. Order within the band follows
/// the list order.
pub fn cer_choose(scored: &[ScoredPath], tolerance: f64) -> Option<usize> {
    let best = scored.iter().map(|s| s.score).fold(f64::NEG_INFINITY, f64::max);
    let floor = best * (1.0 - tolerance);
    scored
        .iter()
        .enumerate()
        .filter(|(_, s)| s.score >= floor)
        .min_by_key(|(i, s)| (s.hops, *i))
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_hierarchical_cellular;

    fn fixture() -> (Topology, CentralStateMatrix, Dspt, Dert) {
        let t = build_hierarchical_cellular(2).unwrap();
        let csm = CentralStateMatrix::from_topology(&t);
        let (dspt, dert) = crate::topology::build_dspt_dert(&t).unwrap();
        (t, csm, dspt, dert)
    }

    #[test]
    fn repeater_scores() {
        assert!((score_repeater(0.9, 0.8) - 0.83).abs() < 1e-12);
        assert_eq!(score_repeater(1.0, 1.0), 1.0);
        assert!((score_repeater(0.0, 1.0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn greedy_on_grid() {
        let (t, _, _, _) = fixture();
        let (a, i) = (t.idx("U_A").unwrap(), t.idx("U_I").unwrap());
        let r = greedy_route(&t, None, a, i).unwrap();
        assert_eq!(r.path.segments(), 5);
        assert_eq!(r.consumption, 5);
        assert!(r.path.is_valid(&t, a, i));
        assert_eq!(
            r.path.render(&t),
            "U_A[LC_A] -> R_A_B[LC_A,LC_B] -> R_B_C[LC_B,LC_C] -> R_C_F[LC_C,LC_F] \
             -> R_F_I[LC_F,LC_I] -> U_I[LC_I]"
        );
        assert!(greedy_route(&t, None, a, a).unwrap().path.devices.is_empty());
    }

    #[test]
    fn cer_seeds_and_order() {
        let (t, csm, dspt, dert) = fixture();
        let (a, i) = (t.idx("U_A").unwrap(), t.idx("U_I").unwrap());
        let mut work = 0;
        let seeds = cer_route(&t, &csm, &dspt, &dert, a, i, 0, &mut work).unwrap();
        assert_eq!(seeds.len(), 6);
        assert!(seeds.iter().all(|s| s.hops == 4 && s.score == 1.0));
        let full = cer_route(&t, &csm, &dspt, &dert, a, i, 2, &mut work).unwrap();
        assert!(full.len() > 6);
        assert_eq!(full[0].hops, 4);
        for s in &full {
            assert!(s.path.is_valid(&t, a, i));
            assert!(!has_same_domain_triple(&t, &s.path));
        }
    }

    #[test]
    fn triple_elimination() {
        let (t, _, _, _) = fixture();
        let ids = |ns: &[&str]| PathMiddle::new(ns.iter().map(|n| t.idx(n).unwrap()).collect());
        // U_A, R_A_B, R_A_D all sit in domain A.
        assert!(has_same_domain_triple(&t, &ids(&["U_A", "R_A_D", "R_A_B", "R_B_E"])));
        // Three E-members that are not consecutive are fine.
        assert!(!has_same_domain_triple(
            &t,
            &ids(&["R_B_E", "R_B_C", "R_C_F", "R_E_F", "R_E_H"])
        ));
    }

    #[test]
    fn degraded_repeater_avoided() {
        let (t, mut csm, dspt, dert) = fixture();
        for r in t.repeaters() {
            for k in 0..10 {
                csm.update_link_state(t.name(r), k != 0).unwrap();
            }
        }
        for k in 0..10 {
            csm.update_link_state("R_B_E", k == 0).unwrap();
        }
        let (a, i) = (t.idx("U_A").unwrap(), t.idx("U_I").unwrap());
        let mut work = 0;
        let best = &cer_route(&t, &csm, &dspt, &dert, a, i, 2, &mut work).unwrap()[0];
        assert!(!best.path.devices.contains(&t.idx("R_B_E").unwrap()));
    }

    #[test]
    fn slmp_extremes() {
        let (t, _, _, _) = fixture();
        let (a, i) = (t.idx("U_A").unwrap(), t.idx("U_I").unwrap());
        let all = vec![true; t.quantum.len()];
        let r = slmp_route_with(&t, None, &all, a, i).unwrap();
        assert_eq!(r.path, greedy_route(&t, None, a, i).unwrap().path);
        assert_eq!(r.consumption, 33);
        let none = vec![false; t.quantum.len()];
        assert!(matches!(
            slmp_route_with(&t, None, &none, a, i),
            Err(Error::NoPathFound { .. })
        ));
    }

    #[test]
    fn qcast_recovery() {
        let (t, csm, _, _) = fixture();
        let (a, i) = (t.idx("U_A").unwrap(), t.idx("U_I").unwrap());
        let plan = qcast_plan(&t, &csm, a, i).unwrap();
        let clean = plan.realize(&[true; 5]);
        assert_eq!(clean.consumption, 5);
        assert_eq!(clean.path, plan.primary);
        let mut ok = [true; 5];
        ok[1] = false;
        let rec = plan.realize(&ok);
        assert!(rec.consumption > 5);
        assert!(rec.path.is_valid(&t, a, i));
        let detour = plan.recovery[1].as_ref().unwrap();
        assert!(rec.path.devices.contains(&detour[1]));
    }
}
