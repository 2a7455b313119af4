//! Central and local state matrices: per-device records, memory
//! reservation, success statistics and maintenance marking.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::topology::{DeviceIdx, MemoryKind, Mode, Topology};

pub type SessionId = u64;

/// Window length of the success-rate estimators.
pub const RATE_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryState {
    Idle,
    Occupy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceState {
    Normal,
    Maintain,
}

/// Progress flag of one protocol stage on a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StageFlag {
    #[default]
    Idle,
    Running,
    Success,
    Failure,
}

impl fmt::Display for StageFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageFlag::Idle => "idle",
            StageFlag::Running => "running",
            StageFlag::Success => "success",
            StageFlag::Failure => "failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryRecord {
    pub name: String,
    pub kind: MemoryKind,
    pub state: MemoryState,
    /// `device.memory` holding the other half of the stored pair.
    pub aim_pair: Option<String>,
    pub aim_communication: Option<SessionId>,
}

/// Sliding-window success fraction; reads 1.0 before any observation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateWindow {
    events: VecDeque<bool>,
    successes: usize,
}

impl RateWindow {
    pub fn record(&mut self, success: bool) -> f64 {
        if self.events.len() == RATE_WINDOW {
            if self.events.pop_front() == Some(true) {
                self.successes -= 1;
            }
        }
        self.events.push_back(success);
        self.successes += usize::from(success);
        self.value()
    }

    pub fn value(&self) -> f64 {
        if self.events.is_empty() {
            1.0
        } else {
            self.successes as f64 / self.events.len() as f64
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceRecord {
    pub domain: String,
    pub device: String,
    pub state: DeviceState,
    pub aim_node: Option<String>,
    pub distribution: StageFlag,
    pub preparation: StageFlag,
    pub swapping: StageFlag,
    pub teleportation: StageFlag,
    pub link_state: RateWindow,
    pub swap_rate: RateWindow,
    pub memories: Vec<MemoryRecord>,
}

impl DeviceRecord {
    fn idle_count(&self, kind: MemoryKind) -> usize {
        self.memories
            .iter()
            .filter(|m| m.kind == kind && m.state == MemoryState::Idle)
            .count()
    }
}

/// One domain's records.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStateMatrix {
    pub domain: String,
    pub devices: BTreeMap<String, DeviceRecord>,
}

/// Global view assembled from every domain's report.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralStateMatrix {
    pub domains: BTreeMap<String, LocalStateMatrix>,
    /// device name → owning domain
    owner: BTreeMap<String, String>,
}

/// Memories held at one device of a complete path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMemories {
    pub controller: Option<DeviceIdx>,
    /// Controller memories used for this segment's preparation.
    pub controller_memories: Vec<String>,
    pub left: DeviceIdx,
    pub left_memory: String,
    pub right: DeviceIdx,
    pub right_memory: String,
}

/// Reserved resources of a path, one entry per segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletePath {
    pub devices: Vec<DeviceIdx>,
    pub segments: Vec<SegmentMemories>,
}

impl CompletePath {
    /// Bracket notation, e.g.
    /// `U_A[LC_A(cm_1,cm_2),um_1] -> R_A_B[LC_A(cm_1,cm_2),LC_B(cm_1,cm_2),rm_1,rm_2] -> …`
    pub fn render(&self, t: &Topology) -> String {
        let mut parts = Vec::new();
        for (i, &d) in self.devices.iter().enumerate() {
            let mut inner: Vec<String> = Vec::new();
            let mut mems = Vec::new();
            let touching = [
                i.checked_sub(1).map(|k| (k, false)),
                (i < self.segments.len()).then_some((i, true)),
            ];
            for (k, left) in touching.into_iter().flatten() {
                let seg = &self.segments[k];
                if let Some(c) = seg.controller {
                    if seg.controller_memories.is_empty() {
                        inner.push(t.name(c).to_string());
                    } else {
                        inner.push(format!("{}({})", t.name(c), seg.controller_memories.join(",")));
                    }
                }
                mems.push(if left { seg.left_memory.clone() } else { seg.right_memory.clone() });
            }
            inner.extend(mems);
            parts.push(format!("{}[{}]", t.name(d), inner.join(",")));
        }
        parts.join(" -> ")
    }

    /// Every `(device, memory)` held by the path.
    pub fn held(&self) -> Vec<(DeviceIdx, String)> {
        let mut out = Vec::new();
        for s in &self.segments {
            if let Some(c) = s.controller {
                for m in &s.controller_memories {
                    out.push((c, m.clone()));
                }
            }
            out.push((s.left, s.left_memory.clone()));
            out.push((s.right, s.right_memory.clone()));
        }
        out
    }
}

/// What a distribution scheme needs reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReservationNeeds {
    pub endpoint_kind: MemoryKind,
    pub controller_slots_per_segment: usize,
}

impl CentralStateMatrix {
    pub fn from_topology(t: &Topology) -> Self {
        let mut domains: BTreeMap<String, LocalStateMatrix> = t
            .domains
            .iter()
            .map(|d| {
                (
                    d.clone(),
                    LocalStateMatrix {
                        domain: d.clone(),
                        devices: BTreeMap::new(),
                    },
                )
            })
            .collect();
        let mut owner = BTreeMap::new();
        for dev in &t.devices {
            // The central controller sits above all domains and is not tracked.
            let Some(dom) = dev.domains.first() else {
                continue;
            };
            let memories = dev
                .memories
                .iter()
                .enumerate()
                .map(|(k, &kind)| {
                    MemoryRecord {
                        name: format!("{}_{}", dev.memory_prefix(), k + 1),
                        kind,
                        state: MemoryState::Idle,
                        aim_pair: None,
                        aim_communication: None,
                    }
                })
                .collect();
            let rec = DeviceRecord {
                domain: dom.clone(),
                device: dev.name.clone(),
                state: DeviceState::Normal,
                aim_node: None,
                distribution: StageFlag::Idle,
                preparation: StageFlag::Idle,
                swapping: StageFlag::Idle,
                teleportation: StageFlag::Idle,
                link_state: RateWindow::default(),
                swap_rate: RateWindow::default(),
                memories,
            };
            owner.insert(dev.name.clone(), dom.clone());
            domains
                .get_mut(dom)
                .expect("device domain registered")
                .devices
                .insert(dev.name.clone(), rec);
        }
        CentralStateMatrix { domains, owner }
    }

    pub fn record(&self, device: &str) -> Result<&DeviceRecord> {
        let dom = self
            .owner
            .get(device)
            .ok_or_else(|| Error::UnknownDevice(device.to_string()))?;
        Ok(&self.domains[dom].devices[device])
    }

    pub fn record_mut(&mut self, device: &str) -> Result<&mut DeviceRecord> {
        let dom = self
            .owner
            .get(device)
            .ok_or_else(|| Error::UnknownDevice(device.to_string()))?;
        Ok(self
            .domains
            .get_mut(dom)
            .unwrap()
            .devices
            .get_mut(device)
            .unwrap())
    }

    pub fn records(&self) -> impl Iterator<Item = &DeviceRecord> {
        self.domains.values().flat_map(|l| l.devices.values())
    }

    /// Snapshot of one domain's matrix.
    pub fn lsm(&self, domain: &str) -> Result<LocalStateMatrix> {
        self.domains
            .get(domain)
            .cloned()
            .ok_or_else(|| Error::UnknownDomain(domain.to_string()))
    }

    /// Replace the subtree of `lsm.domain` with the reported matrix.
    pub fn report_lsm(&mut self, lsm: LocalStateMatrix) -> Result<()> {
        let slot = self
            .domains
            .get_mut(&lsm.domain)
            .ok_or_else(|| Error::UnknownDomain(lsm.domain.clone()))?;
        for name in slot.devices.keys() {
            self.owner.remove(name);
        }
        for name in lsm.devices.keys() {
            self.owner.insert(name.clone(), lsm.domain.clone());
        }
        *slot = lsm;
        Ok(())
    }

    pub fn is_available(&self, device: &str) -> bool {
        self.record(device)
            .map(|r| r.state == DeviceState::Normal)
            .unwrap_or(false)
    }

    pub fn link_state(&self, device: &str) -> f64 {
        self.record(device).map(|r| r.link_state.value()).unwrap_or(0.0)
    }

    pub fn swap_rate(&self, device: &str) -> f64 {
        self.record(device).map(|r| r.swap_rate.value()).unwrap_or(0.0)
    }

    pub fn update_link_state(&mut self, device: &str, success: bool) -> Result<f64> {
        Ok(self.record_mut(device)?.link_state.record(success))
    }

    pub fn update_swap_rate(&mut self, device: &str, success: bool) -> Result<f64> {
        Ok(self.record_mut(device)?.swap_rate.record(success))
    }

    pub fn mark_maintain(&mut self, device: &str) -> Result<()> {
        self.record_mut(device)?.state = DeviceState::Maintain;
        Ok(())
    }

    pub fn mark_normal(&mut self, device: &str) -> Result<()> {
        self.record_mut(device)?.state = DeviceState::Normal;
        Ok(())
    }

    pub fn idle_memories(&self, device: &str, kind: MemoryKind) -> usize {
        self.record(device).map(|r| r.idle_count(kind)).unwrap_or(0)
    }

    /// Occupy one idle memory of `kind` on `device` for `session`.
    pub fn reserve_one(&mut self, device: &str, kind: MemoryKind, session: SessionId) -> Result<String> {
        let rec = self.record_mut(device)?;
        let m = rec
            .memories
            .iter_mut()
            .find(|m| m.kind == kind && m.state == MemoryState::Idle)
            .ok_or_else(|| Error::ReservationFailure {
                device: device.to_string(),
                kind: kind_name(kind).to_string(),
            })?;
        m.state = MemoryState::Occupy;
        m.aim_communication = Some(session);
        Ok(m.name.clone())
    }

    /// Reserve everything a path needs beyond the user memories already held
    /// (`src_memory`, `dst_memory`). All-or-nothing.
    pub fn reserve_memories(
        &mut self,
        t: &Topology,
        devices: &[DeviceIdx],
        src_memory: &str,
        dst_memory: &str,
        needs: ReservationNeeds,
        session: SessionId,
    ) -> Result<CompletePath> {
        if devices.len() < 2 {
            return Err(Error::Topology("a path needs at least two devices".into()));
        }
        // Tally demand first so that nothing is touched on failure.
        let mut demand: BTreeMap<(&str, MemoryKind), usize> = BTreeMap::new();
        let interior = &devices[1..devices.len() - 1];
        for &d in interior {
            *demand.entry((t.name(d), needs.endpoint_kind)).or_default() += 2;
        }
        let mut controllers = Vec::new();
        for w in devices.windows(2) {
            let c = t.segment_controller(w[0], w[1]);
            if t.mode == Mode::Hierarchical && c.is_none() {
                return Err(Error::Topology(format!(
                    "{} and {} share no domain",
                    t.name(w[0]),
                    t.name(w[1])
                )));
            }
            if let Some(c) = c {
                if needs.controller_slots_per_segment > 0 {
                    *demand.entry((t.name(c), MemoryKind::Atomic)).or_default() +=
                        needs.controller_slots_per_segment;
                }
            }
            controllers.push(c);
        }
        for (&(dev, kind), &n) in &demand {
            let rec = self.record(dev)?;
            if rec.state == DeviceState::Maintain || rec.idle_count(kind) < n {
                return Err(Error::ReservationFailure {
                    device: dev.to_string(),
                    kind: kind_name(kind).to_string(),
                });
            }
        }
        let mut segments = Vec::with_capacity(devices.len() - 1);
        let mut carry = src_memory.to_string();
        for (k, w) in devices.windows(2).enumerate() {
            let controller_memories = match controllers[k] {
                Some(c) => (0..needs.controller_slots_per_segment)
                    .map(|_| self.reserve_one(t.name(c), MemoryKind::Atomic, session))
                    .collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            let last = k + 2 == devices.len();
            let right_memory = if last {
                dst_memory.to_string()
            } else {
                self.reserve_one(t.name(w[1]), needs.endpoint_kind, session)?
            };
            segments.push(SegmentMemories {
                controller: controllers[k],
                controller_memories,
                left: w[0],
                left_memory: carry.clone(),
                right: w[1],
                right_memory,
            });
            if !last {
                carry = self.reserve_one(t.name(w[1]), needs.endpoint_kind, session)?;
            }
        }
        Ok(CompletePath {
            devices: devices.to_vec(),
            segments,
        })
    }

    /// Record the stored pair of a distributed segment.
    pub fn set_pair(&mut self, t: &Topology, seg: &SegmentMemories) -> Result<()> {
        let l = format!("{}.{}", t.name(seg.right), seg.right_memory);
        let r = format!("{}.{}", t.name(seg.left), seg.left_memory);
        self.memory_mut(t.name(seg.left), &seg.left_memory)?.aim_pair = Some(l);
        self.memory_mut(t.name(seg.right), &seg.right_memory)?.aim_pair = Some(r);
        Ok(())
    }

    pub fn clear_pair(&mut self, t: &Topology, seg: &SegmentMemories) -> Result<()> {
        self.memory_mut(t.name(seg.left), &seg.left_memory)?.aim_pair = None;
        self.memory_mut(t.name(seg.right), &seg.right_memory)?.aim_pair = None;
        Ok(())
    }

    fn memory_mut(&mut self, device: &str, memory: &str) -> Result<&mut MemoryRecord> {
        self.record_mut(device)?
            .memories
            .iter_mut()
            .find(|m| m.name == memory)
            .ok_or_else(|| Error::UnknownDevice(format!("{device}.{memory}")))
    }

    /// Free every memory held by `session`; returns how many were freed.
    /// Releasing twice is a no-op.
    pub fn release_memories(&mut self, session: SessionId) -> usize {
        let mut n = 0;
        for lsm in self.domains.values_mut() {
            for rec in lsm.devices.values_mut() {
                for m in &mut rec.memories {
                    if m.aim_communication == Some(session) {
                        m.state = MemoryState::Idle;
                        m.aim_communication = None;
                        m.aim_pair = None;
                        n += 1;
                    }
                }
            }
        }
        n
    }

    /// Memories currently held by `session`.
    pub fn held_by(&self, session: SessionId) -> usize {
        self.records()
            .flat_map(|r| &r.memories)
            .filter(|m| m.aim_communication == Some(session))
            .count()
    }

    pub fn occupied(&self) -> usize {
        self.records()
            .flat_map(|r| &r.memories)
            .filter(|m| m.state == MemoryState::Occupy)
            .count()
    }

    /// One device per line with all fourteen fields.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "DomainName | DeviceName | DeviceState | MemoryName | MemoryState | AimPair | \
             AimCommunication | AimNode | DistributionState | PreparationState | \
             SwappingState | TeleportationState | LinkState | SwappingSuccessRate"
        );
        for r in self.records() {
            let names: Vec<&str> = r.memories.iter().map(|m| m.name.as_str()).collect();
            let states: Vec<&str> = r
                .memories
                .iter()
                .map(|m| match m.state {
                    MemoryState::Idle => "idle",
                    MemoryState::Occupy => "occupy",
                })
                .collect();
            let pairs: Vec<String> = r
                .memories
                .iter()
                .map(|m| m.aim_pair.clone().unwrap_or_else(|| "-".into()))
                .collect();
            let comms: Vec<String> = r
                .memories
                .iter()
                .map(|m| m.aim_communication.map_or("-".into(), |c| c.to_string()))
                .collect();
            let _ = writeln!(
                s,
                "{} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {:.4} | {:.4}",
                r.domain,
                r.device,
                match r.state {
                    DeviceState::Normal => "normal",
                    DeviceState::Maintain => "maintain",
                },
                names.join(","),
                states.join(","),
                pairs.join(","),
                comms.join(","),
                r.aim_node.as_deref().unwrap_or("-"),
                r.distribution,
                r.preparation,
                r.swapping,
                r.teleportation,
                r.link_state.value(),
                r.swap_rate.value()
            );
        }
        s
    }
}

fn kind_name(k: MemoryKind) -> &'static str {
    match k {
        MemoryKind::Atomic => "atomic",
        MemoryKind::Optical => "optical",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_hierarchical_cellular;

    fn fixture() -> (Topology, CentralStateMatrix) {
        let t = build_hierarchical_cellular(2).unwrap();
        let csm = CentralStateMatrix::from_topology(&t);
        (t, csm)
    }

    const W_NEEDS: ReservationNeeds = ReservationNeeds {
        endpoint_kind: MemoryKind::Atomic,
        controller_slots_per_segment: 2,
    };

    #[test]
    fn rate_window_examples() {
        let mut w = RateWindow::default();
        assert_eq!(w.value(), 1.0);
        for i in 0..10 {
            w.record(i < 8);
        }
        assert!((w.value() - 0.8).abs() < 1e-12);
        let mut w = RateWindow::default();
        for i in 0..100 {
            w.record(i % 2 == 0);
        }
        assert!((w.value() - 0.5).abs() <= 0.02);
        assert_eq!(w.len(), RATE_WINDOW);
    }

    #[test]
    fn report_roundtrip_and_order() {
        let (_, csm) = fixture();
        let mut a = csm.clone();
        let mut b = csm.clone();
        let mut la = csm.lsm("A").unwrap();
        la.devices.get_mut("U_A").unwrap().link_state.record(false);
        let mut lb = csm.lsm("B").unwrap();
        lb.devices.get_mut("LC_B").unwrap().swap_rate.record(false);
        a.report_lsm(la.clone()).unwrap();
        a.report_lsm(lb.clone()).unwrap();
        b.report_lsm(lb).unwrap();
        b.report_lsm(la.clone()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lsm("A").unwrap(), la);
        let bad = LocalStateMatrix {
            domain: "Q".into(),
            devices: BTreeMap::new(),
        };
        assert!(matches!(a.report_lsm(bad), Err(Error::UnknownDomain(_))));
    }

    #[test]
    fn reserve_complete_path() {
        let (t, mut csm) = fixture();
        let path: Vec<_> = ["U_A", "R_A_B", "U_B"]
            .iter()
            .map(|n| t.idx(n).unwrap())
            .collect();
        let um = csm.reserve_one("U_A", MemoryKind::Atomic, 7).unwrap();
        let vm = csm.reserve_one("U_B", MemoryKind::Atomic, 7).unwrap();
        let cp = csm.reserve_memories(&t, &path, &um, &vm, W_NEEDS, 7).unwrap();
        assert_eq!(
            cp.render(&t),
            "U_A[LC_A(cm_1,cm_2),um_1] -> R_A_B[LC_A(cm_1,cm_2),LC_B(cm_1,cm_2),rm_1,rm_2] \
             -> U_B[LC_B(cm_1,cm_2),um_1]"
        );
        assert_eq!(csm.held_by(7), 2 + 2 + 4);
        assert_eq!(csm.release_memories(7), 8);
        assert_eq!(csm.release_memories(7), 0);
        assert_eq!(csm.occupied(), 0);
    }

    #[test]
    fn reservation_is_all_or_nothing() {
        let (t, mut csm) = fixture();
        let path: Vec<_> = ["U_A", "R_A_B", "R_B_E", "U_E"]
            .iter()
            .map(|n| t.idx(n).unwrap())
            .collect();
        csm.reserve_one("R_B_E", MemoryKind::Atomic, 99).unwrap();
        csm.reserve_one("R_B_E", MemoryKind::Atomic, 99).unwrap();
        let before = csm.clone();
        let err = csm
            .reserve_memories(&t, &path, "um_1", "um_1", W_NEEDS, 1)
            .unwrap_err();
        assert!(matches!(err, Error::ReservationFailure { ref device, .. } if device == "R_B_E"));
        assert_eq!(csm, before);
    }

    #[test]
    fn maintain_and_dump() {
        let (_, mut csm) = fixture();
        csm.mark_maintain("R_A_B").unwrap();
        assert!(!csm.is_available("R_A_B"));
        assert!(csm.mark_maintain("nope").is_err());
        let dump = csm.dump();
        let line = dump.lines().find(|l| l.contains("R_A_B")).unwrap();
        assert_eq!(line.split(" | ").count(), 14);
        assert!(line.contains("maintain"));
    }
}
