//! Devices, domains and channels, plus the cellular builders and the
//! domain-level tables used to seed routing.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::noise::{EnvParams, DEFAULT_LENGTH_KM};

pub type DeviceIdx = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceKind {
    User,
    Repeater,
    EdgeRepeater,
    LocalController,
    CentralController,
}

impl DeviceKind {
    pub fn is_repeater(self) -> bool {
        matches!(self, DeviceKind::Repeater | DeviceKind::EdgeRepeater)
    }

    pub fn is_controller(self) -> bool {
        matches!(
            self,
            DeviceKind::LocalController | DeviceKind::CentralController
        )
    }

    fn as_str(self) -> &'static str {
        match self {
            DeviceKind::User => "user",
            DeviceKind::Repeater => "repeater",
            DeviceKind::EdgeRepeater => "edge-repeater",
            DeviceKind::LocalController => "local-controller",
            DeviceKind::CentralController => "central-controller",
        }
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeviceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "user" => DeviceKind::User,
            "repeater" => DeviceKind::Repeater,
            "edge-repeater" => DeviceKind::EdgeRepeater,
            "local-controller" => DeviceKind::LocalController,
            "central-controller" => DeviceKind::CentralController,
            _ => return Err(Error::Topology(format!("unknown device kind `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MemoryKind {
    Optical,
    Atomic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Hierarchical,
    Distributed,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Hierarchical => "hierarchical",
            Mode::Distributed => "distributed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub name: String,
    pub kind: DeviceKind,
    /// Sorted domain names.
    pub domains: Vec<String>,
    pub memories: Vec<MemoryKind>,
    /// Planar position in km.
    pub pos: (f64, f64),
    /// Memory depolarization and per-operation dephasing of this device.
    pub env: EnvParams,
}

impl Device {
    pub fn in_domain(&self, d: &str) -> bool {
        self.domains.iter().any(|x| x == d)
    }

    /// Prefix used when naming this device's memories (`um`, `rm`, `cm`).
    pub fn memory_prefix(&self) -> &'static str {
        match self.kind {
            DeviceKind::User => "um",
            DeviceKind::Repeater | DeviceKind::EdgeRepeater => "rm",
            _ => "cm",
        }
    }
}

/// Bidirectional quantum channel. `env` carries loss and length.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumChannel {
    pub a: DeviceIdx,
    pub b: DeviceIdx,
    pub env: EnvParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalChannel {
    pub a: DeviceIdx,
    pub b: DeviceIdx,
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub mode: Mode,
    pub domains: Vec<String>,
    pub devices: Vec<Device>,
    pub quantum: Vec<QuantumChannel>,
    pub classical: Vec<ClassicalChannel>,
    by_name: HashMap<String, DeviceIdx>,
    qlink: HashMap<(DeviceIdx, DeviceIdx), usize>,
}

fn ordered(a: DeviceIdx, b: DeviceIdx) -> (DeviceIdx, DeviceIdx) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Topology {
    pub fn new(mode: Mode) -> Self {
        Topology {
            mode,
            domains: Vec::new(),
            devices: Vec::new(),
            quantum: Vec::new(),
            classical: Vec::new(),
            by_name: HashMap::new(),
            qlink: HashMap::new(),
        }
    }

    pub fn add_domain(&mut self, name: &str) {
        if !self.domains.iter().any(|d| d == name) {
            self.domains.push(name.to_string());
        }
    }

    pub fn add_device(&mut self, mut device: Device) -> Result<DeviceIdx> {
        if self.by_name.contains_key(&device.name) {
            return Err(Error::Topology(format!("duplicate device `{}`", device.name)));
        }
        for d in &device.domains {
            if !self.domains.contains(d) {
                return Err(Error::UnknownDomain(d.clone()));
            }
        }
        device.domains.sort();
        device.domains.dedup();
        let idx = self.devices.len();
        self.by_name.insert(device.name.clone(), idx);
        self.devices.push(device);
        Ok(idx)
    }

    pub fn add_quantum(&mut self, a: DeviceIdx, b: DeviceIdx, env: EnvParams) -> Result<usize> {
        if a == b || a >= self.devices.len() || b >= self.devices.len() {
            return Err(Error::Topology(format!("bad quantum channel {a}-{b}")));
        }
        let key = ordered(a, b);
        if self.qlink.contains_key(&key) {
            return Err(Error::Topology(format!(
                "duplicate quantum channel {}-{}",
                self.devices[a].name, self.devices[b].name
            )));
        }
        self.qlink.insert(key, self.quantum.len());
        self.quantum.push(QuantumChannel { a, b, env });
        Ok(self.quantum.len() - 1)
    }

    pub fn add_classical(&mut self, a: DeviceIdx, b: DeviceIdx, length_km: f64) -> Result<()> {
        if a == b || a >= self.devices.len() || b >= self.devices.len() {
            return Err(Error::Topology(format!("bad classical channel {a}-{b}")));
        }
        self.classical.push(ClassicalChannel { a, b, length_km });
        Ok(())
    }

    pub fn idx(&self, name: &str) -> Result<DeviceIdx> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownDevice(name.to_string()))
    }

    pub fn name(&self, i: DeviceIdx) -> &str {
        &self.devices[i].name
    }

    pub fn users(&self) -> Vec<DeviceIdx> {
        self.kinds(|k| k == DeviceKind::User)
    }

    pub fn repeaters(&self) -> Vec<DeviceIdx> {
        self.kinds(DeviceKind::is_repeater)
    }

    fn kinds(&self, f: impl Fn(DeviceKind) -> bool) -> Vec<DeviceIdx> {
        (0..self.devices.len())
            .filter(|&i| f(self.devices[i].kind))
            .collect()
    }

    pub fn central_controller(&self) -> Option<DeviceIdx> {
        self.devices
            .iter()
            .position(|d| d.kind == DeviceKind::CentralController)
    }

    pub fn local_controller(&self, domain: &str) -> Option<DeviceIdx> {
        self.devices
            .iter()
            .position(|d| d.kind == DeviceKind::LocalController && d.in_domain(domain))
    }

    pub fn quantum_link(&self, a: DeviceIdx, b: DeviceIdx) -> Option<usize> {
        self.qlink.get(&ordered(a, b)).copied()
    }

    /// First domain (in sorted order) shared by two devices.
    pub fn shared_domain(&self, a: DeviceIdx, b: DeviceIdx) -> Option<&str> {
        let db = &self.devices[b].domains;
        self.devices[a]
            .domains
            .iter()
            .find(|d| db.contains(d))
            .map(String::as_str)
    }

    /// Controller distributing the segment `a`–`b`, if the layout has one.
    pub fn segment_controller(&self, a: DeviceIdx, b: DeviceIdx) -> Option<DeviceIdx> {
        match self.mode {
            Mode::Hierarchical => self
                .shared_domain(a, b)
                .and_then(|d| self.local_controller(d)),
            Mode::Distributed => None,
        }
    }

    /// Quantum channels a segment's distribution travels over.
    pub fn segment_links(&self, a: DeviceIdx, b: DeviceIdx) -> Vec<usize> {
        match self.segment_controller(a, b) {
            Some(lc) => [a, b]
                .iter()
                .filter_map(|&x| self.quantum_link(x, lc))
                .collect(),
            None => self.quantum_link(a, b).into_iter().collect(),
        }
    }

    /// Whether `a` and `b` can be the two ends of one distributed pair.
    pub fn can_segment(&self, a: DeviceIdx, b: DeviceIdx) -> bool {
        if a == b {
            return false;
        }
        match self.mode {
            Mode::Hierarchical => {
                let ok = |i: DeviceIdx| !self.devices[i].kind.is_controller();
                ok(a) && ok(b) && self.segment_controller(a, b).is_some() && {
                    self.segment_links(a, b).len() == 2
                }
            }
            Mode::Distributed => self.quantum_link(a, b).is_some(),
        }
    }

    /// Devices reachable from `i` by a single distributed pair, sorted by name.
    pub fn segment_neighbors(&self, i: DeviceIdx) -> Vec<DeviceIdx> {
        let mut out: Vec<DeviceIdx> = match self.mode {
            Mode::Hierarchical => (0..self.devices.len())
                .filter(|&j| self.can_segment(i, j))
                .collect(),
            Mode::Distributed => self
                .quantum
                .iter()
                .filter_map(|c| {
                    if c.a == i {
                        Some(c.b)
                    } else if c.b == i {
                        Some(c.a)
                    } else {
                        None
                    }
                })
                .collect(),
        };
        out.sort_by(|&x, &y| self.devices[x].name.cmp(&self.devices[y].name));
        out
    }

    /// Number of devices able to prepare entanglement.
    pub fn maintenance_cost(&self) -> usize {
        match self.mode {
            Mode::Hierarchical => self
                .devices
                .iter()
                .filter(|d| d.kind == DeviceKind::LocalController)
                .count(),
            Mode::Distributed => self.repeaters().len(),
        }
    }

    /// Domain adjacency: two domains are adjacent when some device belongs
    /// to both.
    pub fn domain_adjacency(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut adj: BTreeMap<String, BTreeSet<String>> = self
            .domains
            .iter()
            .map(|d| (d.clone(), BTreeSet::new()))
            .collect();
        for dev in &self.devices {
            for a in &dev.domains {
                for b in &dev.domains {
                    if a != b {
                        adj.get_mut(a).unwrap().insert(b.clone());
                    }
                }
            }
        }
        adj
    }

    /// Set every device's and channel's environment.
    pub fn set_uniform_env(&mut self, env: EnvParams) {
        for d in &mut self.devices {
            d.env = env;
        }
        for c in &mut self.quantum {
            let len = c.env.length_km;
            c.env = EnvParams { length_km: len, ..env };
        }
    }

    /// Classical one-way latency in km of fiber between two devices, routed
    /// over the classical graph (shortest by length).
    pub fn classical_distance(&self, a: DeviceIdx, b: DeviceIdx) -> Option<f64> {
        if a == b {
            return Some(0.0);
        }
        let n = self.devices.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[a] = 0.0;
        for _ in 0..n {
            let u = (0..n)
                .filter(|&i| !done[i] && dist[i].is_finite())
                .min_by(|&x, &y| dist[x].total_cmp(&dist[y]))?;
            if u == b {
                return Some(dist[b]);
            }
            done[u] = true;
            for c in &self.classical {
                let v = if c.a == u {
                    c.b
                } else if c.b == u {
                    c.a
                } else {
                    continue;
                };
                let nd = dist[u] + c.length_km;
                if nd < dist[v] {
                    dist[v] = nd;
                }
            }
        }
        None
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode {}", self.mode);
        for d in &self.domains {
            let _ = writeln!(s, "domain {d}");
        }
        for d in &self.devices {
            let mem: Vec<&str> = d
                .memories
                .iter()
                .map(|m| match m {
                    MemoryKind::Atomic => "atomic",
                    MemoryKind::Optical => "optical",
                })
                .collect();
            let domains = if d.domains.is_empty() {
                "-".to_string()
            } else {
                d.domains.join(",")
            };
            let _ = writeln!(
                s,
                "device {} {} domains={} pos={},{} mem={} env={}",
                d.name,
                d.kind,
                domains,
                d.pos.0,
                d.pos.1,
                if mem.is_empty() { "-".to_string() } else { mem.join(",") },
                env_text(&d.env)
            );
        }
        for c in &self.quantum {
            let _ = writeln!(
                s,
                "qchannel {} {} env={}",
                self.name(c.a),
                self.name(c.b),
                env_text(&c.env)
            );
        }
        for c in &self.classical {
            let _ = writeln!(
                s,
                "cchannel {} {} len={}",
                self.name(c.a),
                self.name(c.b),
                c.length_km
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Topology> {
        let mut topo: Option<Topology> = None;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Topology(format!("line {}: {msg}", no + 1));
            let words: Vec<&str> = line.split_whitespace().collect();
            if words[0] == "mode" {
                let mode = match words.get(1) {
                    Some(&"hierarchical") => Mode::Hierarchical,
                    Some(&"distributed") => Mode::Distributed,
                    other => return Err(at(format!("bad mode {other:?}"))),
                };
                topo = Some(Topology::new(mode));
                continue;
            }
            let t = topo
                .as_mut()
                .ok_or_else(|| at("expected `mode` first".into()))?;
            let field = |key: &str| -> Result<&str> {
                words
                    .iter()
                    .find_map(|w| w.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                    .ok_or_else(|| at(format!("missing `{key}=`")))
            };
            match words[0] {
                "domain" if words.len() == 2 => t.add_domain(words[1]),
                "device" if words.len() >= 3 => {
                    let kind: DeviceKind = words[2].parse().map_err(|e| at(format!("{e}")))?;
                    let domains = split_list(field("domains")?);
                    let pos: Vec<f64> = field("pos")?
                        .split(',')
                        .map(|x| x.parse::<f64>().map_err(|e| at(format!("pos: {e}"))))
                        .collect::<Result<_>>()?;
                    if pos.len() != 2 {
                        return Err(at("pos needs two coordinates".into()));
                    }
                    let memories = split_list(field("mem")?)
                        .iter()
                        .map(|m| match m.as_str() {
                            "atomic" => Ok(MemoryKind::Atomic),
                            "optical" => Ok(MemoryKind::Optical),
                            other => Err(at(format!("bad memory kind `{other}`"))),
                        })
                        .collect::<Result<_>>()?;
                    let env = parse_env(field("env")?).map_err(|e| at(e))?;
                    t.add_device(Device {
                        name: words[1].to_string(),
                        kind,
                        domains,
                        memories,
                        pos: (pos[0], pos[1]),
                        env,
                    })
                    .map_err(|e| at(format!("{e}")))?;
                }
                "qchannel" if words.len() >= 3 => {
                    let a = t.idx(words[1]).map_err(|e| at(format!("{e}")))?;
                    let b = t.idx(words[2]).map_err(|e| at(format!("{e}")))?;
                    let env = parse_env(field("env")?).map_err(|e| at(e))?;
                    t.add_quantum(a, b, env).map_err(|e| at(format!("{e}")))?;
                }
                "cchannel" if words.len() >= 3 => {
                    let a = t.idx(words[1]).map_err(|e| at(format!("{e}")))?;
                    let b = t.idx(words[2]).map_err(|e| at(format!("{e}")))?;
                    let len: f64 = field("len")?
                        .parse()
                        .map_err(|e| at(format!("len: {e}")))?;
                    t.add_classical(a, b, len).map_err(|e| at(format!("{e}")))?;
                }
                other => return Err(at(format!("unrecognised record `{other}`"))),
            }
        }
        topo.ok_or_else(|| Error::Topology("empty topology text".into()))
    }
}

fn split_list(s: &str) -> Vec<String> {
    if s == "-" {
        Vec::new()
    } else {
        s.split(',').map(str::to_string).collect()
    }
}

fn env_text(e: &EnvParams) -> String {
    format!(
        "{},{},{},{},{}",
        e.depolarizing_rate, e.dephasing_rate, e.loss_init, e.loss_noise, e.length_km
    )
}

fn parse_env(s: &str) -> std::result::Result<EnvParams, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.parse::<f64>().map_err(|e| format!("env: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != 5 {
        return Err(format!("env needs 5 values, got {}", v.len()));
    }
    Ok(EnvParams {
        depolarizing_rate: v[0],
        dephasing_rate: v[1],
        loss_init: v[2],
        loss_noise: v[3],
        length_km: v[4],
    })
}

/// `A, B, …, Z, AA, AB, …`
pub fn domain_name(mut i: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'A' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).unwrap()
}

/// Shape of a cellular layout. Domains form a `(2·rings − 1)`-sided square
/// grid of cells, each cell adjacent to its four neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellularLayout {
    pub rings: u32,
    pub users_per_domain: u32,
    pub length_km: f64,
}

impl Default for CellularLayout {
    fn default() -> Self {
        CellularLayout {
            rings: 2,
            users_per_domain: 1,
            length_km: DEFAULT_LENGTH_KM,
        }
    }
}

impl CellularLayout {
    pub fn with_rings(rings: u32) -> Self {
        CellularLayout {
            rings,
            ..Default::default()
        }
    }

    pub fn side(&self) -> usize {
        2 * self.rings.max(1) as usize - 1
    }

    fn cell_centre(&self, row: usize, col: usize) -> (f64, f64) {
        let pitch = 2.0 * self.length_km;
        (col as f64 * pitch, row as f64 * pitch)
    }

    fn user_names(&self, domain: &str) -> Vec<String> {
        if self.users_per_domain <= 1 {
            vec![format!("U_{domain}")]
        } else {
            (1..=self.users_per_domain)
                .map(|k| format!("U_{domain}{k}"))
                .collect()
        }
    }

    fn user_pos(&self, row: usize, col: usize, k: usize) -> (f64, f64) {
        let (x, y) = self.cell_centre(row, col);
        let h = self.length_km / 2.0;
        (x + h, y - h + k as f64)
    }

    fn memories(kind: DeviceKind) -> Vec<MemoryKind> {
        let per_kind = match kind {
            DeviceKind::User => 1,
            DeviceKind::Repeater | DeviceKind::EdgeRepeater => 2,
            _ => 4,
        };
        let mut m = vec![MemoryKind::Atomic; per_kind];
        m.extend(vec![MemoryKind::Optical; per_kind]);
        m
    }

    fn device(
        name: String,
        kind: DeviceKind,
        domains: Vec<String>,
        pos: (f64, f64),
    ) -> Device {
        Device {
            name,
            kind,
            domains,
            memories: Self::memories(kind),
            pos,
            env: EnvParams::noiseless(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rings == 0 {
            return Err(Error::InvalidParameter {
                name: "rings",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if self.users_per_domain == 0 {
            return Err(Error::InvalidParameter {
                name: "users_per_domain",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(())
    }

    /// One local controller per domain, one edge repeater per shared border,
    /// users attached to their domain's controller, a central controller
    /// linked to every local controller.
    pub fn hierarchical(&self) -> Result<Topology> {
        self.validate()?;
        let s = self.side();
        let len = self.length_km;
        let chan = EnvParams {
            length_km: len,
            ..EnvParams::noiseless()
        };
        let mut t = Topology::new(Mode::Hierarchical);
        let dom = |r: usize, c: usize| domain_name(r * s + c);
        for i in 0..s * s {
            t.add_domain(&domain_name(i));
        }
        let centre = self.cell_centre(s / 2, s / 2);
        let cc = t.add_device(Self::device(
            "CC".into(),
            DeviceKind::CentralController,
            Vec::new(),
            (centre.0, centre.1 - len),
        ))?;
        let mut lcs = Vec::new();
        for r in 0..s {
            for c in 0..s {
                let d = dom(r, c);
                let lc = t.add_device(Self::device(
                    format!("LC_{d}"),
                    DeviceKind::LocalController,
                    vec![d.clone()],
                    self.cell_centre(r, c),
                ))?;
                t.add_classical(cc, lc, len)?;
                lcs.push(lc);
            }
        }
        for r in 0..s {
            for c in 0..s {
                let d = dom(r, c);
                let lc = lcs[r * s + c];
                for (k, name) in self.user_names(&d).into_iter().enumerate() {
                    let u = t.add_device(Self::device(
                        name,
                        DeviceKind::User,
                        vec![d.clone()],
                        self.user_pos(r, c, k),
                    ))?;
                    t.add_quantum(u, lc, chan)?;
                    t.add_classical(u, lc, len)?;
                }
            }
        }
        // Borders in row-major order: right neighbour, then lower neighbour.
        for r in 0..s {
            for c in 0..s {
                let here = self.cell_centre(r, c);
                let mut borders = Vec::new();
                if c + 1 < s {
                    borders.push((r, c + 1));
                }
                if r + 1 < s {
                    borders.push((r + 1, c));
                }
                for (r2, c2) in borders {
                    let (a, b) = (dom(r, c), dom(r2, c2));
                    let there = self.cell_centre(r2, c2);
                    let e = t.add_device(Self::device(
                        format!("R_{a}_{b}"),
                        DeviceKind::EdgeRepeater,
                        vec![a, b],
                        ((here.0 + there.0) / 2.0, (here.1 + there.1) / 2.0),
                    ))?;
                    for lc in [lcs[r * s + c], lcs[r2 * s + c2]] {
                        t.add_quantum(e, lc, chan)?;
                        t.add_classical(e, lc, len)?;
                    }
                }
            }
        }
        Ok(t)
    }

    /// Same geography without controllers: four preparation-capable
    /// repeaters per cell on a square grid, each user linked to the
    /// upper-right repeater of its cell.
    pub fn distributed(&self) -> Result<Topology> {
        self.validate()?;
        let s = self.side();
        let g = 2 * s;
        let len = self.length_km;
        let chan = EnvParams {
            length_km: len,
            ..EnvParams::noiseless()
        };
        let mut t = Topology::new(Mode::Distributed);
        for i in 0..s * s {
            t.add_domain(&domain_name(i));
        }
        let mut grid = vec![0; g * g];
        for r in 0..g {
            for c in 0..g {
                let (cx, cy) = self.cell_centre(r / 2, c / 2);
                let h = len / 2.0;
                let x = cx + if c % 2 == 0 { -h } else { h };
                let y = cy + if r % 2 == 0 { -h } else { h };
                grid[r * g + c] = t.add_device(Self::device(
                    format!("R{r}_{c}"),
                    DeviceKind::Repeater,
                    vec![domain_name((r / 2) * s + c / 2)],
                    (x, y),
                ))?;
            }
        }
        for r in 0..g {
            for c in 0..g {
                let here = grid[r * g + c];
                if c + 1 < g {
                    t.add_quantum(here, grid[r * g + c + 1], chan)?;
                    t.add_classical(here, grid[r * g + c + 1], len)?;
                }
                if r + 1 < g {
                    t.add_quantum(here, grid[(r + 1) * g + c], chan)?;
                    t.add_classical(here, grid[(r + 1) * g + c], len)?;
                }
            }
        }
        for r in 0..s {
            for c in 0..s {
                let d = domain_name(r * s + c);
                let anchor = grid[(2 * r) * g + 2 * c + 1];
                for (k, name) in self.user_names(&d).into_iter().enumerate() {
                    let u = t.add_device(Self::device(
                        name,
                        DeviceKind::User,
                        vec![d.clone()],
                        self.user_pos(r, c, k),
                    ))?;
                    t.add_quantum(u, anchor, chan)?;
                    t.add_classical(u, anchor, len)?;
                }
            }
        }
        Ok(t)
    }
}

pub fn build_hierarchical_cellular(rings: u32) -> Result<Topology> {
    CellularLayout::with_rings(rings).hierarchical()
}

pub fn build_distributed_cellular(rings: u32) -> Result<Topology> {
    CellularLayout::with_rings(rings).distributed()
}

/// Every tied-shortest domain sequence between two domains.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dspt {
    pub paths: BTreeMap<(String, String), Vec<Vec<String>>>,
    pub unreachable: Vec<(String, String)>,
}

impl Dspt {
    pub fn get(&self, a: &str, b: &str) -> &[Vec<String>] {
        self.paths
            .get(&(a.to_string(), b.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Edge repeaters on each domain border, keyed by the ordered domain pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dert {
    pub edges: BTreeMap<(String, String), Vec<DeviceIdx>>,
}

impl Dert {
    pub fn get(&self, a: &str, b: &str) -> &[DeviceIdx] {
        let key = if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        self.edges.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn build_dspt_dert(t: &Topology) -> Result<(Dspt, Dert)> {
    if t.mode != Mode::Hierarchical {
        return Err(Error::Topology("domain tables need a hierarchical topology".into()));
    }
    let adj = t.domain_adjacency();
    let mut dspt = Dspt::default();
    for src in &t.domains {
        // BFS keeping every predecessor on a shortest route.
        let mut dist: BTreeMap<&str, usize> = BTreeMap::new();
        let mut preds: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let mut q = VecDeque::new();
        dist.insert(src, 0);
        q.push_back(src.as_str());
        while let Some(u) = q.pop_front() {
            for v in &adj[u] {
                let v = v.as_str();
                match dist.get(v) {
                    None => {
                        dist.insert(v, dist[u] + 1);
                        preds.insert(v, vec![u]);
                        q.push_back(v);
                    }
                    Some(&dv) if dv == dist[u] + 1 => preds.get_mut(v).unwrap().push(u),
                    _ => {}
                }
            }
        }
        for dst in &t.domains {
            let key = (src.clone(), dst.clone());
            if src == dst {
                dspt.paths.insert(key, vec![Vec::new()]);
                continue;
            }
            if !dist.contains_key(dst.as_str()) {
                dspt.unreachable.push(key);
                continue;
            }
            let mut out = Vec::new();
            let mut stack = vec![vec![dst.as_str()]];
            while let Some(partial) = stack.pop() {
                let head = *partial.last().unwrap();
                if head == src {
                    out.push(partial.iter().rev().map(|s| s.to_string()).collect());
                    continue;
                }
                for p in &preds[head] {
                    let mut next = partial.clone();
                    next.push(p);
                    stack.push(next);
                }
            }
            out.sort();
            dspt.paths.insert(key, out);
        }
    }
    let mut dert = Dert::default();
    for (i, d) in t.devices.iter().enumerate() {
        if d.kind != DeviceKind::EdgeRepeater {
            continue;
        }
        for a in &d.domains {
            for b in &d.domains {
                if a < b {
                    dert.edges.entry((a.clone(), b.clone())).or_default().push(i);
                }
            }
        }
    }
    Ok((dspt, dert))
}

/// Control traffic per communication.
pub const CONTROL_BYTES_PER_COMMUNICATION: f64 = 300e3;

/// Control-plane load in bytes/s at `concurrent_qps` communications per second.
pub fn control_plane_load(concurrent_qps: f64) -> f64 {
    CONTROL_BYTES_PER_COMMUNICATION * concurrent_qps.max(0.0)
}
