//! Exact statevector kernel for small registers.
//!
//! Qubit `q` of a register corresponds to bit `q` of the basis-state index.
//! Whenever a caller supplies an ordered list of qubits together with a state
//! vector (for example in [`StateRegister::fidelity`]), the first listed qubit
//! is the most significant bit of that vector's index, so that `|01⟩` on
//! `(a, b)` means `a = 0, b = 1`.
//!
//! Bell-state measurements use one fixed convention throughout the crate:
//! `CNOT(q1 → q2)`, `H(q1)`, then computational measurement, yielding the
//! outcome bits `(m1, m2)` read from `(q1, q2)`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

/// Largest register the kernel will allocate.
pub const MAX_QUBITS: usize = 12;

/// Tolerance used for "is this state what the precondition requires".
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("register size {0} outside 1..={MAX_QUBITS}")]
    QubitCount(usize),
    #[error("qubit index {0} out of range for a {1}-qubit register")]
    OutOfRange(usize, usize),
    #[error("duplicate qubit {0} in operand list")]
    DuplicateQubit(usize),
    #[error("gate {gate} expects {expected} target(s), got {got}")]
    Arity { gate: Gate, expected: usize, got: usize },
    #[error("unknown gate `{0}`")]
    UnknownGate(String),
    #[error("unknown qubit label `{0}`")]
    UnknownLabel(String),
    #[error("qubits {0:?} are not in the ground state")]
    NotGround(Vec<usize>),
    #[error("qubits {0:?} do not hold a W state")]
    NotWState(Vec<usize>),
    #[error("pair ({0}, {1}) is not maximally entangled (fidelity {2:.3e})")]
    NotEntangled(usize, usize, f64),
    #[error("target state has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type KernelResult<T> = std::result::Result<T, KernelError>;

/// Register position of a qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Qubit(pub usize);

impl fmt::Display for Qubit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    H,
    X,
    Z,
    Cnot,
}

impl Gate {
    pub fn arity(self) -> usize {
        match self {
            Gate::Cnot => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Gate::H => "H",
            Gate::X => "X",
            Gate::Z => "Z",
            Gate::Cnot => "CNOT",
        };
        f.write_str(s)
    }
}

impl FromStr for Gate {
    type Err = KernelError;

    fn from_str(s: &str) -> KernelResult<Self> {
        match s.to_ascii_uppercase().as_str() {
            "H" => Ok(Gate::H),
            "X" => Ok(Gate::X),
            "Z" => Ok(Gate::Z),
            "CNOT" | "CX" => Ok(Gate::Cnot),
            _ => Err(KernelError::UnknownGate(s.to_string())),
        }
    }
}

/// The four Bell states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellState {
    PhiPlus,
    PsiPlus,
    PhiMinus,
    PsiMinus,
}

impl BellState {
    /// Amplitudes over `|00⟩, |01⟩, |10⟩, |11⟩`.
    pub fn vector(self) -> [Complex64; 4] {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        match self {
            BellState::PhiPlus => [h, z, z, h],
            BellState::PhiMinus => [h, z, z, -h],
            BellState::PsiPlus => [z, h, h, z],
            BellState::PsiMinus => [z, h, -h, z],
        }
    }

    pub fn frame(self) -> PauliFrame {
        match self {
            BellState::PhiPlus => PauliFrame { x: false, z: false },
            BellState::PsiPlus => PauliFrame { x: true, z: false },
            BellState::PhiMinus => PauliFrame { x: false, z: true },
            BellState::PsiMinus => PauliFrame { x: true, z: true },
        }
    }
}

/// Pauli offset of a Bell pair relative to `|Φ+⟩`.
///
/// A pair `(a, b)` in frame `(x, z)` holds `(I ⊗ XˣZᶻ)|Φ+⟩` up to a global
/// phase. Frames compose by XOR, which is what makes swapping bookkeeping
/// cheap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PauliFrame {
    pub x: bool,
    pub z: bool,
}

impl PauliFrame {
    pub const IDENTITY: PauliFrame = PauliFrame { x: false, z: false };

    pub fn compose(self, other: PauliFrame) -> PauliFrame {
        PauliFrame {
            x: self.x ^ other.x,
            z: self.z ^ other.z,
        }
    }

    pub fn bell_state(self) -> BellState {
        match (self.x, self.z) {
            (false, false) => BellState::PhiPlus,
            (true, false) => BellState::PsiPlus,
            (false, true) => BellState::PhiMinus,
            (true, true) => BellState::PsiMinus,
        }
    }

    pub fn is_identity(self) -> bool {
        !self.x && !self.z
    }
}

/// Two classical bits from a Bell-state measurement.
///
/// `m1` is read from the qubit that received the Hadamard, `m2` from the
/// CNOT target. The outcome identifies the measured Bell state:
/// `00 → Φ+`, `01 → Ψ+`, `10 → Φ−`, `11 → Ψ−`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BellOutcome {
    pub m1: bool,
    pub m2: bool,
}

impl BellOutcome {
    pub fn from_index(i: usize) -> Self {
        BellOutcome {
            m1: i & 0b10 != 0,
            m2: i & 0b01 != 0,
        }
    }

    /// `2·m1 + m2`.
    pub fn index(self) -> usize {
        (usize::from(self.m1) << 1) | usize::from(self.m2)
    }

    /// Pauli correction (apply X if `x`, then Z if `z`) implied by the outcome.
    pub fn frame(self) -> PauliFrame {
        PauliFrame {
            x: self.m2,
            z: self.m1,
        }
    }
}

impl fmt::Display for BellOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", u8::from(self.m1), u8::from(self.m2))
    }
}

/// Branch taken when converting a W state into Bell pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WBranch {
    /// `|Φ+⟩(atom, p1) ⊗ |Ψ+⟩(p2, a_lc)`.
    TwoEpr,
    /// `|Ψ+⟩(atom, p1) ⊗ |00⟩(p2, a_lc)`.
    Residual,
}

/// A Bell pair living in a register, with its tracked frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BellPair {
    pub a: Qubit,
    pub b: Qubit,
    pub frame: PauliFrame,
}

impl BellPair {
    pub fn new(a: Qubit, b: Qubit, state: BellState) -> Self {
        BellPair {
            a,
            b,
            frame: state.frame(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapOutcome {
    pub outcome: BellOutcome,
    /// Frame of the outer pair before any correction.
    pub raw_frame: PauliFrame,
    /// The outer pair, corrected to `|Φ+⟩`.
    pub pair: BellPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TeleportOutcome {
    pub outcome: BellOutcome,
    pub correction: PauliFrame,
    pub delivered: Qubit,
}

/// Exact complex-amplitude state of up to [`MAX_QUBITS`] qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRegister {
    n: usize,
    amps: Vec<Complex64>,
    labels: Vec<Option<String>>,
}

impl StateRegister {
    /// All qubits in `|0⟩`.
    pub fn new(n: usize) -> KernelResult<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(KernelError::QubitCount(n));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(StateRegister {
            n,
            amps,
            labels: vec![None; n],
        })
    }

    /// One qubit per label, in order.
    pub fn with_labels(labels: &[&str]) -> KernelResult<Self> {
        let mut reg = Self::new(labels.len())?;
        for (i, l) in labels.iter().enumerate() {
            reg.labels[i] = Some((*l).to_string());
        }
        Ok(reg)
    }

    pub fn qubit_count(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn qubit(&self, label: &str) -> KernelResult<Qubit> {
        self.labels
            .iter()
            .position(|l| l.as_deref() == Some(label))
            .map(Qubit)
            .ok_or_else(|| KernelError::UnknownLabel(label.to_string()))
    }

    pub fn label(&self, q: Qubit) -> Option<&str> {
        self.labels.get(q.0).and_then(|l| l.as_deref())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Basis index with the listed qubits set to the given bits, all others 0.
    pub fn basis_index(&self, assignment: &[(Qubit, bool)]) -> usize {
        assignment
            .iter()
            .filter(|(_, b)| *b)
            .fold(0, |acc, (q, _)| acc | (1 << q.0))
    }

    fn check(&self, qubits: &[Qubit]) -> KernelResult<()> {
        for (i, q) in qubits.iter().enumerate() {
            if q.0 >= self.n {
                return Err(KernelError::OutOfRange(q.0, self.n));
            }
            if qubits[..i].contains(q) {
                return Err(KernelError::DuplicateQubit(q.0));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, gate: Gate, targets: &[Qubit]) -> KernelResult<()> {
        if targets.len() != gate.arity() {
            return Err(KernelError::Arity {
                gate,
                expected: gate.arity(),
                got: targets.len(),
            });
        }
        self.check(targets)?;
        match gate {
            Gate::H => self.hadamard(targets[0]),
            Gate::X => self.pauli_x(targets[0]),
            Gate::Z => self.pauli_z(targets[0]),
            Gate::Cnot => self.cnot(targets[0], targets[1]),
        }
        Ok(())
    }

    fn hadamard(&mut self, q: Qubit) {
        let mask = 1 << q.0;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let a = self.amps[i];
                let b = self.amps[i | mask];
                self.amps[i] = (a + b) * FRAC_1_SQRT_2;
                self.amps[i | mask] = (a - b) * FRAC_1_SQRT_2;
            }
        }
    }

    fn pauli_x(&mut self, q: Qubit) {
        let mask = 1 << q.0;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                self.amps.swap(i, i | mask);
            }
        }
    }

    fn pauli_z(&mut self, q: Qubit) {
        let mask = 1 << q.0;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & mask != 0 {
                *a = -*a;
            }
        }
    }

    fn cnot(&mut self, control: Qubit, target: Qubit) {
        let c = 1 << control.0;
        let t = 1 << target.0;
        for i in 0..self.amps.len() {
            if i & c != 0 && i & t == 0 {
                self.amps.swap(i, i | t);
            }
        }
    }

    /// Apply X then Z on `q` as selected by `frame`.
    pub fn apply_correction(&mut self, q: Qubit, frame: PauliFrame) -> KernelResult<()> {
        if frame.x {
            self.apply(Gate::X, &[q])?;
        }
        if frame.z {
            self.apply(Gate::Z, &[q])?;
        }
        Ok(())
    }

    /// Born probability of reading `1` on `q`.
    pub fn probability_one(&self, q: Qubit) -> KernelResult<f64> {
        self.check(&[q])?;
        let mask = 1 << q.0;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Collapse `q` onto `bit`, returning the probability of that branch.
    ///
    /// Inconsistent amplitudes are zeroed and the rest renormalized. Projecting
    /// onto a zero-probability branch leaves the register untouched.
    pub fn project(&mut self, q: Qubit, bit: bool) -> KernelResult<f64> {
        self.check(&[q])?;
        let mask = 1 << q.0;
        self.project_where(|i| (i & mask != 0) == bit)
    }

    fn project_where(&mut self, keep: impl Fn(usize) -> bool) -> KernelResult<f64> {
        let p: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if p <= 0.0 {
            return Ok(0.0);
        }
        let scale = 1.0 / p.sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if keep(i) {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        Ok(p)
    }

    pub fn measure<R: Rng + ?Sized>(&mut self, q: Qubit, rng: &mut R) -> KernelResult<bool> {
        let p1 = self.probability_one(q)?;
        let bit = rng.random::<f64>() < p1;
        self.project(q, bit)?;
        Ok(bit)
    }

    /// Probability that every listed qubit reads `0`.
    pub fn ground_probability(&self, qubits: &[Qubit]) -> KernelResult<f64> {
        self.check(qubits)?;
        let mask = qubits.iter().fold(0usize, |m, q| m | (1 << q.0));
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    fn require_ground(&self, qubits: &[Qubit]) -> KernelResult<()> {
        if self.ground_probability(qubits)? < 1.0 - ORACLE_TOLERANCE {
            return Err(KernelError::NotGround(qubits.iter().map(|q| q.0).collect()));
        }
        Ok(())
    }

    /// Put three ground-state qubits into `(|001⟩ + |010⟩ + |100⟩)/√3`.
    pub fn prepare_w_state(&mut self, q1: Qubit, q2: Qubit, q3: Qubit) -> KernelResult<()> {
        let qs = [q1, q2, q3];
        self.check(&qs)?;
        self.require_ground(&qs)?;
        let mask = (1 << q1.0) | (1 << q2.0) | (1 << q3.0);
        let w = 1.0 / 3f64.sqrt();
        let old = std::mem::replace(&mut self.amps, vec![Complex64::new(0.0, 0.0); 1 << self.n]);
        for (i, a) in old.iter().enumerate() {
            if i & mask == 0 && a.norm_sqr() > 0.0 {
                for q in qs {
                    self.amps[i | (1 << q.0)] = a * w;
                }
            }
        }
        Ok(())
    }

    /// Put two ground-state qubits into the requested Bell state.
    pub fn prepare_bell(&mut self, q1: Qubit, q2: Qubit, state: BellState) -> KernelResult<()> {
        self.check(&[q1, q2])?;
        self.require_ground(&[q1, q2])?;
        self.apply(Gate::H, &[q1])?;
        self.apply(Gate::Cnot, &[q1, q2])?;
        self.apply_correction(q2, state.frame())
    }

    /// Analytic outcome distribution of [`bell_measure`](Self::bell_measure),
    /// indexed by [`BellOutcome::index`].
    pub fn bell_probabilities(&self, q1: Qubit, q2: Qubit) -> KernelResult<[f64; 4]> {
        let mut probe = self.clone();
        probe.apply(Gate::Cnot, &[q1, q2])?;
        probe.apply(Gate::H, &[q1])?;
        let (m1, m2) = (1 << q1.0, 1 << q2.0);
        let mut p = [0.0; 4];
        for (i, a) in probe.amps.iter().enumerate() {
            let o = (usize::from(i & m1 != 0) << 1) | usize::from(i & m2 != 0);
            p[o] += a.norm_sqr();
        }
        Ok(p)
    }

    /// Bell-state measurement: `CNOT(q1 → q2)`, `H(q1)`, measure both.
    pub fn bell_measure<R: Rng + ?Sized>(
        &mut self,
        q1: Qubit,
        q2: Qubit,
        rng: &mut R,
    ) -> KernelResult<BellOutcome> {
        self.check(&[q1, q2])?;
        self.apply(Gate::Cnot, &[q1, q2])?;
        self.apply(Gate::H, &[q1])?;
        let m1 = self.measure(q1, rng)?;
        let m2 = self.measure(q2, rng)?;
        Ok(BellOutcome { m1, m2 })
    }

    /// Reduced density matrix of the listed qubits (first listed is the most
    /// significant index bit).
    pub fn reduced_density(&self, qubits: &[Qubit]) -> KernelResult<Vec<Vec<Complex64>>> {
        self.check(qubits)?;
        let k = qubits.len();
        let dim = 1 << k;
        let sub_mask = qubits.iter().fold(0usize, |m, q| m | (1 << q.0));
        let sub_index = |i: usize| -> usize {
            qubits
                .iter()
                .fold(0, |acc, q| (acc << 1) | usize::from(i & (1 << q.0) != 0))
        };
        let mut rho = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
        // Group amplitudes by the environment bits, then accumulate outer products.
        let mut by_env: std::collections::BTreeMap<usize, Vec<(usize, Complex64)>> =
            std::collections::BTreeMap::new();
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() > 0.0 {
                by_env.entry(i & !sub_mask).or_default().push((sub_index(i), *a));
            }
        }
        for group in by_env.values() {
            for &(r, ar) in group {
                for &(c, ac) in group {
                    rho[r][c] += ar * ac.conj();
                }
            }
        }
        Ok(rho)
    }

    /// `⟨target|ρ|target⟩` for the reduced state of `qubits`.
    pub fn fidelity(&self, qubits: &[Qubit], target: &[Complex64]) -> KernelResult<f64> {
        let dim = 1usize << qubits.len();
        if target.len() != dim {
            return Err(KernelError::DimensionMismatch {
                expected: dim,
                got: target.len(),
            });
        }
        let rho = self.reduced_density(qubits)?;
        let mut f = Complex64::new(0.0, 0.0);
        for r in 0..dim {
            for c in 0..dim {
                f += target[r].conj() * rho[r][c] * target[c];
            }
        }
        Ok(f.re.clamp(0.0, 1.0))
    }

    pub fn pair_fidelity(&self, pair: &BellPair) -> KernelResult<f64> {
        self.fidelity(&[pair.a, pair.b], &pair.frame.bell_state().vector())
    }

    fn require_w(&self, qubits: &[Qubit; 3]) -> KernelResult<()> {
        let f = self.fidelity(qubits, &w_state_vector())?;
        if f < 1.0 - ORACLE_TOLERANCE {
            return Err(KernelError::NotWState(qubits.iter().map(|q| q.0).collect()));
        }
        Ok(())
    }

    fn w_conversion_ops(&mut self, w: &[Qubit; 3], atom: Qubit) -> KernelResult<()> {
        self.check(&[w[0], w[1], w[2], atom])?;
        self.require_w(w)?;
        self.require_ground(&[atom])?;
        self.apply(Gate::H, &[atom])?;
        self.apply(Gate::Cnot, &[atom, w[0]])
    }

    fn parity_even(atom: Qubit, p1: Qubit) -> impl Fn(usize) -> bool {
        move |i| ((i >> atom.0) & 1) == ((i >> p1.0) & 1)
    }

    /// Analytic `(P[TwoEpr], P[Residual])` for converting the W state on
    /// `w = (p1, p2, a_lc)` with the repeater atom `atom`.
    pub fn w_conversion_probabilities(
        &self,
        w: &[Qubit; 3],
        atom: Qubit,
    ) -> KernelResult<(f64, f64)> {
        let mut probe = self.clone();
        probe.w_conversion_ops(w, atom)?;
        let even = Self::parity_even(atom, w[0]);
        let p_even: f64 = probe
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| even(*i))
            .map(|(_, a)| a.norm_sqr())
            .sum();
        Ok((p_even, 1.0 - p_even))
    }

    /// Apply `H(atom)`, `CNOT(atom → p1)` and resolve which branch the
    /// register is in by a parity measurement of `(atom, p1)`.
    pub fn convert_w_to_epr<R: Rng + ?Sized>(
        &mut self,
        w: &[Qubit; 3],
        atom: Qubit,
        rng: &mut R,
    ) -> KernelResult<WBranch> {
        let (p_two, _) = self.w_conversion_probabilities(w, atom)?;
        let branch = if rng.random::<f64>() < p_two {
            WBranch::TwoEpr
        } else {
            WBranch::Residual
        };
        self.project_w_conversion(w, atom, branch)?;
        Ok(branch)
    }

    /// Deterministic variant of [`convert_w_to_epr`](Self::convert_w_to_epr)
    /// that forces the given branch. Returns that branch's probability.
    pub fn project_w_conversion(
        &mut self,
        w: &[Qubit; 3],
        atom: Qubit,
        branch: WBranch,
    ) -> KernelResult<f64> {
        self.w_conversion_ops(w, atom)?;
        let even = Self::parity_even(atom, w[0]);
        match branch {
            WBranch::TwoEpr => self.project_where(even),
            WBranch::Residual => self.project_where(|i| !even(i)),
        }
    }

    /// Swap `left = (a, b)` and `right = (c, d)` by a BSM on `(b, c)`, then
    /// correct `d` so that `(a, d)` holds `|Φ+⟩`.
    pub fn entanglement_swap<R: Rng + ?Sized>(
        &mut self,
        left: BellPair,
        right: BellPair,
        rng: &mut R,
    ) -> KernelResult<SwapOutcome> {
        self.check(&[left.a, left.b, right.a, right.b])?;
        let outcome = self.bell_measure(left.b, right.a, rng)?;
        let raw_frame = left.frame.compose(right.frame).compose(outcome.frame());
        self.apply_correction(right.b, raw_frame)?;
        Ok(SwapOutcome {
            outcome,
            raw_frame,
            pair: BellPair {
                a: left.a,
                b: right.b,
                frame: PauliFrame::IDENTITY,
            },
        })
    }

    /// Teleport `payload` across `pair` (sender holds `pair.a`).
    pub fn teleport<R: Rng + ?Sized>(
        &mut self,
        payload: Qubit,
        pair: BellPair,
        rng: &mut R,
    ) -> KernelResult<TeleportOutcome> {
        self.check(&[payload, pair.a, pair.b])?;
        let f = self.pair_fidelity(&pair)?;
        if f < 1.0 - ORACLE_TOLERANCE {
            return Err(KernelError::NotEntangled(pair.a.0, pair.b.0, f));
        }
        let outcome = self.bell_measure(payload, pair.a, rng)?;
        let correction = pair.frame.compose(outcome.frame());
        self.apply_correction(pair.b, correction)?;
        Ok(TeleportOutcome {
            outcome,
            correction,
            delivered: pair.b,
        })
    }

    /// Overwrite a ground-state qubit with `alpha|0⟩ + beta|1⟩` (normalized).
    pub fn load_qubit(&mut self, q: Qubit, alpha: Complex64, beta: Complex64) -> KernelResult<()> {
        self.check(&[q])?;
        self.require_ground(&[q])?;
        let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        let (alpha, beta) = (alpha / norm, beta / norm);
        let mask = 1 << q.0;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let a = self.amps[i];
                self.amps[i] = a * alpha;
                self.amps[i | mask] = a * beta;
            }
        }
        Ok(())
    }
}

/// `(|001⟩ + |010⟩ + |100⟩)/√3` over three ordered qubits.
pub fn w_state_vector() -> [Complex64; 8] {
    let w = Complex64::new(1.0 / 3f64.sqrt(), 0.0);
    let z = Complex64::new(0.0, 0.0);
    [z, w, w, z, w, z, z, z]
}

/// Single-qubit vector `alpha|0⟩ + beta|1⟩`, normalized.
pub fn qubit_vector(alpha: Complex64, beta: Complex64) -> [Complex64; 2] {
    let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
    [alpha / norm, beta / norm]
}

/// Teleport a payload across a chain of `hops` repeaters (so `hops + 1`
/// noiseless `|Φ+⟩` pairs), swapping left to right, and return the delivered
/// fidelity. Needs `2·hops + 3` qubits.
pub fn chain_teleport_fidelity<R: Rng + ?Sized>(
    hops: usize,
    alpha: Complex64,
    beta: Complex64,
    rng: &mut R,
) -> KernelResult<f64> {
    let n = 2 * (hops + 1) + 1;
    let mut reg = StateRegister::new(n)?;
    let payload = Qubit(0);
    reg.load_qubit(payload, alpha, beta)?;
    let pairs: Vec<BellPair> = (0..=hops)
        .map(|i| BellPair::new(Qubit(1 + 2 * i), Qubit(2 + 2 * i), BellState::PhiPlus))
        .collect();
    for p in &pairs {
        reg.prepare_bell(p.a, p.b, BellState::PhiPlus)?;
    }
    let mut end_to_end = pairs[0];
    for right in &pairs[1..] {
        end_to_end = reg.entanglement_swap(end_to_end, *right, rng)?.pair;
    }
    let t = reg.teleport(payload, end_to_end, rng)?;
    reg.fidelity(&[t.delivered], &qubit_vector(alpha, beta))
}
