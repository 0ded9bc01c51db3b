//! Exact statevector preparation for upload sequences.
//!
//! Qubit `q` is bit `q` of the amplitude index (little endian). Rotation
//! gates follow `R_a(θ) = exp(-iθσ_a/2)`. Ring blocks visit the edges
//! `(q, (q+1) mod n)` for ascending `q`, the lower index of each edge
//! acting as control. Global phase is not tracked.

pub mod dense;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("ring block {block} needs at least 2 qubits, got {n}")]
    RingTooSmall { block: GateBlock, n: usize },
    #[error("angle vector has length {got}, register has {expected} qubits")]
    AngleLength { expected: usize, got: usize },
    #[error("angle {value} at position {index} is outside [-pi, pi]")]
    AngleOutOfRange { index: usize, value: f64 },
    #[error("qubit count {0} is outside 1..={MAX_QUBITS}")]
    QubitCount(usize),
    #[error("dense oracle supports at most {max} qubits, got {n}")]
    OracleTooLarge { n: usize, max: usize },
    #[error("unknown gate block `{0}`")]
    UnknownBlock(String),
}

/// One atomic upload block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GateBlock {
    Rx,
    Ry,
    Rz,
    CzRing,
    CnotRing,
    CrxRing,
    CryRing,
    CrzRing,
}

impl GateBlock {
    /// The atomic library, in its canonical order.
    pub const LIBRARY: [GateBlock; 8] = [
        GateBlock::Rx,
        GateBlock::Ry,
        GateBlock::Rz,
        GateBlock::CzRing,
        GateBlock::CnotRing,
        GateBlock::CrxRing,
        GateBlock::CryRing,
        GateBlock::CrzRing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateBlock::Rx => "RX",
            GateBlock::Ry => "RY",
            GateBlock::Rz => "RZ",
            GateBlock::CzRing => "CZ_RING",
            GateBlock::CnotRing => "CNOT_RING",
            GateBlock::CrxRing => "CRX_RING",
            GateBlock::CryRing => "CRY_RING",
            GateBlock::CrzRing => "CRZ_RING",
        }
    }

    /// Position in [`GateBlock::LIBRARY`].
    pub fn library_index(self) -> usize {
        self as usize
    }

    pub fn is_ring(self) -> bool {
        !matches!(self, GateBlock::Rx | GateBlock::Ry | GateBlock::Rz)
    }

    /// Relative hardware weight: single-qubit layer 1, CZ/CNOT ring 3,
    /// controlled-rotation ring 5.
    pub fn hardware_cost(self) -> u32 {
        match self {
            GateBlock::Rx | GateBlock::Ry | GateBlock::Rz => 1,
            GateBlock::CzRing | GateBlock::CnotRing => 3,
            GateBlock::CrxRing | GateBlock::CryRing | GateBlock::CrzRing => 5,
        }
    }
}

impl fmt::Display for GateBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateBlock {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_uppercase();
        GateBlock::LIBRARY
            .into_iter()
            .find(|g| g.name() == wanted)
            .ok_or_else(|| SimError::UnknownBlock(s.to_string()))
    }
}

impl From<GateBlock> for String {
    fn from(g: GateBlock) -> String {
        g.name().to_string()
    }
}

impl TryFrom<String> for GateBlock {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Ordered list of gate blocks. Equality is element-wise, so it doubles as
/// a cache key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct UploadSequence(Vec<GateBlock>);

impl UploadSequence {
    pub fn new(blocks: Vec<GateBlock>) -> Self {
        Self(blocks)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn blocks(&self) -> &[GateBlock] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `self ∘ g`: a copy with `g` appended.
    pub fn extended(&self, g: GateBlock) -> Self {
        let mut blocks = self.0.clone();
        blocks.push(g);
        Self(blocks)
    }

    pub fn starts_with(&self, prefix: &UploadSequence) -> bool {
        self.0.starts_with(&prefix.0)
    }

    /// The blocks after `prefix`, or `None` if `prefix` is not a prefix.
    pub fn strip_prefix(&self, prefix: &UploadSequence) -> Option<UploadSequence> {
        self.0
            .strip_prefix(prefix.0.as_slice())
            .map(|rest| UploadSequence(rest.to_vec()))
    }

    pub fn concat(&self, suffix: &UploadSequence) -> Self {
        let mut blocks = self.0.clone();
        blocks.extend_from_slice(&suffix.0);
        Self(blocks)
    }

    pub fn hardware_cost(&self) -> u32 {
        self.0.iter().map(|g| g.hardware_cost()).sum()
    }

    /// Lexicographic key over library indices, used as the final tie-break.
    pub fn library_key(&self) -> Vec<usize> {
        self.0.iter().map(|g| g.library_index()).collect()
    }
}

impl From<Vec<GateBlock>> for UploadSequence {
    fn from(v: Vec<GateBlock>) -> Self {
        Self(v)
    }
}

/// Text form: block names joined by `+`; the empty sequence is `-`.
impl fmt::Display for UploadSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("-");
        }
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            f.write_str(g.name())?;
        }
        Ok(())
    }
}

impl FromStr for UploadSequence {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "-" {
            return Ok(Self::empty());
        }
        s.split(['+', ','])
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }
}

impl From<UploadSequence> for String {
    fn from(u: UploadSequence) -> String {
        u.to_string()
    }
}

impl TryFrom<String> for UploadSequence {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Per-qubit rotation angles in radians, each within `[-π, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleVector(Vec<f64>);

impl AngleVector {
    pub fn new(theta: Vec<f64>) -> Result<Self, SimError> {
        use std::f64::consts::PI;
        for (index, &value) in theta.iter().enumerate() {
            if !(-PI..=PI).contains(&value) {
                return Err(SimError::AngleOutOfRange { index, value });
            }
        }
        Ok(Self(theta))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Rotation angle on a controlled-rotation edge.
pub fn pair_angle(theta_u: f64, theta_v: f64) -> f64 {
    0.5 * (theta_u + theta_v)
}

/// Dense amplitude vector of an `n`-qubit pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n` qubits.
    pub fn zero(n: usize) -> Result<Self, SimError> {
        if n == 0 || n > MAX_QUBITS {
            return Err(SimError::QubitCount(n));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    /// Wraps raw amplitudes. The caller is responsible for normalization.
    pub fn from_amplitudes(n: usize, amps: Vec<Complex64>) -> Result<Self, SimError> {
        if n == 0 || n > MAX_QUBITS || amps.len() != 1 << n {
            return Err(SimError::QubitCount(n));
        }
        Ok(Self { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn apply_single(&mut self, q: usize, m: &Mat2) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = m[0] * a0 + m[1] * a1;
                self.amps[i | bit] = m[2] * a0 + m[3] * a1;
            }
        }
    }

    fn apply_controlled(&mut self, control: usize, target: usize, m: &Mat2) {
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cbit != 0 && i & tbit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | tbit]);
                self.amps[i] = m[0] * a0 + m[1] * a1;
                self.amps[i | tbit] = m[2] * a0 + m[3] * a1;
            }
        }
    }

    fn apply_cz(&mut self, a: usize, b: usize) {
        let mask = (1usize << a) | (1usize << b);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
    }

    /// Applies `block` in place using per-qubit stride updates.
    pub fn apply_block_in_place(
        &mut self,
        block: GateBlock,
        angles: &AngleVector,
    ) -> Result<(), SimError> {
        let n = self.n;
        check_block(block, angles, n)?;
        let theta = angles.as_slice();
        match block {
            GateBlock::Rx | GateBlock::Ry | GateBlock::Rz => {
                for (q, &t) in theta.iter().enumerate() {
                    self.apply_single(q, &rotation(block, t));
                }
            }
            GateBlock::CzRing => {
                for (c, t) in ring_edges(n) {
                    self.apply_cz(c, t);
                }
            }
            GateBlock::CnotRing => {
                for (c, t) in ring_edges(n) {
                    self.apply_controlled(c, t, &PAULI_X);
                }
            }
            GateBlock::CrxRing | GateBlock::CryRing | GateBlock::CrzRing => {
                for (c, t) in ring_edges(n) {
                    let m = rotation(block, pair_angle(theta[c], theta[t]));
                    self.apply_controlled(c, t, &m);
                }
            }
        }
        Ok(())
    }
}

/// Row-major 2×2 complex matrix.
pub(crate) type Mat2 = [Complex64; 4];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const PAULI_X: Mat2 = [ZERO, ONE, ONE, ZERO];

/// Rotation matrix for the axis of `block` (RX/CRX → X, and so on).
pub(crate) fn rotation(block: GateBlock, theta: f64) -> Mat2 {
    let (s, c) = (0.5 * theta).sin_cos();
    match block {
        GateBlock::Rx | GateBlock::CrxRing => [
            Complex64::new(c, 0.0),
            Complex64::new(0.0, -s),
            Complex64::new(0.0, -s),
            Complex64::new(c, 0.0),
        ],
        GateBlock::Ry | GateBlock::CryRing => [
            Complex64::new(c, 0.0),
            Complex64::new(-s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(c, 0.0),
        ],
        GateBlock::Rz | GateBlock::CrzRing => [
            Complex64::new(c, -s),
            ZERO,
            ZERO,
            Complex64::new(c, s),
        ],
        GateBlock::CzRing | GateBlock::CnotRing => unreachable!("no rotation axis for {block}"),
    }
}

/// Ring edges `(q, (q+1) mod n)` in ascending `q`.
pub fn ring_edges(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).map(move |q| (q, (q + 1) % n))
}

fn check_block(block: GateBlock, angles: &AngleVector, n: usize) -> Result<(), SimError> {
    if angles.len() != n {
        return Err(SimError::AngleLength {
            expected: n,
            got: angles.len(),
        });
    }
    if block.is_ring() && n < 2 {
        return Err(SimError::RingTooSmall { block, n });
    }
    Ok(())
}

/// Returns `state` after `block`.
pub fn apply_block(
    state: &StateVector,
    block: GateBlock,
    angles: &AngleVector,
) -> Result<StateVector, SimError> {
    let mut out = state.clone();
    out.apply_block_in_place(block, angles)?;
    Ok(out)
}

/// Encoded state `g_L … g_1 |0…0⟩`.
pub fn encode(seq: &UploadSequence, angles: &AngleVector, n: usize) -> Result<StateVector, SimError> {
    let mut state = StateVector::zero(n)?;
    if angles.len() != n {
        return Err(SimError::AngleLength {
            expected: n,
            got: angles.len(),
        });
    }
    for &g in seq.blocks() {
        state.apply_block_in_place(g, angles)?;
    }
    Ok(state)
}
