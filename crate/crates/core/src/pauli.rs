//! Pauli strings, the weight-truncated feature family, expectation features
//! and basis-compatible measurement grouping.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::StateVector;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PauliError {
    #[error("max weight k={k} must satisfy 1 <= k <= n={n}")]
    InvalidWeight { n: usize, k: usize },
    #[error("invalid Pauli symbol `{0}` (expected one of I, X, Y, Z)")]
    InvalidSymbol(char),
    #[error("empty Pauli string")]
    Empty,
}

/// Single-qubit Pauli symbol. The derived order `I < X < Y < Z` is the
/// canonical lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const NON_IDENTITY: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Result<Self, PauliError> {
        match c.to_ascii_uppercase() {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            _ => Err(PauliError::InvalidSymbol(c)),
        }
    }
}

/// Tensor product of single-qubit Paulis; index 0 is qubit 0, written
/// leftmost in the text form (`"XZII"`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(symbols: Vec<Pauli>) -> Self {
        Self(symbols)
    }

    pub fn identity(n: usize) -> Self {
        Self(vec![Pauli::I; n])
    }

    pub fn symbols(&self) -> &[Pauli] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    /// Number of non-identity factors.
    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&p| p != Pauli::I).count()
    }

    fn masks(&self) -> (usize, usize, u32) {
        let mut x = 0usize;
        let mut z = 0usize;
        let mut ny = 0u32;
        for (q, &p) in self.0.iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => x |= 1 << q,
                Pauli::Z => z |= 1 << q,
                Pauli::Y => {
                    x |= 1 << q;
                    z |= 1 << q;
                    ny += 1;
                }
            }
        }
        (x, z, ny)
    }

    /// `P|ψ⟩`, computed symbol-wise as an index permutation with phases:
    /// `P|i⟩ = i^{#Y} (-1)^{popcount(i & zmask)} |i ⊕ xmask⟩`.
    pub fn apply(&self, state: &StateVector) -> StateVector {
        let (xmask, zmask, ny) = self.masks();
        let phase = match ny % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        let src = state.amplitudes();
        let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
        for (i, &a) in src.iter().enumerate() {
            let sign = if (i & zmask).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            out[i ^ xmask] = phase * a * sign;
        }
        StateVector::from_amplitudes(state.n(), out).expect("same register size")
    }

    /// True iff every qubit carries equal symbols or at least one identity.
    pub fn compatible(&self, other: &PauliString) -> bool {
        compatible(self, other)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = PauliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(PauliError::Empty);
        }
        s.chars().map(Pauli::from_char).collect::<Result<_, _>>().map(Self)
    }
}

impl From<PauliString> for String {
    fn from(p: PauliString) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PauliString {
    type Error = PauliError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// All strings of weight `1..=k` avoiding the excluded qubits, in canonical
/// order (ascending weight, then lexicographic with `I < X < Y < Z`).
#[derive(Debug, Clone, PartialEq)]
pub struct PauliFamily {
    members: Vec<PauliString>,
    n: usize,
    k: usize,
    excluded: Vec<usize>,
}

impl PauliFamily {
    pub fn members(&self) -> &[PauliString] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn excluded_qubits(&self) -> &[usize] {
        &self.excluded
    }

    /// Largest weight present, used to normalize the cost penalty.
    pub fn max_weight(&self) -> usize {
        self.members.iter().map(PauliString::weight).max().unwrap_or(0)
    }

    pub fn get(&self, index: usize) -> &PauliString {
        &self.members[index]
    }
}

/// `Σ_{j=1..k} C(n,j) 3^j`.
pub fn family_size(n: usize, k: usize) -> usize {
    let mut total = 0usize;
    let mut binom = 1usize;
    let mut pow3 = 1usize;
    for j in 1..=k.min(n) {
        binom = binom * (n - j + 1) / j;
        pow3 *= 3;
        total += binom * pow3;
    }
    total
}

pub fn enumerate_family(
    n: usize,
    k: usize,
    excluded_qubits: &[usize],
) -> Result<PauliFamily, PauliError> {
    if k < 1 || k > n {
        return Err(PauliError::InvalidWeight { n, k });
    }
    let active: Vec<usize> = (0..n).filter(|q| !excluded_qubits.contains(q)).collect();
    let mut members = Vec::with_capacity(family_size(n, k));
    for w in 1..=k {
        let mut layer = Vec::new();
        for support in combinations(&active, w) {
            for code in 0..3usize.pow(w as u32) {
                let mut symbols = vec![Pauli::I; n];
                let mut rest = code;
                for &q in support.iter().rev() {
                    symbols[q] = Pauli::NON_IDENTITY[rest % 3];
                    rest /= 3;
                }
                layer.push(PauliString(symbols));
            }
        }
        layer.sort();
        members.extend(layer);
    }
    let mut excluded: Vec<usize> = excluded_qubits.iter().copied().filter(|&q| q < n).collect();
    excluded.sort_unstable();
    excluded.dedup();
    Ok(PauliFamily {
        members,
        n,
        k,
        excluded,
    })
}

fn combinations(items: &[usize], r: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], r: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, r, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, r, 0, &mut Vec::with_capacity(r), &mut out);
    out
}

/// Complex `⟨ψ|P|ψ⟩`; the imaginary part is numerical residue.
pub fn expectation_complex(state: &StateVector, p: &PauliString) -> Complex64 {
    state.inner(&p.apply(state))
}

/// `⟨ψ|P|ψ⟩ ∈ [-1, 1]`.
pub fn expectation(state: &StateVector, p: &PauliString) -> f64 {
    let value = expectation_complex(state, p);
    debug_assert!(value.im.abs() < 1e-10, "imaginary residue {}", value.im);
    value.re.clamp(-1.0, 1.0)
}

/// Dense row-major real matrix: rows are samples, columns are observables.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "feature matrix shape");
        Self { rows, cols, data }
    }

    pub fn from_rows(cols: usize, rows: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged feature rows");
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn map_entries(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut data = self.data.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let v = &mut data[r * self.cols + c];
                *v = f(r, c, *v);
            }
        }
        Self::new(self.rows, self.cols, data)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self::new(rows.len(), self.cols, data)
    }

    pub fn select_cols(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Self::new(self.rows, cols.len(), data)
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.get(r, c))
    }
}

/// Row `i`, column `j` holds `⟨ψ_i|P_j|ψ_i⟩`. Rows are evaluated in parallel.
pub fn feature_matrix(states: &[StateVector], family: &PauliFamily) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = states
        .par_iter()
        .map(|s| family.members().iter().map(|p| expectation(s, p)).collect())
        .collect();
    FeatureMatrix::from_rows(family.len(), &rows)
}

pub fn compatible(p: &PauliString, q: &PauliString) -> bool {
    p.symbols()
        .iter()
        .zip(q.symbols())
        .all(|(&a, &b)| a == Pauli::I || b == Pauli::I || a == b)
}

/// Strings jointly measurable under one local basis setting.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGroup {
    members: Vec<PauliString>,
    merged: PauliString,
}

impl MeasurementGroup {
    fn open(first: PauliString) -> Self {
        Self {
            merged: first.clone(),
            members: vec![first],
        }
    }

    fn accepts(&self, p: &PauliString) -> bool {
        self.members.iter().all(|m| compatible(m, p))
    }

    fn push(&mut self, p: PauliString) {
        let merged = self
            .merged
            .symbols()
            .iter()
            .zip(p.symbols())
            .map(|(&a, &b)| if a == Pauli::I { b } else { a })
            .collect();
        self.merged = PauliString(merged);
        self.members.push(p);
    }

    pub fn members(&self) -> &[PauliString] {
        &self.members
    }

    /// Measurement setting per qubit. Qubits no member touches are read in Z.
    pub fn basis(&self) -> PauliString {
        PauliString(
            self.merged
                .symbols()
                .iter()
                .map(|&s| if s == Pauli::I { Pauli::Z } else { s })
                .collect(),
        )
    }
}

/// First-fit grouping in descending weight, then canonical order.
pub fn greedy_group(selected: &[PauliString]) -> Vec<MeasurementGroup> {
    let mut order: Vec<&PauliString> = selected.iter().collect();
    order.sort_by(|a, b| b.weight().cmp(&a.weight()).then_with(|| a.cmp(b)));
    let mut groups: Vec<MeasurementGroup> = Vec::new();
    for p in order {
        match groups.iter_mut().find(|g| g.accepts(p)) {
            Some(g) => g.push(p.clone()),
            None => groups.push(MeasurementGroup::open(p.clone())),
        }
    }
    groups
}
