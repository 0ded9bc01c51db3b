//! Dense-matrix reference path.
//!
//! Every block is expanded into an explicit `2^n × 2^n` unitary built from
//! Kronecker products and applied by matrix-vector multiplication. This is
//! `O(4^n)` per gate and exists only to cross-check the stride simulator and
//! the symbol-wise Pauli expectation.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{ring_edges, AngleVector, GateBlock, SimError, StateVector, UploadSequence};
use crate::pauli::{Pauli, PauliString};

pub const ORACLE_MAX_QUBITS: usize = 6;

type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn single(p: Pauli) -> CMat {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match p {
        Pauli::I => CMat::from_row_slice(2, 2, &[o, z, z, o]),
        Pauli::X => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        Pauli::Y => CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        Pauli::Z => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// `exp(-iθσ/2) = cos(θ/2) I − i sin(θ/2) σ`.
fn rotation(axis: Pauli, theta: f64) -> CMat {
    let (s, co) = (0.5 * theta).sin_cos();
    single(Pauli::I) * c(co, 0.0) - single(axis) * c(0.0, s)
}

/// Embeds per-qubit operators into the full register. `ops[q]` acts on qubit
/// `q`, which is bit `q` of the basis index, so qubit 0 is the rightmost
/// Kronecker factor.
fn embed(ops: &[CMat]) -> CMat {
    let mut full = CMat::from_element(1, 1, c(1.0, 0.0));
    for op in ops.iter().rev() {
        full = full.kronecker(op);
    }
    full
}

fn controlled(n: usize, control: usize, target: usize, gate: &CMat) -> CMat {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let p0 = CMat::from_row_slice(2, 2, &[o, z, z, z]);
    let p1 = CMat::from_row_slice(2, 2, &[z, z, z, o]);
    let mut idle: Vec<CMat> = (0..n).map(|_| single(Pauli::I)).collect();
    idle[control] = p0;
    let mut active: Vec<CMat> = (0..n).map(|_| single(Pauli::I)).collect();
    active[control] = p1;
    active[target] = gate.clone();
    embed(&idle) + embed(&active)
}

fn axis_of(block: GateBlock) -> Option<Pauli> {
    match block {
        GateBlock::Rx | GateBlock::CrxRing => Some(Pauli::X),
        GateBlock::Ry | GateBlock::CryRing => Some(Pauli::Y),
        GateBlock::Rz | GateBlock::CrzRing => Some(Pauli::Z),
        GateBlock::CzRing | GateBlock::CnotRing => None,
    }
}

/// Full unitary of one block.
pub fn block_unitary(block: GateBlock, angles: &AngleVector, n: usize) -> Result<CMat, SimError> {
    if n > ORACLE_MAX_QUBITS {
        return Err(SimError::OracleTooLarge {
            n,
            max: ORACLE_MAX_QUBITS,
        });
    }
    if angles.len() != n {
        return Err(SimError::AngleLength {
            expected: n,
            got: angles.len(),
        });
    }
    if block.is_ring() && n < 2 {
        return Err(SimError::RingTooSmall { block, n });
    }
    let theta = angles.as_slice();
    let dim = 1usize << n;
    let mut u = CMat::identity(dim, dim);
    match block {
        GateBlock::Rx | GateBlock::Ry | GateBlock::Rz => {
            let axis = axis_of(block).unwrap();
            let ops: Vec<CMat> = theta.iter().map(|&t| rotation(axis, t)).collect();
            u = embed(&ops);
        }
        _ => {
            for (ctl, tgt) in ring_edges(n) {
                let gate = match block {
                    GateBlock::CzRing => single(Pauli::Z),
                    GateBlock::CnotRing => single(Pauli::X),
                    _ => rotation(axis_of(block).unwrap(), 0.5 * (theta[ctl] + theta[tgt])),
                };
                u = controlled(n, ctl, tgt, &gate) * u;
            }
        }
    }
    Ok(u)
}

/// Encodes through explicit dense unitaries. Limited to `n ≤ 6`.
pub fn dense_unitary_oracle(
    seq: &UploadSequence,
    angles: &AngleVector,
    n: usize,
) -> Result<StateVector, SimError> {
    if n > ORACLE_MAX_QUBITS {
        return Err(SimError::OracleTooLarge {
            n,
            max: ORACLE_MAX_QUBITS,
        });
    }
    let dim = 1usize << n;
    let mut psi = nalgebra::DVector::from_element(dim, c(0.0, 0.0));
    psi[0] = c(1.0, 0.0);
    for &g in seq.blocks() {
        psi = block_unitary(g, angles, n)? * psi;
    }
    StateVector::from_amplitudes(n, psi.iter().copied().collect())
}

/// Dense matrix of a Pauli string.
pub fn pauli_matrix(p: &PauliString) -> CMat {
    let ops: Vec<CMat> = p.symbols().iter().map(|&s| single(s)).collect();
    embed(&ops)
}

/// `⟨ψ|P|ψ⟩` by dense matrix-vector product; the imaginary part is kept.
pub fn dense_expectation(state: &StateVector, p: &PauliString) -> Complex64 {
    let psi = nalgebra::DVector::from_column_slice(state.amplitudes());
    let p_psi = pauli_matrix(p) * &psi;
    psi.iter().zip(p_psi.iter()).map(|(a, b)| a.conj() * b).sum()
}
