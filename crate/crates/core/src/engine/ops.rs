//! Dense operators on the NV ⊗ cluster register.
//!
//! Qubit 0 is the NV and is the most significant tensor factor; qubit `i ≥ 1`
//! is cluster spin `i − 1`. NV basis order is (|0⟩, |−1⟩), N basis order is
//! (|↑⟩, |↓⟩).

use nalgebra::{Complex, DMatrix, Matrix2};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

pub const MAX_DIM: usize = 64;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Register layout: one NV qubit plus `n_spins` cluster qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Register {
    n_spins: usize,
}

impl Register {
    pub fn new(n_spins: usize) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::EmptyCluster);
        }
        let dim = 1usize.checked_shl(n_spins as u32 + 1).unwrap_or(usize::MAX);
        if n_spins >= 63 || dim > MAX_DIM {
            return Err(Error::TooLarge(dim));
        }
        Ok(Self { n_spins })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn n_qubits(&self) -> usize {
        self.n_spins + 1
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits()
    }

    /// Qubit index of cluster spin `i`.
    pub fn spin_qubit(&self, i: usize) -> usize {
        i + 1
    }

    /// Bit of basis index `idx` belonging to `qubit` (0 = first basis state).
    pub fn bit(&self, idx: usize, qubit: usize) -> usize {
        (idx >> (self.n_qubits() - 1 - qubit)) & 1
    }

    /// Embed a 2×2 operator acting on `qubit`.
    pub fn embed(&self, qubit: usize, op: &Matrix2<C64>) -> CMatrix {
        self.embed_many(&[(qubit, *op)])
    }

    /// Tensor product of single-qubit operators, identity elsewhere.
    pub fn embed_many(&self, ops: &[(usize, Matrix2<C64>)]) -> CMatrix {
        let dim = self.dim();
        let nq = self.n_qubits();
        let mut factors = vec![Matrix2::<C64>::identity(); nq];
        for (q, op) in ops {
            factors[*q] = factors[*q] * op;
        }
        CMatrix::from_fn(dim, dim, |r, col| {
            let mut acc = c(1.0, 0.0);
            for (q, f) in factors.iter().enumerate() {
                let shift = nq - 1 - q;
                acc *= f[((r >> shift) & 1, (col >> shift) & 1)];
                if acc == c(0.0, 0.0) {
                    break;
                }
            }
            acc
        })
    }
}

pub mod pauli {
    use super::*;

    pub fn x() -> Matrix2<C64> {
        Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
    }

    pub fn y() -> Matrix2<C64> {
        Matrix2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0))
    }

    pub fn z() -> Matrix2<C64> {
        Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0))
    }

    /// |first⟩⟨second|: raises the second basis state into the first.
    pub fn raise() -> Matrix2<C64> {
        Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0))
    }

    pub fn lower() -> Matrix2<C64> {
        raise().transpose()
    }

    /// Projector on the first basis state.
    pub fn proj0() -> Matrix2<C64> {
        Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0))
    }

    pub fn proj1() -> Matrix2<C64> {
        Matrix2::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0))
    }

    /// NV spin projection on (|0⟩, |−1⟩): diag(0, −1).
    pub fn nv_sz() -> Matrix2<C64> {
        -proj1()
    }

    /// exp(−i·angle/2·(cos φ σx + sin φ σy)).
    pub fn rotation(phase: f64, angle: f64) -> Matrix2<C64> {
        let (s, co) = (0.5 * angle).sin_cos();
        let (sp, cp) = phase.sin_cos();
        // −i s (cos φ σx + sin φ σy) = [[0, −i s e^{−iφ}], [−i s e^{iφ}, 0]]
        let off_upper = c(0.0, -s) * c(cp, -sp);
        let off_lower = c(0.0, -s) * c(cp, sp);
        Matrix2::new(c(co, 0.0), off_upper, off_lower, c(co, 0.0))
    }
}

/// A labelled dense operator.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub label: String,
    pub matrix: CMatrix,
}

impl OperatorMatrix {
    pub fn new(label: impl Into<String>, matrix: CMatrix) -> Self {
        Self { label: label.into(), matrix }
    }

    pub fn zeros(label: impl Into<String>, dim: usize) -> Self {
        Self::new(label, CMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest |A − A†| element.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// max |U†U − I|.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim();
        let prod = self.matrix.adjoint() * &self.matrix;
        max_abs(&(prod - CMatrix::identity(n, n)))
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn hermiticity_error(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Permutation of basis indices induced by permuting the cluster qubits.
/// `perm[i]` is the new position of spin `i`.
pub fn spin_permutation(reg: &Register, perm: &[usize]) -> Vec<usize> {
    let nq = reg.n_qubits();
    (0..reg.dim())
        .map(|idx| {
            let mut out = idx & (1 << (nq - 1));
            for (i, &p) in perm.iter().enumerate() {
                let bit = reg.bit(idx, reg.spin_qubit(i));
                out |= bit << (nq - 1 - reg.spin_qubit(p));
            }
            out
        })
        .collect()
}

/// Apply a basis permutation `map` (old index → new index) to an operator.
pub fn permute(m: &CMatrix, map: &[usize]) -> CMatrix {
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for r in 0..n {
        for col in 0..n {
            out[(map[r], map[col])] = m[(r, col)];
        }
    }
    out
}
