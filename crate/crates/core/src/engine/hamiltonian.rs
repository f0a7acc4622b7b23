//! Hamiltonians in Hz on the NV ⊗ cluster register.
//!
//! The dipolar term couples |0,↑⟩ ↔ |−1,↓⟩ with matrix element Ωᵢ and adds
//! Δᵢ σzⁱ Szᴺⱽ, so the NV |−1⟩ level sits at −Δᵢ for ↑ and +Δᵢ for ↓.

use super::cluster::ClusterConfig;
use super::ops::{c, pauli, CMatrix, OperatorMatrix, Register};
use crate::error::Result;
use crate::physics::CouplingPair;

/// Which parts of the dipolar interaction are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Flip-flop and Ising terms (excited state, energy matched).
    Exchange,
    /// Ising term only (ground state, flip-flop energy mismatched).
    Ising,
}

pub(crate) fn dipolar_terms(
    reg: &Register,
    couplings: &[CouplingPair],
    frame: Frame,
    nn: &[(usize, usize, f64)],
) -> CMatrix {
    let d = reg.dim();
    let mut h = CMatrix::zeros(d, d);
    for (i, cp) in couplings.iter().enumerate() {
        let q = reg.spin_qubit(i);
        // Diagonal Ising term written out directly.
        for idx in 0..d {
            if reg.bit(idx, 0) == 1 {
                let sigma = if reg.bit(idx, q) == 0 { 1.0 } else { -1.0 };
                h[(idx, idx)] -= c(cp.delta * sigma, 0.0);
            }
        }
        if frame == Frame::Exchange && cp.omega != 0.0 {
            let down = reg.embed_many(&[(0, pauli::lower()), (q, pauli::lower())]);
            h += (&down + down.adjoint()) * c(cp.omega, 0.0);
        }
    }
    for &(i, j, dij) in nn {
        let (qi, qj) = (reg.spin_qubit(i), reg.spin_qubit(j));
        // D [SzSz − ¼(S+S− + S−S+)] with S = σ/2.
        let zz = reg.embed_many(&[(qi, pauli::z()), (qj, pauli::z())]);
        let ff = reg.embed_many(&[(qi, pauli::raise()), (qj, pauli::lower())]);
        h += zz * c(0.25 * dij, 0.0) - (&ff + ff.adjoint()) * c(0.25 * dij, 0.0);
    }
    h
}

/// Full dipolar Hamiltonian Σᵢ Ωᵢ(S₊ⁱS₊ᴺⱽ + h.c.) + Δᵢ σzⁱSzᴺⱽ.
pub fn build_dipolar_hamiltonian(cfg: &ClusterConfig) -> Result<OperatorMatrix> {
    cfg.validate()?;
    let reg = Register::new(cfg.n())?;
    let h = dipolar_terms(&reg, &cfg.couplings()?, Frame::Exchange, &cfg.nn_couplings()?);
    Ok(OperatorMatrix::new("H_dip", h))
}

/// Free evolution between pulses: Ising couplings only.
pub fn ground_state_hamiltonian(cfg: &ClusterConfig) -> Result<OperatorMatrix> {
    cfg.validate()?;
    let reg = Register::new(cfg.n())?;
    let h = dipolar_terms(&reg, &cfg.couplings()?, Frame::Ising, &cfg.nn_couplings()?);
    Ok(OperatorMatrix::new("H_gs", h))
}

/// Excited-state Hamiltonian used during optical pumping.
pub fn excited_state_hamiltonian(cfg: &ClusterConfig) -> Result<OperatorMatrix> {
    let mut h = build_dipolar_hamiltonian(cfg)?;
    if cfg.es_detuning != 0.0 {
        let reg = Register::new(cfg.n())?;
        h.matrix += reg.embed(0, &pauli::proj1()) * c(cfg.es_detuning, 0.0);
    }
    h.label = "H_es".into();
    Ok(h)
}

/// Doubly rotating frame with spin locks along ±y of strength `rabi` (Hz).
/// `nv_lock` and `n_lock` are the lock signs (±1) or `None` when undriven.
pub fn lock_hamiltonian(
    cfg: &ClusterConfig,
    nv_lock: Option<f64>,
    n_lock: Option<f64>,
    rabi: f64,
) -> Result<OperatorMatrix> {
    let mut h = ground_state_hamiltonian(cfg)?;
    let reg = Register::new(cfg.n())?;
    if let Some(s) = nv_lock {
        h.matrix += reg.embed(0, &pauli::y()) * c(0.5 * rabi * s, 0.0);
    }
    if let Some(s) = n_lock {
        for i in 0..cfg.n() {
            h.matrix += reg.embed(reg.spin_qubit(i), &pauli::y()) * c(0.5 * rabi * s, 0.0);
        }
    }
    h.label = "H_lock".into();
    Ok(h)
}
