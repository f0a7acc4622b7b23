use nalgebra::SymmetricEigen;

use super::ops::{c, hermiticity_error, CMatrix, Register, C64};
use crate::error::{Error, Result};

/// Density matrix of the NV ⊗ cluster register.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    reg: Register,
    rho: CMatrix,
}

impl DensityMatrix {
    /// NV in |0⟩ and every cluster spin in diag(P↑, P↓) with P↓ − P↑ = pᵢ.
    pub fn product(polarizations: &[f64]) -> Result<Self> {
        let reg = Register::new(polarizations.len())?;
        let mut s = Self { reg, rho: CMatrix::zeros(reg.dim(), reg.dim()) };
        s.set_cluster_diagonal(polarizations)?;
        Ok(s)
    }

    pub fn from_matrix(n_spins: usize, rho: CMatrix) -> Result<Self> {
        let reg = Register::new(n_spins)?;
        if rho.nrows() != reg.dim() || rho.ncols() != reg.dim() {
            return Err(Error::DimensionMismatch { expected: reg.dim(), found: rho.nrows() });
        }
        Ok(Self { reg, rho })
    }

    pub fn maximally_mixed(n_spins: usize) -> Result<Self> {
        let reg = Register::new(n_spins)?;
        let d = reg.dim();
        Ok(Self { reg, rho: CMatrix::identity(d, d) * c(1.0 / d as f64, 0.0) })
    }

    /// Pure basis state; `index` is NV-major.
    pub fn basis(n_spins: usize, index: usize) -> Result<Self> {
        let reg = Register::new(n_spins)?;
        let mut rho = CMatrix::zeros(reg.dim(), reg.dim());
        rho[(index, index)] = c(1.0, 0.0);
        Ok(Self { reg, rho })
    }

    fn set_cluster_diagonal(&mut self, polarizations: &[f64]) -> Result<()> {
        for (i, p) in polarizations.iter().enumerate() {
            if !(-1.0..=1.0).contains(p) {
                return Err(Error::Domain(format!("polarization of spin {i} is {p}")));
            }
        }
        let d = self.reg.dim();
        self.rho = CMatrix::zeros(d, d);
        for idx in 0..d / 2 {
            let mut w = 1.0;
            for (i, p) in polarizations.iter().enumerate() {
                let down = self.reg.bit(idx, self.reg.spin_qubit(i)) == 1;
                w *= if down { 0.5 * (1.0 + p) } else { 0.5 * (1.0 - p) };
            }
            self.rho[(idx, idx)] = c(w, 0.0);
        }
        Ok(())
    }

    pub fn register(&self) -> Register {
        self.reg
    }

    pub fn n_spins(&self) -> usize {
        self.reg.n_spins()
    }

    pub fn dim(&self) -> usize {
        self.reg.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut CMatrix {
        &mut self.rho
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.rho)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * c(0.5, 0.0);
        SymmetricEigen::new(herm).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Checks Hermiticity, unit trace and positivity against the given tolerances.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > tol {
            return Err(Error::Domain(format!("density matrix not Hermitian (error {herm:e})")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::Domain(format!("trace is {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < -1e-9 {
            return Err(Error::Domain(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Polarization P↓ − P↑ of cluster spin `i`.
    pub fn polarization(&self, i: usize) -> f64 {
        let q = self.reg.spin_qubit(i);
        (0..self.dim())
            .map(|idx| {
                let sign = if self.reg.bit(idx, q) == 1 { 1.0 } else { -1.0 };
                sign * self.rho[(idx, idx)].re
            })
            .sum()
    }

    /// Reduced state of the cluster with the NV traced out.
    pub fn cluster_block(&self) -> CMatrix {
        let h = self.dim() / 2;
        self.rho.view((0, 0), (h, h)) + self.rho.view((h, h), (h, h))
    }

    /// Replace the NV by |0⟩, keeping the reduced cluster state.
    pub fn reset_nv(&mut self) {
        let block = self.cluster_block();
        let d = self.dim();
        let mut rho = CMatrix::zeros(d, d);
        rho.view_mut((0, 0), (d / 2, d / 2)).copy_from(&block);
        self.rho = rho;
    }
}

/// Probability of the NV |0⟩ state, clamped to [0, 1].
pub fn measure_p0(rho: &DensityMatrix) -> f64 {
    let h = rho.dim() / 2;
    let p: f64 = (0..h).map(|i| rho.rho[(i, i)].re).sum();
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_state_polarizations() {
        let rho = DensityMatrix::product(&[0.3, -0.5]).unwrap();
        rho.validate(1e-12).unwrap();
        assert!((rho.polarization(0) - 0.3).abs() < 1e-15);
        assert!((rho.polarization(1) + 0.5).abs() < 1e-15);
        assert_eq!(measure_p0(&rho), 1.0);
    }

    #[test]
    fn p0_of_reference_states() {
        assert_eq!(measure_p0(&DensityMatrix::basis(1, 0).unwrap()), 1.0);
        assert!((measure_p0(&DensityMatrix::maximally_mixed(2).unwrap()) - 0.5).abs() < 1e-15);
        assert_eq!(measure_p0(&DensityMatrix::basis(1, 3).unwrap()), 0.0);
    }

    #[test]
    fn reset_keeps_cluster() {
        let mut rho = DensityMatrix::maximally_mixed(2).unwrap();
        rho.reset_nv();
        rho.validate(1e-12).unwrap();
        assert_eq!(measure_p0(&rho), 1.0);
        assert!(rho.polarization(1).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_polarization() {
        assert!(DensityMatrix::product(&[1.2]).is_err());
    }
}
