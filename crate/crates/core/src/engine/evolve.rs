use std::f64::consts::PI;

use nalgebra::{DVector, Matrix2, SymmetricEigen};

use super::cluster::ClusterConfig;
use super::hamiltonian::excited_state_hamiltonian;
use super::ops::{c, pauli, CMatrix, OperatorMatrix, Register, C64};
use super::state::DensityMatrix;
use crate::error::{Error, Result};

/// Steps per shortest time scale of the Lindblad integrator.
const STEPS_PER_SCALE: f64 = 50.0;
/// Tolerated trace drift before an integration is rejected.
const TRACE_DRIFT_LIMIT: f64 = 1e-6;

fn check_dims(rho: &DensityMatrix, op: &OperatorMatrix) -> Result<()> {
    if op.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: op.dim() });
    }
    Ok(())
}

fn check_hermitian(h: &OperatorMatrix) -> Result<()> {
    let scale = h.norm_inf().max(1.0);
    if h.hermiticity_error() > 1e-10 * scale {
        return Err(Error::Domain(format!("{} is not Hermitian", h.label)));
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian Hamiltonian, reused for many times.
#[derive(Debug, Clone)]
pub struct Spectral {
    vectors: CMatrix,
    values: DVector<f64>,
}

impl Spectral {
    pub fn new(h: &OperatorMatrix) -> Result<Self> {
        check_hermitian(h)?;
        let herm = (&h.matrix + h.matrix.adjoint()) * c(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        Ok(Self { vectors: eig.eigenvectors, values: eig.eigenvalues })
    }

    /// U(t) = exp(−2πi H t).
    pub fn propagator(&self, t: f64) -> CMatrix {
        let phases = self.values.map(|l| C64::from_polar(1.0, -2.0 * PI * l * t));
        let mut scaled = self.vectors.clone();
        for (j, ph) in phases.iter().enumerate() {
            for z in scaled.column_mut(j).iter_mut() {
                *z *= ph;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// exp(−2πi H t) for H in Hz.
pub fn propagator(h: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    Ok(OperatorMatrix::new(format!("U[{}]", h.label), Spectral::new(h)?.propagator(t)))
}

fn conjugate(rho: &DensityMatrix, u: &CMatrix) -> DensityMatrix {
    let mut out = rho.clone();
    *out.matrix_mut() = u * rho.matrix() * u.adjoint();
    out
}

/// ρ → UρU† with U = exp(−2πi H t).
pub fn evolve_unitary(rho: &DensityMatrix, h: &OperatorMatrix, t: f64) -> Result<DensityMatrix> {
    check_dims(rho, h)?;
    if !t.is_finite() {
        return Err(Error::Domain("evolution time must be finite".into()));
    }
    Ok(conjugate(rho, &Spectral::new(h)?.propagator(t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    Nv,
    N,
}

/// exp(−i·angle/2·(cos α σx + sin α σy)) on the NV, or on every cluster spin.
pub fn apply_pulse(rho: &DensityMatrix, species: Species, phase: f64, angle: f64) -> Result<DensityMatrix> {
    if !(angle.is_finite() && phase.is_finite()) {
        return Err(Error::Domain("pulse angle and phase must be finite".into()));
    }
    let reg = rho.register();
    let r = pauli::rotation(phase, angle);
    let ops: Vec<(usize, Matrix2<C64>)> = match species {
        Species::Nv => vec![(0, r)],
        Species::N => (0..reg.n_spins()).map(|i| (reg.spin_qubit(i), r)).collect(),
    };
    Ok(apply_local(rho, &ops))
}

/// Apply a product of single-qubit unitaries.
pub fn apply_local(rho: &DensityMatrix, ops: &[(usize, Matrix2<C64>)]) -> DensityMatrix {
    let u = rho.register().embed_many(ops);
    conjugate(rho, &u)
}

/// Finite rotation of strength `rabi` (Hz) and detuning `detuning` (Hz) on one
/// spin, with duration chosen so that the resonant rotation angle is `angle`.
pub fn selective_rotation(phase: f64, angle: f64, rabi: f64, detuning: f64) -> Matrix2<C64> {
    let t = angle / (2.0 * PI * rabi);
    let eff = rabi.hypot(detuning);
    if eff == 0.0 {
        return Matrix2::identity();
    }
    let (nx, ny, nz) = (rabi * phase.cos() / eff, rabi * phase.sin() / eff, detuning / eff);
    let (s, co) = (PI * eff * t).sin_cos();
    let generator = pauli::x() * c(nx, 0.0) + pauli::y() * c(ny, 0.0) + pauli::z() * c(nz, 0.0);
    Matrix2::identity() * c(co, 0.0) - generator * c(0.0, s)
}

/// Frequency-selective pulse on the cluster: spin `i` sees detuning `detunings[i]`.
pub fn selective_pulse(
    rho: &DensityMatrix,
    phase: f64,
    angle: f64,
    rabi: f64,
    detunings: &[f64],
) -> Result<DensityMatrix> {
    let reg = rho.register();
    if detunings.len() != reg.n_spins() {
        return Err(Error::DimensionMismatch { expected: reg.n_spins(), found: detunings.len() });
    }
    if !(rabi > 0.0) {
        return Err(Error::Domain("selective pulse needs a positive Rabi frequency".into()));
    }
    let ops: Vec<_> = detunings
        .iter()
        .enumerate()
        .map(|(i, &d)| (reg.spin_qubit(i), selective_rotation(phase, angle, rabi, d)))
        .collect();
    Ok(apply_local(rho, &ops))
}

/// Jump operator with a rate in Hz; the decay constant is 2π·rate.
#[derive(Debug, Clone)]
pub struct Dissipator {
    pub jump: OperatorMatrix,
    pub rate: f64,
}

impl Dissipator {
    pub fn new(jump: OperatorMatrix, rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::Domain(format!("dissipator rate {rate} must be finite and non-negative")));
        }
        Ok(Self { jump, rate })
    }
}

enum PreparedJump {
    /// At most one non-zero per row and column: (row, col, value) triples and
    /// the diagonal of L†L.
    Sparse { entries: Vec<(usize, usize, C64)>, ldl: Vec<f64>, gamma: f64 },
    Dense { l: CMatrix, l_dag: CMatrix, ldl_half: CMatrix, gamma: f64 },
}

impl PreparedJump {
    fn new(d: &Dissipator) -> Self {
        let m = &d.jump.matrix;
        let gamma = 2.0 * PI * d.rate;
        let entries: Vec<(usize, usize, C64)> = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |col| (r, col)))
            .filter(|&(r, col)| m[(r, col)] != c(0.0, 0.0))
            .map(|(r, col)| (r, col, m[(r, col)]))
            .collect();
        let mut rows = vec![0u8; m.nrows()];
        let mut cols = vec![0u8; m.ncols()];
        for &(r, col, _) in &entries {
            rows[r] += 1;
            cols[col] += 1;
        }
        if rows.iter().chain(&cols).all(|&k| k <= 1) {
            let mut ldl = vec![0.0; m.ncols()];
            for &(_, col, v) in &entries {
                ldl[col] = v.norm_sqr();
            }
            return PreparedJump::Sparse { entries, ldl, gamma };
        }
        let l_dag = m.adjoint();
        PreparedJump::Dense { ldl_half: (&l_dag * m) * c(0.5, 0.0), l: m.clone(), l_dag, gamma }
    }

    fn add_to(&self, rho: &CMatrix, out: &mut CMatrix) {
        match self {
            PreparedJump::Sparse { entries, ldl, gamma } => {
                for &(i, j, v) in entries {
                    for &(k, l, w) in entries {
                        out[(i, k)] += rho[(j, l)] * v * w.conj() * *gamma;
                    }
                }
                let n = rho.nrows();
                for b in 0..n {
                    for a in 0..n {
                        let s = ldl[a] + ldl[b];
                        if s != 0.0 {
                            out[(a, b)] -= rho[(a, b)] * (0.5 * s * gamma);
                        }
                    }
                }
            }
            PreparedJump::Dense { l, l_dag, ldl_half, gamma } => {
                let term = l * rho * l_dag - (ldl_half * rho + rho * ldl_half);
                *out += term * c(*gamma, 0.0);
            }
        }
    }
}

fn dissipate(rho: &CMatrix, jumps: &[PreparedJump]) -> CMatrix {
    let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
    for j in jumps {
        j.add_to(rho, &mut out);
    }
    out
}

/// Integrates dρ/dt = −2πi[H, ρ] + Σ 2πγₖ(LρL† − ½{L†L, ρ}) with a fixed-step
/// fourth-order Runge–Kutta scheme in the interaction picture of H.
pub fn evolve_lindblad(
    rho: &DensityMatrix,
    h: &OperatorMatrix,
    dissipators: &[Dissipator],
    t: f64,
    dt_max: f64,
) -> Result<DensityMatrix> {
    check_dims(rho, h)?;
    for d in dissipators {
        check_dims(rho, &d.jump)?;
    }
    if !(dt_max > 0.0) {
        return Err(Error::Domain("dt_max must be positive".into()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain("evolution time must be finite and non-negative".into()));
    }
    if t == 0.0 {
        return Ok(rho.clone());
    }
    let active: Vec<&Dissipator> = dissipators.iter().filter(|d| d.rate > 0.0).collect();
    if active.is_empty() {
        return evolve_unitary(rho, h, t);
    }
    let fastest = active.iter().map(|d| d.rate).fold(h.norm_inf(), f64::max);
    let h_max = dt_max.min(1.0 / (STEPS_PER_SCALE * fastest));
    let steps = (t / h_max).ceil().max(1.0) as usize;
    let dt = t / steps as f64;

    let jumps: Vec<PreparedJump> = active.iter().map(|d| PreparedJump::new(d)).collect();
    let half = Spectral::new(h)?.propagator(0.5 * dt);
    let half_dag = half.adjoint();
    let free = |m: &CMatrix| &half * m * &half_dag;
    let step = c(dt, 0.0);

    let mut r = rho.matrix().clone();
    for _ in 0..steps {
        let r_i = free(&r);
        let k1 = free(&dissipate(&r, &jumps)) * step;
        let k2 = dissipate(&(&r_i + &k1 * c(0.5, 0.0)), &jumps) * step;
        let k3 = dissipate(&(&r_i + &k2 * c(0.5, 0.0)), &jumps) * step;
        let k4 = dissipate(&free(&(&r_i + &k3)), &jumps) * step;
        let inner = r_i + k1 * c(1.0 / 6.0, 0.0) + (k2 + k3) * c(1.0 / 3.0, 0.0);
        r = free(&inner) + k4 * c(1.0 / 6.0, 0.0);
    }
    let drift = (r.trace() - rho.trace()).norm();
    if drift > TRACE_DRIFT_LIMIT {
        return Err(Error::Integration(format!("trace drifted by {drift:e} over {steps} steps")));
    }
    let mut out = rho.clone();
    *out.matrix_mut() = r;
    Ok(out)
}

/// NV reset to |0⟩ at the optical rate and symmetric N relaxation at 1/(2 T₁)
/// per direction, all in engine Hz.
pub fn optical_pump_dissipators(cfg: &ClusterConfig) -> Result<Vec<Dissipator>> {
    let reg = Register::new(cfg.n())?;
    let mut out = vec![Dissipator::new(
        OperatorMatrix::new("L_reset", reg.embed(0, &pauli::raise())),
        cfg.gamma_opt / (2.0 * PI),
    )?];
    let t1 = cfg.n_spin.t1_n;
    if t1.is_finite() {
        let rate = 1.0 / (2.0 * t1) / (2.0 * PI);
        for i in 0..cfg.n() {
            let q = reg.spin_qubit(i);
            out.push(Dissipator::new(OperatorMatrix::new(format!("L_up_N{i}"), reg.embed(q, &pauli::raise())), rate)?);
            out.push(Dissipator::new(OperatorMatrix::new(format!("L_down_N{i}"), reg.embed(q, &pauli::lower())), rate)?);
        }
    }
    Ok(out)
}

/// Continuous optical excitation for `duration`: excited-state exchange plus
/// NV repolarization and N relaxation.
pub fn optical_pump(rho: &DensityMatrix, cfg: &ClusterConfig, duration: f64) -> Result<DensityMatrix> {
    optical_pump_with_step(rho, cfg, duration, f64::INFINITY)
}

pub fn optical_pump_with_step(
    rho: &DensityMatrix,
    cfg: &ClusterConfig,
    duration: f64,
    dt_max: f64,
) -> Result<DensityMatrix> {
    if duration == 0.0 {
        return Ok(rho.clone());
    }
    let h = excited_state_hamiltonian(cfg)?;
    evolve_lindblad(rho, &h, &optical_pump_dissipators(cfg)?, duration, dt_max)
}

/// Decays the coherent part of a P₀ signal toward the ½ baseline.
pub fn apply_dephasing_envelope(signal: f64, tau: f64, t_dse: f64) -> Result<f64> {
    if !(t_dse > 0.0) {
        return Err(Error::Domain("t_dse must be positive".into()));
    }
    Ok(0.5 + (signal - 0.5) * (-(tau / t_dse).powi(2)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::hamiltonian::build_dipolar_hamiltonian;
    use crate::engine::ops::max_abs;
    use crate::engine::state::measure_p0;

    #[test]
    fn zero_hamiltonian_is_identity() {
        let rho = DensityMatrix::product(&[0.4]).unwrap();
        let h = OperatorMatrix::zeros("0", 4);
        assert_eq!(evolve_unitary(&rho, &h, 1e-6).unwrap(), rho);
    }

    #[test]
    fn propagator_is_unitary() {
        let cfg = ClusterConfig::from_couplings(&[(1.3e6, 4e5, 0.0), (-8e5, 2e5, 0.0)]);
        let h = build_dipolar_hamiltonian(&cfg).unwrap();
        assert!(propagator(&h, 3.7e-6).unwrap().unitarity_error() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let rho = DensityMatrix::product(&[0.0]).unwrap();
        let h = OperatorMatrix::zeros("0", 8);
        assert!(matches!(evolve_unitary(&rho, &h, 1.0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn selective_rotation_on_resonance_matches_hard_pulse() {
        let a = selective_rotation(0.4, 1.3, 2e6, 0.0);
        let b = pauli::rotation(0.4, 1.3);
        assert!((a - b).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn amplitude_damping_matches_analytic_decay() {
        let rho = DensityMatrix::basis(1, 2).unwrap();
        let reg = rho.register();
        let gamma = 2e5;
        let d = Dissipator::new(OperatorMatrix::new("L", reg.embed(0, &pauli::raise())), gamma).unwrap();
        let h = OperatorMatrix::zeros("0", 4);
        for t in [1e-7, 5e-7, 2e-6] {
            let out = evolve_lindblad(&rho, &h, &[d.clone()], t, 1e-9).unwrap();
            let exact = 1.0 - (-2.0 * PI * gamma * t).exp();
            assert!((measure_p0(&out) - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn pumping_without_exchange_leaves_cluster_alone() {
        let mut cfg = ClusterConfig::from_couplings(&[(7e5, 0.0, 0.3)]);
        cfg.n_spin.t1_n = f64::INFINITY;
        let rho = DensityMatrix::product(&[0.3]).unwrap();
        let out = optical_pump(&rho, &cfg, 5e-6).unwrap();
        assert!((out.polarization(0) - 0.3).abs() < 1e-12);
        assert!(max_abs(&(out.matrix() - rho.matrix())) < 1e-12);
    }

    #[test]
    fn envelope_limits() {
        assert_eq!(apply_dephasing_envelope(0.9, 0.0, 1e-6).unwrap(), 0.9);
        let e = apply_dephasing_envelope(0.9, 1e-6, 1e-6).unwrap();
        assert!((e - (0.5 + 0.4 / std::f64::consts::E)).abs() < 1e-15);
        assert!((apply_dephasing_envelope(0.9, 1e-3, 1e-6).unwrap() - 0.5).abs() < 1e-15);
        assert!(apply_dephasing_envelope(0.9, 1.0, 0.0).is_err());
    }
}
