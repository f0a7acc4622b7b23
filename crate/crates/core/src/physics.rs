//! Physical constants, dipolar coupling between the NV and a dark N spin, and
//! the field dependence of the NV excited-state and N transition lines.
//!
//! Frequencies are in Hz, fields in tesla, lengths in metres and angles in
//! radians throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    /// Bohr magneton, J/T.
    pub mu_b: f64,
    /// μ₀/4π, T·m/A.
    pub mu0_over_4pi: f64,
    /// Planck constant, J·s.
    pub h: f64,
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Electron gyromagnetic ratio in the 2μ_B/h convention, Hz/T.
    pub gamma_e_hz_per_t: f64,
}

pub const MU_B: f64 = 9.274_010_078_3e-24;
pub const MU0_OVER_4PI: f64 = 1.000_000_000_55e-7;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);

pub const CONSTANTS: Constants = Constants {
    mu_b: MU_B,
    mu0_over_4pi: MU0_OVER_4PI,
    h: PLANCK,
    hbar: HBAR,
    gamma_e_hz_per_t: 2.0 * MU_B / PLANCK,
};

/// Dipolar prefactor K = μ₀μ_B²/(4π h) in Hz·m³.
pub fn dipolar_prefactor() -> f64 {
    MU0_OVER_4PI * MU_B * MU_B / PLANCK
}

/// Which gyromagnetic ratio converts a field into a precession frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GyroConvention {
    /// γ = 2μ_B/h (g = 2 electron).
    #[default]
    TwoMuB,
    /// γ = μ_B/h, the convention of the printed phase formula φ = μ_B B τ/ħ.
    MuB,
}

impl GyroConvention {
    /// Gyromagnetic ratio in Hz/T.
    pub fn gamma(self) -> f64 {
        match self {
            GyroConvention::TwoMuB => 2.0 * MU_B / PLANCK,
            GyroConvention::MuB => MU_B / PLANCK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleGeometry {
    r: f64,
    theta: f64,
}

impl DipoleGeometry {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::Domain(format!("separation must be finite and positive, got {r}")));
        }
        if !theta.is_finite() || !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(Error::Domain(format!("polar angle must lie in [0, pi], got {theta}")));
        }
        Ok(Self { r, theta })
    }

    /// Geometry of a separation vector, with the NV axis along +z.
    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::Domain(format!("separation must be finite and positive, got {r}")));
        }
        let cos = (v[2] / r).clamp(-1.0, 1.0);
        Self::new(r, cos.acos())
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Flip-flop rate Ω and Ising coupling Δ, both in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingPair {
    pub omega: f64,
    pub delta: f64,
}

/// Ω = 3 sin²θ K/r³ and Δ = (1 − 3cos²θ) K/r³.
pub fn dipolar_coupling(geom: &DipoleGeometry) -> CouplingPair {
    let scale = dipolar_prefactor() / geom.r.powi(3);
    let (sin, cos) = geom.theta.sin_cos();
    CouplingPair {
        omega: 3.0 * sin * sin * scale,
        delta: (1.0 - 3.0 * cos * cos) * scale,
    }
}

/// Orientation of a dark spin along the NV axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinState {
    Up,
    Down,
}

/// Field at the NV produced by a single dark spin with Ising coupling `delta`.
pub fn coupling_to_field(delta: f64, state: SpinState) -> f64 {
    let b = PLANCK * delta / MU_B;
    match state {
        SpinState::Down => -b,
        SpinState::Up => b,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NvParams {
    /// Excited-state zero-field splitting, Hz.
    pub d_es: f64,
    /// Ground-state zero-field splitting, Hz.
    pub d_gs: f64,
    /// Excited-state hyperfine splitting with the host nitrogen, Hz.
    pub a_hf_es: f64,
    /// Host m_I = −1, 0, +1 populations.
    pub hyperfine_weights: [f64; 3],
}

impl Default for NvParams {
    fn default() -> Self {
        Self {
            d_es: 1.42e9,
            d_gs: 2.87e9,
            a_hf_es: 4.0e7,
            hyperfine_weights: [1.0 / 3.0; 3],
        }
    }
}

impl NvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_es > 0.0 && self.d_gs > 0.0) {
            return Err(Error::Config("zero-field splittings must be positive".into()));
        }
        if self.hyperfine_weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Config("hyperfine weights must be non-negative".into()));
        }
        let sum: f64 = self.hyperfine_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("hyperfine weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NSpinParams {
    /// Hyperfine splitting of the m_I = ±1 satellite lines, Hz.
    pub a_hf_n: f64,
    /// Longitudinal lifetime, s.
    pub t1_n: f64,
}

impl Default for NSpinParams {
    fn default() -> Self {
        Self { a_hf_n: 1.14e8, t1_n: 1e-5 }
    }
}

/// Field at which the NV excited-state |0⟩↔|−1⟩ line meets the N central line.
pub fn resonance_field(nv: &NvParams) -> f64 {
    nv.d_es * PLANCK / (4.0 * MU_B)
}

/// One transition line tagged with the nuclear projection that produces it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Line {
    pub m_i: i8,
    pub freq: f64,
}

/// NV excited-state |0⟩↔|−1⟩ lines for m_I = −1, 0, +1.
pub fn nv_es_transitions(b: f64, nv: &NvParams) -> [Line; 3] {
    let center = nv.d_es - CONSTANTS.gamma_e_hz_per_t * b;
    [-1i8, 0, 1].map(|m_i| Line { m_i, freq: center + f64::from(m_i) * nv.a_hf_es })
}

/// N spin lines: central m_I = 0 line at γB with satellites at ±a_hf_n.
pub fn n_transitions(b: f64, n: &NSpinParams) -> [Line; 3] {
    let center = CONSTANTS.gamma_e_hz_per_t * b;
    [-1i8, 0, 1].map(|m_i| Line { m_i, freq: center + f64::from(m_i) * n.a_hf_n })
}

/// Field interval over which the N central line lies between the outer NV
/// excited-state hyperfine lines.
pub fn overlap_window(nv: &NvParams) -> (f64, f64) {
    let gamma = CONSTANTS.gamma_e_hz_per_t;
    // d_es + m a − γB = γB
    let crossing = |m: f64| (nv.d_es + m * nv.a_hf_es) / (2.0 * gamma);
    let (a, b) = (crossing(-1.0), crossing(1.0));
    (a.min(b), a.max(b))
}
