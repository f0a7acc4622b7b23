//! Closed-form signal models for echo, interferometric echo, spin-lock
//! exchange and optical pumping curves.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::engine::{optical_pump, ClusterConfig, DensityMatrix, C64};
use crate::error::{Error, Result};
use crate::physics::{GyroConvention, PLANCK};

/// Wraps an angle into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinEntry {
    /// Ising coupling, Hz.
    pub delta: f64,
    /// Polarization P↓ − P↑.
    pub p: f64,
}

impl SpinEntry {
    pub fn new(delta: f64, p: f64) -> Self {
        Self { delta, p }
    }
}

/// Directional echo contrast ½ exp[−(τ/t_dse)²](1 + sin φ).
pub fn dse_signal(tau: f64, phi: f64, t_dse: f64) -> Result<f64> {
    if !(t_dse > 0.0) {
        return Err(Error::Domain("t_dse must be positive".into()));
    }
    Ok(0.5 * (-(tau / t_dse).powi(2)).exp() * (1.0 + phi.sin()))
}

/// D−U phase difference produced by a static field `b_pol` over `tau`:
/// 2·2π·γ·b·τ with γ from the chosen convention.
pub fn static_phase(b_pol: f64, tau: f64, gyro: GyroConvention) -> f64 {
    4.0 * PI * gyro.gamma() * b_pol * tau
}

/// The printed static-phase expression 2μ_B B τ/ħ.
pub fn static_phase_printed(b_pol: f64, tau: f64) -> f64 {
    static_phase(b_pol, tau, GyroConvention::MuB)
}

/// Echo visibility of the sequence-D fringe for total free time `tau`:
/// Πᵢ [cos(2πΔᵢτ) + i pᵢ sin(2πΔᵢτ)].
pub fn idse_visibility(tau: f64, spins: &[SpinEntry]) -> C64 {
    spins.iter().fold(C64::new(1.0, 0.0), |acc, s| {
        let (sin, cos) = (2.0 * PI * s.delta * tau).sin_cos();
        acc * C64::new(cos, s.p * sin)
    })
}

/// D−U fringe phase difference 2Σᵢ atan2(pᵢ sin 2πΔᵢτ, cos 2πΔᵢτ), wrapped
/// into (−π, π].
pub fn idse_phase(tau: f64, spins: &[SpinEntry]) -> f64 {
    let sum: f64 = spins
        .iter()
        .map(|s| {
            let (sin, cos) = (2.0 * PI * s.delta * tau).sin_cos();
            (s.p * sin).atan2(cos)
        })
        .sum();
    wrap_phase(2.0 * sum)
}

/// Exchange fringe under double spin locking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HhParams {
    pub a: f64,
    /// Hz.
    pub nu: f64,
    /// s.
    pub t_osc: f64,
    /// s.
    pub t_lock: f64,
    pub c: f64,
}

impl HhParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.a) || !(0.0..=1.0).contains(&self.c) {
            return Err(Error::Domain("HH amplitude and baseline must lie in [0, 1]".into()));
        }
        if !(self.t_osc > 0.0 && self.t_lock > 0.0) {
            return Err(Error::Domain("HH decay times must be positive".into()));
        }
        Ok(())
    }
}

/// a cos(2πντ) e^{−τ/t_osc} + (1 − a − c) e^{−τ/t_lock} + c.
pub fn hh_model(tau: f64, p: &HhParams) -> f64 {
    p.a * (2.0 * PI * p.nu * tau).cos() * (-tau / p.t_osc).exp()
        + (1.0 - p.a - p.c) * (-tau / p.t_lock).exp()
        + p.c
}

/// Rate-equation pumping curve p(t) = p_ss(1 − e^{−t/T}) with the resonant
/// rate R = (2πΩ)²/γ_opt.
pub fn pumping_curve(t: f64, omega: f64, gamma_opt: f64, t1_n: f64) -> f64 {
    let rate = (2.0 * PI * omega).powi(2) / gamma_opt;
    let relax = if t1_n.is_finite() { 1.0 / t1_n } else { 0.0 };
    let total = rate + relax;
    if total == 0.0 {
        return 0.0;
    }
    let p_ss = rate / total;
    p_ss * (1.0 - (-t * total).exp())
}

/// Optical-pumping curve of a single resonant spin from the density-matrix
/// engine, sampled at increasing `times`.
pub fn pumping_oracle(times: &[f64], omega: f64, gamma_opt: f64, t1_n: f64, es_detuning: f64) -> Result<Vec<f64>> {
    let mut cfg = ClusterConfig::from_couplings(&[(0.0, omega, 0.0)]);
    cfg.gamma_opt = gamma_opt;
    cfg.n_spin.t1_n = t1_n;
    cfg.es_detuning = es_detuning;
    let mut rho = DensityMatrix::product(&[0.0])?;
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < now {
            return Err(Error::Domain("pumping times must be non-decreasing".into()));
        }
        rho = optical_pump(&rho, &cfg, t - now)?;
        now = t;
        out.push(rho.polarization(0));
    }
    Ok(out)
}

/// Oracle correction of [`pumping_curve`] tabulated on a logarithmic Ω grid
/// at fixed pumping times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpingTable {
    pub gamma_opt: f64,
    pub t1_n: f64,
    pub es_detuning: f64,
    pub times: Vec<f64>,
    pub omegas: Vec<f64>,
    /// `ratio[k][j]` = oracle / closed form at (times[k], omegas[j]).
    pub ratio: Vec<Vec<f64>>,
}

impl PumpingTable {
    pub const OMEGA_MIN: f64 = 1e4;
    pub const OMEGA_MAX: f64 = 1e7;

    /// Build the table at the given pumping times (sorted ascending, > 0).
    pub fn build(times: &[f64], gamma_opt: f64, t1_n: f64, es_detuning: f64, points_per_decade: usize) -> Result<Self> {
        use rayon::prelude::*;
        if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] <= 0.0 {
            return Err(Error::Domain("table times must be positive and strictly increasing".into()));
        }
        let decades = (Self::OMEGA_MAX / Self::OMEGA_MIN).log10();
        let n = (decades * points_per_decade as f64).round() as usize + 1;
        let omegas: Vec<f64> = (0..n)
            .map(|j| Self::OMEGA_MIN * 10f64.powf(decades * j as f64 / (n - 1) as f64))
            .collect();
        let columns: Vec<Vec<f64>> = omegas
            .par_iter()
            .map(|&om| {
                let oracle = pumping_oracle(times, om, gamma_opt, t1_n, es_detuning)?;
                Ok(times
                    .iter()
                    .zip(oracle)
                    .map(|(&t, p)| p / pumping_curve(t, om, gamma_opt, t1_n))
                    .collect())
            })
            .collect::<Result<_>>()?;
        let ratio = (0..times.len()).map(|k| columns.iter().map(|col| col[k]).collect()).collect();
        Ok(Self { gamma_opt, t1_n, es_detuning, times: times.to_vec(), omegas, ratio })
    }

    /// Largest relative deviation of the uncorrected closed form.
    pub fn max_relative_error(&self) -> f64 {
        self.ratio.iter().flatten().map(|r| (r - 1.0).abs()).fold(0.0, f64::max)
    }

    fn ratio_at(&self, t: f64, omega: f64) -> f64 {
        let lw = omega.clamp(Self::OMEGA_MIN, Self::OMEGA_MAX).ln();
        let (j, fj) = bracket(&self.omegas, lw, f64::ln);
        let (k, fk) = bracket(&self.times, t, |x| x);
        let at = |k: usize| self.ratio[k][j] * (1.0 - fj) + self.ratio[k][j + 1] * fj;
        if self.times.len() == 1 {
            return at(0);
        }
        at(k) * (1.0 - fk) + at(k + 1) * fk
    }

    /// Oracle-corrected pumping curve.
    pub fn corrected(&self, t: f64, omega: f64) -> f64 {
        let omega = omega.abs();
        if omega == 0.0 || t <= 0.0 {
            return 0.0;
        }
        pumping_curve(t, omega, self.gamma_opt, self.t1_n) * self.ratio_at(t, omega)
    }
}

/// Index and fraction locating `x` in the sorted grid, clamped to its ends.
fn bracket(grid: &[f64], x: f64, map: impl Fn(f64) -> f64) -> (usize, f64) {
    if grid.len() < 2 {
        return (0, 0.0);
    }
    let last = grid.len() - 2;
    let j = grid.partition_point(|&g| map(g) <= x).saturating_sub(1).min(last);
    let (a, b) = (map(grid[j]), map(grid[j + 1]));
    (j, ((x - a) / (b - a)).clamp(0.0, 1.0))
}

/// Field equivalent to a coupling Δ, h·Δ/μ_B.
pub fn coupling_field(delta: f64) -> f64 {
    PLANCK * delta / crate::physics::MU_B
}
