//! The physical scene: field, NV parameters and the dark-spin cluster.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::physics::{
    dipolar_coupling, dipolar_prefactor, CouplingPair, DipoleGeometry, GyroConvention, NSpinParams,
    NvParams,
};

pub const SCHEMA_VERSION: u32 = 1;

/// One dark spin, given either by its position relative to the NV (metres,
/// z along the NV axis) or directly by its couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    /// Initial polarization P↓ − P↑.
    #[serde(default)]
    pub p: f64,
}

impl SpinSpec {
    pub fn direct(delta: f64, omega: f64, p: f64) -> Self {
        Self { position: None, delta: Some(delta), omega: Some(omega), p }
    }

    pub fn at(position: [f64; 3], p: f64) -> Self {
        Self { position: Some(position), delta: None, omega: None, p }
    }

    pub fn coupling(&self) -> Result<CouplingPair> {
        match (self.position, self.delta, self.omega) {
            (Some(pos), None, None) => Ok(dipolar_coupling(&DipoleGeometry::from_vector(pos)?)),
            (None, Some(delta), omega) => {
                let omega = omega.unwrap_or(0.0);
                if !(delta.is_finite() && omega.is_finite()) {
                    return Err(Error::Config("couplings must be finite".into()));
                }
                Ok(CouplingPair { omega, delta })
            }
            (Some(_), _, _) => Err(Error::Config("give either a position or couplings, not both".into())),
            (None, None, _) => Err(Error::Config("spin needs a position or a delta".into())),
        }
    }
}

fn default_t_dse() -> f64 {
    6.7e-7
}
fn default_gamma_opt() -> f64 {
    3.3e6
}
fn default_b_app() -> f64 {
    0.024
}
fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    /// Applied field along the NV axis, T.
    #[serde(default = "default_b_app")]
    pub b_app: f64,
    #[serde(default)]
    pub nv: NvParams,
    #[serde(default)]
    pub n_spin: NSpinParams,
    pub spins: Vec<SpinSpec>,
    /// Gaussian dephasing time of echo signals, s.
    #[serde(default = "default_t_dse")]
    pub t_dse: f64,
    /// NV optical repolarization rate, s⁻¹.
    #[serde(default = "default_gamma_opt")]
    pub gamma_opt: f64,
    /// Detuning of the excited-state exchange from exact resonance, Hz.
    #[serde(default)]
    pub es_detuning: f64,
    #[serde(default)]
    pub gyro: GyroConvention,
    /// Include N–N dipolar couplings (position-specified spins only).
    #[serde(default)]
    pub include_nn: bool,
}

impl ClusterConfig {
    pub fn new(spins: Vec<SpinSpec>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            b_app: default_b_app(),
            nv: NvParams::default(),
            n_spin: NSpinParams::default(),
            spins,
            t_dse: default_t_dse(),
            gamma_opt: default_gamma_opt(),
            es_detuning: 0.0,
            gyro: GyroConvention::default(),
            include_nn: false,
        }
    }

    /// Cluster of directly specified (Δ, Ω, p) spins.
    pub fn from_couplings(spins: &[(f64, f64, f64)]) -> Self {
        Self::new(spins.iter().map(|&(d, o, p)| SpinSpec::direct(d, o, p)).collect())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n(&self) -> usize {
        self.spins.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.spins.is_empty() {
            return Err(Error::EmptyCluster);
        }
        if self.spins.len() > 5 {
            return Err(Error::TooLarge(1 << (self.spins.len() + 1)));
        }
        self.nv.validate()?;
        for (i, s) in self.spins.iter().enumerate() {
            if !(-1.0..=1.0).contains(&s.p) {
                return Err(Error::Config(format!("spin {i}: polarization {} outside [-1, 1]", s.p)));
            }
            s.coupling().map_err(|e| Error::Config(format!("spin {i}: {e}")))?;
        }
        if !(self.b_app.is_finite() && self.b_app >= 0.0) {
            return Err(Error::Config("b_app must be finite and non-negative".into()));
        }
        let positive = [("t_dse", self.t_dse), ("gamma_opt", self.gamma_opt), ("n_spin.t1_n", self.n_spin.t1_n)];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.include_nn && self.spins.iter().any(|s| s.position.is_none()) {
            return Err(Error::Config("include_nn requires positions for every spin".into()));
        }
        Ok(())
    }

    pub fn couplings(&self) -> Result<Vec<CouplingPair>> {
        self.spins.iter().map(SpinSpec::coupling).collect()
    }

    pub fn polarizations(&self) -> Vec<f64> {
        self.spins.iter().map(|s| s.p).collect()
    }

    /// Secular N–N coupling constants D_ij = K(1 − 3cos²θ_ij)/r_ij³.
    pub fn nn_couplings(&self) -> Result<Vec<(usize, usize, f64)>> {
        if !self.include_nn {
            return Ok(Vec::new());
        }
        let k = dipolar_prefactor();
        let mut out = Vec::new();
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                let (a, b) = (self.spins[i].position.unwrap(), self.spins[j].position.unwrap());
                let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let g = DipoleGeometry::from_vector(d)?;
                let c = g.theta().cos();
                out.push((i, j, k * (1.0 - 3.0 * c * c) / g.r().powi(3)));
            }
        }
        Ok(out)
    }

    /// Short hex digest of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
