use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::*;
use super::trace::{Quantity, Trace};
use crate::engine::evolve::Spectral;
use crate::engine::{
    apply_dephasing_envelope, apply_pulse, ground_state_hamiltonian, lock_hamiltonian, measure_p0,
    optical_pump_with_step, selective_pulse, ClusterConfig, DensityMatrix, Species,
};
use crate::error::{Error, Result};

/// Preparatory shots with carried cluster state before each measured shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Memory {
    pub shots: usize,
    /// Sweep value used for the preparatory shots (SI).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    /// Spin-lock Rabi frequency, Hz.
    pub lock_rabi: f64,
    /// Rabi frequency of frequency-selective N pulses, Hz.
    pub rw_rabi: f64,
    /// Upper bound on the Lindblad step, s.
    #[serde(skip_serializing_if = "is_unbounded")]
    pub dt_max: f64,
    /// Binomial shots per point; 0 returns exact probabilities.
    pub shots: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<Memory>,
    /// Apply the Gaussian echo envelope to echo-class sequences.
    pub envelope: bool,
}

fn is_unbounded(x: &f64) -> bool {
    x.is_infinite()
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            lock_rabi: 2e7,
            rw_rabi: 2e6,
            dt_max: f64::INFINITY,
            shots: 0,
            seed: 0,
            memory: None,
            envelope: true,
        }
    }
}

fn sign_key(s: Option<f64>) -> i8 {
    match s {
        None => 0,
        Some(v) if v > 0.0 => 1,
        Some(_) => -1,
    }
}

struct Context<'a> {
    seq: &'a PulseSequence,
    cfg: &'a ClusterConfig,
    opts: &'a RunOptions,
    gs: Spectral,
    locks: HashMap<(i8, i8), Spectral>,
    /// N-spin line offsets γB + m_I a for every m_I configuration.
    configurations: Vec<Vec<f64>>,
    /// Cluster state after a leading fixed-length pump, shared by every
    /// point when no memory shots carry state.
    prepared: Option<DensityMatrix>,
}

/// Resolves a step duration, which must not be negative.
fn non_negative(v: &Value, x: Option<f64>) -> Result<f64> {
    let t = v.resolve(x)?;
    if t < 0.0 {
        return Err(Error::Domain(format!("negative duration {t:e} s")));
    }
    Ok(t)
}

fn lock_signs(block: &[PulseStep], shot: usize) -> Option<(Option<f64>, Option<f64>)> {
    let mut nv = None;
    let mut n = None;
    let mut any = false;
    for s in block {
        if let PulseStep::Lock { channel, sign, .. } = s {
            any = true;
            match channel {
                Channel::Nv => nv = Some(sign.value(shot)),
                _ => n = Some(sign.value(shot)),
            }
        }
    }
    any.then_some((nv, n))
}

impl<'a> Context<'a> {
    fn new(seq: &'a PulseSequence, cfg: &'a ClusterConfig, opts: &'a RunOptions) -> Result<Self> {
        cfg.validate()?;
        seq.validate()?;
        let gs = Spectral::new(&ground_state_hamiltonian(cfg)?)?;
        let mut locks = HashMap::new();
        for block in &seq.blocks {
            for shot in 0..2 {
                if let Some((nv, n)) = lock_signs(block, shot) {
                    let key = (sign_key(nv), sign_key(n));
                    if let std::collections::hash_map::Entry::Vacant(e) = locks.entry(key) {
                        e.insert(Spectral::new(&lock_hamiltonian(cfg, nv, n, opts.lock_rabi)?)?);
                    }
                }
            }
        }
        let selective = seq.steps().any(|s| matches!(s, PulseStep::Pulse { freq: Some(_), .. }));
        let configurations = if selective {
            let center = cfg.gyro.gamma() * cfg.b_app;
            let a = cfg.n_spin.a_hf_n;
            let n = cfg.n();
            (0..3usize.pow(n as u32))
                .map(|mut k| {
                    (0..n)
                        .map(|_| {
                            let m = (k % 3) as f64 - 1.0;
                            k /= 3;
                            center + m * a
                        })
                        .collect()
                })
                .collect()
        } else {
            vec![Vec::new()]
        };
        let prepared = match seq.blocks.first().map(Vec::as_slice) {
            Some([PulseStep::Pump { duration: Value::Fixed(t) }]) if opts.memory.is_none() => {
                Some(optical_pump_with_step(&DensityMatrix::product(&cfg.polarizations())?, cfg, *t, opts.dt_max)?)
            }
            _ => None,
        };
        Ok(Self { seq, cfg, opts, gs, locks, configurations, prepared })
    }

    fn run_shot(&self, mut rho: DensityMatrix, x: Option<f64>, shot: usize, lines: &[f64]) -> Result<DensityMatrix> {
        let skip = usize::from(self.prepared.is_some());
        for block in &self.seq.blocks[skip..] {
            if let Some((nv, n)) = lock_signs(block, shot) {
                let t = non_negative(block[0].duration().unwrap(), x)?;
                let u = self.locks[&(sign_key(nv), sign_key(n))].propagator(t);
                *rho.matrix_mut() = &u * rho.matrix() * u.adjoint();
                continue;
            }
            for step in block {
                match step {
                    PulseStep::Pulse { channel, axis, angle, freq } => {
                        let phase = axis.phase(x, shot)?;
                        let angle = angle.resolve(x)?;
                        rho = match (channel, freq) {
                            (Channel::N, Some(f)) => {
                                let f = f.resolve(x)?;
                                let det: Vec<f64> = lines.iter().map(|l| f - l).collect();
                                selective_pulse(&rho, phase, angle, self.opts.rw_rabi, &det)?
                            }
                            (Channel::Nv, _) => apply_pulse(&rho, Species::Nv, phase, angle)?,
                            _ => apply_pulse(&rho, Species::N, phase, angle)?,
                        };
                    }
                    PulseStep::Delay { duration } => {
                        let u = self.gs.propagator(non_negative(duration, x)?);
                        *rho.matrix_mut() = &u * rho.matrix() * u.adjoint();
                    }
                    PulseStep::Pump { duration } => {
                        rho = optical_pump_with_step(&rho, self.cfg, non_negative(duration, x)?, self.opts.dt_max)?;
                    }
                    PulseStep::Lock { .. } | PulseStep::Readout => {}
                }
            }
        }
        Ok(rho)
    }

    fn total_delay(&self, x: Option<f64>) -> Result<f64> {
        let mut t = 0.0;
        for s in self.seq.steps() {
            if let PulseStep::Delay { duration } = s {
                t += duration.resolve(x)?;
            }
        }
        Ok(t)
    }

    /// Exact P₀ at sweep value `x`.
    fn point(&self, x: Option<f64>) -> Result<f64> {
        let alternating = self.seq.alternates();
        let mut total = 0.0;
        for lines in &self.configurations {
            let mut rho = match &self.prepared {
                Some(p) => p.clone(),
                None => DensityMatrix::product(&self.cfg.polarizations())?,
            };
            let mut shot = 0;
            if let Some(m) = self.opts.memory {
                for _ in 0..m.shots {
                    rho = self.run_shot(rho, Some(m.value), shot, lines)?;
                    rho.reset_nv();
                    shot += 1;
                }
            }
            // Alternating programs report the mean of one shot of each
            // parity, both started from the same cluster state.
            let measured = if alternating { 2 } else { 1 };
            let mut acc = 0.0;
            for k in 0..measured {
                acc += measure_p0(&self.run_shot(rho.clone(), x, shot + k, lines)?);
            }
            total += acc / measured as f64;
        }
        let mut p0 = total / self.configurations.len() as f64;
        if self.opts.envelope && self.seq.is_echo_class() {
            p0 = apply_dephasing_envelope(p0, self.total_delay(x)?, self.cfg.t_dse)?;
        }
        Ok(p0.clamp(0.0, 1.0))
    }
}

/// Runs the sequence once per sweep value and records P₀.
pub fn run_sweep(seq: &PulseSequence, cfg: &ClusterConfig, opts: &RunOptions) -> Result<Trace> {
    let ctx = Context::new(seq, cfg, opts)?;
    let (xs, unit): (Vec<Option<f64>>, &str) = match &seq.sweep {
        Some(s) => (
            s.values().into_iter().map(Some).collect(),
            match s.unit.dimension() {
                Dimension::Time => "s",
                Dimension::Angle => "rad",
                Dimension::Frequency => "Hz",
            },
        ),
        None => (vec![None], "none"),
    };
    let exact: Vec<f64> = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| ctx.point(*x).map_err(|e| Error::Sweep { index: i, source: Box::new(e) }))
        .collect::<Result<_>>()?;
    let (y, sigma) = if opts.shots > 0 {
        let n = opts.shots;
        let sampled: Vec<(f64, f64)> = exact
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(i as u64);
                let k = Binomial::new(n, p).expect("p in [0, 1]").sample(&mut rng);
                let y = k as f64 / n as f64;
                let var = (y * (1.0 - y)).max(0.25 / n as f64);
                (y, (var / n as f64).sqrt())
            })
            .collect();
        (sampled.iter().map(|s| s.0).collect(), Some(sampled.iter().map(|s| s.1).collect()))
    } else {
        (exact, None)
    };
    let trace = Trace {
        sequence: seq.name.clone(),
        quantity: Quantity::P0,
        x_unit: unit.into(),
        x: xs.iter().map(|x| x.unwrap_or(0.0)).collect(),
        y,
        sigma,
        cfg_hash: cfg.fingerprint(),
        seed: opts.seed,
    };
    trace.validate()?;
    Ok(trace)
}

/// Runs the sequence and divides by the same program without its N-channel steps.
pub fn run_normalized(seq: &PulseSequence, cfg: &ClusterConfig, opts: &RunOptions) -> Result<Trace> {
    let signal = run_sweep(seq, cfg, opts)?;
    let reference = run_sweep(&seq.without_channel(Channel::N), cfg, &RunOptions { shots: 0, ..opts.clone() })?;
    signal.normalized_by(&reference)
}
