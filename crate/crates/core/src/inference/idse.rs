//! Cluster-size selection from interferometric echo data.
//!
//! Two observation types are supported: complex fringe amplitudes of the
//! D and U sequences per free time (preferred, they carry visibility as
//! well as phase), and bare D−U phase differences.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::curves::Estimate;
use super::lm::{minimize, Bounds, FitResult, JacobianFn, Problem};
use super::select::{model_select, Criterion, ModelChoice};
use crate::engine::C64;
use crate::error::{Error, Result};
use crate::sequence::{Quantity, Trace};
use crate::signal::{idse_phase, idse_visibility, wrap_phase, SpinEntry};

/// Fringe amplitudes z_D, z_U of one initialization condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeSet {
    pub label: String,
    pub tau: Vec<f64>,
    pub d: Vec<C64>,
    pub u: Vec<C64>,
}

impl FringeSet {
    /// Builds a set from phase-swept D and U traces, one pair per free time.
    pub fn from_scans(label: &str, tau: &[f64], d: &[Trace], u: &[Trace]) -> Result<Self> {
        if d.len() != tau.len() || u.len() != tau.len() {
            return Err(Error::DimensionMismatch { expected: tau.len(), found: d.len().min(u.len()) });
        }
        Ok(Self {
            label: label.into(),
            tau: tau.to_vec(),
            d: d.iter().map(Trace::fringe).collect::<Result<_>>()?,
            u: u.iter().map(Trace::fringe).collect::<Result<_>>()?,
        })
    }
}

/// Measured D−U phase difference vs free time for one initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSet {
    pub label: String,
    pub tau: Vec<f64>,
    pub phase: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl PhaseSet {
    pub fn from_trace(label: &str, t: &Trace) -> Result<Self> {
        if t.quantity != Quantity::Phase {
            return Err(Error::Fit(format!("`{label}` is not a phase trace")));
        }
        let sigma = t.sigma.clone().ok_or_else(|| Error::Fit(format!("`{label}` has no sigma column")))?;
        if sigma.iter().any(|s| *s <= 0.0) {
            return Err(Error::Fit("phase uncertainties must be positive".into()));
        }
        Ok(Self { label: label.into(), tau: t.x.clone(), phase: t.y.clone(), sigma })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IdseData {
    /// Complex fringes with a common per-component noise σ.
    Fringes { sets: Vec<FringeSet>, sigma: f64 },
    Phases { sets: Vec<PhaseSet> },
}

impl IdseData {
    fn labels(&self) -> Vec<String> {
        match self {
            IdseData::Fringes { sets, .. } => sets.iter().map(|s| s.label.clone()).collect(),
            IdseData::Phases { sets } => sets.iter().map(|s| s.label.clone()).collect(),
        }
    }

    fn n_sets(&self) -> usize {
        self.labels().len()
    }

    fn has_envelope(&self) -> bool {
        matches!(self, IdseData::Fringes { .. })
    }

    fn n_points(&self) -> usize {
        match self {
            IdseData::Fringes { sets, .. } => sets.iter().map(|s| 4 * s.tau.len()).sum(),
            IdseData::Phases { sets } => sets.iter().map(|s| s.tau.len()).sum(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_sets() == 0 {
            return Err(Error::Fit("no data sets".into()));
        }
        match self {
            IdseData::Fringes { sets, sigma } => {
                if !(*sigma > 0.0) {
                    return Err(Error::Fit("fringe noise must be positive".into()));
                }
                for s in sets {
                    if s.d.len() != s.tau.len() || s.u.len() != s.tau.len() {
                        return Err(Error::Fit(format!("set `{}` has ragged columns", s.label)));
                    }
                }
            }
            IdseData::Phases { sets } => {
                for s in sets {
                    if s.phase.len() != s.tau.len() || s.sigma.len() != s.tau.len() {
                        return Err(Error::Fit(format!("set `{}` has ragged columns", s.label)));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdseOptions {
    pub n_min: usize,
    pub n_max: usize,
    pub criterion: Criterion,
    /// |Δ| range covered by the starting grid, Hz.
    pub delta_min: f64,
    pub delta_max: f64,
    /// Grid points per sign.
    pub grid: usize,
    pub max_iter: usize,
    /// Random starts per spin added for phase-only data.
    pub scatter: usize,
    pub seed: u64,
}

impl Default for IdseOptions {
    fn default() -> Self {
        Self {
            n_min: 1,
            n_max: 4,
            criterion: Criterion::Aic,
            delta_min: 1e5,
            delta_max: 5e6,
            grid: 20,
            max_iter: 100,
            scatter: 64,
            seed: 0,
        }
    }
}

/// One fitted cluster spin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdseSpin {
    pub label: String,
    pub delta: Estimate,
    /// Polarization per data set, in data-set order.
    pub p: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdseSelection {
    pub choice: ModelChoice,
    /// Spins of the selected model, largest |Δ| first.
    pub spins: Vec<IdseSpin>,
}

fn model_name(data: &IdseData, n: usize) -> String {
    match data {
        IdseData::Fringes { .. } => format!("idse_fringe_n{n}"),
        IdseData::Phases { .. } => format!("idse_phase_n{n}"),
    }
}

fn param_names(data: &IdseData, n: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=n).map(|i| format!("delta_{i}")).collect();
    for label in data.labels() {
        names.extend((1..=n).map(|i| format!("p_{i}@{label}")));
    }
    if data.has_envelope() {
        names.push("gain".into());
        names.push("t_dse".into());
    }
    names
}

fn spins_for(th: &[f64], n: usize, set: usize) -> Vec<SpinEntry> {
    (0..n).map(|i| SpinEntry::new(th[i], th[n * (1 + set) + i])).collect()
}

fn residuals(data: &IdseData, n: usize, th: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.n_points());
    match data {
        IdseData::Fringes { sets, sigma } => {
            let m = n * (1 + sets.len());
            let (gain, t_dse) = (th[m], th[m + 1]);
            for (s, set) in sets.iter().enumerate() {
                let spins = spins_for(th, n, s);
                for i in 0..set.tau.len() {
                    let tau = set.tau[i];
                    let v = idse_visibility(tau, &spins) * (0.5 * gain * (-(tau / t_dse).powi(2)).exp());
                    let rd = (v - set.d[i]) / *sigma;
                    let ru = (v.conj() - set.u[i]) / *sigma;
                    out.extend([rd.re, rd.im, ru.re, ru.im]);
                }
            }
        }
        IdseData::Phases { sets } => {
            for (s, set) in sets.iter().enumerate() {
                let spins = spins_for(th, n, s);
                for i in 0..set.tau.len() {
                    out.push(wrap_phase(idse_phase(set.tau[i], &spins) - set.phase[i]) / set.sigma[i]);
                }
            }
        }
    }
    out
}

/// Analytic Jacobian of the fringe residuals.
fn fringe_jacobian(sets: &[FringeSet], sigma: f64, n: usize, th: &[f64]) -> DMatrix<f64> {
    let m = n * (1 + sets.len());
    let (gain, t_dse) = (th[m], th[m + 1]);
    let rows: usize = sets.iter().map(|s| 4 * s.tau.len()).sum();
    let mut jac = DMatrix::zeros(rows, th.len());
    let mut row = 0;
    let mut w = vec![C64::new(0.0, 0.0); n];
    let mut dw_delta = vec![C64::new(0.0, 0.0); n];
    let mut dw_p = vec![C64::new(0.0, 0.0); n];
    let mut grads = vec![C64::new(0.0, 0.0); th.len()];
    for (s, set) in sets.iter().enumerate() {
        for &tau in &set.tau {
            for j in 0..n {
                let p = th[n * (1 + s) + j];
                let (sin, cos) = (2.0 * PI * th[j] * tau).sin_cos();
                w[j] = C64::new(cos, p * sin);
                dw_delta[j] = C64::new(-sin, p * cos) * (2.0 * PI * tau);
                dw_p[j] = C64::new(0.0, sin);
            }
            let env = 0.5 * gain * (-(tau / t_dse).powi(2)).exp();
            let v = w.iter().fold(C64::new(1.0, 0.0), |a, b| a * b);
            grads.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
            for j in 0..n {
                let others = (0..n).filter(|&i| i != j).fold(C64::new(1.0, 0.0), |a, i| a * w[i]);
                grads[j] = others * dw_delta[j] * env;
                grads[n * (1 + s) + j] = others * dw_p[j] * env;
            }
            grads[m] = v * env / gain;
            grads[m + 1] = v * env * (2.0 * tau * tau / t_dse.powi(3));
            for (c, g) in grads.iter().enumerate() {
                let g = g / sigma;
                jac[(row, c)] = g.re;
                jac[(row + 1, c)] = g.im;
                jac[(row + 2, c)] = g.re;
                jac[(row + 3, c)] = -g.im;
            }
            row += 4;
        }
    }
    jac
}

fn bounds(data: &IdseData, n: usize, opts: &IdseOptions) -> Bounds {
    let s = data.n_sets();
    let mut lo = vec![-opts.delta_max; n];
    let mut hi = vec![opts.delta_max; n];
    lo.extend(vec![0.0; n * s]);
    hi.extend(vec![1.0; n * s]);
    if data.has_envelope() {
        lo.extend([0.1, 5e-8]);
        hi.extend([2.0, 1e-5]);
    }
    Bounds { lower: lo, upper: hi }
}

fn delta_grid(opts: &IdseOptions) -> Vec<f64> {
    let g = opts.grid.max(2);
    let ratio = (opts.delta_max / opts.delta_min).ln();
    let pos: Vec<f64> = (0..g).map(|i| opts.delta_min * (ratio * i as f64 / (g - 1) as f64).exp()).collect();
    pos.iter().map(|d| -d).chain(pos.iter().copied()).collect()
}

/// Starting points for n spins built from the best (n−1)-spin fit by adding
/// one spin at each grid coupling.
fn stage_starts(data: &IdseData, n: usize, prev: Option<&[f64]>, grid: &[f64]) -> Vec<Vec<f64>> {
    let s = data.n_sets();
    grid.iter()
        .map(|&g| {
            let mut th = Vec::new();
            match prev {
                None => {
                    th.push(g);
                    th.extend((0..s).map(|k| 0.2 + 0.2 * k as f64 / s.max(1) as f64));
                    if data.has_envelope() {
                        th.extend([1.0, 1e-6]);
                    }
                }
                Some(p) => {
                    let m = n - 1;
                    th.extend(&p[..m]);
                    th.push(g);
                    for k in 0..s {
                        th.extend(&p[m * (1 + k)..m * (2 + k)]);
                        th.push(0.05);
                    }
                    th.extend(&p[m * (1 + s)..]);
                }
            }
            th
        })
        .collect()
}

/// Random starts with log-uniform |Δ| and uniform p, for the rugged
/// wrapped-phase objective.
fn scattered_starts(data: &IdseData, n: usize, opts: &IdseOptions, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(n as u64);
    let span = (opts.delta_max / opts.delta_min).ln();
    (0..count)
        .map(|_| {
            let mut th: Vec<f64> = (0..n)
                .map(|_| {
                    let mag = opts.delta_min * (span * rng.random::<f64>()).exp();
                    if rng.random::<bool>() { mag } else { -mag }
                })
                .collect();
            th.extend((0..n * data.n_sets()).map(|_| rng.random::<f64>()));
            if data.has_envelope() {
                th.extend([1.0, 1e-6]);
            }
            th
        })
        .collect()
}

/// Parameters of an n-spin fit with spin `j` removed.
fn drop_spin(data: &IdseData, n: usize, th: &[f64], j: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(th.len());
    for blk in 0..=data.n_sets() {
        out.extend((0..n).filter(|&i| i != j).map(|i| th[blk * n + i]));
    }
    out.extend(&th[n * (1 + data.n_sets())..]);
    out
}

/// Reorders spins by decreasing |Δ| so labels are stable.
fn canonical(fit: &mut FitResult, data: &IdseData, n: usize) {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fit.params[b].abs().total_cmp(&fit.params[a].abs()).then(a.cmp(&b)));
    let remap = |v: &mut Vec<f64>| {
        let old = v.clone();
        for blk in 0..=data.n_sets() {
            for (i, &o) in order.iter().enumerate() {
                v[blk * n + i] = old[blk * n + o];
            }
        }
    };
    remap(&mut fit.params);
    remap(&mut fit.sigma);
    remap(&mut fit.lower);
    remap(&mut fit.upper);
}

/// Fits a single cluster size from explicit starting points.
pub fn fit_idse(data: &IdseData, n: usize, starts: &[Vec<f64>], opts: &IdseOptions) -> Result<FitResult> {
    data.validate()?;
    if n == 0 {
        return Err(Error::EmptyCluster);
    }
    let problem = Problem {
        model: model_name(data, n),
        names: param_names(data, n),
        n_points: data.n_points(),
        residuals: Box::new(move |th: &[f64]| residuals(data, n, th)),
        jacobian: match data {
            IdseData::Fringes { sets, sigma } => {
                Some(Box::new(move |th: &[f64]| fringe_jacobian(sets, *sigma, n, th)) as Box<JacobianFn<'_>>)
            }
            IdseData::Phases { .. } => None,
        },
        weighted: true,
    };
    let mut fit = minimize(&problem, starts, &bounds(data, n, opts), opts.max_iter, opts.seed)?;
    canonical(&mut fit, data, n);
    Ok(fit)
}

/// Extracts per-spin estimates from an IDSE fit of `n` spins.
pub fn idse_spins(fit: &FitResult, n: usize, n_sets: usize) -> Vec<IdseSpin> {
    (0..n)
        .map(|i| IdseSpin {
            label: format!("N{}", i + 1),
            delta: Estimate::new(fit.params[i], fit.sigma[i]),
            p: (0..n_sets).map(|s| Estimate::new(fit.params[n * (1 + s) + i], fit.sigma[n * (1 + s) + i])).collect(),
        })
        .collect()
}

/// Fits n = 1 … n_max spins stagewise and ranks sizes n_min … n_max by
/// Akaike weight.
pub fn select_idse(data: &IdseData, opts: &IdseOptions) -> Result<IdseSelection> {
    data.validate()?;
    if opts.n_min == 0 || opts.n_min > opts.n_max {
        return Err(Error::Domain("cluster size range must satisfy 1 ≤ n_min ≤ n_max".into()));
    }
    let grid = delta_grid(opts);
    let mut prev: Option<Vec<f64>> = None;
    let mut stages: Vec<FitResult> = Vec::new();
    for n in 1..=opts.n_max {
        let mut starts = stage_starts(data, n, prev.as_deref(), &grid);
        if prev.is_some() {
            // Δ = 0 reproduces the smaller model, so the stages stay nested.
            starts.extend(stage_starts(data, n, prev.as_deref(), &[0.0]));
        }
        if !data.has_envelope() {
            starts.extend(scattered_starts(data, n, opts, opts.scatter * n));
        }
        let stage = fit_idse(data, n, &starts, opts)?;
        // Weakly polarized spins barely fix the sign of Δ; retry each mirror image.
        let mut polish = vec![stage.params.clone()];
        for j in 0..n {
            let mut th = stage.params.clone();
            th[j] = -th[j];
            for s in 0..data.n_sets() {
                th[n * (1 + s) + j] = th[n * (1 + s) + j].max(0.05);
            }
            polish.push(th);
        }
        let fit = fit_idse(data, n, &polish, opts)?;
        prev = Some(fit.params.clone());
        stages.push(fit);
    }
    // Backward pass: a larger fit with one spin removed can beat the
    // forward search for the smaller size.
    for n in (1..opts.n_max).rev() {
        let starts: Vec<Vec<f64>> = (0..=n).map(|j| drop_spin(data, n + 1, &stages[n].params, j)).collect();
        let fit = fit_idse(data, n, &starts, opts)?;
        if fit.rss < stages[n - 1].rss {
            stages[n - 1] = fit;
        }
    }
    let fits: Vec<FitResult> = stages.into_iter().skip(opts.n_min - 1).collect();
    let choice = model_select(fits, opts.criterion)?;
    let n = opts.n_min + choice.selected;
    let spins = idse_spins(choice.best(), n, data.n_sets());
    Ok(IdseSelection { choice, spins })
}
