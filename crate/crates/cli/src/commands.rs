use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use spincluster_core::engine::ClusterConfig;
use spincluster_core::inference::{
    extract_omega, fit_dse, fit_hh, hh_polarization, select_idse, Criterion, Estimate, FitOptions, FitResult,
    IdseData, IdseOptions, IdseSelection, OmegaEstimate, PhaseSet, PumpModel, PumpPoint,
};
use spincluster_core::lattice::{
    circles_to_csv, generate_sites, project_rperp, render_svg, Circle, Localizer, SpinObservation,
};
use spincluster_core::physics::{
    dipolar_prefactor, n_transitions, nv_es_transitions, overlap_window, resonance_field, Constants,
    GyroConvention, NSpinParams, NvParams, CONSTANTS,
};
use spincluster_core::sequence::{
    builtin, fmt_num, parse_sequence, print_sequence, run_normalized, run_sweep, Builtin, BuiltinParams, Dimension,
    Memory, PulseSequence, Quantity, RunOptions, Sweep, Trace, Unit,
};
use spincluster_core::signal::{idse_phase, wrap_phase, PumpingTable, SpinEntry};

use crate::output::{digest, Emit, Kind, Outputs};
use crate::plot::{line_plot, Series};
use crate::{FitArgs, FitModel, Global, LocateArgs, ResonanceArgs, SimulateArgs};

fn header(cfg: &str, seed: u64) -> String {
    format!("cfg={cfg} seed={seed}")
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn outputs(g: &Global) -> Result<Outputs> {
    Ok(Outputs::new(Emit::parse(&g.emit)?))
}

fn load_cluster(g: &Global) -> Result<ClusterConfig> {
    let path = g.config.as_ref().ok_or_else(|| anyhow!("this command needs --config"))?;
    ClusterConfig::from_toml(&read(path)?).with_context(|| format!("in {}", path.display()))
}

#[derive(Serialize)]
struct ConstantsReport {
    cfg: String,
    seed: u64,
    constants: Constants,
    /// μ₀μ_B²/(4πh), Hz·m³.
    dipolar_prefactor: f64,
    gamma_two_mu_b: f64,
    gamma_mu_b: f64,
}

pub fn constants(g: &Global) -> Result<Vec<PathBuf>> {
    let cfg = "default".to_string();
    let mut out = outputs(g)?;
    let report = ConstantsReport {
        cfg,
        seed: g.seed,
        constants: CONSTANTS,
        dipolar_prefactor: dipolar_prefactor(),
        gamma_two_mu_b: GyroConvention::TwoMuB.gamma(),
        gamma_mu_b: GyroConvention::MuB.gamma(),
    };
    out.add_json("constants.json", &report)?;
    out.commit(&g.out)
}

/// The parts of a cluster file that fix the level structure.
#[derive(Deserialize, Default)]
struct LevelConfig {
    #[serde(default)]
    nv: NvParams,
    #[serde(default)]
    n_spin: NSpinParams,
}

#[derive(Serialize)]
struct ResonanceReport {
    cfg: String,
    seed: u64,
    /// T.
    resonance_field: f64,
    overlap_window: (f64, f64),
    /// Sign changes of (NV central line − N central line) over the grid.
    crossings: usize,
}

pub fn resonance(g: &Global, a: &ResonanceArgs) -> Result<Vec<PathBuf>> {
    let (levels, cfg) = match &g.config {
        Some(p) => {
            let text = read(p)?;
            let levels: LevelConfig = toml::from_str(&text).with_context(|| format!("in {}", p.display()))?;
            levels.nv.validate()?;
            (levels, digest(&[text.as_bytes()]))
        }
        None => (LevelConfig::default(), "default".into()),
    };
    if !(a.b_min.is_finite() && a.b_max.is_finite() && a.b_max >= a.b_min) {
        bail!("field grid needs finite b-min ≤ b-max");
    }
    let fields: Vec<f64> = match a.points {
        0 => Vec::new(),
        1 => vec![a.b_min * 1e-3],
        n => (0..n).map(|i| (a.b_min + (a.b_max - a.b_min) * i as f64 / (n - 1) as f64) * 1e-3).collect(),
    };
    let head = header(&cfg, g.seed);
    let mut csv = format!("# {head}\nb,nv_m1,nv_0,nv_p1,n_m1,n_0,n_p1\n");
    let mut columns = vec![Vec::new(); 6];
    let mut crossings = 0;
    let mut last_sign = 0.0;
    for &b in &fields {
        let nv = nv_es_transitions(b, &levels.nv);
        let n = n_transitions(b, &levels.n_spin);
        let row: Vec<f64> = nv.iter().chain(&n).map(|l| l.freq).collect();
        csv.push_str(&fmt_num(b));
        for (k, f) in row.iter().enumerate() {
            csv.push(',');
            csv.push_str(&fmt_num(*f));
            columns[k].push(f * 1e-6);
        }
        csv.push('\n');
        let sign = (nv[1].freq - n[1].freq).signum();
        if last_sign != 0.0 && sign != 0.0 && sign != last_sign {
            crossings += 1;
        }
        if sign != 0.0 {
            last_sign = sign;
        }
    }
    let report = ResonanceReport {
        cfg,
        seed: g.seed,
        resonance_field: resonance_field(&levels.nv),
        overlap_window: overlap_window(&levels.nv),
        crossings,
    };
    let mut out = outputs(g)?;
    out.add(Kind::Csv, "resonance.csv", csv);
    out.add_json("resonance.json", &report)?;
    if !fields.is_empty() {
        let labels = ["NV m=-1", "NV m=0", "NV m=+1", "N m=-1", "N m=0", "N m=+1"];
        let series: Vec<Series<'_>> =
            labels.iter().zip(&columns).map(|(l, y)| Series { label: l, x: &fields, y }).collect();
        out.add(Kind::Svg, "resonance.svg", line_plot(&series, "B (mT)", 1e3, "MHz", &head));
    }
    out.commit(&g.out)
}

/// `START:STOP:N:UNIT`, optionally prefixed by `NAME=`.
fn parse_grid(s: &str, default_name: &str) -> Result<Sweep> {
    let (name, rest) = match s.split_once('=') {
        Some((n, r)) => (n.trim(), r),
        None => (default_name, s),
    };
    let parts: Vec<&str> = rest.split(':').map(str::trim).collect();
    if parts.len() != 4 {
        bail!("grid `{s}` must read START:STOP:N:UNIT");
    }
    let num = |p: &str| p.parse::<f64>().map_err(|_| anyhow!("bad number `{p}` in grid `{s}`"));
    let n: usize = parts[2].parse().map_err(|_| anyhow!("bad point count `{}` in grid `{s}`", parts[2]))?;
    let unit = Unit::parse(parts[3]).ok_or_else(|| anyhow!("unknown unit `{}`", parts[3]))?;
    let sweep = Sweep::linspace(name, unit, num(parts[0])?, num(parts[1])?, n);
    sweep.validate()?;
    Ok(sweep)
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    cfg: String,
    seed: u64,
    sequence: String,
    options: &'a RunOptions,
    normalized: bool,
    points: usize,
}

struct Sim<'a> {
    g: &'a Global,
    a: &'a SimulateArgs,
    cfg: ClusterConfig,
    params: BuiltinParams,
}

impl Sim<'_> {
    fn options(&self, seq: &PulseSequence, seed: u64) -> Result<RunOptions> {
        let memory = match (self.a.memory_shots, self.a.memory_value) {
            (Some(shots), Some(v)) => {
                let unit = seq.sweep.as_ref().map(|s| s.unit).ok_or_else(|| anyhow!("memory shots need a swept sequence"))?;
                Some(Memory { shots, value: unit.to_si(v) })
            }
            _ => None,
        };
        Ok(RunOptions { shots: self.g.shots, seed, memory, envelope: !self.a.no_envelope, ..RunOptions::default() })
    }

    fn builtin(&self, b: Builtin) -> Result<PulseSequence> {
        Ok(builtin(b, &self.params)?)
    }

    fn run(&self, seq: &PulseSequence, seed: u64, normalize: bool) -> Result<(Trace, RunOptions)> {
        let opts = self.options(seq, seed)?;
        let trace = if normalize { run_normalized(seq, &self.cfg, &opts)? } else { run_sweep(seq, &self.cfg, &opts)? };
        Ok((trace, opts))
    }

    fn emit_trace(&self, out: &mut Outputs, seq: &PulseSequence, trace: &Trace, opts: &RunOptions, normalize: bool) -> Result<()> {
        let name = &seq.name;
        out.add(Kind::Csv, format!("{name}.csv"), trace.to_csv());
        out.add_json(
            format!("{name}.json"),
            &SimulateReport {
                cfg: trace.cfg_hash.clone(),
                seed: trace.seed,
                sequence: print_sequence(seq),
                options: opts,
                normalized: normalize,
                points: trace.len(),
            },
        )?;
        out.add(Kind::Svg, format!("{name}.svg"), self.plot(&[(name.as_str(), trace)]));
        Ok(())
    }

    fn plot(&self, traces: &[(&str, &Trace)]) -> String {
        let first = traces[0].1;
        let (label, scale) = match first.x_unit.as_str() {
            "s" => ("time (µs)", 1e6),
            "rad" => ("phase (deg)", 180.0 / std::f64::consts::PI),
            "Hz" => ("frequency (MHz)", 1e-6),
            _ => ("x", 1.0),
        };
        let series: Vec<Series<'_>> = traces.iter().map(|(l, t)| Series { label: l, x: &t.x, y: &t.y }).collect();
        line_plot(&series, label, scale, first.quantity.column(), &header(&first.cfg_hash, first.seed))
    }
}

fn stream_seed(seed: u64, k: u64) -> u64 {
    seed ^ (k + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

#[derive(Serialize)]
struct FringeReport {
    amplitude: f64,
    phase: f64,
}

#[derive(Serialize)]
struct IdsePairReport {
    cfg: String,
    seed: u64,
    tau: f64,
    d: FringeReport,
    u: FringeReport,
    /// arg z_D − arg z_U, rad.
    phase_difference: f64,
    /// Closed-form difference for the configured polarizations; absent when
    /// optical initialization changes them.
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted_phase_difference: Option<f64>,
}

pub fn simulate(g: &Global, a: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let cfg = load_cluster(g)?;
    let sweep = a.sweep.as_deref().map(|s| parse_grid(s, "x")).transpose();
    let params = BuiltinParams { tau: a.tau.map(|t| t * 1e-6), t_init: a.t_init.map(|t| t * 1e-6), sweep: None };
    let mut sim = Sim { g, a, cfg, params };
    let mut out = outputs(g)?;

    if let Some(path) = &a.sequence {
        let mut seq = parse_sequence(&read(path)?).with_context(|| format!("in {}", path.display()))?;
        if let Some(s) = &a.sweep {
            let declared = seq.sweep.as_ref().map(|s| s.name.clone()).unwrap_or_else(|| "x".into());
            seq.sweep = Some(parse_grid(s, &declared)?);
            seq.validate()?;
        }
        let (trace, opts) = sim.run(&seq, g.seed, a.normalize)?;
        sim.emit_trace(&mut out, &seq, &trace, &opts, a.normalize)?;
        return out.commit(&g.out);
    }

    let name = a.builtin.as_deref().ok_or_else(|| anyhow!("give --builtin or --sequence"))?.to_ascii_uppercase();
    sim.params.sweep = sweep?;
    match name.as_str() {
        "IDSE" => {
            let tau = sim.params.tau.ok_or_else(|| anyhow!("IDSE needs --tau"))?;
            let d = sim.builtin(Builtin::IdseD)?;
            let u = sim.builtin(Builtin::IdseU)?;
            let (td, od) = sim.run(&d, stream_seed(g.seed, 0), a.normalize)?;
            let (tu, ou) = sim.run(&u, stream_seed(g.seed, 1), a.normalize)?;
            sim.emit_trace(&mut out, &d, &td, &od, a.normalize)?;
            sim.emit_trace(&mut out, &u, &tu, &ou, a.normalize)?;
            let (zd, zu) = (td.fringe()?, tu.fringe()?);
            let predicted = if sim.params.t_init.is_none() {
                let entries: Vec<SpinEntry> = sim
                    .cfg
                    .couplings()?
                    .iter()
                    .zip(sim.cfg.polarizations())
                    .map(|(c, p)| SpinEntry::new(c.delta, p))
                    .collect();
                Some(idse_phase(tau, &entries))
            } else {
                None
            };
            let report = IdsePairReport {
                cfg: td.cfg_hash.clone(),
                seed: g.seed,
                tau,
                d: FringeReport { amplitude: zd.norm(), phase: zd.arg() },
                u: FringeReport { amplitude: zu.norm(), phase: zu.arg() },
                phase_difference: wrap_phase(zd.arg() - zu.arg()),
                predicted_phase_difference: predicted,
            };
            out.add_json("IDSE.json", &report)?;
            out.add(Kind::Svg, "IDSE.svg", sim.plot(&[("D", &td), ("U", &tu)]));
        }
        "IDSE_SCAN" => {
            let scan = parse_grid(a.scan.as_deref().ok_or_else(|| anyhow!("IDSE_SCAN needs --scan"))?, "tau")?;
            if scan.unit.dimension() != Dimension::Time {
                bail!("--scan must be a time grid");
            }
            let taus = scan.values();
            let (mut phase, mut sigma) = (Vec::new(), Vec::new());
            let mut cfg_hash = String::new();
            for (k, &tau) in taus.iter().enumerate() {
                sim.params.tau = Some(tau);
                let d = sim.builtin(Builtin::IdseD)?;
                let u = sim.builtin(Builtin::IdseU)?;
                let (td, _) = sim.run(&d, stream_seed(g.seed, 2 * k as u64), a.normalize)?;
                let (tu, _) = sim.run(&u, stream_seed(g.seed, 2 * k as u64 + 1), a.normalize)?;
                let (zd, zu) = (td.fringe()?, tu.fringe()?);
                phase.push(wrap_phase(zd.arg() - zu.arg()));
                sigma.push(phase_sigma(&td, zd.norm(), &tu, zu.norm()));
                cfg_hash = td.cfg_hash;
            }
            let trace = Trace {
                sequence: "IDSE_SCAN".into(),
                quantity: Quantity::Phase,
                x_unit: "s".into(),
                x: taus,
                y: phase,
                sigma: Some(sigma),
                cfg_hash,
                seed: g.seed,
            };
            trace.validate()?;
            let opts = sim.options(&sim.builtin(Builtin::IdseD)?, g.seed)?;
            out.add(Kind::Csv, "IDSE_SCAN.csv", trace.to_csv());
            out.add_json(
                "IDSE_SCAN.json",
                &SimulateReport {
                    cfg: trace.cfg_hash.clone(),
                    seed: g.seed,
                    sequence: print_sequence(&sim.builtin(Builtin::IdseD)?),
                    options: &opts,
                    normalized: a.normalize,
                    points: trace.len(),
                },
            )?;
            out.add(Kind::Svg, "IDSE_SCAN.svg", sim.plot(&[("D-U phase", &trace)]));
        }
        "HH" => {
            let mut traces = Vec::new();
            for (k, b) in [Builtin::HhDplus, Builtin::HhDminus, Builtin::HhAlt].into_iter().enumerate() {
                let seq = sim.builtin(b)?;
                let (t, o) = sim.run(&seq, stream_seed(g.seed, k as u64), true)?;
                sim.emit_trace(&mut out, &seq, &t, &o, true)?;
                traces.push((b.name(), t));
            }
            let refs: Vec<(&str, &Trace)> = traces.iter().map(|(n, t)| (*n, t)).collect();
            out.add(Kind::Svg, "HH.svg", sim.plot(&refs));
        }
        other => {
            let seq = sim.builtin(Builtin::from_name(other)?)?;
            let (trace, opts) = sim.run(&seq, g.seed, a.normalize)?;
            sim.emit_trace(&mut out, &seq, &trace, &opts, a.normalize)?;
        }
    }
    out.commit(&g.out)
}

/// Phase uncertainty of arg z_D − arg z_U from the per-point P₀ noise; a
/// floor of 1 mrad keeps exact simulations fittable.
fn phase_sigma(d: &Trace, ad: f64, u: &Trace, au: f64) -> f64 {
    let component = |t: &Trace| match &t.sigma {
        Some(s) if !s.is_empty() => {
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            mean * (2.0 / s.len() as f64).sqrt()
        }
        _ => 0.0,
    };
    let s = ((component(d) / ad.max(1e-12)).powi(2) + (component(u) / au.max(1e-12)).powi(2)).sqrt();
    s.max(1e-3)
}

/// Per-spin couplings exchanged between `fit` and `locate`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpinRecord {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_omega: Option<f64>,
}

#[derive(Serialize)]
struct LabeledFit<T> {
    label: String,
    #[serde(flatten)]
    fit: T,
}

#[derive(Serialize)]
struct FitReport<T> {
    cfg: String,
    seed: u64,
    model: &'static str,
    fits: Vec<LabeledFit<T>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    polarization: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selection: Option<IdseSelection>,
    spins: Vec<SpinRecord>,
}

impl<T> FitReport<T> {
    fn new(cfg: String, seed: u64, model: &'static str) -> Self {
        Self { cfg, seed, model, fits: Vec::new(), polarization: None, selection: None, spins: Vec::new() }
    }
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let parse = |p: &str| p.trim().parse::<usize>().map_err(|_| anyhow!("bad cluster size range `{s}`"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => (parse(s)?, parse(s)?),
    };
    if lo == 0 || hi < lo {
        bail!("cluster size range `{s}` must satisfy 1 ≤ min ≤ max");
    }
    Ok((lo, hi))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into())
}

fn fit_report<T: Serialize>(g: &Global, report: FitReport<T>) -> Result<Vec<PathBuf>> {
    let mut out = outputs(g)?;
    out.add_json("fit.json", &report)?;
    out.commit(&g.out)
}

pub fn fit(g: &Global, a: &FitArgs) -> Result<Vec<PathBuf>> {
    let mut texts = Vec::new();
    let mut traces = Vec::new();
    for p in &a.data {
        let text = read(p)?;
        traces.push((stem(p), Trace::from_csv(&text).with_context(|| format!("in {}", p.display()))?));
        texts.push(text);
    }
    let model = match a.model {
        FitModel::Dse => "dse",
        FitModel::Hh => "hh",
        FitModel::IdsePhase => "idse_phase",
        FitModel::Pumping => "pumping",
    };
    let settings = format!("{model} {} {} {}", a.select_n, a.aicc, a.starts);
    let mut parts: Vec<&[u8]> = vec![settings.as_bytes()];
    parts.extend(texts.iter().map(|t| t.as_bytes()));
    let cfg_text = g.config.as_ref().map(|p| read(p)).transpose()?;
    if let Some(t) = &cfg_text {
        parts.push(t.as_bytes());
    }
    let cfg = digest(&parts);
    let opts = FitOptions { starts: a.starts.max(1), seed: g.seed, ..FitOptions::default() };

    match a.model {
        FitModel::Dse => {
            let mut report = FitReport::new(cfg, g.seed, model);
            for (label, t) in &traces {
                report.fits.push(LabeledFit { label: label.clone(), fit: fit_dse(t, &opts)? });
            }
            fit_report(g, report)
        }
        FitModel::Hh => {
            let mut report: FitReport<FitResult> = FitReport::new(cfg, g.seed, model);
            for (label, t) in &traces {
                report.fits.push(LabeledFit { label: label.clone(), fit: fit_hh(t, &opts)? });
            }
            if report.fits.len() == 3 {
                let amp = |k: usize| {
                    let f = &report.fits[k].fit;
                    Estimate::new(f.params[0], f.sigma[0])
                };
                report.polarization = Some(hh_polarization(amp(0), amp(1), amp(2))?);
            }
            fit_report(g, report)
        }
        FitModel::IdsePhase => {
            let (n_min, n_max) = parse_range(&a.select_n)?;
            let sets = traces.iter().map(|(l, t)| PhaseSet::from_trace(l, t)).collect::<Result<Vec<_>, _>>()?;
            let options = IdseOptions {
                n_min,
                n_max,
                criterion: if a.aicc { Criterion::Aicc } else { Criterion::Aic },
                seed: g.seed,
                ..IdseOptions::default()
            };
            let selection = select_idse(&IdseData::Phases { sets }, &options)?;
            let mut report: FitReport<()> = FitReport::new(cfg, g.seed, model);
            report.spins = selection
                .spins
                .iter()
                .map(|s| SpinRecord {
                    label: s.label.clone(),
                    delta: Some(s.delta.value),
                    sigma_delta: Some(s.delta.sigma),
                    ..SpinRecord::default()
                })
                .collect();
            report.selection = Some(selection);
            fit_report(g, report)
        }
        FitModel::Pumping => {
            let base = match &cfg_text {
                Some(t) => ClusterConfig::from_toml(t)?,
                None => ClusterConfig::new(Vec::new()),
            };
            let mut series = Vec::new();
            let mut times = Vec::new();
            for (label, t) in &traces {
                if t.quantity != Quantity::Polarization {
                    bail!("`{label}` is not a polarization trace");
                }
                let sigma = t.sigma.as_ref().ok_or_else(|| anyhow!("`{label}` has no sigma column"))?;
                let pts: Vec<PumpPoint> =
                    t.x.iter().zip(&t.y).zip(sigma).map(|((&t, &p), &sigma)| PumpPoint { t, p, sigma }).collect();
                times.extend(t.x.iter().copied());
                series.push((label.clone(), pts));
            }
            times.sort_by(f64::total_cmp);
            times.dedup();
            let table = PumpingTable::build(&times, base.gamma_opt, base.n_spin.t1_n, base.es_detuning, 20)?;
            let model_fn = PumpModel::Corrected(&table);
            let mut report: FitReport<OmegaEstimate> = FitReport::new(cfg, g.seed, model);
            for (label, pts) in series {
                let est = extract_omega(&pts, &model_fn).with_context(|| format!("spin `{label}`"))?;
                report.spins.push(SpinRecord {
                    label: label.clone(),
                    omega: Some(est.omega),
                    sigma_omega: Some(est.sigma),
                    ..SpinRecord::default()
                });
                report.fits.push(LabeledFit { label, fit: est });
            }
            fit_report(g, report)
        }
    }
}

#[derive(Deserialize)]
struct SpinFile {
    spins: Vec<SpinRecord>,
}

/// Merges records sharing a label, in order of first appearance.
fn merge_spins(files: &[(PathBuf, Vec<SpinRecord>)]) -> Result<Vec<SpinRecord>> {
    let mut order: Vec<String> = Vec::new();
    let mut merged: BTreeMap<String, SpinRecord> = BTreeMap::new();
    for (path, spins) in files {
        for s in spins {
            let entry = merged.entry(s.label.clone()).or_insert_with(|| {
                order.push(s.label.clone());
                SpinRecord { label: s.label.clone(), ..SpinRecord::default() }
            });
            for (slot, new, name) in [
                (&mut entry.delta, s.delta, "delta"),
                (&mut entry.sigma_delta, s.sigma_delta, "sigma_delta"),
                (&mut entry.omega, s.omega, "omega"),
                (&mut entry.sigma_omega, s.sigma_omega, "sigma_omega"),
            ] {
                match (*slot, new) {
                    (Some(old), Some(v)) if old != v => {
                        bail!("{}: spin `{}` gives a second, different {name}", path.display(), s.label)
                    }
                    (None, Some(v)) => *slot = Some(v),
                    _ => {}
                }
            }
        }
    }
    Ok(order.into_iter().map(|l| merged.remove(&l).expect("label recorded")).collect())
}

#[derive(Serialize)]
struct SpinMap {
    label: String,
    observation: SpinObservation,
    warnings: Vec<String>,
    /// Probability held by the 68 % and 95 % sets.
    mass68: f64,
    mass95: f64,
    sites68: usize,
    sites95: usize,
    /// (r⊥, z) circles belonging to either set.
    regions: Vec<Circle>,
}

#[derive(Serialize)]
struct LocateReport {
    cfg: String,
    seed: u64,
    /// m.
    radius: f64,
    candidate_sites: usize,
    spins: Vec<SpinMap>,
}

pub fn locate(g: &Global, a: &LocateArgs) -> Result<Vec<PathBuf>> {
    let mut texts = Vec::new();
    let mut files = Vec::new();
    for p in &a.input {
        let text = read(p)?;
        let parsed: SpinFile = serde_json::from_str(&text).with_context(|| format!("in {}", p.display()))?;
        files.push((p.clone(), parsed.spins));
        texts.push(text);
    }
    let spins = merge_spins(&files)?;
    if spins.is_empty() {
        bail!("no spins to locate");
    }
    if !(a.sigma_floor >= 0.0 && a.sigma_floor.is_finite()) {
        bail!("--sigma-floor must be a non-negative fraction");
    }
    let radius = a.radius * 1e-9;
    let settings = format!("radius={} sigma_floor={}", a.radius, a.sigma_floor);
    let mut parts: Vec<&[u8]> = vec![settings.as_bytes()];
    parts.extend(texts.iter().map(|t| t.as_bytes()));
    let cfg = digest(&parts);
    let head = header(&cfg, g.seed);

    let localizer = Localizer::new(&generate_sites(radius)?)?;
    let mut maps = Vec::new();
    let mut report = LocateReport { cfg, seed: g.seed, radius, candidate_sites: localizer.sites().len(), spins: Vec::new() };
    for s in &spins {
        let (delta, sigma_delta) = match (s.delta, s.sigma_delta) {
            (Some(d), Some(sd)) => (d, sd),
            _ => bail!("spin `{}` needs delta and sigma_delta", s.label),
        };
        let floor = |v: f64, sd: f64| sd.max(a.sigma_floor * v.abs());
        let obs = SpinObservation {
            label: s.label.clone(),
            delta,
            sigma_delta: floor(delta, sigma_delta),
            omega: s.omega,
            sigma_omega: s.omega.zip(s.sigma_omega).map(|(o, so)| floor(o, so)),
        };
        let map = localizer.localize(&obs).with_context(|| format!("spin `{}`", s.label))?;
        for w in &map.warnings {
            eprintln!("warning: {w}");
        }
        let mass = |set: &[usize]| set.iter().map(|&i| map.prob[i]).sum::<f64>();
        report.spins.push(SpinMap {
            label: s.label.clone(),
            observation: obs,
            warnings: map.warnings.clone(),
            mass68: mass(&map.set68),
            mass95: mass(&map.set95),
            sites68: map.set68.len(),
            sites95: map.set95.len(),
            regions: project_rperp(&map).into_iter().filter(|c| c.set.is_some()).collect(),
        });
        maps.push(map);
    }
    let mut out = outputs(g)?;
    out.add_json("locate.json", &report)?;
    for m in &maps {
        out.add(Kind::Csv, format!("locate_{}.csv", m.label), circles_to_csv(&m.label, &project_rperp(m), &head));
    }
    out.add(Kind::Svg, "locate.svg", render_svg(&maps, &head));
    out.commit(&g.out)
}
