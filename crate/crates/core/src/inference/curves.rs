use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::lm::{fit_curve, Bounds, CurveModel, FitOptions, FitResult};
use crate::error::{Error, Result};
use crate::sequence::Trace;
use crate::signal::{dse_signal, hh_model, HhParams};

/// Echo contrast vs free time; parameters (φ, t_dse).
#[derive(Debug, Clone, Copy, Default)]
pub struct DseModel;

impl CurveModel for DseModel {
    fn name(&self) -> String {
        "dse".into()
    }

    fn param_names(&self) -> Vec<String> {
        vec!["phi".into(), "t_dse".into()]
    }

    fn eval(&self, x: f64, th: &[f64]) -> f64 {
        dse_signal(x, th[0], th[1]).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: f64, th: &[f64]) -> Option<Vec<f64>> {
        let (phi, t) = (th[0], th[1]);
        let env = (-(x / t).powi(2)).exp();
        Some(vec![0.5 * env * phi.cos(), 0.5 * (1.0 + phi.sin()) * env * 2.0 * x * x / t.powi(3)])
    }
}

/// Exchange fringe under double locking; parameters (a, ν, t_osc, t_lock, c).
#[derive(Debug, Clone, Copy, Default)]
pub struct HhModel;

impl HhModel {
    pub fn params(th: &[f64]) -> HhParams {
        HhParams { a: th[0], nu: th[1], t_osc: th[2], t_lock: th[3], c: th[4] }
    }
}

impl CurveModel for HhModel {
    fn name(&self) -> String {
        "hh".into()
    }

    fn param_names(&self) -> Vec<String> {
        ["a", "nu", "t_osc", "t_lock", "c"].map(String::from).to_vec()
    }

    fn eval(&self, x: f64, th: &[f64]) -> f64 {
        hh_model(x, &Self::params(th))
    }

    fn gradient(&self, x: f64, th: &[f64]) -> Option<Vec<f64>> {
        let p = Self::params(th);
        let (sin, cos) = (2.0 * PI * p.nu * x).sin_cos();
        let e1 = (-x / p.t_osc).exp();
        let e2 = (-x / p.t_lock).exp();
        Some(vec![
            cos * e1 - e2,
            -p.a * 2.0 * PI * x * sin * e1,
            p.a * cos * e1 * x / p.t_osc.powi(2),
            (1.0 - p.a - p.c) * e2 * x / p.t_lock.powi(2),
            1.0 - e2,
        ])
    }
}

/// Fits the echo envelope and phase.
pub fn fit_dse(trace: &Trace, opts: &FitOptions) -> Result<FitResult> {
    let span = trace.x.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-9);
    let y0 = trace.y[trace.x.iter().enumerate().min_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0];
    let phi0 = (2.0 * y0 - 1.0).clamp(-1.0, 1.0).asin();
    let bounds = Bounds::new(vec![-PI, 1e-3 * span], vec![PI, 1e3 * span])?;
    fit_curve(&DseModel, trace, &[phi0, span / 2.0], &bounds, opts)
}

/// Dominant frequency of `y` on the grid `x` (at least one full period),
/// from the periodogram of the linearly detrended data.
fn dominant_frequency(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = x.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    let resid: Vec<f64> = x.iter().zip(y).map(|(x, y)| y - my - slope * (x - mx)).collect();
    let span = x.last().unwrap() - x[0];
    let nyquist = 0.5 * (x.len() - 1) as f64 / span;
    let df = 0.05 / span;
    let mut best = (f64::NEG_INFINITY, 1.0 / span);
    let mut f = 1.0 / span;
    while f < nyquist {
        let (mut re, mut im) = (0.0, 0.0);
        for (x, r) in x.iter().zip(&resid) {
            let (s, c) = (2.0 * PI * f * x).sin_cos();
            re += r * c;
            im += r * s;
        }
        let power = re * re + im * im;
        if power > best.0 {
            best = (power, f);
        }
        f += df;
    }
    best.1
}

/// Fits the lock-exchange model to a normalized contrast trace.
pub fn fit_hh(trace: &Trace, opts: &FitOptions) -> Result<FitResult> {
    if trace.len() < 8 {
        return Err(Error::Fit("an exchange fringe needs at least 8 points".into()));
    }
    if trace.x[0] < 0.0 {
        return Err(Error::Fit("lock durations must be non-negative".into()));
    }
    let span = trace.x.last().unwrap() - trace.x[0];
    let nu = dominant_frequency(&trace.x, &trace.y);
    let (lo, hi) = trace.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(*y), b.max(*y)));
    let a0 = (0.5 * (hi - lo)).clamp(1e-3, 0.5);
    let start = [a0, nu, span, span, (1.0 - a0).clamp(0.0, 1.0)];
    let bounds = Bounds::new(
        vec![0.0, 0.0, 1e-3 * span, 1e-3 * span, 0.0],
        vec![1.0, 10.0 * nu.max(1.0 / span), 1e3 * span, 1e6 * span, 1.0],
    )?;
    fit_curve(&HhModel, trace, &start, &bounds, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }
}

/// Exchange polarization from the D₊, D₋ and alternating fringe amplitudes:
/// p = 1 − min(a₊, a₋)/a_A, with first-order error propagation.
pub fn hh_polarization(a_plus: Estimate, a_minus: Estimate, a_alt: Estimate) -> Result<Estimate> {
    if !(a_alt.value > 0.0) {
        return Err(Error::Domain("alternating-lock amplitude must be positive".into()));
    }
    let low = if a_plus.value <= a_minus.value { a_plus } else { a_minus };
    let value = 1.0 - low.value / a_alt.value;
    let sigma = ((low.sigma / a_alt.value).powi(2) + (low.value * a_alt.sigma / a_alt.value.powi(2)).powi(2)).sqrt();
    Ok(Estimate { value, sigma })
}
