use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::signal::{pumping_curve, PumpingTable};

/// Measured polarization after optical initialization of duration `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpPoint {
    pub t: f64,
    pub p: f64,
    pub sigma: f64,
}

/// Forward model used to invert the polarization rise.
#[derive(Debug, Clone, Copy)]
pub enum PumpModel<'a> {
    Closed { gamma_opt: f64, t1_n: f64 },
    Corrected(&'a PumpingTable),
}

impl PumpModel<'_> {
    pub fn eval(&self, t: f64, omega: f64) -> f64 {
        match self {
            PumpModel::Closed { gamma_opt, t1_n } => pumping_curve(t, omega, *gamma_opt, *t1_n),
            PumpModel::Corrected(table) => table.corrected(t, omega),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaEstimate {
    /// Flip-flop coupling magnitude, Hz.
    pub omega: f64,
    pub sigma: f64,
    pub chi2: f64,
    /// The optimum sits on the edge of the search range (or at Ω = 0).
    pub at_boundary: bool,
    pub residuals: Vec<f64>,
}

pub const OMEGA_SEARCH: (f64, f64) = (1e4, 1e7);

fn chi2(points: &[PumpPoint], model: &PumpModel<'_>, omega: f64) -> f64 {
    points.iter().map(|q| ((model.eval(q.t, omega) - q.p) / q.sigma).powi(2)).sum()
}

/// Bounded one-dimensional least-squares inversion of the pumping curve in
/// ln Ω over [10 kHz, 10 MHz], with Ω = 0 as an explicit alternative.
pub fn extract_omega(points: &[PumpPoint], model: &PumpModel<'_>) -> Result<OmegaEstimate> {
    let mut times: Vec<f64> = points.iter().map(|q| q.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.len() < 2 {
        return Err(Error::Domain("Ω extraction needs at least two initialization times".into()));
    }
    if points.iter().any(|q| !(q.sigma > 0.0) || !q.p.is_finite() || !(q.t > 0.0)) {
        return Err(Error::Domain("pumping points need t > 0, finite p and σ > 0".into()));
    }
    let (lo, hi) = (OMEGA_SEARCH.0.ln(), OMEGA_SEARCH.1.ln());
    let f = |l: f64| chi2(points, model, l.exp());
    let grid = 600;
    let step = (hi - lo) / grid as f64;
    let best = (0..=grid)
        .map(|i| lo + step * i as f64)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .expect("non-empty grid");
    // Golden-section refinement within one grid cell either side.
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-13 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let l = 0.5 * (a + b);
    let mut omega = l.exp();
    let mut at_boundary = (l - lo).abs() < 2.0 * step || (hi - l).abs() < 2.0 * step;
    let zero = chi2(points, model, 0.0);
    if zero <= f(l) {
        omega = 0.0;
        at_boundary = true;
    }
    let chi = chi2(points, model, omega);
    let residuals: Vec<f64> = points.iter().map(|q| (q.p - model.eval(q.t, omega)) / q.sigma).collect();
    let dof = (points.len() - 1).max(1) as f64;
    let limit = ChiSquared::new(dof).expect("positive dof").inverse_cdf(0.999);
    if chi > limit {
        let listing: Vec<String> = points
            .iter()
            .zip(&residuals)
            .map(|(q, r)| format!("t = {:.3e} s: p = {:.4}, residual {:+.2}σ", q.t, q.p, r))
            .collect();
        return Err(Error::Inconsistent(format!(
            "no Ω in [10 kHz, 10 MHz] reproduces the rise (χ² = {chi:.2}); {}",
            listing.join("; ")
        )));
    }
    let sigma = if omega > 0.0 {
        let h = 1e-4 * omega;
        let info: f64 = points
            .iter()
            .map(|q| ((model.eval(q.t, omega + h) - model.eval(q.t, omega - h)) / (2.0 * h) / q.sigma).powi(2))
            .sum();
        if info > 0.0 {
            1.0 / info.sqrt()
        } else {
            f64::MAX
        }
    } else {
        0.0
    };
    Ok(OmegaEstimate { omega, sigma, chi2: chi, at_boundary, residuals })
}
