use serde::{Deserialize, Serialize};

use super::lm::FitResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Aic,
    Aicc,
}

/// Gaussian-residual AIC, n·ln(rss/n) + 2k.
pub fn aic(fit: &FitResult) -> f64 {
    let n = fit.n_points as f64;
    // A zero residual would give −∞; the floor keeps scores finite and ordered.
    n * (fit.rss.max(1e-300) / n).ln() + 2.0 * fit.k as f64
}

/// Small-sample corrected AIC.
pub fn aicc(fit: &FitResult) -> Result<f64> {
    let (n, k) = (fit.n_points as f64, fit.k as f64);
    if fit.n_points <= fit.k + 1 {
        return Err(Error::Domain(format!("AICc needs n > k + 1 (n = {}, k = {})", fit.n_points, fit.k)));
    }
    Ok(aic(fit) + 2.0 * k * (k + 1.0) / (n - k - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChoice {
    pub criterion: Criterion,
    pub candidates: Vec<FitResult>,
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub selected: usize,
    /// Candidates whose fit did not converge.
    pub flagged: Vec<usize>,
}

impl ModelChoice {
    pub fn best(&self) -> &FitResult {
        &self.candidates[self.selected]
    }
}

/// Akaike weights from a list of scores.
pub fn akaike_weights(scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = scores.iter().map(|s| (-(s - min) / 2.0).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Scores every candidate and picks the largest Akaike weight; exact ties
/// go to the smaller parameter count.
pub fn model_select(fits: Vec<FitResult>, criterion: Criterion) -> Result<ModelChoice> {
    let Some(first) = fits.first() else {
        return Err(Error::Fit("model selection needs at least one candidate".into()));
    };
    if fits.iter().any(|f| f.n_points != first.n_points) {
        return Err(Error::Fit("candidates were fitted to different data".into()));
    }
    let scores = fits
        .iter()
        .map(|f| match criterion {
            Criterion::Aic => Ok(aic(f)),
            Criterion::Aicc => aicc(f),
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = akaike_weights(&scores);
    let mut selected = 0;
    for i in 1..fits.len() {
        let (w, wb) = (weights[i], weights[selected]);
        if w > wb || (w == wb && fits[i].k < fits[selected].k) {
            selected = i;
        }
    }
    let flagged = fits.iter().enumerate().filter(|(_, f)| !f.converged).map(|(i, _)| i).collect();
    Ok(ModelChoice { criterion, candidates: fits, scores, weights, selected, flagged })
}
