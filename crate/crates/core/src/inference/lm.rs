use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::select::{aic, aicc};
use crate::error::{Error, Result};
use crate::sequence::Trace;

/// Box constraints on the parameter vector; infinite ends are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(Error::Domain("every lower bound must not exceed its upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(k: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; k], upper: vec![f64::INFINITY; k] }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.len() && x.iter().zip(&self.lower).zip(&self.upper).all(|((x, l), u)| x >= l && x <= u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((x, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *x = x.clamp(*l, *u);
        }
    }

    fn width(&self, j: usize) -> Option<f64> {
        let w = self.upper[j] - self.lower[j];
        (w.is_finite() && w > 0.0).then_some(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Total number of starting points, the supplied start included.
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { starts: 32, seed: 0, max_iter: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub k: usize,
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// 1σ uncertainties from the covariance at the optimum.
    pub sigma: Vec<f64>,
    pub rss: f64,
    pub n_points: usize,
    pub aic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aicc: Option<f64>,
    pub converged: bool,
    /// False when the Jacobian was rank deficient at the optimum.
    pub reliable: bool,
    pub seed: u64,
    pub starts: usize,
    /// Index of the winning start.
    pub best_start: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<(f64, f64)> {
        self.names.iter().position(|n| n == name).map(|i| (self.params[i], self.sigma[i]))
    }
}

pub type ResidualFn<'a> = dyn Fn(&[f64]) -> Vec<f64> + Sync + 'a;
pub type JacobianFn<'a> = dyn Fn(&[f64]) -> DMatrix<f64> + Sync + 'a;

/// A least-squares objective: residual vector as a function of parameters.
pub struct Problem<'a> {
    pub model: String,
    pub names: Vec<String>,
    pub n_points: usize,
    /// Residuals (model − data), already divided by σ when `weighted`.
    pub residuals: Box<ResidualFn<'a>>,
    pub jacobian: Option<Box<JacobianFn<'a>>>,
    pub weighted: bool,
}

impl Problem<'_> {
    pub fn k(&self) -> usize {
        self.names.len()
    }
}

/// One-dimensional data model y = f(x; θ).
pub trait CurveModel: Sync {
    fn name(&self) -> String;
    fn param_names(&self) -> Vec<String>;
    fn eval(&self, x: f64, theta: &[f64]) -> f64;
    /// Analytic ∂f/∂θ, if available.
    fn gradient(&self, _x: f64, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Central (or one-sided at a bound) finite-difference Jacobian.
pub fn numeric_jacobian(f: &ResidualFn<'_>, x: &[f64], bounds: &Bounds) -> DMatrix<f64> {
    let base = f(x);
    let mut jac = DMatrix::zeros(base.len(), x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let scale = bounds.width(j).map_or(x[j].abs().max(1e-12), |w| x[j].abs().max(1e-3 * w));
        let h = 6e-6 * scale;
        let up = x[j] + h <= bounds.upper[j];
        let down = x[j] - h >= bounds.lower[j];
        let (a, b, denom) = match (up, down) {
            (true, true) => (x[j] + h, x[j] - h, 2.0 * h),
            (true, false) => (x[j] + h, x[j], h),
            (false, true) => (x[j], x[j] - h, h),
            (false, false) => (x[j] + h, x[j] - h, 2.0 * h),
        };
        probe[j] = a;
        let fa = f(&probe);
        probe[j] = b;
        let fb = if b == x[j] { base.clone() } else { f(&probe) };
        probe[j] = x[j];
        for i in 0..base.len() {
            jac[(i, j)] = (fa[i] - fb[i]) / denom;
        }
    }
    jac
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

struct Local {
    x: Vec<f64>,
    rss: f64,
    converged: bool,
}

fn levenberg_marquardt(p: &Problem<'_>, start: &[f64], bounds: &Bounds, max_iter: usize) -> Local {
    let jac = |x: &[f64]| match &p.jacobian {
        Some(j) => j(x),
        None => numeric_jacobian(&*p.residuals, x, bounds),
    };
    let mut x = start.to_vec();
    bounds.clamp(&mut x);
    let mut r = (p.residuals)(&x);
    let mut c = cost(&r);
    if !c.is_finite() {
        return Local { x, rss: f64::INFINITY, converged: false };
    }
    let k = x.len();
    let mut lambda = 1e-3;
    for _ in 0..max_iter {
        let j = jac(&x);
        let a = j.transpose() * &j;
        let g = j.transpose() * DVector::from_column_slice(&r);
        if g.amax() <= 1e-300 || c == 0.0 {
            return Local { x, rss: c, converged: true };
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut m = a.clone();
            for i in 0..k {
                m[(i, i)] += lambda * a[(i, i)].max(1e-12 * a.diagonal().amax()).max(1e-300);
            }
            let Some(chol) = m.cholesky() else {
                lambda *= 4.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            bounds.clamp(&mut trial);
            let rt = (p.residuals)(&trial);
            let ct = cost(&rt);
            if ct.is_finite() && ct < c {
                let moved = trial
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-300))
                    .fold(0.0, f64::max);
                let gain = (c - ct) / c;
                x = trial;
                r = rt;
                c = ct;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if gain < 1e-15 || moved < 1e-14 {
                    return Local { x, rss: c, converged: true };
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No downhill step at any damping: a local optimum to working precision.
            return Local { x, rss: c, converged: true };
        }
    }
    Local { x, rss: c, converged: false }
}

/// Runs damped least squares from every start and keeps the lowest RSS
/// (ties go to the earlier start).
pub fn minimize(p: &Problem<'_>, starts: &[Vec<f64>], bounds: &Bounds, max_iter: usize, seed: u64) -> Result<FitResult> {
    let k = p.k();
    if bounds.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: bounds.len() });
    }
    if p.n_points <= k {
        return Err(Error::Fit(format!("{} data points cannot constrain {k} parameters", p.n_points)));
    }
    if starts.is_empty() {
        return Err(Error::Fit("no starting point".into()));
    }
    for s in starts {
        if s.len() != k || s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit("starting points must be finite and match the parameter count".into()));
        }
    }
    let locals: Vec<Local> = starts.par_iter().map(|s| levenberg_marquardt(p, s, bounds, max_iter)).collect();
    let (best_start, best) = locals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.rss.total_cmp(&b.1.rss).then(a.0.cmp(&b.0)))
        .expect("at least one start");
    if !best.rss.is_finite() {
        return Err(Error::Fit("model is not finite at any starting point".into()));
    }
    let j = match &p.jacobian {
        Some(j) => j(&best.x),
        None => numeric_jacobian(&*p.residuals, &best.x, bounds),
    };
    let (sigma, reliable) = covariance_sigma(&j, if p.weighted { 1.0 } else { best.rss / (p.n_points - k) as f64 });
    let mut fit = FitResult {
        model: p.model.clone(),
        k,
        names: p.names.clone(),
        params: best.x.clone(),
        sigma,
        rss: best.rss,
        n_points: p.n_points,
        aic: 0.0,
        aicc: None,
        converged: best.converged,
        reliable,
        seed,
        starts: starts.len(),
        best_start,
        lower: bounds.lower.clone(),
        upper: bounds.upper.clone(),
    };
    fit.aic = aic(&fit);
    fit.aicc = aicc(&fit).ok();
    Ok(fit)
}

/// 1σ from (JᵀJ)⁻¹·s², computed after Jacobi scaling; falls back to the
/// pseudo-inverse when rank deficient.
fn covariance_sigma(j: &DMatrix<f64>, s2: f64) -> (Vec<f64>, bool) {
    let a = j.transpose() * j;
    let k = a.nrows();
    let d: Vec<f64> = (0..k).map(|i| if a[(i, i)] > 0.0 { 1.0 / a[(i, i)].sqrt() } else { 0.0 }).collect();
    let scaled = DMatrix::from_fn(k, k, |r, c| a[(r, c)] * d[r] * d[c]);
    let svd = scaled.clone().svd(true, true);
    let smax = svd.singular_values.amax();
    let reliable = smax > 0.0 && d.iter().all(|v| *v > 0.0) && svd.singular_values.min() > 1e-12 * smax;
    let inv = if reliable {
        scaled.try_inverse().unwrap_or_else(|| svd.pseudo_inverse(1e-12 * smax).expect("svd has u and v"))
    } else {
        svd.pseudo_inverse(1e-12 * smax.max(1e-300)).unwrap_or_else(|_| DMatrix::zeros(k, k))
    };
    let sigma = (0..k).map(|i| (inv[(i, i)].max(0.0) * s2).sqrt() * d[i]).collect();
    (sigma, reliable)
}

/// The supplied start followed by seeded restarts: even ones uniform within
/// finite bounds, odd ones Gaussian jitter around the start.
pub fn restart_points(start: &[f64], bounds: &Bounds, opts: &FitOptions) -> Vec<Vec<f64>> {
    let mut out = vec![start.to_vec()];
    for i in 1..opts.starts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64);
        let mut x: Vec<f64> = (0..start.len())
            .map(|j| {
                let scale = bounds.width(j).unwrap_or(start[j].abs().max(1e-12));
                match bounds.width(j) {
                    Some(w) if i % 2 == 0 => bounds.lower[j] + w * rng.random::<f64>(),
                    _ => {
                        let z: f64 = rng.sample(StandardNormal);
                        start[j] + 0.1 * scale * z
                    }
                }
            })
            .collect();
        bounds.clamp(&mut x);
        out.push(x);
    }
    out
}

fn check_start(start: &[f64], bounds: &Bounds, k: usize) -> Result<()> {
    if start.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: start.len() });
    }
    if start.iter().any(|v| !v.is_finite()) || !bounds.contains(start) {
        return Err(Error::Fit("start must be finite and inside the bounds".into()));
    }
    Ok(())
}

/// Multi-start fit of a least-squares problem from `start`.
pub fn fit_problem(p: &Problem<'_>, start: &[f64], bounds: &Bounds, opts: &FitOptions) -> Result<FitResult> {
    check_start(start, bounds, p.k())?;
    minimize(p, &restart_points(start, bounds, opts), bounds, opts.max_iter, opts.seed)
}

/// Fits a curve model to a trace; residuals are weighted by the trace's
/// sigma column when present.
pub fn fit_curve(model: &dyn CurveModel, data: &Trace, start: &[f64], bounds: &Bounds, opts: &FitOptions) -> Result<FitResult> {
    data.validate()?;
    let names = model.param_names();
    check_start(start, bounds, names.len())?;
    let weights: Vec<f64> = match &data.sigma {
        Some(s) => {
            if s.iter().any(|v| *v <= 0.0) {
                return Err(Error::Fit("sigma column must be strictly positive".into()));
            }
            s.iter().map(|v| 1.0 / v).collect()
        }
        None => vec![1.0; data.len()],
    };
    let x = &data.x;
    let y = &data.y;
    let w = &weights;
    let residuals = move |th: &[f64]| -> Vec<f64> {
        x.iter().zip(y).zip(w).map(|((x, y), w)| (model.eval(*x, th) - y) * w).collect()
    };
    let has_gradient = model.gradient(x[0], start).is_some();
    let jacobian = move |th: &[f64]| -> DMatrix<f64> {
        let k = th.len();
        let mut j = DMatrix::zeros(x.len(), k);
        for (i, (x, w)) in x.iter().zip(w).enumerate() {
            let g = model.gradient(*x, th).expect("model has a gradient");
            for c in 0..k {
                j[(i, c)] = g[c] * w;
            }
        }
        j
    };
    let problem = Problem {
        model: model.name(),
        names,
        n_points: data.len(),
        residuals: Box::new(residuals),
        jacobian: has_gradient.then(|| Box::new(jacobian) as Box<JacobianFn<'_>>),
        weighted: data.sigma.is_some(),
    };
    fit_problem(&problem, start, bounds, opts)
}

/// Largest relative mismatch between a model's analytic gradient and
/// central differences at (x, θ).
pub fn gradient_mismatch(model: &dyn CurveModel, x: f64, theta: &[f64]) -> Option<f64> {
    let g = model.gradient(x, theta)?;
    let mut worst: f64 = 0.0;
    let mut probe = theta.to_vec();
    for j in 0..theta.len() {
        let h = 1e-5 * theta[j].abs().max(1e-8);
        probe[j] = theta[j] + h;
        let up = model.eval(x, &probe);
        probe[j] = theta[j] - h;
        let down = model.eval(x, &probe);
        probe[j] = theta[j];
        let fd = (up - down) / (2.0 * h);
        let scale = g[j].abs().max(fd.abs()).max(1e-300);
        let noise = 1e-9 * model.eval(x, theta).abs() / h;
        if (g[j] - fd).abs() > noise {
            worst = worst.max((g[j] - fd).abs() / scale);
        }
    }
    Some(worst)
}
