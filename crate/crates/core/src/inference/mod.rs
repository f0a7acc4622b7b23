//! Curve fitting, model selection and coupling extraction.

mod curves;
mod idse;
mod lm;
mod pumping;
mod select;

pub use curves::{fit_dse, fit_hh, hh_polarization, DseModel, Estimate, HhModel};
pub use idse::{fit_idse, idse_spins, select_idse, FringeSet, IdseData, IdseOptions, IdseSelection, IdseSpin, PhaseSet};
pub use lm::{
    fit_curve, fit_problem, gradient_mismatch, minimize, numeric_jacobian, restart_points, Bounds, CurveModel,
    FitOptions, FitResult, JacobianFn, Problem, ResidualFn,
};
pub use pumping::{extract_omega, OmegaEstimate, PumpModel, PumpPoint, OMEGA_SEARCH};
pub use select::{aic, aicc, akaike_weights, model_select, Criterion, ModelChoice};
