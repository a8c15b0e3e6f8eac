//! Zero first Robin eigenvalue with a prescribed curvature that is negative on a
//! collar of the boundary: pass to a scalar-flat conformal metric, solve there with
//! a scaled target, then undo both changes.

use super::{
    boundary_max, build_constant_case, collar_width, linear_shift, positive_linear_solve, ConstantRecipeChoice,
    Constants, PrescribedCase, Recipe, SubSuperPair, Target, MARGIN,
};
use crate::error::{Error, Result};
use crate::geometry::{boundary_distance, BoundaryField, ConformalMetric, ScalarField};
use crate::iteration::{iterate, IterationSettings, IterationTrace, SolverOptions};
use crate::spectral::{classify, first_eigenvalue_dirichlet, Classification, Sign};

/// Result of the full mixed-sign construction.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub case: PrescribedCase,
    /// Solution for the input metric with boundary data `c * phi`.
    pub solution: ScalarField,
    /// Solution of the scaled problem in the scalar-flat metric.
    pub working_solution: ScalarField,
    pub trace: IterationTrace,
}

/// Builds the scalar-flat background and the pair for the scaled target.
pub(super) fn prepare(
    metric: &ConformalMetric,
    phi: &BoundaryField,
    s: &ScalarField,
    gamma: f64,
    classification: &Classification,
    options: &SolverOptions,
) -> Result<PrescribedCase> {
    let grid = metric.grid();
    let p = metric.constants().p;

    let one = BoundaryField::constant(grid, 1.0)?;
    let flat_pair = build_constant_case(metric, &one, classification, ConstantRecipeChoice::Auto)
        .map_err(|e| e.at_stage("scalar-flat background pair"))?;
    let settings = IterationSettings::for_pair(metric, &flat_pair, options)?;
    let (v, background_trace) = iterate(metric, &flat_pair.target, &one, &flat_pair, &settings)
        .map_err(|e| e.at_stage("scalar-flat background iteration"))?;
    let working = metric.conformal_change(&v)?;

    let eig = first_eigenvalue_dirichlet(&working).map_err(|e| e.at_stage("working Dirichlet eigenpair"))?;
    let eta = eig.eigenvalue;
    let phi_d = &eig.eigenvector;
    let k_upper = phi.max();
    let upper = phi_d.map(|x| x + k_upper)?;
    let dist = boundary_distance(grid)?;
    let k_interior = (0..grid.node_count())
        .filter(|&k| dist.get(k) >= gamma)
        .map(|k| phi_d.get(k))
        .fold(f64::INFINITY, f64::min);
    if k_interior <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "Dirichlet eigenfunction vanishes away from the collar of width {gamma}"
        )));
    }
    let upper_max = upper.max();
    let beta_super = if s.max() > 0.0 && k_interior.is_finite() {
        eta * k_interior / (s.max() * upper_max.powf(p - 1.0))
    } else {
        f64::INFINITY
    };

    let c = linear_shift(&working);
    let u = positive_linear_solve(&working, c, phi)?;
    let delta = 1.0f64.min(k_upper / u.max()) / MARGIN;
    let lower = u.scale(delta)?;
    let beta_sub = if s.min() < 0.0 {
        (c - working.scalar_curvature().max()) / (-s.min() * lower.max().powf(p - 2.0))
    } else {
        f64::INFINITY
    };
    let beta = 1.0f64.min(beta_super / MARGIN).min(beta_sub / MARGIN);
    let rescale = beta.powf(1.0 / (p - 2.0));

    let constants = Constants {
        linear_shift: Some(c),
        delta_lower: Some(delta),
        beta: Some(beta),
        rescale: Some(rescale),
        k_upper: Some(k_upper),
        k_interior: k_interior.is_finite().then_some(k_interior),
        gamma: Some(gamma),
        collar_inequality_lhs: k_interior.is_finite().then_some(eta * k_interior),
        collar_inequality_rhs: Some(beta * s.max() * upper_max.powf(p - 1.0)),
        eta_dirichlet_working: Some(eta),
        ..Constants::default()
    };
    let target = Target::Field(s.scale(beta)?);
    let pair = SubSuperPair::verified(&working, lower, upper, target, phi.clone(), constants, Recipe::MixedSignZeroEigenvalue)
        .map_err(|e| e.at_stage("scaled pair in the scalar-flat metric"))?;
    Ok(PrescribedCase {
        pair,
        working_metric: working,
        background: Some(v),
        background_trace: Some(background_trace),
        final_scale: rescale,
        final_boundary: phi.scale(rescale)?,
    })
}

/// Runs the mixed-sign construction end to end. `gamma = None` detects the widest
/// collar of grid layers on which `S < 0`.
pub fn mixed_sign_pipeline(
    metric: &ConformalMetric,
    phi: &BoundaryField,
    s: &ScalarField,
    gamma: Option<f64>,
    eps_sign: f64,
    options: &SolverOptions,
) -> Result<PipelineOutcome> {
    let classification = classify(metric, eps_sign)?;
    if classification.report.sign_robin != Sign::Zero {
        return Err(Error::NoRecipe {
            hypothesis: format!(
                "the collar construction needs a zero first Robin eigenvalue; found {}",
                classification.report.eta_robin
            ),
        });
    }
    if boundary_max(s) >= 0.0 && gamma.is_none() {
        return Err(Error::NoRecipe {
            hypothesis: format!(
                "the collar construction needs S < 0 near the boundary; max of S on the boundary = {}",
                boundary_max(s)
            ),
        });
    }
    let width = collar_width(s, gamma)?;
    let case = prepare(metric, phi, s, width, &classification, options)?;
    let settings = IterationSettings::for_pair(&case.working_metric, &case.pair, options)?;
    let (w, trace) = iterate(&case.working_metric, &case.pair.target, &case.pair.boundary, &case.pair, &settings)
        .map_err(|e| e.at_stage("scaled iteration"))?;
    let solution = case.compose(&w)?;
    Ok(PipelineOutcome {
        case,
        solution,
        working_solution: w,
        trace,
    })
}
