//! Sub- and super-solution pairs for the Dirichlet problem
//! `-a Delta_g u + S_g u = target * u^{p-1}` in `M`, `u = phi` on the boundary.
//!
//! Each recipe picks its pair from the sign of the first Robin eigenvalue and the
//! sign pattern of the target. Constants described as "large enough" are the
//! binding bound times 1.1; "small enough" ones are the bound divided by 1.1.
//! Every emitted pair is verified nodewise before it is returned.

mod pipeline;

use serde::{Deserialize, Serialize};

pub use pipeline::{mixed_sign_pipeline, PipelineOutcome};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryField, ConformalMetric, ScalarField};
use crate::iteration::{equation_scale, iterate, semilinear_defect, IterationSettings, IterationTrace, SolverOptions};
use crate::operator::DirichletSolver;
use crate::spectral::{Classification, Sign};

const MARGIN: f64 = 1.1;

/// Right-hand side coefficient of the semilinear equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Constant(f64),
    Field(ScalarField),
}

impl Target {
    pub fn at(&self, node: usize) -> f64 {
        match self {
            Target::Constant(c) => *c,
            Target::Field(f) => f.get(node),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Target::Constant(c) => c.abs(),
            Target::Field(f) => f.max_abs(),
        }
    }

    pub fn scaled(&self, beta: f64) -> Result<Target> {
        Ok(match self {
            Target::Constant(c) => Target::Constant(beta * c),
            Target::Field(f) => Target::Field(f.scale(beta)?),
        })
    }

    pub fn describe(&self) -> String {
        match self {
            Target::Constant(c) => format!("constant {c}"),
            Target::Field(f) => format!("field in [{}, {}]", f.min(), f.max()),
        }
    }

    pub(crate) fn ensure_grid(&self, metric: &ConformalMetric) -> Result<()> {
        match self {
            Target::Constant(c) if !c.is_finite() => Err(Error::NonFinite {
                what: "target",
                index: 0,
            }),
            Target::Constant(_) => Ok(()),
            Target::Field(f) => f.ensure_grid(metric.grid()),
        }
    }
}

/// Which sufficient condition produced a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    ZeroEigenvalueConstant,
    NegativeEigenvalueConstant,
    PositiveEigenvalueConstant,
    PositiveCurvatureConstant,
    NegativeTargetNegativeEigenvalue,
    NegativeTargetZeroEigenvalue,
    MixedSignZeroEigenvalue,
    PositiveTargetPositiveEigenvalue,
    MixedSignPositiveEigenvalue,
    NonpositiveTargetPositiveEigenvalue,
    /// Pair supplied by the caller.
    Custom,
}

impl Recipe {
    /// Hypotheses under which the recipe applies, in words.
    pub fn hypothesis(&self) -> &'static str {
        match self {
            Recipe::ZeroEigenvalueConstant => "first Robin eigenvalue zero; constant curvature 0",
            Recipe::NegativeEigenvalueConstant => "first Robin eigenvalue negative; negative constant curvature",
            Recipe::PositiveEigenvalueConstant => "first Robin eigenvalue positive; positive constant curvature",
            Recipe::PositiveCurvatureConstant => "background scalar curvature positive everywhere; positive constant curvature",
            Recipe::NegativeTargetNegativeEigenvalue => "first Robin eigenvalue negative; prescribed curvature negative everywhere",
            Recipe::NegativeTargetZeroEigenvalue => "first Robin eigenvalue zero; prescribed curvature negative everywhere",
            Recipe::MixedSignZeroEigenvalue => "first Robin eigenvalue zero; prescribed curvature negative on a closed collar of the boundary",
            Recipe::PositiveTargetPositiveEigenvalue => "first Robin eigenvalue positive; prescribed curvature positive everywhere; boundary data rescaled",
            Recipe::MixedSignPositiveEigenvalue => "first Robin eigenvalue positive; prescribed curvature positive somewhere; boundary data rescaled",
            Recipe::NonpositiveTargetPositiveEigenvalue => "first Robin eigenvalue positive; prescribed curvature nonpositive everywhere",
            Recipe::Custom => "caller-supplied pair",
        }
    }
}

/// Constants chosen by a construction; absent entries do not apply to the recipe.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Shift `A` of the monotone iteration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    /// `C` in `-a Delta_g u + C u = 0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear_shift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_upper: Option<f64>,
    /// Value of a constant super-solution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Boundary data scale `c`: the solution equals `c * phi` on the boundary.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rescale: Option<f64>,
    /// `K`, the constant lift of the Dirichlet eigenfunction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_upper: Option<f64>,
    /// `K_1`, the minimum of the Dirichlet eigenfunction away from the collar.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_interior: Option<f64>,
    /// Constant added to the Dirichlet eigenfunction in the positive-curvature recipe.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_prime: Option<f64>,
    /// Collar width used by the mixed-sign recipe.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Left side `eta_D K_1` of the collar inequality.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collar_inequality_lhs: Option<f64>,
    /// Right side `beta max S max u^{p-1}` of the collar inequality.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collar_inequality_rhs: Option<f64>,
    /// First Dirichlet eigenvalue of the working metric.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_dirichlet_working: Option<f64>,
    /// Whether the minimum of the linear sub-solution sits on the boundary.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear_min_on_boundary: Option<bool>,
}

/// Nodewise inequality margins of a candidate pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    /// `max F(lower)` over interior nodes (nonpositive for a sub-solution).
    pub max_sub_violation: f64,
    pub sub_node: usize,
    /// `max -F(upper)` over interior nodes (nonpositive for a super-solution).
    pub max_super_violation: f64,
    pub super_node: usize,
    /// `max (lower - phi)` on the boundary.
    pub max_sub_boundary: f64,
    /// `max (phi - upper)` on the boundary.
    pub max_super_boundary: f64,
    pub tol_ineq: f64,
    pub tol_boundary: f64,
}

/// Verified sub/super-solution pair.
#[derive(Debug, Clone)]
pub struct SubSuperPair {
    pub lower: ScalarField,
    pub upper: ScalarField,
    pub target: Target,
    pub boundary: BoundaryField,
    pub lambda: Option<f64>,
    pub constants: Constants,
    pub recipe: Recipe,
    pub verified: bool,
    pub check: PairCheck,
}

impl SubSuperPair {
    /// Checks every pair inequality and records the iteration shift.
    pub fn verified(
        metric: &ConformalMetric,
        lower: ScalarField,
        upper: ScalarField,
        target: Target,
        boundary: BoundaryField,
        mut constants: Constants,
        recipe: Recipe,
    ) -> Result<Self> {
        let check = check_pair(metric, &lower, &upper, &target, &boundary)?;
        if check.max_sub_violation > check.tol_ineq {
            return Err(Error::InequalityViolated {
                kind: "sub",
                node: check.sub_node,
                excess: check.max_sub_violation,
                tolerance: check.tol_ineq,
            });
        }
        if check.max_super_violation > check.tol_ineq {
            return Err(Error::InequalityViolated {
                kind: "super",
                node: check.super_node,
                excess: check.max_super_violation,
                tolerance: check.tol_ineq,
            });
        }
        if check.max_sub_boundary > check.tol_boundary {
            return Err(Error::InequalityViolated {
                kind: "sub boundary",
                node: 0,
                excess: check.max_sub_boundary,
                tolerance: check.tol_boundary,
            });
        }
        if check.max_super_boundary > check.tol_boundary {
            return Err(Error::InequalityViolated {
                kind: "super boundary",
                node: 0,
                excess: check.max_super_boundary,
                tolerance: check.tol_boundary,
            });
        }
        constants.shift = Some(choose_shift_a(metric, &target, lower.min(), upper.max())?);
        let lambda = match &target {
            Target::Constant(c) => Some(*c),
            Target::Field(_) => None,
        };
        Ok(Self {
            lower,
            upper,
            target,
            boundary,
            lambda,
            constants,
            recipe,
            verified: true,
            check,
        })
    }
}

/// Evaluates the pair conditions; fails on ordering or sign violations.
pub fn check_pair(
    metric: &ConformalMetric,
    lower: &ScalarField,
    upper: &ScalarField,
    target: &Target,
    boundary: &BoundaryField,
) -> Result<PairCheck> {
    let grid = metric.grid();
    lower.ensure_grid(grid)?;
    upper.ensure_grid(grid)?;
    boundary.ensure_grid(grid)?;
    target.ensure_grid(metric)?;
    if let Some(node) = lower.values().iter().position(|&v| v < 0.0) {
        return Err(Error::PositivityViolation {
            node,
            value: lower.get(node),
        });
    }
    if lower.max() <= 0.0 {
        return Err(Error::InvalidArgument("sub-solution is identically zero".into()));
    }
    let slack = 1e-12 * (1.0 + upper.max().abs());
    for k in 0..grid.node_count() {
        if lower.get(k) > upper.get(k) + slack {
            return Err(Error::OrderingViolated {
                node: k,
                lower: lower.get(k),
                upper: upper.get(k),
            });
        }
    }
    let f_lower = semilinear_defect(metric, lower, target)?;
    let f_upper = semilinear_defect(metric, upper, target)?;
    let mut check = PairCheck {
        max_sub_violation: f64::NEG_INFINITY,
        sub_node: 0,
        max_super_violation: f64::NEG_INFINITY,
        super_node: 0,
        max_sub_boundary: f64::NEG_INFINITY,
        max_super_boundary: f64::NEG_INFINITY,
        tol_ineq: 1e-9 * equation_scale(metric, target, upper.max()),
        tol_boundary: 1e-12 * (1.0 + boundary.max().abs()),
    };
    for k in grid.interior_nodes() {
        if f_lower[k] > check.max_sub_violation {
            check.max_sub_violation = f_lower[k];
            check.sub_node = k;
        }
        if -f_upper[k] > check.max_super_violation {
            check.max_super_violation = -f_upper[k];
            check.super_node = k;
        }
    }
    for slot in 0..grid.boundary_count() {
        let k = grid.boundary_node(slot);
        check.max_sub_boundary = check.max_sub_boundary.max(lower.get(k) - boundary.get(slot));
        check.max_super_boundary = check.max_super_boundary.max(boundary.get(slot) - upper.get(k));
    }
    Ok(check)
}

/// Smallest shift `A >= 0`, plus `1e-6 * scale`, with
/// `-S_g(x) + target(x) (p-1) t^{p-2} + A > 0` for every node and `t in {m, M}`.
pub fn choose_shift_a(metric: &ConformalMetric, target: &Target, m: f64, mx: f64) -> Result<f64> {
    if !m.is_finite() || !mx.is_finite() {
        return Err(Error::NonFinite {
            what: "shift range",
            index: 0,
        });
    }
    if m < 0.0 || m > mx {
        return Err(Error::InvalidArgument(format!("invalid range [{m}, {mx}]")));
    }
    target.ensure_grid(metric)?;
    let p = metric.constants().p;
    let s = metric.scalar_curvature();
    let mut need: f64 = 0.0;
    for k in 0..metric.grid().node_count() {
        for t in [m, mx] {
            need = need.max(s.get(k) - target.at(k) * (p - 1.0) * t.powf(p - 2.0));
        }
    }
    let scale = 1.0 + s.max_abs() + target.max_abs() * (p - 1.0) * mx.powf(p - 2.0);
    Ok(need + 1e-6 * scale)
}

/// Solves `-a Delta_g u + C u = 0` with `u = phi` on the boundary; positive by the
/// discrete maximum principle.
pub fn positive_linear_solve(metric: &ConformalMetric, c: f64, phi: &BoundaryField) -> Result<ScalarField> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C must be positive, found {c}")));
    }
    phi.ensure_grid(metric.grid())?;
    phi.ensure_positive("boundary data")?;
    let grid = metric.grid();
    let solver = DirichletSolver::new(metric, c)?;
    let zero = vec![0.0; grid.node_count()];
    let u = solver.solve(grid, &zero, phi, crate::operator::DIRICHLET_CG_TOL)?;
    if let Some(node) = u.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::PositivityViolation { node, value: u[node] });
    }
    ScalarField::new(grid.clone(), u)
}

/// `C = max(1.1 max |S_g|, a)`, a valid shift for linear sub-solutions.
pub fn linear_shift(metric: &ConformalMetric) -> f64 {
    (MARGIN * metric.scalar_curvature().max_abs()).max(metric.constants().a)
}

pub(crate) fn boundary_min(field: &ScalarField) -> f64 {
    let grid = field.grid();
    (0..grid.boundary_count())
        .map(|s| field.get(grid.boundary_node(s)))
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn boundary_max(field: &ScalarField) -> f64 {
    let grid = field.grid();
    (0..grid.boundary_count())
        .map(|s| field.get(grid.boundary_node(s)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Choice among the constant-curvature constructions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantRecipeChoice {
    /// Dispatch on the sign of the first Robin eigenvalue.
    #[default]
    Auto,
    /// Use the construction that needs positive background curvature.
    PositiveCurvature,
}

/// Sub/super pair for a constant target whose sign follows the first Robin eigenvalue.
pub fn build_constant_case(
    metric: &ConformalMetric,
    phi: &BoundaryField,
    classification: &Classification,
    choice: ConstantRecipeChoice,
) -> Result<SubSuperPair> {
    phi.ensure_grid(metric.grid())?;
    phi.ensure_positive("boundary data")?;
    if choice == ConstantRecipeChoice::PositiveCurvature {
        return positive_curvature_constant(metric, phi, classification);
    }
    let p = metric.constants().p;
    let eta = classification.report.eta_robin;
    let phi1 = &classification.robin.eigenvector;
    let mut constants = Constants::default();
    match classification.report.sign_robin {
        Sign::Zero => {
            let c = linear_shift(metric);
            let u1 = positive_linear_solve(metric, c, phi)?;
            let delta = MARGIN * (u1.max() / phi1.min()).max(phi.max() / boundary_min(phi1));
            constants.linear_shift = Some(c);
            constants.delta_upper = Some(delta);
            constants.lambda = Some(0.0);
            constants.linear_min_on_boundary = Some(metric.grid().is_boundary(u1.argmin()));
            let upper = phi1.scale(delta)?;
            SubSuperPair::verified(metric, u1, upper, Target::Constant(0.0), phi.clone(), constants, Recipe::ZeroEigenvalueConstant)
        }
        Sign::Negative => {
            let delta = phi.min() / (MARGIN * phi1.max());
            let lower = phi1.scale(delta)?;
            let lambda = eta * lower.min() / lower.max().powf(p - 1.0);
            let s_min = metric.scalar_curvature().min();
            let mut bound = lower.max().max(phi.max());
            if s_min < 0.0 {
                bound = bound.max((s_min / lambda).powf(1.0 / (p - 2.0)));
            }
            let cst = MARGIN * bound;
            constants.delta_lower = Some(delta);
            constants.lambda = Some(lambda);
            constants.upper_constant = Some(cst);
            let upper = ScalarField::constant(metric.grid(), cst)?;
            SubSuperPair::verified(metric, lower, upper, Target::Constant(lambda), phi.clone(), constants, Recipe::NegativeEigenvalueConstant)
        }
        Sign::Positive => {
            let c = linear_shift(metric);
            let u3 = positive_linear_solve(metric, c, phi)?;
            let delta = MARGIN * (u3.max() / phi1.min()).max(phi.max() / boundary_min(phi1));
            let upper = phi1.scale(delta)?;
            let lambda = eta * upper.min() / upper.max().powf(p - 1.0);
            constants.linear_shift = Some(c);
            constants.delta_upper = Some(delta);
            constants.lambda = Some(lambda);
            SubSuperPair::verified(metric, u3, upper, Target::Constant(lambda), phi.clone(), constants, Recipe::PositiveEigenvalueConstant)
        }
    }
}

fn positive_curvature_constant(
    metric: &ConformalMetric,
    phi: &BoundaryField,
    classification: &Classification,
) -> Result<SubSuperPair> {
    let s = metric.scalar_curvature();
    if !(s.min() > 0.0) {
        return Err(Error::NoRecipe {
            hypothesis: format!(
                "the positive-curvature construction needs background scalar curvature positive everywhere; min S_g = {}",
                s.min()
            ),
        });
    }
    let p = metric.constants().p;
    let c = linear_shift(metric);
    let u4 = positive_linear_solve(metric, c, phi)?;
    let c_prime = phi.max().max(u4.max());
    let upper = classification.dirichlet.eigenvector.map(|v| v + c_prime)?;
    let lambda = c_prime * s.min() / upper.max().powf(p - 1.0) / MARGIN;
    let constants = Constants {
        linear_shift: Some(c),
        c_prime: Some(c_prime),
        lambda: Some(lambda),
        ..Constants::default()
    };
    SubSuperPair::verified(metric, u4, upper, Target::Constant(lambda), phi.clone(), constants, Recipe::PositiveCurvatureConstant)
}

/// A prescribed-curvature problem reduced to one monotone iteration.
#[derive(Debug, Clone)]
pub struct PrescribedCase {
    pub pair: SubSuperPair,
    /// Metric in which the iteration runs (the input metric, or its conformal image
    /// with zero scalar curvature for the mixed-sign recipe).
    pub working_metric: ConformalMetric,
    /// Conformal factor of the working metric relative to the input metric.
    pub background: Option<ScalarField>,
    pub background_trace: Option<IterationTrace>,
    /// Factor applied after composing with the background.
    pub final_scale: f64,
    /// Boundary data of the final solution (`c * phi`).
    pub final_boundary: BoundaryField,
}

impl PrescribedCase {
    /// Maps the iteration output back to a solution for the input metric.
    pub fn compose(&self, w: &ScalarField) -> Result<ScalarField> {
        let u = match &self.background {
            Some(v) => w.zip_map(v, |a, b| a * b)?,
            None => w.clone(),
        };
        u.scale(self.final_scale)
    }

    /// Residual tolerance for the composed solution in the input metric: the defect
    /// of `c v w` equals `c v^{p-1}` times the defect of `w` in the working metric.
    pub fn input_residual_tolerance(&self, working_tolerance: f64) -> f64 {
        let p = self.working_metric.constants().p;
        match &self.background {
            Some(v) => working_tolerance * self.final_scale * v.max().powf(p - 1.0),
            None => working_tolerance,
        }
    }
}

/// `delta * u` with `u` from the linear solve, scaled under `upper` and under the
/// negative part of the target.
struct ScaledLinear {
    lower: ScalarField,
    c: f64,
    delta: f64,
}

fn scaled_linear_sub(
    metric: &ConformalMetric,
    phi: &BoundaryField,
    target: &ScalarField,
    upper_min: f64,
) -> Result<ScaledLinear> {
    let p = metric.constants().p;
    let c = linear_shift(metric);
    let u = positive_linear_solve(metric, c, phi)?;
    let mut bound = 1.0f64.min(upper_min / u.max());
    let negative = (-target.min()).max(0.0);
    if negative > 0.0 {
        let room = c - metric.scalar_curvature().max();
        bound = bound.min((room / (negative * u.max().powf(p - 2.0))).powf(1.0 / (p - 2.0)));
    }
    let delta = bound / MARGIN;
    Ok(ScaledLinear {
        lower: u.scale(delta)?,
        c,
        delta,
    })
}

/// Largest `d` such that every node within `d` layers of the boundary has `S < 0`.
fn negative_collar_depth(s: &ScalarField) -> Option<usize> {
    let grid = s.grid();
    let nz = grid.shape()[grid.normal_axis()];
    let mut depth = None;
    for d in 0..=(nz - 1) / 2 {
        let ok = (0..grid.node_count())
            .filter(|&k| {
                let i = grid.normal_index(k);
                i.min(nz - 1 - i) == d
            })
            .all(|k| s.get(k) < 0.0);
        if !ok {
            break;
        }
        depth = Some(d);
    }
    depth
}

/// Collar width on which `S < 0`: checks a given width or detects the widest one.
pub fn collar_width(s: &ScalarField, gamma: Option<f64>) -> Result<f64> {
    let grid = s.grid();
    let h = grid.spacing()[grid.normal_axis()];
    match gamma {
        Some(g) => {
            if !(g > 0.0) {
                return Err(Error::InvalidArgument(format!("collar width must be positive, found {g}")));
            }
            let dist = crate::geometry::boundary_distance(grid)?;
            if let Some(k) = (0..grid.node_count()).find(|&k| dist.get(k) <= g && s.get(k) >= 0.0) {
                return Err(Error::NoRecipe {
                    hypothesis: format!(
                        "a zero first Robin eigenvalue with sign-changing curvature needs S < 0 on the closed collar of width {g}; S = {} at distance {}",
                        s.get(k),
                        dist.get(k)
                    ),
                });
            }
            Ok(g)
        }
        None => match negative_collar_depth(s) {
            Some(d) => Ok((d as f64 + 0.5) * h),
            None => Err(Error::NoRecipe {
                hypothesis: format!(
                    "a zero first Robin eigenvalue needs S identically zero, negative everywhere, or negative on a collar of the boundary; S is nonnegative at a boundary node (max of S on the boundary = {})",
                    boundary_max(s)
                ),
            }),
        },
    }
}

/// Pair for a prescribed curvature field, dispatched on the sign of the first Robin
/// eigenvalue and the sign pattern of `s`.
pub fn build_prescribed_case(
    metric: &ConformalMetric,
    phi: &BoundaryField,
    s: &ScalarField,
    gamma: Option<f64>,
    classification: &Classification,
    options: &SolverOptions,
) -> Result<PrescribedCase> {
    phi.ensure_grid(metric.grid())?;
    phi.ensure_positive("boundary data")?;
    s.ensure_grid(metric.grid())?;
    let direct = |pair: SubSuperPair, c: f64| -> Result<PrescribedCase> {
        Ok(PrescribedCase {
            final_boundary: pair.boundary.clone(),
            pair,
            working_metric: metric.clone(),
            background: None,
            background_trace: None,
            final_scale: 1.0,
        })
        .map(|mut case| {
            case.pair.constants.rescale = Some(c);
            case
        })
    };
    match classification.report.sign_robin {
        Sign::Negative => {
            if s.max() < 0.0 {
                direct(negative_target_negative_eigenvalue(metric, phi, s, classification)?, 1.0)
            } else {
                Err(Error::NoRecipe {
                    hypothesis: format!(
                        "a negative first Robin eigenvalue needs the prescribed curvature negative everywhere; max S = {}",
                        s.max()
                    ),
                })
            }
        }
        Sign::Zero => {
            if s.max_abs() == 0.0 {
                let pair = build_constant_case(metric, phi, classification, ConstantRecipeChoice::Auto)?;
                direct(pair, 1.0)
            } else if s.max() < 0.0 {
                direct(negative_target_zero_eigenvalue(metric, phi, s, classification)?, 1.0)
            } else {
                let width = collar_width(s, gamma)?;
                pipeline::prepare(metric, phi, s, width, classification, options)
            }
        }
        Sign::Positive => positive_eigenvalue_case(metric, phi, s, classification).and_then(|pair| {
            let c = pair.constants.rescale.unwrap_or(1.0);
            direct(pair, c)
        }),
    }
}

fn negative_target_negative_eigenvalue(
    metric: &ConformalMetric,
    phi: &BoundaryField,
    s: &ScalarField,
    classification: &Classification,
) -> Result<SubSuperPair> {
    let p = metric.constants().p;
    let eta = classification.report.eta_robin;
    let phi1 = &classification.robin.eigenvector;
    let weighted_min = (0..s.grid().node_count())
        .map(|k| s.get(k) * phi1.get(k).powf(p - 1.0))
        .fold(f64::INFINITY, f64::min);
    let by_equation = (eta * phi1.min() / weighted_min).powf(1.0 / (p - 2.0));
    let by_boundary = phi.min() / boundary_max(phi1);
    let delta = by_equation.min(by_boundary) / MARGIN;
    let lower = phi1.scale(delta)?;
    let s_g_min = metric.scalar_curvature().min();
    let mut bound = phi.max().max(lower.max());
    if s_g_min < 0.0 {
        bound = bound.max((s_g_min / s.max()).powf(1.0 / (p - 2.0)));
    }
    let cst = MARGIN * bound;
    let constants = Constants {
        delta_lower: Some(delta),
        upper_constant: Some(cst),
        ..Constants::default()
    };
    let upper = ScalarField::constant(metric.grid(), cst)?;
    SubSuperPair::verified(metric, lower, upper, Target::Field(s.clone()), phi.clone(), constants, Recipe::NegativeTargetNegativeEigenvalue)
}

fn negative_target_zero_eigenvalue(
    metric: &ConformalMetric,
    phi: &BoundaryField,
    s: &ScalarField,
    classification: &Classification,
) -> Result<SubSuperPair> {
    let phi1 = &classification.robin.eigenvector;
    let delta_upper = MARGIN * phi.max() / boundary_min(phi1);
    let upper = phi1.scale(delta_upper)?;
    let sub = scaled_linear_sub(metric, phi, s, upper.min())?;
    let constants = Constants {
        delta_upper: Some(delta_upper),
        delta_lower: Some(sub.delta),
        linear_shift: Some(sub.c),
        ..Constants::default()
    };
    SubSuperPair::verified(metric, sub.lower, upper, Target::Field(s.clone()), phi.clone(), constants, Recipe::NegativeTargetZeroEigenvalue)
}

fn positive_eigenvalue_case(
    metric: &ConformalMetric,
    phi: &BoundaryField,
    s: &ScalarField,
    classification: &Classification,
) -> Result<SubSuperPair> {
    let p = metric.constants().p;
    let eta = classification.report.eta_robin;
    let phi1 = &classification.robin.eigenvector;
    let (recipe, delta_upper, c) = if s.max() <= 0.0 {
        let delta = MARGIN * phi.max() / boundary_min(phi1);
        (Recipe::NonpositiveTargetPositiveEigenvalue, delta, 1.0)
    } else {
        let recipe = if s.min() > 0.0 {
            Recipe::PositiveTargetPositiveEigenvalue
        } else {
            Recipe::MixedSignPositiveEigenvalue
        };
        let delta = (eta * phi1.min() / (s.max() * phi1.max().powf(p - 1.0))).powf(1.0 / (p - 2.0)) / MARGIN;
        let c = (delta * boundary_min(phi1) / phi.max() / MARGIN).min(1.0);
        (recipe, delta, c)
    };
    let upper = phi1.scale(delta_upper)?;
    let boundary = phi.scale(c)?;
    let sub = scaled_linear_sub(metric, &boundary, s, upper.min())?;
    let constants = Constants {
        delta_upper: Some(delta_upper),
        delta_lower: Some(sub.delta),
        linear_shift: Some(sub.c),
        rescale: Some(c),
        ..Constants::default()
    };
    SubSuperPair::verified(metric, sub.lower, upper, Target::Field(s.clone()), boundary, constants, recipe)
}

/// Runs the monotone iteration for a prescribed case and maps the result back.
pub fn solve_prescribed(case: &PrescribedCase, options: &SolverOptions) -> Result<(ScalarField, IterationTrace)> {
    let settings = IterationSettings::for_pair(&case.working_metric, &case.pair, options)?;
    let (w, trace) = iterate(
        &case.working_metric,
        &case.pair.target,
        &case.pair.boundary,
        &case.pair,
        &settings,
    )?;
    Ok((case.compose(&w)?, trace))
}
