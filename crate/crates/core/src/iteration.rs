//! Monotone iteration for `-a Delta_g u + S_g u = target * u^{p-1}` with Dirichlet
//! data, started from a super-solution.
//!
//! Each step solves `(-a Delta_g + A) d = -F(u_k)` with `d = phi - u_k` on the
//! boundary and sets `u_{k+1} = u_k + d`. This is the classical update
//! `(-a Delta_g + A) u_{k+1} = A u_k - S_g u_k + target u_k^{p-1}` written in
//! correction form, so the linear solve only has to resolve the defect.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryField, ConformalMetric, ScalarField};
use crate::operator::{conformal_laplacian, operator_scale, DirichletSolver, DIRICHLET_CG_TOL};
use crate::subsuper::{choose_shift_a, SubSuperPair};

pub use crate::subsuper::Target;

/// Nodewise defect `-a Delta_g u + S_g u - target u^{p-1}`; zero on boundary nodes.
pub fn semilinear_defect(metric: &ConformalMetric, u: &ScalarField, target: &Target) -> Result<Vec<f64>> {
    target.ensure_grid(metric)?;
    let grid = metric.grid();
    let p = metric.constants().p;
    let mut f = conformal_laplacian(metric, u)?;
    for k in grid.interior_nodes() {
        f[k] -= target.at(k) * u.get(k).max(0.0).powf(p - 1.0);
    }
    Ok(f)
}

/// Size of the equation at amplitude `umax`: the operator scale times the amplitude
/// plus the size of the nonlinear term.
pub fn equation_scale(metric: &ConformalMetric, target: &Target, umax: f64) -> f64 {
    let p = metric.constants().p;
    let m = umax.abs().max(1.0);
    operator_scale(metric) * m + target.max_abs() * m.powf(p - 1.0)
}

/// Defect norms of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub interior_sup: f64,
    /// Volume-weighted 2-norm over interior nodes.
    pub interior_l2: f64,
    /// `max |u - phi|` on the boundary.
    pub boundary_sup: f64,
}

/// Interior and boundary defect of `u`.
pub fn residual(metric: &ConformalMetric, u: &ScalarField, target: &Target, phi: &BoundaryField) -> Result<Residual> {
    phi.ensure_grid(metric.grid())?;
    let grid = metric.grid();
    let f = semilinear_defect(metric, u, target)?;
    let vol = metric.volume_weight();
    let mut sup: f64 = 0.0;
    let mut l2 = 0.0;
    for k in grid.interior_nodes() {
        sup = sup.max(f[k].abs());
        l2 += vol[k] * f[k] * f[k];
    }
    let boundary_sup = (0..grid.boundary_count())
        .map(|s| (u.get(grid.boundary_node(s)) - phi.get(s)).abs())
        .fold(0.0, f64::max);
    Ok(Residual {
        interior_sup: sup,
        interior_l2: l2.sqrt(),
        boundary_sup,
    })
}

/// User-facing solver knobs; unset tolerances take their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_steps: usize,
    /// Absolute interior residual tolerance; defaults to `1e-9` times the equation scale.
    pub tol_residual: Option<f64>,
    pub cg_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_steps: 500,
            tol_residual: None,
            cg_tol: DIRICHLET_CG_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationSettings {
    /// Shift `A`.
    pub shift: f64,
    pub tol_sup: f64,
    pub tol_residual: f64,
    pub max_steps: usize,
    pub enforce_monotone: bool,
    pub tol_mono: f64,
    pub cg_tol: f64,
}

impl IterationSettings {
    /// Default settings for a verified pair; the shift is recomputed over the pair's range.
    pub fn for_pair(metric: &ConformalMetric, pair: &SubSuperPair, options: &SolverOptions) -> Result<Self> {
        let top = 1.0 + pair.upper.max();
        let settings = Self {
            shift: choose_shift_a(metric, &pair.target, pair.lower.min(), pair.upper.max())?,
            tol_sup: 1e-10 * top,
            tol_residual: options
                .tol_residual
                .unwrap_or_else(|| 1e-9 * equation_scale(metric, &pair.target, pair.upper.max())),
            max_steps: options.max_steps,
            enforce_monotone: true,
            tol_mono: 1e-12 * top,
            cg_tol: options.cg_tol,
        };
        settings.validate()?;
        Ok(settings)
    }

    /// Settings for runs without a pair; monotonicity is not enforced.
    pub fn unconstrained(metric: &ConformalMetric, target: &Target, shift: f64, umax: f64, options: &SolverOptions) -> Result<Self> {
        let top = 1.0 + umax.abs();
        let settings = Self {
            shift,
            tol_sup: 1e-10 * top,
            tol_residual: options
                .tol_residual
                .unwrap_or_else(|| 1e-9 * equation_scale(metric, target, umax)),
            max_steps: options.max_steps,
            enforce_monotone: false,
            tol_mono: 1e-12 * top,
            cg_tol: options.cg_tol,
        };
        settings.validate()?;
        Ok(settings)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("shift", self.shift),
            ("tol_sup", self.tol_sup),
            ("tol_residual", self.tol_residual),
            ("tol_mono", self.tol_mono),
            ("cg_tol", self.cg_tol),
        ] {
            let ok = if name == "shift" { v >= 0.0 && v.is_finite() } else { v > 0.0 && v.is_finite() };
            if !ok {
                return Err(Error::InvalidArgument(format!("{name} out of range: {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// `||u_k - u_{k-1}||_inf`.
    pub sup_diff: f64,
    /// Interior residual of `u_k`.
    pub residual_sup: f64,
    pub residual_l2: f64,
    /// `max (u_k - u_{k-1})`; nonpositive along a monotone chain.
    pub max_monotone_violation: f64,
    /// Largest excursion of `u_k` outside `[lower, upper]`.
    pub max_bound_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub steps: Vec<StepRecord>,
    pub total_steps: usize,
    pub converged: bool,
    pub settings: IterationSettings,
    pub final_residual: Residual,
}

impl IterationTrace {
    pub fn max_monotone_violation(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.max_monotone_violation)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Monotone iteration from the pair's super-solution.
pub fn iterate(
    metric: &ConformalMetric,
    target: &Target,
    phi: &BoundaryField,
    pair: &SubSuperPair,
    settings: &IterationSettings,
) -> Result<(ScalarField, IterationTrace)> {
    if !pair.verified {
        return Err(Error::InvalidArgument("pair has not been verified".into()));
    }
    let required = choose_shift_a(metric, target, pair.lower.min(), pair.upper.max())?;
    if settings.shift < required {
        return Err(Error::ShiftCondition {
            node: 0,
            value: settings.shift - required,
        });
    }
    run(metric, target, phi, pair.upper.clone(), Some((&pair.lower, &pair.upper)), settings)
}

/// Iteration from an arbitrary positive start without bracketing checks.
pub fn iterate_from(
    metric: &ConformalMetric,
    target: &Target,
    phi: &BoundaryField,
    start: ScalarField,
    settings: &IterationSettings,
) -> Result<(ScalarField, IterationTrace)> {
    start.ensure_grid(metric.grid())?;
    start.ensure_positive("starting iterate")?;
    run(metric, target, phi, start, None, settings)
}

fn run(
    metric: &ConformalMetric,
    target: &Target,
    phi: &BoundaryField,
    start: ScalarField,
    bounds: Option<(&ScalarField, &ScalarField)>,
    settings: &IterationSettings,
) -> Result<(ScalarField, IterationTrace)> {
    settings.validate()?;
    let grid = metric.grid();
    phi.ensure_grid(grid)?;
    target.ensure_grid(metric)?;
    let solver = DirichletSolver::new(metric, settings.shift)?;
    let mut u = start.into_values();
    let mut steps = Vec::new();
    for step in 1..=settings.max_steps {
        let current = ScalarField::new(grid.clone(), u.clone())?;
        let f = semilinear_defect(metric, &current, target)?;
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let correction_boundary = BoundaryField::new(
            grid.clone(),
            (0..grid.boundary_count())
                .map(|s| phi.get(s) - u[grid.boundary_node(s)])
                .collect(),
        )?;
        let d = solver.solve(grid, &rhs, &correction_boundary, settings.cg_tol)?;
        let mut sup_diff: f64 = 0.0;
        let mut increase = f64::NEG_INFINITY;
        let mut increase_node = 0;
        for k in 0..u.len() {
            sup_diff = sup_diff.max(d[k].abs());
            if d[k] > increase {
                increase = d[k];
                increase_node = k;
            }
            u[k] += d[k];
        }
        for slot in 0..grid.boundary_count() {
            u[grid.boundary_node(slot)] = phi.get(slot);
        }
        if let Some(node) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "iterate", index: node });
        }
        let mut bound_violation = f64::NEG_INFINITY;
        if let Some((lower, upper)) = bounds {
            for k in 0..u.len() {
                let excess = (lower.get(k) - u[k]).max(u[k] - upper.get(k));
                bound_violation = bound_violation.max(excess);
                if settings.enforce_monotone && excess > settings.tol_mono {
                    return Err(Error::LeftRange {
                        step,
                        node: k,
                        value: u[k],
                        lower: lower.get(k),
                        upper: upper.get(k),
                    });
                }
            }
        }
        if settings.enforce_monotone && increase > settings.tol_mono {
            return Err(Error::MonotonicityViolated {
                step,
                node: increase_node,
                increase,
                tolerance: settings.tol_mono,
            });
        }
        let field = ScalarField::new(grid.clone(), u.clone())?;
        let res = residual(metric, &field, target, phi)?;
        steps.push(StepRecord {
            step,
            sup_diff,
            residual_sup: res.interior_sup,
            residual_l2: res.interior_l2,
            max_monotone_violation: increase,
            max_bound_violation: bound_violation,
        });
        if sup_diff <= settings.tol_sup && res.interior_sup <= settings.tol_residual {
            if let Some(node) = u.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::PositivityViolation { node, value: u[node] });
            }
            let trace = IterationTrace {
                total_steps: step,
                steps,
                converged: true,
                settings: *settings,
                final_residual: res,
            };
            return Ok((field, trace));
        }
    }
    let last = steps.last().copied();
    Err(Error::IterationNotConverged {
        steps: settings.max_steps,
        sup_diff: last.map_or(f64::NAN, |s| s.sup_diff),
        residual: last.map_or(f64::NAN, |s| s.residual_sup),
    })
}
