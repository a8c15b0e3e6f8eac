//! First eigenvalues of the conformal Laplacian and sign classification of the
//! conformal class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ChartGrid, ConformalMetric, ScalarField};
use crate::linalg::smallest_eigenpair;
pub use crate::operator::{assemble_conformal_laplacian, AssembledOperator, BoundaryCondition};

/// Residual tolerance of the eigensolver, relative to the scaled operator norm.
pub const EIGEN_TOL: f64 = 1e-11;

/// First eigenpair under a boundary condition.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub bc: BoundaryCondition,
    pub eigenvalue: f64,
    /// M-normalized, positive on the unknowns; zero on eliminated boundary nodes.
    pub eigenvector: ScalarField,
    pub residual_norm: f64,
    pub iterations: usize,
}

fn first_eigenpair(metric: &ConformalMetric, bc: BoundaryCondition) -> Result<EigenResult> {
    let op = assemble_conformal_laplacian(metric, bc)?;
    let pair = smallest_eigenpair(&op.stiffness, &op.mass, EIGEN_TOL)?;
    let mut values = vec![0.0; metric.grid().node_count()];
    for (i, &k) in op.nodes.iter().enumerate() {
        let v = pair.vector[i];
        if !(v > 0.0) {
            return Err(Error::PositivityViolation { node: k, value: v });
        }
        values[k] = v;
    }
    Ok(EigenResult {
        bc,
        eigenvalue: pair.value,
        eigenvector: ScalarField::new(metric.grid().clone(), values)?,
        residual_norm: pair.residual_norm,
        iterations: pair.iterations,
    })
}

/// First Dirichlet eigenvalue with its interior-positive eigenfunction.
pub fn first_eigenvalue_dirichlet(metric: &ConformalMetric) -> Result<EigenResult> {
    first_eigenpair(metric, BoundaryCondition::Dirichlet)
}

/// First Robin eigenvalue with its everywhere-positive eigenfunction.
pub fn first_eigenvalue_robin(metric: &ConformalMetric) -> Result<EigenResult> {
    first_eigenpair(metric, BoundaryCondition::Robin)
}

/// Sign of an eigenvalue relative to a zero band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(value: f64, eps: f64) -> Sign {
        if value.abs() < eps {
            Sign::Zero
        } else if value < 0.0 {
            Sign::Negative
        } else {
            Sign::Positive
        }
    }
}

/// Default zero band `1e-6 a / h_min^2`.
pub fn default_epsilon_sign(grid: &ChartGrid) -> f64 {
    let h = grid.min_spacing();
    1e-6 * grid.constants().a / (h * h)
}

/// Ordering relations between the Robin and Dirichlet eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingChecks {
    /// Dirichlet sign nonpositive implies `eta_robin <= eta_dirichlet + eps`.
    pub dirichlet_nonpositive_implication: bool,
    /// Robin sign nonnegative implies `eta_dirichlet >= eta_robin - eps`.
    pub robin_nonnegative_implication: bool,
    pub not_both_zero: bool,
    /// `eta_dirichlet > eta_robin - eps`.
    pub strict_gap: bool,
    /// `eta_dirichlet - eta_robin`.
    pub gap: f64,
}

impl OrderingChecks {
    pub fn all_pass(&self) -> bool {
        self.dirichlet_nonpositive_implication
            && self.robin_nonnegative_implication
            && self.not_both_zero
            && self.strict_gap
    }
}

/// Classification of a conformal class by the signs of its first eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub eta_robin: f64,
    pub eta_dirichlet: f64,
    pub sign_robin: Sign,
    pub sign_dirichlet: Sign,
    pub ordering: OrderingChecks,
    pub epsilon_sign: f64,
}

impl SignReport {
    pub fn from_eigenvalues(eta_robin: f64, eta_dirichlet: f64, eps: f64) -> Self {
        let sign_robin = Sign::of(eta_robin, eps);
        let sign_dirichlet = Sign::of(eta_dirichlet, eps);
        let ordering = OrderingChecks {
            dirichlet_nonpositive_implication: sign_dirichlet == Sign::Positive
                || eta_robin <= eta_dirichlet + eps,
            robin_nonnegative_implication: sign_robin == Sign::Negative
                || eta_dirichlet >= eta_robin - eps,
            not_both_zero: !(sign_robin == Sign::Zero && sign_dirichlet == Sign::Zero),
            strict_gap: eta_dirichlet > eta_robin - eps,
            gap: eta_dirichlet - eta_robin,
        };
        Self {
            eta_robin,
            eta_dirichlet,
            sign_robin,
            sign_dirichlet,
            ordering,
            epsilon_sign: eps,
        }
    }
}

/// Sign report together with both eigenpairs.
#[derive(Debug, Clone)]
pub struct Classification {
    pub report: SignReport,
    pub robin: EigenResult,
    pub dirichlet: EigenResult,
}

/// Computes both first eigenvalues and evaluates the ordering checks.
pub fn classify(metric: &ConformalMetric, eps: f64) -> Result<Classification> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("zero band must be positive, found {eps}")));
    }
    let robin = first_eigenvalue_robin(metric)?;
    let dirichlet = first_eigenvalue_dirichlet(metric)?;
    Ok(Classification {
        report: SignReport::from_eigenvalues(robin.eigenvalue, dirichlet.eigenvalue, eps),
        robin,
        dirichlet,
    })
}

/// Agreement of a sign before and after a conformal change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvarianceOutcome {
    Consistent,
    /// Exactly one side falls in the zero band.
    Indeterminate,
    Violated,
}

impl InvarianceOutcome {
    pub fn compare(before: Sign, after: Sign) -> Self {
        if before == after {
            InvarianceOutcome::Consistent
        } else if before == Sign::Zero || after == Sign::Zero {
            InvarianceOutcome::Indeterminate
        } else {
            InvarianceOutcome::Violated
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub base: SignReport,
    pub transformed: SignReport,
    pub robin: InvarianceOutcome,
    pub dirichlet: InvarianceOutcome,
}

impl InvarianceReport {
    pub fn violated(&self) -> bool {
        self.robin == InvarianceOutcome::Violated || self.dirichlet == InvarianceOutcome::Violated
    }
}

/// Classifies `g` and `u^{p-2} g` and compares the signs.
pub fn conformal_sign_invariance(metric: &ConformalMetric, u: &ScalarField, eps: f64) -> Result<InvarianceReport> {
    u.ensure_grid(metric.grid())?;
    u.ensure_positive("conformal factor")?;
    let base = classify(metric, eps)?.report;
    let transformed = classify(&metric.conformal_change(u)?, eps)?.report;
    Ok(InvarianceReport {
        base,
        transformed,
        robin: InvarianceOutcome::compare(base.sign_robin, transformed.sign_robin),
        dirichlet: InvarianceOutcome::compare(base.sign_dirichlet, transformed.sign_dirichlet),
    })
}
