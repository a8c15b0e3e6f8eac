//! Checks on produced solutions: curvature round trip, boundary data, the boundary
//! exponent map, manufactured solutions and the closed-manifold pairing identity.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryField, ChartGrid, ConformalMetric, DimensionConstants, ScalarField};
use crate::iteration::{semilinear_defect, Target};
use crate::operator::conformal_laplacian;

/// Scalar curvature of `u^{p-2} g`: `u^{1-p}(-a Delta_g u + S_g u)` at interior nodes,
/// the extrapolated boundary value on boundary nodes.
pub fn scalar_curvature_of_conformal_solution(metric: &ConformalMetric, u: &ScalarField) -> Result<ScalarField> {
    u.ensure_grid(metric.grid())?;
    u.ensure_positive("conformal factor")?;
    let grid = metric.grid();
    let p = metric.constants().p;
    let lu = conformal_laplacian(metric, u)?;
    let mut values = if grid.has_boundary() {
        metric.conformal_change(u)?.scalar_curvature().values().to_vec()
    } else {
        vec![0.0; grid.node_count()]
    };
    for k in grid.interior_nodes() {
        values[k] = u.get(k).powf(1.0 - p) * lu[k];
    }
    ScalarField::new(grid.clone(), values)
}

/// Deviation of the deformed curvature from its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub target_description: String,
    pub max_abs_deviation: f64,
    /// Volume-weighted 2-norm over interior nodes.
    pub weighted_l2_deviation: f64,
    pub boundary_data_max_error: f64,
    /// `min u`.
    pub positivity_margin: f64,
    /// `10 tol_residual / min(u)^{p-1}`.
    pub threshold: f64,
    pub passed: bool,
}

/// Compares the curvature of `u^{p-2} g` with `target` over interior nodes.
pub fn curvature_report(
    metric: &ConformalMetric,
    u: &ScalarField,
    target: &Target,
    phi: &BoundaryField,
    tol_residual: f64,
) -> Result<CurvatureReport> {
    phi.ensure_grid(metric.grid())?;
    let grid = metric.grid();
    let p = metric.constants().p;
    let s = scalar_curvature_of_conformal_solution(metric, u)?;
    let vol = metric.volume_weight();
    let mut sup: f64 = 0.0;
    let mut l2 = 0.0;
    for k in grid.interior_nodes() {
        let dev = s.get(k) - target.at(k);
        sup = sup.max(dev.abs());
        l2 += vol[k] * dev * dev;
    }
    let boundary_error = (0..grid.boundary_count())
        .map(|slot| (u.get(grid.boundary_node(slot)) - phi.get(slot)).abs())
        .fold(0.0, f64::max);
    let margin = u.min();
    let threshold = 10.0 * tol_residual / margin.powf(p - 1.0);
    let passed = margin > 0.0 && sup <= threshold && boundary_error <= 1e-12 * (1.0 + phi.max().abs());
    Ok(CurvatureReport {
        target_description: target.describe(),
        max_abs_deviation: sup,
        weighted_l2_deviation: l2.sqrt(),
        boundary_data_max_error: boundary_error,
        positivity_margin: margin,
        threshold,
        passed,
    })
}

/// Boundary metric data fed to the exponent map.
#[derive(Debug, Clone)]
pub enum BoundaryFactorInput {
    /// `psi` with boundary metric `psi^{p'} h` (dimensions four and up).
    Factor(BoundaryField),
    /// `f` with boundary metric `e^{2f} h` (dimension three).
    LogFactor(BoundaryField),
}

/// Dirichlet data `phi` whose power `phi^{p-2}` equals the given boundary factor.
pub fn boundary_factor_exponent(n: usize, input: &BoundaryFactorInput) -> Result<BoundaryField> {
    let c = DimensionConstants::new(n)?;
    match input {
        BoundaryFactorInput::Factor(psi) => {
            let Some(p_prime) = c.p_prime_boundary else {
                return Err(Error::UnsupportedBoundaryData(
                    "a power-type boundary factor needs n >= 4; use a log factor in dimension three".into(),
                ));
            };
            check_dim(psi, n)?;
            psi.ensure_positive("boundary factor")?;
            psi.map(|v| v.powf(p_prime / (c.p - 2.0)))
        }
        BoundaryFactorInput::LogFactor(f) => {
            if n != 3 {
                return Err(Error::UnsupportedBoundaryData(format!(
                    "a log boundary factor is only defined for n = 3, found n = {n}"
                )));
            }
            check_dim(f, n)?;
            f.map(|v| (2.0 * v / (c.p - 2.0)).exp())
        }
    }
}

fn check_dim(field: &BoundaryField, n: usize) -> Result<()> {
    if field.grid().dim() != n {
        return Err(Error::InvalidArgument(format!(
            "boundary field lives on a {}-dimensional grid, expected {n}",
            field.grid().dim()
        )));
    }
    Ok(())
}

/// Smooth exact solution, its curvature and its boundary data on a flat slab.
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub exact: ScalarField,
    pub target: ScalarField,
    pub boundary: BoundaryField,
}

/// `u* = 1 + amp prod_i sin(2 pi x_i / L_i) * 4 z (L - z) / L^2` over the lateral axes,
/// with `S = u*^{1-p} (-a Delta u*)` from the exact Laplacian.
pub fn manufactured_solution_case(grid: &Arc<ChartGrid>, amplitude: f64) -> Result<ManufacturedCase> {
    if !grid.has_boundary() {
        return Err(Error::NoBoundary);
    }
    if !amplitude.is_finite() {
        return Err(Error::NonFinite { what: "amplitude", index: 0 });
    }
    let c = grid.constants();
    let normal = grid.normal_axis();
    let lengths = grid.lengths().to_vec();
    let lz = lengths[normal];
    let profile = move |x: &[f64]| -> (f64, f64) {
        let mut prod = 1.0;
        let mut freq2 = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if i != normal {
                let k = 2.0 * PI / lengths[i];
                prod *= (k * xi).sin();
                freq2 += k * k;
            }
        }
        let z = x[normal];
        let bump = 4.0 * z * (lz - z) / (lz * lz);
        let value = amplitude * prod * bump;
        let laplacian = amplitude * prod * (-freq2 * bump - 8.0 / (lz * lz));
        (value, laplacian)
    };
    let exact = ScalarField::from_fn(grid, |x| 1.0 + profile(x).0)?;
    if let Some(node) = exact.values().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::PositivityViolation {
            node,
            value: exact.get(node),
        });
    }
    let target = ScalarField::from_fn(grid, |x| {
        let (v, lap) = profile(x);
        (1.0 + v).powf(1.0 - c.p) * (-c.a * lap)
    })?;
    Ok(ManufacturedCase {
        exact,
        target,
        boundary: BoundaryField::constant(grid, 1.0)?,
    })
}

/// Both sides of `a sum |grad u|^2 + sum S_g u^2 = sum S u^p` on a closed grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstructionReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / |lhs|`.
    pub relative_defect: f64,
    /// Maximum of the curvature `S` of `u^{p-2} g`.
    pub max_curvature: f64,
    pub passed: bool,
}

/// Pairs the curvature of `u^{p-2} g` with `u^p` on a fully periodic grid.
pub fn closed_torus_obstruction_check(metric: &ConformalMetric, u: &ScalarField) -> Result<ObstructionReport> {
    let grid = metric.grid();
    if grid.has_boundary() {
        return Err(Error::RequiresClosedManifold);
    }
    u.ensure_grid(grid)?;
    u.ensure_positive("conformal factor")?;
    let c = grid.constants();
    let psi = metric.factor().values();
    let vol = metric.volume_weight();
    let sg = metric.scalar_curvature();
    let cell: f64 = grid.spacing().iter().product();
    let mut gradient = 0.0;
    for k in 0..grid.node_count() {
        for axis in 0..grid.dim() {
            let h = grid.spacing()[axis];
            if let Some(j) = grid.neighbor(k, axis, true) {
                let du = u.get(k) - u.get(j);
                gradient += cell * psi[k] * psi[j] * du * du / (h * h);
            }
        }
    }
    let zeroth: f64 = (0..grid.node_count()).map(|k| vol[k] * sg.get(k) * u.get(k) * u.get(k)).sum();
    let lhs = c.a * gradient + zeroth;
    let s = scalar_curvature_of_conformal_solution(metric, u)?;
    let rhs: f64 = (0..grid.node_count()).map(|k| vol[k] * s.get(k) * u.get(k).powf(c.p)).sum();
    let relative_defect = (lhs - rhs).abs() / lhs.abs();
    Ok(ObstructionReport {
        lhs,
        rhs,
        relative_defect,
        max_curvature: s.max(),
        passed: relative_defect <= 1e-10 && s.max() > 0.0,
    })
}

/// Maximum interior defect of `u` for the semilinear equation, divided by `min(u)^{p-1}`.
pub fn curvature_defect_bound(metric: &ConformalMetric, u: &ScalarField, target: &Target) -> Result<f64> {
    let p = metric.constants().p;
    let f = semilinear_defect(metric, u, target)?;
    let sup = metric.grid().interior_nodes().map(|k| f[k].abs()).fold(0.0, f64::max);
    Ok(sup / u.min().powf(p - 1.0))
}
