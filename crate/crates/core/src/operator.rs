//! Discrete conformal Laplacian: nodewise application, weak-form assembly and
//! shifted Dirichlet solves with a lifted boundary datum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{weighted_flux, BoundaryField, ChartGrid, ConformalMetric, ScalarField};
use crate::linalg::{cg_solve_with, SparseOperator};

/// Boundary condition attached to the conformal Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Homogeneous Dirichlet: boundary unknowns are eliminated.
    Dirichlet,
    /// Natural condition `d_nu u + (2/(p-2)) h_g u = 0`.
    Robin,
}

/// Stiffness and diagonal mass of the conformal Laplacian over the retained unknowns.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub bc: BoundaryCondition,
    pub stiffness: SparseOperator,
    pub mass: Vec<f64>,
    /// Grid node of each unknown.
    pub nodes: Vec<usize>,
}

/// Diagonal term added to the Laplacian part of the stiffness.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Zeroth {
    Curvature,
    Shift(f64),
}

/// Rows over all grid nodes: `a sum_e w_e (u_k - u_j) + mass_k c_k u_k`, plus the
/// Robin surface term when requested.
pub(crate) fn full_rows(metric: &ConformalMetric, zeroth: Zeroth, robin: bool) -> Result<Vec<Vec<(usize, f64)>>> {
    let grid = metric.grid();
    let c = grid.constants();
    let psi = metric.factor().values();
    let full_cell: f64 = grid.spacing().iter().product();
    let normal = grid.normal_axis();
    let mut rows = Vec::with_capacity(grid.node_count());
    for k in 0..grid.node_count() {
        let mut row = Vec::with_capacity(2 * grid.dim() + 1);
        let mut diag = 0.0;
        for axis in 0..grid.dim() {
            let h = grid.spacing()[axis];
            let face = if axis == normal { full_cell } else { grid.cell_volume(k) };
            for forward in [false, true] {
                if let Some(j) = grid.neighbor(k, axis, forward) {
                    let w = c.a * psi[k] * psi[j] * face / (h * h);
                    row.push((j, -w));
                    diag += w;
                }
            }
        }
        let mass = metric.volume_weight()[k];
        diag += match zeroth {
            Zeroth::Curvature => mass * metric.scalar_curvature().get(k),
            Zeroth::Shift(shift) => mass * shift,
        };
        if robin {
            if let Some(slot) = grid.boundary_slot(k) {
                diag += c.a
                    * c.robin_coefficient()
                    * metric.mean_curvature().get(slot)
                    * metric.boundary_area_weight()[slot];
            }
        }
        if let Some(&(_, v)) = row.iter().find(|&&(_, v)| v > 0.0) {
            return Err(Error::OffDiagonalSign { row: k, value: v });
        }
        row.push((k, diag));
        rows.push(row);
    }
    Ok(rows)
}

fn restrict(rows: Vec<Vec<(usize, f64)>>, keep: &[Option<usize>], count: usize) -> Result<SparseOperator> {
    let restricted = rows
        .into_iter()
        .enumerate()
        .filter(|(k, _)| keep[*k].is_some())
        .map(|(_, row)| {
            row.into_iter()
                .filter_map(|(j, v)| keep[j].map(|jj| (jj, v)))
                .collect()
        })
        .collect();
    SparseOperator::from_rows(count, restricted, true)
}

fn interior_numbering(grid: &ChartGrid) -> (Vec<usize>, Vec<Option<usize>>) {
    let nodes: Vec<usize> = grid.interior_nodes().collect();
    let mut slot = vec![None; grid.node_count()];
    for (i, &k) in nodes.iter().enumerate() {
        slot[k] = Some(i);
    }
    (nodes, slot)
}

/// Assembles the weak form of `-a Delta_g + S_g` with its diagonal mass.
pub fn assemble_conformal_laplacian(metric: &ConformalMetric, bc: BoundaryCondition) -> Result<AssembledOperator> {
    let grid = metric.grid();
    match bc {
        BoundaryCondition::Robin => {
            let rows = full_rows(metric, Zeroth::Curvature, true)?;
            Ok(AssembledOperator {
                bc,
                stiffness: SparseOperator::from_rows(grid.node_count(), rows, true)?,
                mass: metric.volume_weight().to_vec(),
                nodes: (0..grid.node_count()).collect(),
            })
        }
        BoundaryCondition::Dirichlet => {
            let rows = full_rows(metric, Zeroth::Curvature, false)?;
            let (nodes, slot) = interior_numbering(grid);
            let stiffness = restrict(rows, &slot, nodes.len())?;
            let mass = nodes.iter().map(|&k| metric.volume_weight()[k]).collect();
            Ok(AssembledOperator {
                bc,
                stiffness,
                mass,
                nodes,
            })
        }
    }
}

/// `-a Delta_g u + S_g u` at interior nodes; zero on boundary nodes.
pub fn conformal_laplacian(metric: &ConformalMetric, u: &ScalarField) -> Result<Vec<f64>> {
    u.ensure_grid(metric.grid())?;
    let grid = metric.grid();
    let c = grid.constants();
    let psi = metric.factor().values();
    let s = metric.scalar_curvature().values();
    let uv = u.values();
    Ok((0..grid.node_count())
        .map(|k| {
            if grid.is_boundary(k) {
                0.0
            } else {
                -c.a * psi[k].powf(1.0 - c.p) * weighted_flux(grid, psi, uv, k) + s[k] * uv[k]
            }
        })
        .collect())
}

/// Infinity norm of the nodewise conformal Laplacian over interior rows.
pub fn operator_scale(metric: &ConformalMetric) -> f64 {
    let grid = metric.grid();
    let c = grid.constants();
    let psi = metric.factor().values();
    let s = metric.scalar_curvature().values();
    grid.interior_nodes()
        .map(|k| {
            let mut off = 0.0;
            for axis in 0..grid.dim() {
                let h = grid.spacing()[axis];
                for forward in [false, true] {
                    if let Some(j) = grid.neighbor(k, axis, forward) {
                        off += psi[j] / (h * h);
                    }
                }
            }
            let off = c.a * psi[k].powf(1.0 - c.p) * off;
            off + (off + s[k]).abs()
        })
        .fold(0.0, f64::max)
}

/// Extension of boundary data constant along the normal, taken from the nearer face
/// (the lower face on the midplane).
pub fn normal_constant_extension(grid: &ChartGrid, boundary: &[f64]) -> Vec<f64> {
    let nz = grid.shape()[grid.normal_axis()];
    let lateral = grid.lateral_count();
    (0..grid.node_count())
        .map(|k| {
            let i = grid.normal_index(k);
            let l = k / nz;
            if i <= nz - 1 - i {
                boundary[l]
            } else {
                boundary[lateral + l]
            }
        })
        .collect()
}

/// Relative CG tolerance for shifted Dirichlet solves.
pub const DIRICHLET_CG_TOL: f64 = 1e-12;

/// Solver for `(-a Delta_g + A) u = f` in the interior with `u` prescribed on the boundary.
#[derive(Debug, Clone)]
pub struct DirichletSolver {
    full: SparseOperator,
    interior: SparseOperator,
    nodes: Vec<usize>,
    mass: Vec<f64>,
    shift: f64,
}

impl DirichletSolver {
    pub fn new(metric: &ConformalMetric, shift: f64) -> Result<Self> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidArgument(format!("shift must be nonnegative, found {shift}")));
        }
        let grid = metric.grid();
        if !grid.has_boundary() {
            return Err(Error::NoBoundary);
        }
        let rows = full_rows(metric, Zeroth::Shift(shift), false)?;
        let full = SparseOperator::from_rows(grid.node_count(), rows.clone(), true)?;
        let (nodes, slot) = interior_numbering(grid);
        let interior = restrict(rows, &slot, nodes.len())?;
        Ok(Self {
            full,
            interior,
            nodes,
            mass: metric.volume_weight().to_vec(),
            shift,
        })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Solves with nodewise right-hand side `f` (interior entries used) and boundary
    /// values indexed by boundary slot.
    pub fn solve(&self, grid: &ChartGrid, f: &[f64], boundary: &BoundaryField, tol: f64) -> Result<Vec<f64>> {
        boundary.ensure_grid(grid)?;
        let lift = normal_constant_extension(grid, boundary.values());
        let k_lift = self.full.mul(&lift);
        let rhs: Vec<f64> = self
            .nodes
            .iter()
            .map(|&k| self.mass[k] * f[k] - k_lift[k])
            .collect();
        let (w, _) = cg_solve_with(&self.interior, &rhs, None, tol, 20 * self.nodes.len() + 1000)?;
        let mut u = lift;
        for (i, &k) in self.nodes.iter().enumerate() {
            u[k] += w[i];
        }
        for slot in 0..grid.boundary_count() {
            u[grid.boundary_node(slot)] = boundary.get(slot);
        }
        Ok(u)
    }
}
