//! Discretized slab charts, conformally flat metrics and their curvature data.
//!
//! The slab is `T^{n-1} x [0, L]`: every axis but the last is periodic and the
//! last axis carries the two boundary faces `z = 0` and `z = L`. Nodes are laid
//! out row-major with the last axis fastest. A fully periodic torus build is
//! also available for closed-manifold diagnostics.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents attached to the spatial dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionConstants {
    pub n: usize,
    /// Critical exponent `2n/(n-2)`.
    pub p: f64,
    /// Conformal Laplacian coefficient `4(n-1)/(n-2)`.
    pub a: f64,
    /// Boundary exponent `(n+1)/(n-3)`, defined for `n >= 4`.
    pub p_prime_boundary: Option<f64>,
}

impl DimensionConstants {
    pub fn new(n: usize) -> Result<Self> {
        if !(3..=5).contains(&n) {
            return Err(Error::DimensionOutOfRange { n });
        }
        let nf = n as f64;
        Ok(Self {
            n,
            p: 2.0 * nf / (nf - 2.0),
            a: 4.0 * (nf - 1.0) / (nf - 2.0),
            p_prime_boundary: (n >= 4).then(|| (nf + 1.0) / (nf - 3.0)),
        })
    }

    /// Coefficient `2/(p-2)` of the mean curvature in the Robin condition.
    pub fn robin_coefficient(&self) -> f64 {
        2.0 / (self.p - 2.0)
    }
}

/// One of the two boundary faces of a slab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Face {
    Lower,
    Upper,
}

/// Structured lattice over a slab or a flat torus.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartGrid {
    constants: DimensionConstants,
    shape: Vec<usize>,
    lengths: Vec<f64>,
    periodic: Vec<bool>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    node_count: usize,
}

/// Builds the slab `T^{n-1} x [0, L]` with the last axis non-periodic.
pub fn build_slab_grid(n: usize, shape: &[usize], lengths: &[f64]) -> Result<Arc<ChartGrid>> {
    ChartGrid::build(n, shape, lengths, false)
}

/// Builds the fully periodic torus `T^n` (no boundary).
pub fn build_torus_grid(n: usize, shape: &[usize], lengths: &[f64]) -> Result<Arc<ChartGrid>> {
    ChartGrid::build(n, shape, lengths, true)
}

impl ChartGrid {
    fn build(n: usize, shape: &[usize], lengths: &[f64], closed: bool) -> Result<Arc<Self>> {
        let constants = DimensionConstants::new(n)?;
        if shape.len() != n || lengths.len() != n {
            return Err(Error::DegenerateGrid(format!(
                "expected {n} shape entries and {n} lengths, found {} and {}",
                shape.len(),
                lengths.len()
            )));
        }
        if let Some(s) = shape.iter().find(|&&s| s < 4) {
            return Err(Error::DegenerateGrid(format!(
                "every axis needs at least 4 nodes, found {s}"
            )));
        }
        if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::DegenerateGrid(format!(
                "lengths must be positive and finite, found {l}"
            )));
        }
        let periodic: Vec<bool> = (0..n).map(|i| closed || i + 1 < n).collect();
        let spacing = (0..n)
            .map(|i| {
                if periodic[i] {
                    lengths[i] / shape[i] as f64
                } else {
                    lengths[i] / (shape[i] - 1) as f64
                }
            })
            .collect();
        let mut strides = vec![1usize; n];
        for i in (0..n - 1).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        let node_count = shape.iter().product();
        Ok(Arc::new(Self {
            constants,
            shape: shape.to_vec(),
            lengths: lengths.to_vec(),
            periodic,
            spacing,
            strides,
            node_count,
        }))
    }

    pub fn dim(&self) -> usize {
        self.constants.n
    }

    pub fn constants(&self) -> DimensionConstants {
        self.constants
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn has_boundary(&self) -> bool {
        !self.periodic[self.normal_axis()]
    }

    /// The last axis, normal to the boundary faces.
    pub fn normal_axis(&self) -> usize {
        self.constants.n - 1
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut rest = node;
        self.strides
            .iter()
            .zip(&self.shape)
            .map(|(&stride, &s)| {
                let i = rest / stride;
                rest -= i * stride;
                debug_assert!(i < s);
                i
            })
            .collect()
    }

    pub fn index_of(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coordinate(&self, node: usize, axis: usize) -> f64 {
        let i = (node / self.strides[axis]) % self.shape[axis];
        i as f64 * self.spacing[axis]
    }

    pub fn coordinates(&self, node: usize) -> Vec<f64> {
        (0..self.dim()).map(|axis| self.coordinate(node, axis)).collect()
    }

    /// Neighbor one step along `axis`, wrapping on periodic axes.
    pub fn neighbor(&self, node: usize, axis: usize, forward: bool) -> Option<usize> {
        let s = self.shape[axis];
        let stride = self.strides[axis];
        let i = (node / stride) % s;
        let base = node - i * stride;
        let j = match (forward, self.periodic[axis]) {
            (true, _) if i + 1 < s => i + 1,
            (true, true) => 0,
            (false, _) if i > 0 => i - 1,
            (false, true) => s - 1,
            _ => return None,
        };
        Some(base + j * stride)
    }

    /// Index of the node along the normal axis.
    pub fn normal_index(&self, node: usize) -> usize {
        node % self.shape[self.normal_axis()]
    }

    /// Number of nodes in one lateral layer.
    pub fn lateral_count(&self) -> usize {
        self.node_count / self.shape[self.normal_axis()]
    }

    pub fn face_of(&self, node: usize) -> Option<Face> {
        if !self.has_boundary() {
            return None;
        }
        let k = self.normal_index(node);
        if k == 0 {
            Some(Face::Lower)
        } else if k + 1 == self.shape[self.normal_axis()] {
            Some(Face::Upper)
        } else {
            None
        }
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.face_of(node).is_some()
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count).filter(move |&k| !self.is_boundary(k))
    }

    pub fn boundary_count(&self) -> usize {
        if self.has_boundary() {
            2 * self.lateral_count()
        } else {
            0
        }
    }

    /// Node behind a boundary slot: lower face first, each face in lateral row-major order.
    pub fn boundary_node(&self, slot: usize) -> usize {
        let nz = self.shape[self.normal_axis()];
        let lateral = self.lateral_count();
        if slot < lateral {
            slot * nz
        } else {
            (slot - lateral) * nz + nz - 1
        }
    }

    pub fn boundary_slot(&self, node: usize) -> Option<usize> {
        let nz = self.shape[self.normal_axis()];
        match self.face_of(node)? {
            Face::Lower => Some(node / nz),
            Face::Upper => Some(self.lateral_count() + node / nz),
        }
    }

    pub fn boundary_face_of_slot(&self, slot: usize) -> Face {
        if slot < self.lateral_count() {
            Face::Lower
        } else {
            Face::Upper
        }
    }

    /// Node `depth` steps inward from the face that `boundary_node` lies on.
    pub fn inward(&self, boundary_node: usize, depth: usize) -> usize {
        match self.face_of(boundary_node) {
            Some(Face::Lower) => boundary_node + depth,
            Some(Face::Upper) => boundary_node - depth,
            None => boundary_node,
        }
    }

    /// Flat dual-cell volume; halved along the normal axis on boundary nodes.
    pub fn cell_volume(&self, node: usize) -> f64 {
        let full: f64 = self.spacing.iter().product();
        if self.is_boundary(node) {
            0.5 * full
        } else {
            full
        }
    }

    /// Flat area of a boundary dual cell.
    pub fn lateral_cell_area(&self) -> f64 {
        self.spacing[..self.normal_axis()].iter().product()
    }

    pub(crate) fn same_as(&self, other: &ChartGrid) -> bool {
        std::ptr::eq(self, other) || self == other
    }
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// Nodal values over every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<ChartGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<ChartGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::LengthMismatch {
                expected: grid.node_count(),
                found: values.len(),
            });
        }
        check_finite("scalar field", &values)?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: &Arc<ChartGrid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.node_count())
            .map(|k| f(&grid.coordinates(k)))
            .collect();
        Self::new(grid.clone(), values)
    }

    pub fn constant(grid: &Arc<ChartGrid>, c: f64) -> Result<Self> {
        Self::new(grid.clone(), vec![c; grid.node_count()])
    }

    pub fn grid(&self) -> &Arc<ChartGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Node of the smallest value (first on ties).
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = k;
            }
        }
        best
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Nodewise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.grid.clone(), values)
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.map(|v| c * v)
    }

    pub(crate) fn ensure_grid(&self, grid: &ChartGrid) -> Result<()> {
        if self.grid.same_as(grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub(crate) fn ensure_positive(&self, what: &'static str) -> Result<()> {
        match self.values.iter().position(|&v| v <= 0.0) {
            Some(index) => Err(Error::NonPositive {
                what,
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }
}

/// Values on the boundary nodes of both faces, indexed by boundary slot.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    grid: Arc<ChartGrid>,
    values: Vec<f64>,
}

impl BoundaryField {
    pub fn new(grid: Arc<ChartGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.boundary_count() {
            return Err(Error::LengthMismatch {
                expected: grid.boundary_count(),
                found: values.len(),
            });
        }
        check_finite("boundary field", &values)?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: &Arc<ChartGrid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.boundary_count())
            .map(|slot| f(&grid.coordinates(grid.boundary_node(slot))))
            .collect();
        Self::new(grid.clone(), values)
    }

    pub fn constant(grid: &Arc<ChartGrid>, c: f64) -> Result<Self> {
        Self::new(grid.clone(), vec![c; grid.boundary_count()])
    }

    /// Boundary trace of a nodal field.
    pub fn restrict(field: &ScalarField) -> Result<Self> {
        let grid = field.grid();
        let values = (0..grid.boundary_count())
            .map(|slot| field.get(grid.boundary_node(slot)))
            .collect();
        Self::new(grid.clone(), values)
    }

    pub fn grid(&self) -> &Arc<ChartGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.values[slot]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.map(|v| c * v)
    }

    pub(crate) fn ensure_grid(&self, grid: &ChartGrid) -> Result<()> {
        if self.grid.same_as(grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub(crate) fn ensure_positive(&self, what: &'static str) -> Result<()> {
        match self.values.iter().position(|&v| v <= 0.0) {
            Some(index) => Err(Error::NonPositive {
                what,
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }
}

/// Which description a metric was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Flat,
    /// `psi^{p-2} delta`.
    ConformallyFlat,
    /// Synthetic: flat geometry with `S_g := V`.
    FlatWithPotential,
    /// Synthetic: conformal image `psi^{p-2}` of a flat metric with potential `V`.
    ConformalWithPotential,
}

/// A metric in the conformal class of the flat chart, with cached curvature and measures.
#[derive(Debug, Clone)]
pub struct ConformalMetric {
    grid: Arc<ChartGrid>,
    kind: MetricKind,
    factor: ScalarField,
    potential: Option<ScalarField>,
    volume_weight: Vec<f64>,
    boundary_area_weight: Vec<f64>,
    scalar_curvature: ScalarField,
    mean_curvature: BoundaryField,
}

impl ConformalMetric {
    pub fn flat(grid: &Arc<ChartGrid>) -> Result<Self> {
        Self::assemble(MetricKind::Flat, ScalarField::constant(grid, 1.0)?, None)
    }

    pub fn conformally_flat(psi: ScalarField) -> Result<Self> {
        Self::assemble(MetricKind::ConformallyFlat, psi, None)
    }

    pub fn flat_with_potential(potential: ScalarField) -> Result<Self> {
        let psi = ScalarField::constant(potential.grid(), 1.0)?;
        Self::assemble(MetricKind::FlatWithPotential, psi, Some(potential))
    }

    pub fn conformal_with_potential(psi: ScalarField, potential: ScalarField) -> Result<Self> {
        potential.ensure_grid(psi.grid())?;
        Self::assemble(MetricKind::ConformalWithPotential, psi, Some(potential))
    }

    fn assemble(kind: MetricKind, psi: ScalarField, potential: Option<ScalarField>) -> Result<Self> {
        psi.ensure_positive("conformal factor")?;
        let grid = psi.grid().clone();
        let c = grid.constants();
        let volume_weight = (0..grid.node_count())
            .map(|k| psi.get(k).powf(c.p) * grid.cell_volume(k))
            .collect();
        let area = grid.lateral_cell_area();
        let boundary_area_weight = (0..grid.boundary_count())
            .map(|slot| psi.get(grid.boundary_node(slot)).powf(c.a / 2.0) * area)
            .collect();
        let mut scalar = scalar_curvature_values(&psi);
        if let Some(v) = &potential {
            for (k, s) in scalar.iter_mut().enumerate() {
                *s += psi.get(k).powf(2.0 - c.p) * v.get(k);
            }
        }
        let scalar_curvature = ScalarField::new(grid.clone(), scalar)?;
        let mean_curvature = mean_curvature_conformally_flat(&psi)?;
        Ok(Self {
            grid,
            kind,
            factor: psi,
            potential,
            volume_weight,
            boundary_area_weight,
            scalar_curvature,
            mean_curvature,
        })
    }

    /// The metric `u^{p-2} g`: same flat base, factor `psi * u`.
    pub fn conformal_change(&self, u: &ScalarField) -> Result<Self> {
        u.ensure_grid(&self.grid)?;
        u.ensure_positive("conformal factor")?;
        let psi = self.factor.zip_map(u, |a, b| a * b)?;
        let kind = match self.kind {
            MetricKind::Flat | MetricKind::ConformallyFlat => MetricKind::ConformallyFlat,
            MetricKind::FlatWithPotential | MetricKind::ConformalWithPotential => {
                MetricKind::ConformalWithPotential
            }
        };
        Self::assemble(kind, psi, self.potential.clone())
    }

    pub fn grid(&self) -> &Arc<ChartGrid> {
        &self.grid
    }

    pub fn constants(&self) -> DimensionConstants {
        self.grid.constants()
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn is_synthetic(&self) -> bool {
        self.potential.is_some()
    }

    /// Conformal factor `psi` relative to the flat chart (1 for flat kinds).
    pub fn factor(&self) -> &ScalarField {
        &self.factor
    }

    pub fn potential(&self) -> Option<&ScalarField> {
        self.potential.as_ref()
    }

    pub fn volume_weight(&self) -> &[f64] {
        &self.volume_weight
    }

    pub fn boundary_area_weight(&self) -> &[f64] {
        &self.boundary_area_weight
    }

    /// `S_g` at every node; boundary values are extrapolated.
    pub fn scalar_curvature(&self) -> &ScalarField {
        &self.scalar_curvature
    }

    pub fn mean_curvature(&self) -> &BoundaryField {
        &self.mean_curvature
    }
}

/// `sum_i sum_{+-} psi_nb (u_nb - u_k) / h_i^2` at a node with all neighbors present.
pub(crate) fn weighted_flux(grid: &ChartGrid, psi: &[f64], u: &[f64], k: usize) -> f64 {
    let mut acc = 0.0;
    for axis in 0..grid.dim() {
        let inv_h2 = 1.0 / (grid.spacing()[axis] * grid.spacing()[axis]);
        let mut along = 0.0;
        for forward in [false, true] {
            if let Some(j) = grid.neighbor(k, axis, forward) {
                along += psi[j] * (u[j] - u[k]);
            }
        }
        acc += along * inv_h2;
    }
    acc
}

/// Flat Laplacian at every node; the normal second difference is extrapolated
/// linearly from the interior on boundary nodes.
fn flat_laplacian_extended(f: &ScalarField) -> Vec<f64> {
    let grid = f.grid();
    let v = f.values();
    let normal = grid.normal_axis();
    (0..grid.node_count())
        .map(|k| {
            let mut acc = 0.0;
            for axis in 0..grid.dim() {
                let h = grid.spacing()[axis];
                let second = if axis == normal && grid.is_boundary(k) {
                    let [f0, f1, f2, f3] = [0, 1, 2, 3].map(|d| v[grid.inward(k, d)]);
                    2.0 * f0 - 5.0 * f1 + 4.0 * f2 - f3
                } else {
                    let lo = grid.neighbor(k, axis, false).expect("interior neighbor");
                    let hi = grid.neighbor(k, axis, true).expect("interior neighbor");
                    v[lo] - 2.0 * v[k] + v[hi]
                };
                acc += second / (h * h);
            }
            acc
        })
        .collect()
}

fn scalar_curvature_values(psi: &ScalarField) -> Vec<f64> {
    let c = psi.grid().constants();
    flat_laplacian_extended(psi)
        .into_iter()
        .zip(psi.values())
        .map(|(lap, &s)| s.powf(1.0 - c.p) * (-c.a * lap))
        .collect()
}

/// Scalar curvature `psi^{1-p} (-a Delta psi)` of `psi^{p-2} delta`.
pub fn scalar_curvature_conformally_flat(psi: &ScalarField) -> Result<ScalarField> {
    psi.ensure_positive("conformal factor")?;
    ScalarField::new(psi.grid().clone(), scalar_curvature_values(psi))
}

/// Boundary mean curvature `(2/(n-2)) psi^{-n/(n-2)} d_nu psi` of `psi^{p-2} delta`.
pub fn mean_curvature_conformally_flat(psi: &ScalarField) -> Result<BoundaryField> {
    psi.ensure_positive("conformal factor")?;
    let grid = psi.grid();
    let n = grid.dim() as f64;
    let h = grid.spacing()[grid.normal_axis()];
    let v = psi.values();
    let values = (0..grid.boundary_count())
        .map(|slot| {
            let node = grid.boundary_node(slot);
            let [f0, f1, f2, f3] = [0, 1, 2, 3].map(|d| v[grid.inward(node, d)]);
            let outward = (4.0 * f0 - 7.0 * f1 + 4.0 * f2 - f3) / (2.0 * h);
            2.0 / (n - 2.0) * f0.powf(-n / (n - 2.0)) * outward
        })
        .collect();
    BoundaryField::new(grid.clone(), values)
}

/// Laplace-Beltrami operator of the metric at interior nodes; zero on boundary nodes.
pub fn laplace_beltrami(metric: &ConformalMetric, u: &ScalarField) -> Result<ScalarField> {
    u.ensure_grid(metric.grid())?;
    let grid = metric.grid();
    let p = grid.constants().p;
    let psi = metric.factor().values();
    let values = (0..grid.node_count())
        .map(|k| {
            if grid.is_boundary(k) {
                0.0
            } else {
                psi[k].powf(1.0 - p) * weighted_flux(grid, psi, u.values(), k)
            }
        })
        .collect();
    ScalarField::new(grid.clone(), values)
}

/// Distance of each node to the nearest boundary face.
pub fn boundary_distance(grid: &Arc<ChartGrid>) -> Result<ScalarField> {
    if !grid.has_boundary() {
        return Err(Error::NoBoundary);
    }
    let axis = grid.normal_axis();
    let nz = grid.shape()[axis];
    let h = grid.spacing()[axis];
    let values = (0..grid.node_count())
        .map(|k| {
            let i = grid.normal_index(k);
            i.min(nz - 1 - i) as f64 * h
        })
        .collect();
    ScalarField::new(grid.clone(), values)
}

/// Membership mask of the open collar `U_gamma` of nodes closer than `gamma` to the boundary.
pub fn collar_mask(grid: &Arc<ChartGrid>, gamma: f64) -> Result<Vec<bool>> {
    Ok(boundary_distance(grid)?
        .values()
        .iter()
        .map(|&d| d < gamma)
        .collect())
}
