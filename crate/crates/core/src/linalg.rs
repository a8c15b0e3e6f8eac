//! Sparse and dense kernels: CSR operators, conjugate gradients, shifted inverse
//! iteration for `A v = lambda M v` with diagonal `M`, and a cyclic Jacobi
//! eigensolver used as a small-scale oracle.

use crate::error::{Error, Result};

/// Square matrix in compressed-row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Builds from per-row entries; duplicates are summed and columns sorted.
    pub fn from_rows(dim: usize, rows: Vec<Vec<(usize, f64)>>, symmetric: bool) -> Result<Self> {
        if rows.len() != dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                found: rows.len(),
            });
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if j >= dim {
                    return Err(Error::InvalidArgument(format!(
                        "column {j} out of range in row {i}"
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        what: "sparse entry",
                        index: i,
                    });
                }
                if last == Some(j) {
                    *values.last_mut().expect("entry") += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            dim,
            row_ptr,
            col_idx,
            values,
            symmetric,
        })
    }

    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)], symmetric: bool) -> Result<Self> {
        let mut rows = vec![Vec::new(); dim];
        for &(i, j, v) in triplets {
            if i >= dim {
                return Err(Error::InvalidArgument(format!("row {i} out of range")));
            }
            rows[i].push((j, v));
        }
        Self::from_rows(dim, rows, symmetric)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self {
            dim: d.len(),
            row_ptr: (0..=d.len()).collect(),
            col_idx: (0..d.len()).collect(),
            values: d.to_vec(),
            symmetric: true,
        }
    }

    pub fn from_dense(m: &DenseMatrix, symmetric: bool) -> Result<Self> {
        let rows = (0..m.dim())
            .map(|i| {
                (0..m.dim())
                    .filter(|&j| m.get(i, j) != 0.0)
                    .map(|j| (j, m.get(i, j)))
                    .collect()
            })
            .collect();
        Self::from_rows(m.dim(), rows, symmetric)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|pos| vals[pos]).unwrap_or(0.0)
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.dim) {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.apply(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Smallest Gershgorin disc endpoint `min_i (a_ii - sum_{j != i} |a_ij|)`.
    pub fn gershgorin_lower_bound(&self) -> f64 {
        (0..self.dim)
            .map(|i| {
                let (cols, vals) = self.row(i);
                let mut diag = 0.0;
                let mut off = 0.0;
                for (&j, &v) in cols.iter().zip(vals) {
                    if j == i {
                        diag += v;
                    } else {
                        off += v.abs();
                    }
                }
                diag - off
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest `|a_ij - a_ji|` over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `D A D` for the diagonal matrix `D = diag(d)`.
    pub fn congruence(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            for pos in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[pos] *= d[i] * d[self.col_idx[pos]];
            }
        }
        out
    }

    /// `A - sigma I`.
    pub fn shifted(&self, sigma: f64) -> Self {
        let rows = (0..self.dim)
            .map(|i| {
                let (cols, vals) = self.row(i);
                let mut row: Vec<(usize, f64)> = cols.iter().copied().zip(vals.iter().copied()).collect();
                row.push((i, -sigma));
                row
            })
            .collect();
        Self::from_rows(self.dim, rows, self.symmetric).expect("valid shifted operator")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.dim);
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m.set(i, j, m.get(i, j) + v);
            }
        }
        m
    }
}

/// Row-major square dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                found: r.len(),
            });
        }
        Ok(Self {
            n,
            data: rows.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn off_diagonal_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    acc += self.get(i, j).powi(2);
                }
            }
        }
        acc.sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(a: &SparseOperator, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = a.mul(x);
    b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
    /// Best true residual norm at the start and after each restart; nonincreasing.
    pub restart_residuals: Vec<f64>,
    pub converged: bool,
}

const CG_RESTART: usize = 500;

/// Jacobi-preconditioned CG; returns the best iterate even when `tol` is not met.
/// Fails only on a non-positive curvature direction.
pub(crate) fn cg_best_effort(
    a: &SparseOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgReport)> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
                restart_residuals: vec![0.0],
                converged: true,
            },
        ));
    }
    let diag = a.diagonal();
    if let Some(&d) = diag.iter().find(|&&d| !(d > 0.0)) {
        return Err(Error::Indefinite {
            iteration: 0,
            curvature: d,
        });
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let target = tol * bnorm;
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let mut r = residual(a, b, &x);
    let mut best_x = x.clone();
    let mut best_res = norm(&r);
    let mut history = vec![best_res];
    let mut iterations = 0;
    let mut ap = vec![0.0; n];
    while best_res > target && iterations < max_iter {
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, d)| ri * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..CG_RESTART {
            if iterations >= max_iter {
                break;
            }
            a.apply(&p, &mut ap);
            let curvature = dot(&p, &ap);
            if !(curvature > 0.0) {
                return Err(Error::Indefinite {
                    iteration: iterations,
                    curvature,
                });
            }
            let alpha = rz / curvature;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            if norm(&r) <= target {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        r = residual(a, b, &x);
        let true_res = norm(&r);
        if true_res < best_res {
            best_res = true_res;
            best_x.clone_from(&x);
        } else {
            x.clone_from(&best_x);
            r = residual(a, b, &x);
        }
        history.push(best_res);
        if history.len() > 3 && history[history.len() - 4] == best_res {
            break;
        }
    }
    debug_assert!(history.windows(2).all(|w| w[1] <= w[0]));
    Ok((
        best_x,
        CgReport {
            iterations,
            relative_residual: best_res / bnorm,
            restart_residuals: history,
            converged: best_res <= target,
        },
    ))
}

/// Solves `A x = b` for symmetric positive-definite `A` to relative residual `tol`.
pub fn cg_solve(a: &SparseOperator, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    cg_solve_with(a, b, None, tol, max_iter).map(|(x, _)| x)
}

/// As [`cg_solve`], starting from `x0` and returning the solve report.
pub fn cg_solve_with(
    a: &SparseOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgReport)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, found {tol}")));
    }
    let (x, report) = cg_best_effort(a, b, x0, tol, max_iter)?;
    if report.converged {
        Ok((x, report))
    } else {
        Err(Error::CgNotConverged {
            iterations: report.iterations,
            relative_residual: report.relative_residual,
        })
    }
}

/// Eigenpair of `A v = lambda M v` with `v^T M v = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    /// `||A v - lambda M v||_{M^{-1}}`, the M-weighted residual of the unit vector.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Shift used by the inverse iteration.
    pub shift: f64,
}

const EIGEN_MAX_ITER: usize = 5000;
const EIGEN_STALL: usize = 200;
const INNER_TOL: f64 = 1e-12;

/// Smallest eigenpair of the pencil `(A, diag(mass))` by shifted inverse iteration.
///
/// Converges when `||B x - rho x|| <= tol * ||B||_inf` with `B = M^{-1/2} A M^{-1/2}`.
/// The eigenvector is sign-normalized to a nonnegative M-weighted mean.
pub fn smallest_eigenpair(a: &SparseOperator, mass: &[f64], tol: f64) -> Result<EigenPair> {
    let n = a.dim();
    if mass.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: mass.len(),
        });
    }
    if let Some(index) = mass.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::NonPositive {
            what: "mass weight",
            index,
            value: mass[index],
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, found {tol}")));
    }
    let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let b = a.congruence(&inv_sqrt);
    let scale = b.inf_norm().max(f64::MIN_POSITIVE);
    let g = b.gershgorin_lower_bound();
    let shift = g - 0.1 * g.abs().max(1e-3 * scale);
    let shifted = b.shifted(shift);

    let mut x: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
    let xn = norm(&x);
    x.iter_mut().for_each(|v| *v /= xn);
    let mut rho = dot(&x, &b.mul(&x));
    let mut best = f64::INFINITY;
    let mut best_iter = 0;
    let mut res = f64::INFINITY;
    for it in 1..=EIGEN_MAX_ITER {
        let guess: Vec<f64> = x.iter().map(|v| v / (rho - shift).max(1e-300)).collect();
        let (y, _) = cg_best_effort(&shifted, &x, Some(&guess), INNER_TOL, 20 * n + 1000)?;
        let yn = norm(&y);
        x = y.into_iter().map(|v| v / yn).collect();
        let bx = b.mul(&x);
        rho = dot(&x, &bx);
        res = norm(&bx.iter().zip(&x).map(|(bi, xi)| bi - rho * xi).collect::<Vec<_>>());
        if res <= tol * scale {
            let mut vector: Vec<f64> = x.iter().zip(&inv_sqrt).map(|(xi, s)| xi * s).collect();
            let mean: f64 = vector.iter().zip(mass).map(|(v, m)| v * m).sum();
            if mean < 0.0 {
                vector.iter_mut().for_each(|v| *v = -*v);
            }
            return Ok(EigenPair {
                value: rho,
                vector,
                residual_norm: res,
                iterations: it,
                shift,
            });
        }
        if res < 0.999 * best {
            best = res;
            best_iter = it;
        } else if it - best_iter > EIGEN_STALL {
            return Err(Error::EigenStagnation {
                iterations: it,
                residual: res,
            });
        }
    }
    Err(Error::EigenNotConverged {
        iterations: EIGEN_MAX_ITER,
        residual: res,
    })
}

/// Largest dimension accepted by [`dense_jacobi_eig`].
pub const JACOBI_SIZE_CAP: usize = 4096;

/// All eigenvalues of a symmetric dense matrix, ascending, by cyclic Jacobi rotations.
pub fn dense_jacobi_eig(m: &DenseMatrix) -> Result<Vec<f64>> {
    let n = m.dim();
    if n > JACOBI_SIZE_CAP {
        return Err(Error::SizeCapExceeded {
            size: n,
            cap: JACOBI_SIZE_CAP,
        });
    }
    let total = m.frobenius_norm();
    for i in 0..n {
        for j in 0..i {
            if (m.get(i, j) - m.get(j, i)).abs() > 1e-12 * total.max(1.0) {
                return Err(Error::InvalidArgument("matrix is not symmetric".into()));
            }
        }
    }
    let mut a = m.clone();
    let stop = 1e-12 * total;
    for _sweep in 0..100 {
        if a.off_diagonal_norm() <= stop {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
            }
        }
    }
    if a.off_diagonal_norm() > stop {
        return Err(Error::EigenNotConverged {
            iterations: 100,
            residual: a.off_diagonal_norm(),
        });
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}
