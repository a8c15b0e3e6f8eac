use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yamabe_core::geometry::{build_slab_grid, ConformalMetric, ScalarField};
use yamabe_core::linalg::{cg_solve, cg_solve_with, dense_jacobi_eig, smallest_eigenpair, DenseMatrix, SparseOperator};
use yamabe_core::spectral::{assemble_conformal_laplacian, BoundaryCondition};

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

#[test]
fn cg_matches_dense_elimination() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random_spd(50, &mut rng);
    let b: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let op = SparseOperator::from_dense(&DenseMatrix::from_rows(&a).unwrap(), true).unwrap();
    let x = cg_solve(&op, &b, 1e-14, 10_000).unwrap();
    let oracle = gauss_solve(a, b);
    for (u, v) in x.iter().zip(&oracle) {
        assert!((u - v).abs() <= 1e-10 * (1.0 + v.abs()), "{u} vs {v}");
    }
}

#[test]
fn cg_restart_history_is_nonincreasing() {
    let g = build_slab_grid(3, &[8, 8, 17], &[1.0; 3]).unwrap();
    let op = assemble_conformal_laplacian(&ConformalMetric::flat(&g).unwrap(), BoundaryCondition::Dirichlet).unwrap();
    let b: Vec<f64> = (0..op.stiffness.dim()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
    let (_, report) = cg_solve_with(&op.stiffness, &b, None, 1e-13, 100_000).unwrap();
    assert!(report.converged);
    for w in report.restart_residuals.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn dirichlet_laplacian_in_one_dimension() {
    let n = 64;
    let h = 1.0 / (n + 1) as f64;
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 2.0 / (h * h)));
        if i + 1 < n {
            t.push((i, i + 1, -1.0 / (h * h)));
            t.push((i + 1, i, -1.0 / (h * h)));
        }
    }
    let a = SparseOperator::from_triplets(n, &t, true).unwrap();
    let pair = smallest_eigenpair(&a, &vec![1.0; n], 1e-11).unwrap();
    assert!((pair.value - PI * PI).abs() / (PI * PI) < 0.005);
}

#[test]
fn sparse_eigenpair_matches_dense_oracle_on_assembled_operators() {
    let g = build_slab_grid(3, &[6, 6, 6], &[1.0; 3]).unwrap();
    let psi = ScalarField::from_fn(&g, |x| 1.0 + 0.2 * (2.0 * PI * x[0]).sin() * x[2]).unwrap();
    let pot = ScalarField::from_fn(&g, |x| -3.0 + 5.0 * x[1]).unwrap();
    let m = ConformalMetric::conformal_with_potential(psi, pot).unwrap();
    for bc in [BoundaryCondition::Robin, BoundaryCondition::Dirichlet] {
        let op = assemble_conformal_laplacian(&m, bc).unwrap();
        let inv_sqrt: Vec<f64> = op.mass.iter().map(|w| 1.0 / w.sqrt()).collect();
        let b = op.stiffness.congruence(&inv_sqrt);
        let dense = dense_jacobi_eig(&b.to_dense()).unwrap()[0];
        let sparse = smallest_eigenpair(&op.stiffness, &op.mass, 1e-11).unwrap();
        assert!((sparse.value - dense).abs() <= 1e-8 * dense.abs().max(1.0), "{bc:?}: {} vs {dense}", sparse.value);
    }
}

#[test]
fn rayleigh_quotients_bound_the_eigenvalue() {
    let g = build_slab_grid(3, &[6, 6, 8], &[1.0; 3]).unwrap();
    let pot = ScalarField::from_fn(&g, |x| 4.0 * (2.0 * PI * x[0]).cos()).unwrap();
    let op = assemble_conformal_laplacian(&ConformalMetric::flat_with_potential(pot).unwrap(), BoundaryCondition::Robin).unwrap();
    let pair = smallest_eigenpair(&op.stiffness, &op.mass, 1e-11).unwrap();
    let norm: f64 = pair.vector.iter().zip(&op.mass).map(|(v, m)| v * v * m).sum();
    assert!((norm - 1.0).abs() < 1e-10);
    let mean: f64 = pair.vector.iter().zip(&op.mass).map(|(v, m)| v * m).sum();
    assert!(mean >= 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scale = op.stiffness.inf_norm();
    for _ in 0..10 {
        let w: Vec<f64> = (0..op.stiffness.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let aw = op.stiffness.mul(&w);
        let num: f64 = w.iter().zip(&aw).map(|(a, b)| a * b).sum();
        let den: f64 = w.iter().zip(&op.mass).map(|(a, m)| a * a * m).sum();
        assert!(num / den >= pair.value - 1e-11 * scale);
    }
}

#[test]
fn jacobi_trace_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut m = DenseMatrix::zeros(20);
    for i in 0..20 {
        for j in 0..=i {
            let v = rng.gen_range(-1.0..1.0);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    let eig = dense_jacobi_eig(&m).unwrap();
    assert!((eig.iter().sum::<f64>() - m.trace()).abs() < 1e-10);
    assert!(eig.windows(2).all(|w| w[0] <= w[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cg_solves_random_spd_systems(seed in any::<u64>(), n in 2usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(n, &mut rng);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let op = SparseOperator::from_dense(&DenseMatrix::from_rows(&a).unwrap(), true).unwrap();
        let x = cg_solve(&op, &b, 1e-12, 10_000).unwrap();
        let r = op.mul(&x);
        let res: f64 = r.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
        let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(res <= 1e-12 * bn * 1.0001);
    }
}
