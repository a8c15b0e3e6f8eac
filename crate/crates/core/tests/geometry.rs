use std::f64::consts::PI;

use proptest::prelude::*;
use yamabe_core::geometry::{
    boundary_distance, build_slab_grid, build_torus_grid, collar_mask, laplace_beltrami, mean_curvature_conformally_flat,
    scalar_curvature_conformally_flat, ConformalMetric, DimensionConstants, Face, ScalarField,
};
use yamabe_core::Error;

#[test]
fn dimension_constants() {
    let c3 = DimensionConstants::new(3).unwrap();
    assert_eq!((c3.p, c3.a, c3.p_prime_boundary), (6.0, 8.0, None));
    let c4 = DimensionConstants::new(4).unwrap();
    assert_eq!((c4.p, c4.a, c4.p_prime_boundary), (4.0, 6.0, Some(5.0)));
    let c5 = DimensionConstants::new(5).unwrap();
    assert!((c5.p - 10.0 / 3.0).abs() < 1e-15);
    assert!((c5.a - 16.0 / 3.0).abs() < 1e-15);
    assert_eq!(c5.p_prime_boundary, Some(3.0));
    assert!(matches!(DimensionConstants::new(2), Err(Error::DimensionOutOfRange { n: 2 })));
}

#[test]
fn slab_counts() {
    let g = build_slab_grid(3, &[16, 16, 17], &[1.0, 1.0, 1.0]).unwrap();
    assert_eq!(g.node_count(), 16 * 16 * 17);
    assert_eq!(g.boundary_count(), 2 * 256);
    assert_eq!(g.periodic(), &[true, true, false]);
    assert_eq!(g.spacing(), &[1.0 / 16.0, 1.0 / 16.0, 1.0 / 16.0]);
    let g4 = build_slab_grid(4, &[8, 8, 8, 9], &[1.0; 4]).unwrap();
    assert_eq!(g4.node_count(), 4608);
    assert_eq!(g4.normal_axis(), 3);
    let err = build_slab_grid(2, &[8, 8], &[1.0, 1.0]).unwrap_err();
    assert!(err.to_string().contains("dimension out of range"));
    assert!(build_slab_grid(3, &[3, 8, 8], &[1.0; 3]).is_err());
    assert!(build_slab_grid(3, &[8, 8, 8], &[1.0, 0.0, 1.0]).is_err());
    assert!(build_slab_grid(3, &[8, 8], &[1.0, 1.0]).is_err());
}

#[test]
fn every_node_is_interior_or_on_one_face() {
    let g = build_slab_grid(3, &[4, 5, 6], &[1.0, 2.0, 3.0]).unwrap();
    let mut faces = [0, 0];
    for k in 0..g.node_count() {
        assert_eq!(g.index_of(&g.multi_index(k)), k);
        match g.face_of(k) {
            Some(Face::Lower) => faces[0] += 1,
            Some(Face::Upper) => faces[1] += 1,
            None => assert!(!g.is_boundary(k)),
        }
    }
    assert_eq!(faces, [20, 20]);
    for slot in 0..g.boundary_count() {
        assert_eq!(g.boundary_slot(g.boundary_node(slot)), Some(slot));
    }
    assert_eq!(g.interior_nodes().count(), 4 * 5 * 4);
}

#[test]
fn torus_has_no_boundary() {
    let t = build_torus_grid(3, &[6, 6, 6], &[1.0; 3]).unwrap();
    assert!(!t.has_boundary());
    assert_eq!(t.boundary_count(), 0);
    assert!(matches!(boundary_distance(&t), Err(Error::NoBoundary)));
}

#[test]
fn boundary_distance_and_collar() {
    let g = build_slab_grid(3, &[4, 4, 17], &[1.0; 3]).unwrap();
    let d = boundary_distance(&g).unwrap();
    let mask = collar_mask(&g, 0.25).unwrap();
    for k in 0..g.node_count() {
        let z = g.coordinate(k, 2);
        assert!((d.get(k) - z.min(1.0 - z)).abs() < 1e-14);
        assert_eq!(mask[k], z < 0.25 - 1e-12 || z > 0.75 + 1e-12);
        if g.is_boundary(k) {
            assert_eq!(d.get(k), 0.0);
        }
        if g.normal_index(k) == 8 {
            assert!((d.get(k) - 0.5).abs() < 1e-14);
        }
    }
}

#[test]
fn flat_metric_data() {
    let g = build_slab_grid(3, &[8, 8, 9], &[1.0; 3]).unwrap();
    let m = ConformalMetric::flat(&g).unwrap();
    assert_eq!(m.scalar_curvature().max_abs(), 0.0);
    assert!(m.mean_curvature().values().iter().all(|&h| h == 0.0));
    let total: f64 = m.volume_weight().iter().sum();
    assert!((total - 1.0).abs() < 1e-14);
    let c = ScalarField::constant(&g, 3.5).unwrap();
    assert!(laplace_beltrami(&m, &c).unwrap().max_abs() == 0.0);
}

#[test]
fn constant_factor_is_flat() {
    let g = build_slab_grid(3, &[8, 8, 9], &[1.0; 3]).unwrap();
    for c in [1.0, 2.5] {
        let s = scalar_curvature_conformally_flat(&ScalarField::constant(&g, c).unwrap()).unwrap();
        assert!(s.max_abs() < 1e-12);
    }
}

#[test]
fn volume_weight_identity() {
    let g = build_slab_grid(3, &[6, 6, 9], &[1.0; 3]).unwrap();
    let psi = ScalarField::from_fn(&g, |x| 1.0 + 0.2 * (2.0 * PI * x[0]).sin() * x[2]).unwrap();
    let m = ConformalMetric::conformally_flat(psi.clone()).unwrap();
    for k in 0..g.node_count() {
        let ratio = m.volume_weight()[k] / g.cell_volume(k);
        assert!((ratio / psi.get(k).powi(6) - 1.0).abs() < 1e-14);
    }
}

fn sup_interior(g: &std::sync::Arc<yamabe_core::geometry::ChartGrid>, a: &ScalarField, b: impl Fn(&[f64]) -> f64) -> f64 {
    g.interior_nodes()
        .map(|k| (a.get(k) - b(&g.coordinates(k))).abs())
        .fold(0.0, f64::max)
}

#[test]
fn flat_laplacian_of_sine_is_second_order() {
    let mut errs = Vec::new();
    for nz in [17, 33] {
        let g = build_slab_grid(3, &[4, 4, nz], &[1.0; 3]).unwrap();
        let m = ConformalMetric::flat(&g).unwrap();
        let u = ScalarField::from_fn(&g, |x| (PI * x[2]).sin()).unwrap();
        let lap = laplace_beltrami(&m, &u).unwrap();
        errs.push(sup_interior(&g, &lap, |x| -PI * PI * (PI * x[2]).sin()));
    }
    assert!((errs[0] / errs[1]).log2() >= 1.8, "{errs:?}");
}

#[test]
fn conformal_laplacian_with_orthogonal_gradients() {
    // grad psi is orthogonal to grad u, so only psi^{2-p} Delta u survives.
    let psi_f = |x: &[f64]| 1.0 + 0.1 * (2.0 * PI * x[0]).sin();
    let u_f = |x: &[f64]| (2.0 * PI * x[1]).cos() + x[2] * x[2];
    let exact = |x: &[f64]| {
        let psi = psi_f(x);
        let lap_u = -4.0 * PI * PI * (2.0 * PI * x[1]).cos() + 2.0;
        psi.powf(-4.0) * lap_u
    };
    let mut errs = Vec::new();
    for n in [16, 32] {
        let g = build_slab_grid(3, &[n, n, n + 1], &[1.0; 3]).unwrap();
        let m = ConformalMetric::conformally_flat(ScalarField::from_fn(&g, psi_f).unwrap()).unwrap();
        let lap = laplace_beltrami(&m, &ScalarField::from_fn(&g, u_f).unwrap()).unwrap();
        errs.push(sup_interior(&g, &lap, exact));
    }
    assert!((errs[0] / errs[1]).log2() >= 1.8, "{errs:?}");
}

#[test]
fn conformal_laplacian_cross_term_is_second_order() {
    let psi_f = |x: &[f64]| 1.0 + 0.1 * (2.0 * PI * x[0]).sin() + 0.1 * x[2];
    let u_f = |x: &[f64]| (2.0 * PI * x[0]).cos() + x[2] * x[2];
    let exact = |x: &[f64]| {
        let psi = psi_f(x);
        let (px, pz) = (0.2 * PI * (2.0 * PI * x[0]).cos(), 0.1);
        let (ux, uz) = (-2.0 * PI * (2.0 * PI * x[0]).sin(), 2.0 * x[2]);
        let lap_u = -4.0 * PI * PI * (2.0 * PI * x[0]).cos() + 2.0;
        psi.powf(-6.0) * (psi * psi * lap_u + 2.0 * psi * (px * ux + pz * uz))
    };
    let mut errs = Vec::new();
    for n in [16, 32] {
        let g = build_slab_grid(3, &[n, 4, n + 1], &[1.0; 3]).unwrap();
        let m = ConformalMetric::conformally_flat(ScalarField::from_fn(&g, psi_f).unwrap()).unwrap();
        let lap = laplace_beltrami(&m, &ScalarField::from_fn(&g, u_f).unwrap()).unwrap();
        errs.push(sup_interior(&g, &lap, exact));
    }
    assert!((errs[0] / errs[1]).log2() >= 1.8, "{errs:?}");
}

#[test]
fn scalar_curvature_of_normal_profile() {
    let psi_f = |x: &[f64]| 1.0 + 0.1 * (PI * x[2]).sin();
    let exact = |x: &[f64]| -8.0 * (-0.1 * PI * PI * (PI * x[2]).sin()) * psi_f(x).powf(-5.0);
    let mut errs = Vec::new();
    for nz in [17, 33] {
        let g = build_slab_grid(3, &[4, 4, nz], &[1.0; 3]).unwrap();
        let s = scalar_curvature_conformally_flat(&ScalarField::from_fn(&g, psi_f).unwrap()).unwrap();
        let all = (0..g.node_count()).map(|k| (s.get(k) - exact(&g.coordinates(k))).abs()).fold(0.0, f64::max);
        errs.push(all);
    }
    assert!((errs[0] / errs[1]).log2() >= 1.8, "{errs:?}");
}

#[test]
fn mean_curvature_of_linear_factor() {
    let g = build_slab_grid(3, &[4, 4, 9], &[1.0; 3]).unwrap();
    let h = mean_curvature_conformally_flat(&ScalarField::from_fn(&g, |x| 1.0 + x[2]).unwrap()).unwrap();
    for slot in 0..g.boundary_count() {
        let expect = match g.boundary_face_of_slot(slot) {
            Face::Lower => -2.0,
            Face::Upper => 0.25,
        };
        assert!((h.get(slot) - expect).abs() < 1e-12, "{} vs {expect}", h.get(slot));
    }
    let flat = mean_curvature_conformally_flat(&ScalarField::constant(&g, 1.0).unwrap()).unwrap();
    assert!(flat.values().iter().all(|&v| v == 0.0));
}

#[test]
fn symmetric_factor_has_equal_face_curvatures() {
    let g = build_slab_grid(3, &[4, 4, 11], &[1.0; 3]).unwrap();
    let psi = ScalarField::from_fn(&g, |x| 1.0 + 0.3 * (PI * x[2]).sin()).unwrap();
    let h = mean_curvature_conformally_flat(&psi).unwrap();
    let lateral = g.lateral_count();
    for l in 0..lateral {
        assert!((h.get(l) - h.get(lateral + l)).abs() < 1e-12);
    }
}

#[test]
fn field_invariants_are_checked() {
    let g = build_slab_grid(3, &[4, 4, 5], &[1.0; 3]).unwrap();
    assert!(ScalarField::new(g.clone(), vec![0.0; 3]).is_err());
    let mut v = vec![1.0; g.node_count()];
    v[5] = f64::NAN;
    assert!(ScalarField::new(g.clone(), v).is_err());
    assert!(ConformalMetric::conformally_flat(ScalarField::constant(&g, -1.0).unwrap()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conformal_changes_compose(a in 0.05f64..0.4, b in 0.05f64..0.4, k in 1usize..3) {
        let g = build_slab_grid(3, &[6, 6, 7], &[1.0; 3]).unwrap();
        let u1 = ScalarField::from_fn(&g, |x| 1.0 + a * (2.0 * PI * k as f64 * x[0]).sin()).unwrap();
        let u2 = ScalarField::from_fn(&g, |x| 1.0 + b * x[2]).unwrap();
        let m = ConformalMetric::flat(&g).unwrap();
        let twice = m.conformal_change(&u1).unwrap().conformal_change(&u2).unwrap();
        let once = m.conformal_change(&u1.zip_map(&u2, |x, y| x * y).unwrap()).unwrap();
        for k in 0..g.node_count() {
            prop_assert!((twice.scalar_curvature().get(k) - once.scalar_curvature().get(k)).abs() <= 1e-9 * (1.0 + once.scalar_curvature().max_abs()));
        }
    }

    #[test]
    fn laplacian_kills_constants(c in 0.1f64..10.0, amp in 0.0f64..0.5) {
        let g = build_slab_grid(3, &[6, 6, 7], &[1.0; 3]).unwrap();
        let psi = ScalarField::from_fn(&g, |x| 1.0 + amp * (2.0 * PI * x[1]).cos() * x[2]).unwrap();
        let m = ConformalMetric::conformally_flat(psi).unwrap();
        let lap = laplace_beltrami(&m, &ScalarField::constant(&g, c).unwrap()).unwrap();
        prop_assert_eq!(lap.max_abs(), 0.0);
    }
}
