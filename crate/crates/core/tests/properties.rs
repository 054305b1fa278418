mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use toric_kahler::curvature::{
    curvature_sample, laplacian, laplacian_divergence, scalar_curvature, simplex_det_closed_form, FunctionJet, Route,
};
use toric_kahler::einstein::{family_potential, family_scalar_closed};
use toric_kahler::lattice::IntMatrix;
use toric_kahler::polytope::{
    active_facets, beta_and_kernel, interior_grid, make_labeled_simplex, orbifold_group_order, weighted_to_labeled,
    AffineFunctional, FaceDescriptor, LabeledPolytope,
};
use toric_kahler::potential::{
    boundary_delta, canonical_potential, extremal_simplex_potential, jet, PotentialExpr, PotentialTerm,
};

fn labels(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1u32..=9, n + 1).prop_map(|v| v.into_iter().map(f64::from).collect())
}

fn labeled_simplex() -> impl Strategy<Value = Vec<f64>> {
    (1usize..=3).prop_flat_map(labels)
}

/// Box `[0,a]×[0,b]` with a corner cut off, or the unit simplex stretched by
/// a unimodular map: polytopes that are not simplices.
fn cut_square(a: i64, b: i64, c: i64) -> LabeledPolytope {
    let f = |n: Vec<i64>, off: f64| AffineFunctional::new(n, 1.0, off).unwrap();
    LabeledPolytope::new(
        2,
        vec![
            f(vec![1, 0], 0.0),
            f(vec![0, 1], 0.0),
            f(vec![-1, 0], -(a as f64)),
            f(vec![0, -1], -(b as f64)),
            f(vec![-1, -1], -((a + b - c) as f64)),
        ],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vertices_match_brute_force(m in labeled_simplex()) {
        let p = simplex(&m);
        let want = brute_force_vertices(&p);
        prop_assert_eq!(p.vertices().len(), want.len());
        for v in p.vertices() {
            prop_assert!(want.iter().any(|w| dist(&v.point, w) < 1e-9));
        }
        prop_assert!(p.vertices().iter().all(|v| v.face.active.len() == p.dim()));
    }

    #[test]
    fn cut_square_vertices(a in 2i64..6, b in 2i64..6, c in 1i64..2) {
        let p = cut_square(a, b, c);
        prop_assert_eq!(p.vertices().len(), 5);
        let want = brute_force_vertices(&p);
        prop_assert_eq!(want.len(), 5);
        for v in p.vertices() {
            prop_assert!(want.iter().any(|w| dist(&v.point, w) < 1e-9));
        }
    }

    #[test]
    fn facet_order_is_label(m in labeled_simplex()) {
        let p = simplex(&m);
        for r in 0..p.num_facets() {
            let face = FaceDescriptor::from_facets([r]);
            prop_assert_eq!(orbifold_group_order(&p, &face).unwrap(), m[r] as u64);
        }
    }

    #[test]
    fn beta_kernel_is_exact(m in labeled_simplex()) {
        let p = simplex(&m);
        let rep = beta_and_kernel(&p).unwrap();
        prop_assert_eq!(rep.kernel_basis.len(), p.num_facets() - p.dim());
        prop_assert_eq!(toric_kahler::lattice::rank(&rep.beta).unwrap(), p.dim());
        for k in &rep.kernel_basis {
            prop_assert!(rep.beta.mul_vec(k).unwrap().iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn weighted_labels_give_facet_orders(a in prop::collection::vec(1i64..8, 2..5)) {
        prop_assume!(toric_kahler::lattice::gcd_all(&a) == 1);
        let (labels, _) = weighted_to_labeled(&a).unwrap();
        let m: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
        let p = simplex(&m);
        for (r, &lab) in labels.iter().enumerate() {
            let facet_pts: Vec<&Vec<f64>> =
                p.vertices().iter().filter(|v| v.face.active.contains(&r)).map(|v| &v.point).collect();
            let x: Vec<f64> = (0..p.dim())
                .map(|i| facet_pts.iter().map(|q| q[i]).sum::<f64>() / facet_pts.len() as f64)
                .collect();
            let face = active_facets(&p, &x, p.default_tol()).unwrap();
            prop_assert_eq!(face.active.iter().copied().collect::<Vec<_>>(), vec![r]);
            prop_assert_eq!(orbifold_group_order(&p, &face).unwrap(), lab as u64);
        }
    }

    #[test]
    fn unimodular_equivariance_of_orders(m in labels(2), s in -3i64..=3, t in -2i64..=2) {
        // U = [[1, s], [0, 1]] · [[1, 0], [t, 1]]
        let u = IntMatrix::from_rows(&[vec![1 + s * t, s], vec![t, 1]]).unwrap();
        let p = simplex(&m);
        let q = p.transformed(&u).unwrap();
        for v in p.vertices() {
            let ux = [
                (1 + s * t) as f64 * v.point[0] + s as f64 * v.point[1],
                t as f64 * v.point[0] + v.point[1],
            ];
            let face = active_facets(&q, &ux, 1e-9 * q.length_scale()).unwrap();
            prop_assert_eq!(&face.active, &v.face.active);
            prop_assert_eq!(orbifold_group_order(&q, &face).unwrap(), orbifold_group_order(&p, &v.face).unwrap());
        }
    }

    #[test]
    fn det_matches_closed_form(m in labeled_simplex(), seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = extremal_simplex_potential(&simplex(&m)).unwrap();
        let x = random_simplex_point(&mut rng, m.len() - 1, 1e-3);
        let det = jet(&g, &x, 2).unwrap().hessian.determinant();
        let cf = simplex_det_closed_form(&m, &x).unwrap();
        prop_assert!((det - cf).abs() <= 1e-10 * cf.abs(), "{} vs {}", det, cf);
    }

    #[test]
    fn hessians_symmetric_and_pd(m in labeled_simplex(), seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let p = simplex(&m);
        for g in [canonical_potential(&p), extremal_simplex_potential(&p).unwrap()] {
            let x = random_simplex_point(&mut rng, p.dim(), 1e-3);
            let j = jet(&g, &x, 4).unwrap();
            prop_assert!((&j.hessian - j.hessian.transpose()).amax() == 0.0);
            prop_assert!(j.hessian.clone().cholesky().is_some());
            prop_assert!(j.third.asymmetry() == 0.0 && j.fourth.asymmetry() == 0.0);
        }
    }

    #[test]
    fn affine_terms_change_nothing(m in labeled_simplex(), seed in any::<u64>(), c in -3.0f64..3.0) {
        let mut rng = StdRng::seed_from_u64(seed);
        let p = simplex(&m);
        let n = p.dim();
        let g = extremal_simplex_potential(&p).unwrap();
        let mut h = g.clone();
        h.push(PotentialTerm::Monomial { coeff: c, exponents: vec![0; n] }).unwrap();
        for i in 0..n {
            let mut e = vec![0; n];
            e[i] = 1;
            h.push(PotentialTerm::Monomial { coeff: c * (i as f64 + 0.5), exponents: e }).unwrap();
        }
        let x = random_simplex_point(&mut rng, n, 1e-2);
        let (a, b) = (curvature_sample(&g, &x).unwrap(), curvature_sample(&h, &x).unwrap());
        prop_assert_eq!(&a.g, &b.g);
        prop_assert_eq!(&a.ginv, &b.ginv);
        prop_assert_eq!(a.s_compact, b.s_compact);
        prop_assert_eq!(a.s_log, b.s_log);
        prop_assert_eq!(boundary_delta(&p, &g, &x).unwrap(), boundary_delta(&p, &h, &x).unwrap());
    }

    #[test]
    fn sphere_scalar_matches_one_dimensional_formula(m1 in 1u32..9, m2 in 1u32..9, seed in any::<u64>()) {
        let (a, b) = (f64::from(m1), f64::from(m2));
        let g = extremal_simplex_potential(&simplex(&[a, b])).unwrap();
        let x = random_simplex_point(&mut StdRng::seed_from_u64(seed), 1, 1e-3);
        let want = ((a + b) + 3.0 * x[0] * (a - b)) / (a * b);
        for route in [Route::Compact, Route::Log] {
            let s = scalar_curvature(&g, &x, route).unwrap();
            prop_assert!((s - want).abs() < 1e-9, "{} vs {} at {:?}", s, want, x);
        }
    }

    #[test]
    fn family_is_swap_symmetric(m in 0.6f64..10.0, seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = family_potential(m).unwrap();
        let x = random_simplex_point(&mut rng, 2, 1e-2);
        let s = scalar_curvature(&g, &x, Route::Compact).unwrap();
        let t = scalar_curvature(&g, &[x[1], x[0]], Route::Compact).unwrap();
        prop_assert!((s - t).abs() < 1e-12 * s.abs().max(1.0), "{} vs {} at {:?}", s, t, x);
        prop_assert!((s - family_scalar_closed(m, &x)).abs() < 1e-8);
    }
}

#[test]
fn jets_match_finite_differences() {
    let mut rng = StdRng::seed_from_u64(7);
    let mut count = 0;
    while count < 50 {
        let n = rng.gen_range(1..=3);
        let m = random_labels(&mut rng, n, 5);
        let p = simplex(&m);
        let x = random_simplex_point(&mut rng, n, 0.05);
        if p.min_facet_value(&x) < 0.1 {
            continue;
        }
        let mut g = extremal_simplex_potential(&p).unwrap();
        let mut e = vec![0; n];
        e[0] = 3;
        g.push(PotentialTerm::Monomial { coeff: 0.01, exponents: e }).unwrap();
        for k in 1..=4 {
            let err = jet_fd_mismatch(&g, &x, k, 1e-5);
            assert!(err < 1e-6, "order {k} mismatch {err:e} at {x:?}, m = {m:?}");
        }
        count += 1;
    }
}

#[test]
fn extremal_delta_is_affine() {
    for m in [[1.0, 2.0, 3.0], [2.0, 2.0, 5.0], [1.0, 1.0, 4.0]] {
        let p = simplex(&m);
        let g = extremal_simplex_potential(&p).unwrap();
        let pts = interior_grid(&p, 12, 0.05).unwrap();
        let vals: Vec<f64> = pts.iter().map(|x| boundary_delta(&p, &g, x).unwrap()).collect();
        let fit = toric_kahler::curvature::fit_affine(&pts, &vals, 1e-10).unwrap();
        assert!(fit.residual_max < 1e-10, "{fit:?}");
    }
}

#[test]
fn laplacian_forms_agree_on_random_functions() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.gen_range(1..=3);
        let m = random_labels(&mut rng, n, 4);
        let g = extremal_simplex_potential(&simplex(&m)).unwrap();
        let x = random_simplex_point(&mut rng, n, 0.02);
        let grad: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let f = FunctionJet { value: 0.0, gradient: grad, hessian: &a + a.transpose() };
        let (p1, p2) = (laplacian(&g, &f, &x).unwrap(), laplacian_divergence(&g, &f, &x).unwrap());
        assert!((p1 - p2).abs() < 1e-8 * p1.abs().max(1.0), "{p1} vs {p2}");
    }
}

#[test]
fn family_positivity() {
    use toric_kahler::curvature::GridSpec;
    for m in [0.501 + 1e-3, 0.6, 1.0, 3.0] {
        let p = make_labeled_simplex(2, &[1.0, 1.0, m], 1.0).unwrap();
        let g = family_potential(m).unwrap();
        let grid = GridSpec { resolution: 32, margin: 0.01 };
        let min = interior_grid(&p, grid.resolution, grid.margin)
            .unwrap()
            .iter()
            .map(|x| scalar_curvature(&g, x, Route::Compact).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "m = {m}: min S = {min}");
    }
    // m = 1/2: minimum tends to 0 at the vertex (−1,−1) as the margin shrinks
    let g = family_potential(0.5).unwrap();
    let mut prev = f64::INFINITY;
    for eps in [1e-1, 1e-2, 1e-3] {
        let s = scalar_curvature(&g, &[-1.0 + eps, -1.0 + eps], Route::Compact).unwrap();
        assert!(s > 0.0 && s < prev);
        prev = s;
    }
    assert!(prev < 1e-2);
}

#[test]
fn empty_potential_has_zero_jets() {
    let g = PotentialExpr::new(3, vec![]).unwrap();
    let j = jet(&g, &[0.1, 0.2, 0.3], 4).unwrap();
    assert_eq!(j.value, 0.0);
    assert!(j.gradient.iter().all(|&v| v == 0.0));
    assert!(scalar_curvature(&g, &[0.1, 0.2, 0.3], Route::Compact).is_err());
}
