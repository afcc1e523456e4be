use nehari_core::functional::{
    best_sobolev_constant, energy, energy_parts, energy_residual, growth_sandwich, rayleigh_quotient,
    sobolev_threshold,
};
use nehari_core::mesh::build_mesh;
use nehari_core::{Family, GridFunction, Mesh, Nonlinearity, RunParameters};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_interior(mesh: &Mesh, rng: &mut ChaCha8Rng, amplitude: f64) -> GridFunction {
    let values = (0..mesh.n_vertices()).map(|_| amplitude * rng.random_range(-1.0..1.0)).collect();
    mesh.apply_dirichlet(&mesh.field(values).unwrap()).unwrap()
}

/// Worst relative mismatch between `<Phi'(u), v>` and a central difference.
fn worst_fd_error(mesh: &Mesh, nl: &Nonlinearity, params: &RunParameters, seed: u64, directions: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_interior(mesh, &mut rng, 0.5);
    let r = energy_residual(mesh, nl, params, &u).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..directions {
        let v = random_interior(mesh, &mut rng, 1.0);
        let h = 1e-5;
        let plus = energy(mesh, nl, params, &u.add_scaled(h, &v)).unwrap();
        let minus = energy(mesh, nl, params, &u.add_scaled(-h, &v)).unwrap();
        let fd = (plus - minus) / (2.0 * h);
        let exact = r.dot(&v);
        worst = worst.max((fd - exact).abs() / exact.abs().max(1e-12));
    }
    worst
}

#[test]
fn residual_matches_finite_differences_for_p2() {
    let mesh = build_mesh(3, 4).unwrap();
    let params = RunParameters::new(3, 2.0, 5.0, 0.0).unwrap();
    for family in [Family::Signed, Family::Pospart] {
        let nl = Nonlinearity::new(family, 4.0, 3.0).unwrap();
        let err = worst_fd_error(&mesh, &nl, &params, 11, 10);
        assert!(err <= 1e-6, "{family:?}: {err:e}");
    }
}

#[test]
fn residual_matches_finite_differences_for_degenerate_p() {
    let mesh = build_mesh(2, 4).unwrap();
    let params = RunParameters::new(2, 1.5, 2.0, 1e-8).unwrap();
    let nl = Nonlinearity::new(Family::Signed, 3.0, 3.0).unwrap();
    let err = worst_fd_error(&mesh, &nl, &params, 5, 10);
    assert!(err <= 1e-4, "{err:e}");
}

#[test]
fn residual_matches_finite_differences_for_p_above_two() {
    let mesh = build_mesh(3, 3).unwrap();
    let params = RunParameters::new(3, 2.5, 1.0, 0.0).unwrap();
    let nl = Nonlinearity::new(Family::Pospart, 4.0, 4.0).unwrap();
    let err = worst_fd_error(&mesh, &nl, &params, 3, 10);
    assert!(err <= 1e-6, "{err:e}");
}

#[test]
fn residual_vanishes_on_the_boundary() {
    let mesh = build_mesh(2, 6).unwrap();
    let params = RunParameters::new(2, 1.5, 1.0, 1e-8).unwrap();
    let nl = Nonlinearity::new(Family::Signed, 3.0, 2.0).unwrap();
    let u = mesh.interpolate(|x| x[0] * (1.0 - x[0]) + x[1]);
    let r = energy_residual(&mesh, &nl, &params, &mesh.apply_dirichlet(&u).unwrap()).unwrap();
    for v in 0..mesh.n_vertices() {
        if mesh.is_boundary(v) {
            assert_eq!(r.values()[v], 0.0);
        }
    }
}

#[test]
fn sobolev_constant_matches_the_laplacian_closed_form() {
    // For p = 2 the best constant is N(N-2)/4 * |S^N|^{2/N}; in 3D this is
    // 3 (pi/2)^{4/3}.
    let pi = std::f64::consts::PI;
    let s = best_sobolev_constant(2.0, 3).unwrap();
    assert!((s - 3.0 * (pi / 2.0).powf(4.0 / 3.0)).abs() < 1e-12, "{s}");
    assert!((s - 5.477904089531331).abs() < 1e-12);
    // |S^4| = 8 pi^2 / 3, so S = 2 * (8 pi^2 / 3)^{1/2}.
    let s4 = best_sobolev_constant(2.0, 4).unwrap();
    assert!((s4 - 2.0 * (8.0 * pi * pi / 3.0).sqrt()).abs() < 1e-12, "{s4}");
}

#[test]
fn thresholds_for_the_reference_exponents() {
    let t = sobolev_threshold(&RunParameters::new(3, 2.0, 1.0, 0.0).unwrap()).unwrap();
    assert!((t - 4.273664068323042).abs() < 1e-12, "{t}");
    let s = best_sobolev_constant(1.5, 2).unwrap();
    assert!((s - 4.0151099784692015).abs() < 1e-12, "{s}");
    let t = sobolev_threshold(&RunParameters::new(2, 1.5, 1.0, 0.0).unwrap()).unwrap();
    assert!((t - 3.1908025599167775).abs() < 1e-12, "{t}");
}

#[test]
fn homogeneous_energy_scales_term_by_term() {
    // For the signed family with q = r, F(u) = 2|u|^q / q.
    let mesh = build_mesh(3, 4).unwrap();
    let params = RunParameters::new(3, 2.0, 3.0, 0.0).unwrap();
    let nl = Nonlinearity::new(Family::Signed, 4.0, 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = random_interior(&mesh, &mut rng, 1.0);
    let base = energy_parts(&mesh, &nl, &params, &u).unwrap();
    let lq: f64 = mesh.integrate(&u.values().iter().map(|v| v.abs().powi(4)).collect::<Vec<_>>()).unwrap();
    assert!((base.source - 0.5 * lq).abs() < 1e-14 * lq);
    for t in [0.3, 1.7] {
        let scaled = energy(&mesh, &nl, &params, &u.scaled(t)).unwrap();
        let model = t.powi(2) / 2.0 * base.gradient - t.powi(6) / 6.0 * base.critical - 3.0 * t.powi(4) * base.source;
        assert!((scaled - model).abs() < 1e-12 * model.abs().max(1.0), "{scaled} vs {model}");
    }
}

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::Signed), Just(Family::Pospart)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn growth_sandwich_is_ordered(
        family in family(),
        q in 2.2f64..5.5,
        r_frac in 0.0f64..1.0,
        values in proptest::collection::vec(-2.0f64..2.0, 49),
    ) {
        let r = 1.1 + r_frac * (q - 1.1);
        let mesh = build_mesh(2, 6).unwrap();
        let nl = Nonlinearity::new(family, q, r).unwrap();
        let u = mesh.field(values).unwrap();
        let s = growth_sandwich(&mesh, &nl, &u).unwrap();
        for w in s.windows(2) {
            prop_assert!(w[0] <= w[1] * (1.0 + 1e-12) + 1e-300, "{:?}", s);
        }
    }

    #[test]
    fn rayleigh_quotient_is_scale_invariant(
        t in 0.05f64..20.0,
        values in proptest::collection::vec(-1.0f64..1.0, 49),
    ) {
        let mesh = build_mesh(2, 6).unwrap();
        let params = RunParameters::new(2, 1.5, 1.0, 0.0).unwrap();
        let u = mesh.apply_dirichlet(&mesh.field(values).unwrap()).unwrap();
        prop_assume!(u.max_abs() > 1e-3);
        let a = rayleigh_quotient(&mesh, &params, &u).unwrap();
        let b = rayleigh_quotient(&mesh, &params, &u.scaled(t)).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn energy_is_positive_for_small_fields(
        family in family(),
        values in proptest::collection::vec(-1.0f64..1.0, 125),
    ) {
        let mesh = build_mesh(3, 4).unwrap();
        let params = RunParameters::new(3, 2.0, 50.0, 0.0).unwrap();
        let nl = Nonlinearity::new(family, 4.0, 3.0).unwrap();
        let u = mesh.apply_dirichlet(&mesh.field(values).unwrap()).unwrap();
        prop_assume!(u.max_abs() > 1e-3);
        // Scale so the gradient norm is small; the p-term then dominates.
        let a = energy_parts(&mesh, &nl, &params, &u).unwrap().gradient;
        let small = u.scaled(1e-4 / a.sqrt());
        prop_assert!(energy(&mesh, &nl, &params, &small).unwrap() > 0.0);
    }

    #[test]
    fn signed_family_energy_is_even(values in proptest::collection::vec(-1.0f64..1.0, 27)) {
        let mesh = build_mesh(3, 2).unwrap();
        let params = RunParameters::new(3, 2.0, 4.0, 0.0).unwrap();
        let nl = Nonlinearity::new(Family::Signed, 4.0, 3.0).unwrap();
        let u = mesh.field(values).unwrap();
        let a = energy(&mesh, &nl, &params, &u).unwrap();
        let b = energy(&mesh, &nl, &params, &u.scaled(-1.0)).unwrap();
        prop_assert_eq!(a, b);
    }
}
