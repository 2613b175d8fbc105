use conjpair::fields::{make_gamma, sample_w, Axis, CoefficientField, GammaSpec, WSpec};
use conjpair::forms::{assemble_det_form, assemble_stiffness};
use conjpair::mesh::{build_ball_mesh, build_cube_mesh};
use conjpair::solver::{
    alternating_pair_solve, conjugate_of, default_v0, dense_eig_oracle, oracle_alignment, Mode,
    SolverConfig,
};
use conjpair::verify::residual_report;
use conjpair::ScalarField;

fn ball_w(n: usize) -> (conjpair::Mesh, ScalarField) {
    let mesh = build_ball_mesh(n).unwrap();
    let w = sample_w(
        &WSpec::DistToPoint {
            point: [0.0, 0.0, -2.0],
        },
        &mesh,
    )
    .unwrap();
    (mesh, w)
}

fn close_up_to_sign(a: &ScalarField, b: &ScalarField, tol: f64) -> bool {
    a.max_abs_diff(b) <= tol || a.max_abs_diff(&b.scaled(-1.0)) <= tol
}

#[test]
fn start_shift_and_scale_do_not_matter() {
    let (mesh, w) = ball_w(2);
    let cfg = SolverConfig::default();
    let v0 = default_v0(&mesh, 42);
    let base = alternating_pair_solve(&mesh, &w, None, &v0, &cfg).unwrap();
    let shifted = ScalarField::new(v0.values().iter().map(|x| 3.0 * x + 5.0).collect());
    let other = alternating_pair_solve(&mesh, &w, None, &shifted, &cfg).unwrap();
    assert!(close_up_to_sign(&base.u, &other.u, 1e-9));
    assert!(close_up_to_sign(&base.v, &other.v, 1e-9));
}

#[test]
fn converged_pair_is_a_fixed_point() {
    let (mesh, w) = ball_w(2);
    let cfg = SolverConfig::default();
    let first = alternating_pair_solve(&mesh, &w, None, &default_v0(&mesh, 42), &cfg).unwrap();
    let again = alternating_pair_solve(&mesh, &w, None, &first.v, &cfg).unwrap();
    assert!((again.mu_history[0] - first.mu).abs() <= cfg.tol * first.mu);
}

#[test]
fn every_iterate_respects_energy_bound() {
    let mesh = build_cube_mesh(6).unwrap();
    let w = mesh.interpolate(|p| p.z);
    let r = alternating_pair_solve(
        &mesh,
        &w,
        None,
        &default_v0(&mesh, 9),
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(r.mu_history.iter().all(|&m| m <= 1.0 + 1e-12));
    for p in r.mu_history.windows(2) {
        assert!(p[1] >= p[0] - 1e-12);
    }
}

#[test]
fn residual_history_nonincreasing_after_first_sweep() {
    let mesh = build_cube_mesh(8).unwrap();
    let w = mesh.interpolate(|p| p.z);
    let r = alternating_pair_solve(
        &mesh,
        &w,
        None,
        &default_v0(&mesh, 42),
        &SolverConfig::default(),
    )
    .unwrap();
    for p in r.residuals.windows(2).skip(1) {
        assert!(p[1].r1 <= p[0].r1 && p[1].r2 <= p[0].r2, "{p:?}");
    }
}

#[test]
fn orthogonality_follows_from_conjugacy() {
    for (mesh, w) in [ball_w(2), ball_w(3)] {
        let r = alternating_pair_solve(
            &mesh,
            &w,
            None,
            &default_v0(&mesh, 42),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(r.converged);
        let rep = residual_report(&mesh, &r.u, &r.v, &w, None, Mode::Unitary).unwrap();
        assert!(rep.orth <= 10.0 * rep.r2 + 1e-9, "{rep:?}");
    }
}

#[test]
fn ball_mu_increases_under_refinement() {
    let mu = |n| {
        let (mesh, w) = ball_w(n);
        let r = alternating_pair_solve(
            &mesh,
            &w,
            None,
            &default_v0(&mesh, 42),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(r.converged);
        r.mu
    };
    let (a, b) = (mu(2), mu(4));
    assert!(a < 1.0 && b > a, "{a} {b}");
}

#[test]
fn layered_conductivity_pair_is_exact() {
    let mesh = build_cube_mesh(6).unwrap();
    let w = mesh.interpolate(|p| p.z);
    let spec = GammaSpec::HalfSpace {
        axis: Axis::X1,
        offset: 0.5,
        below: 1.0,
        above: 2.5,
    };
    let g = make_gamma(&spec, &mesh, Some(&w), 0.1).unwrap();
    let cfg = SolverConfig {
        mode: Mode::Gamma,
        ..SolverConfig::default()
    };
    let r = alternating_pair_solve(&mesh, &w, Some(&g), &default_v0(&mesh, 42), &cfg).unwrap();
    assert!(r.converged);
    let rep = residual_report(&mesh, &r.u, &r.v, &w, Some(&g), Mode::Gamma).unwrap();
    assert!(rep.r1 <= 1e-6 && rep.r2 <= 1e-6, "{rep:?}");
}

#[test]
fn absw_mode_matches_unitary_for_unit_gradient() {
    let mesh = build_cube_mesh(4).unwrap();
    let w = mesh.interpolate(|p| p.z);
    let v0 = default_v0(&mesh, 42);
    let a = alternating_pair_solve(&mesh, &w, None, &v0, &SolverConfig::default()).unwrap();
    let cfg = SolverConfig {
        mode: Mode::GammaAbsw,
        ..SolverConfig::default()
    };
    let b = alternating_pair_solve(&mesh, &w, None, &v0, &cfg).unwrap();
    assert!((a.mu - b.mu).abs() < 1e-12);
}

#[test]
fn oracle_agrees_on_small_ball() {
    let (mesh, w) = ball_w(1);
    let cfg = SolverConfig::default();
    let r = alternating_pair_solve(&mesh, &w, None, &default_v0(&mesh, 42), &cfg).unwrap();
    let k = assemble_stiffness(&mesh, &CoefficientField::ones(mesh.n_tets())).unwrap();
    let b = assemble_det_form(&mesh, &w).unwrap();
    let s = dense_eig_oracle(&k.matrix, &k.matrix, b.matrix()).unwrap();
    assert!((s.max() - r.mu).abs() < 1e-8, "{} {}", s.max(), r.mu);
    let sin = oracle_alignment(&s, &k.matrix, &k.matrix, &r.u, &r.v, 1e-8).unwrap();
    assert!(sin < 1e-6, "{sin}");
}

#[test]
fn quadratic_conjugate_is_close_to_exact() {
    let mesh = build_cube_mesh(8).unwrap();
    let w = mesh.interpolate(|p| p.z);
    let v = mesh.interpolate(|p| 2.0 * p.x * p.y);
    let u = conjugate_of(
        &mesh,
        &v,
        &w,
        &CoefficientField::ones(mesh.n_tets()),
        &SolverConfig::default(),
    )
    .unwrap();
    let exact = mesh.interpolate(|p| p.x * p.x - p.y * p.y).mean_zero(&mesh);
    assert!(u.max_abs_diff(&exact) < 0.05);
}
