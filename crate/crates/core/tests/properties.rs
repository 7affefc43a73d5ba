//! Cross-module properties and an end-to-end pipeline run.

use nalgebra::DVector;
use phlab::bump::{compute_m, make_bump, BumpBoundSearch};
use phlab::cone::{program_summary, verify_cone_program};
use phlab::deformation::search::{search_params, SearchCaps};
use phlab::deformation::{Chart, DeformedSystem};
use phlab::ergodic::{lyapunov_spectrum, OrbitSpec};
use phlab::gibbs::{cesaro_push, pushforward_base, seed_plaque, total_variation, EmpiricalMeasure};
use phlab::map::TorusMap;
use phlab::product::{build_product, commuting_diagram_check, LinearBase, ProductSystem};
use phlab::skeleton::{newton_periodic, periodic_residual, segment_distance};
use phlab::torus::TorusPoint;
use phlab::torus_linear::{IntegerMatrix, ToralAutomorphism};
use proptest::prelude::*;
use std::sync::OnceLock;

fn system() -> &'static DeformedSystem<f64> {
    static SYS: OnceLock<DeformedSystem<f64>> = OnceLock::new();
    SYS.get_or_init(|| {
        let bump = make_bump(1.0 / 40.0).unwrap();
        let bound = compute_m(&bump, &BumpBoundSearch::standard(&bump)).unwrap();
        DeformedSystem::new(search_params(&bound, &SearchCaps::default()).unwrap().params).unwrap()
    })
}

fn cat_power(n: u32) -> ToralAutomorphism<f64> {
    ToralAutomorphism::new(IntegerMatrix::cat().checked_pow(n).unwrap()).unwrap()
}

fn linear_product() -> ProductSystem<f64> {
    build_product(Box::new(LinearBase::new(cat_power(2)).unwrap()), cat_power(1)).unwrap()
}

fn chart_vector(v: &[f64], h: f64) -> nalgebra::Vector4<f64> {
    nalgebra::Vector4::new(v[0] * h, v[1] * h, v[2] * h, v[3] * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn deformed_map_round_trips(x in proptest::collection::vec(0.0f64..1.0, 4)) {
        let sys = system();
        let x = TorusPoint::new(x);
        prop_assert!(sys.apply(&sys.apply_inverse(&x).unwrap()).unwrap().distance(&x) < 1e-10);
        prop_assert!(sys.apply_inverse(&sys.apply(&x).unwrap()).unwrap().distance(&x) < 1e-10);
    }

    #[test]
    fn chart_interior_round_trips(y in proptest::collection::vec(-1.0f64..1.0, 4), q in any::<bool>()) {
        let sys = system();
        let chart = if q { Chart::Q } else { Chart::P };
        let x = sys.chart_point(chart, &chart_vector(&y, sys.box_half_width()));
        let back = sys.apply_deformation(&sys.apply_deformation_inverse(&x).unwrap()).unwrap();
        prop_assert!(back.distance(&x) < 1e-10);
    }

    #[test]
    fn center_partial_stays_in_band(y in proptest::collection::vec(-1.0f64..1.0, 4), slab in 0.0f64..1.0) {
        let sys = system();
        let mut v = chart_vector(&y, sys.box_half_width());
        // Concentrate half the draws in the thin slab where the partial varies.
        v[2] *= slab.powi(6);
        let b = sys.splitting_bounds(Chart::P, &[v]);
        prop_assert!(b.min_diag >= 1.0 - 1e-9);
        prop_assert!(b.max_diag <= sys.rates().uu / 2.0 + 1e-9);
        prop_assert!(b.max_small < sys.params().eps0());
    }

    #[test]
    fn cat_periodic_points_are_saddles(i in 0usize..121, dx in -1e-3f64..1e-3, dy in -1e-3f64..1e-3) {
        let a = cat_power(1);
        let lattice = phlab::torus_linear::enumerate_periodic::<f64>(a.matrix(), 5).unwrap();
        let guess = lattice[i % lattice.len()].translate(&DVector::from_vec(vec![dx, dy]));
        let rec = newton_periodic(&a, &guess, 5, 30, 1e-12).unwrap();
        prop_assert!(periodic_residual(&a, &rec.point, 5).unwrap() < 1e-10);
        prop_assert_eq!(rec.stable_index, 1);
        prop_assert!(rec.hyperbolic);
    }

    #[test]
    fn segment_distance_is_a_lower_bound(
        p in proptest::collection::vec(-1.0f64..1.0, 12),
        s in 0.0f64..1.0,
        t in 0.0f64..1.0,
    ) {
        let v = |k: usize| DVector::from_column_slice(&p[3 * k..3 * k + 3]);
        let (p0, p1, q0, q1) = (v(0), v(1), v(2), v(3));
        let (d, _, _) = segment_distance(&p0, &p1, &q0, &q1);
        let a = &p0 + (&p1 - &p0) * s;
        let b = &q0 + (&q1 - &q0) * t;
        prop_assert!(d <= (a - b).norm() + 1e-12);
    }

    #[test]
    fn product_factors_commute(z in proptest::collection::vec(0.0f64..1.0, 4)) {
        let ps = linear_product();
        let z = TorusPoint::new(z);
        let gz = ps.apply(&z).unwrap();
        prop_assert!(ps.pi12(&gz).distance(&ps.base().apply(&ps.pi12(&z)).unwrap()) < 1e-14);
        prop_assert!(ps.pi2(&gz).distance(&ps.fiber().apply(&ps.pi2(&z)).unwrap()) < 1e-14);
        prop_assert!(ps.join(&ps.pi12(&z), &ps.pi2(&z)).distance(&z) == 0.0);
    }
}

#[test]
fn lyapunov_sum_matches_log_determinant() {
    let sys = system();
    let orbit = OrbitSpec::new(TorusPoint::new(vec![0.11, 0.52, 0.73, 0.34]), 3000, 100, 5).unwrap();
    let spec = lyapunov_spectrum(sys, &orbit).unwrap();
    assert!((spec.sum() - spec.log_det_average).abs() < 1e-9, "{} vs {}", spec.sum(), spec.log_det_average);
}

#[test]
fn pipeline_end_to_end() {
    let sys = system();
    let tilde = sys.with_eps_tilde(0.1).unwrap();

    let points = sys.stress_points(300, 8);
    let results = verify_cone_program(sys, sys.params().eps0(), &points, 2, 8).unwrap();
    let (theta, growth, violations) = program_summary(&results);
    assert!(results.iter().all(|r| r.passed));
    assert_eq!(violations, 0);
    assert!(theta < 1.0 && growth > 0.0);

    let p = newton_periodic(&tilde, tilde.fixed_point(Chart::P), 1, 30, 1e-12).unwrap();
    let q = newton_periodic(&tilde, tilde.fixed_point(Chart::Q), 1, 30, 1e-12).unwrap();
    assert_eq!((p.stable_index, q.stable_index), (3, 1));

    let plaque = seed_plaque(sys, &TorusPoint::new(vec![0.3, 0.7, 0.2, 0.9]), 0.05, 1000, 3).unwrap();
    let m = cesaro_push(sys, &plaque, 300, &[8; 4]).unwrap();
    let tv = total_variation(&pushforward_base(&m, 2).unwrap(), &EmpiricalMeasure::uniform(&[8, 8]).unwrap()).unwrap();
    assert!(tv < 0.1, "tv {tv}");

    let r = commuting_diagram_check(&linear_product(), 500, 2).unwrap();
    assert!(r.base < 1e-14 && r.fiber < 1e-14 && r.anosov < 1e-14);
}
